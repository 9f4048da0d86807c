#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "civiclink/corpus.hpp"
#include "civiclink/textvec.hpp"
#include "civiclink/util.hpp"

namespace civiclink::learn {

using textvec::SparseVector;

struct LabeledExample {
  SparseVector features;
  int label = 0;  // {0,1}
  std::string id;
};

struct TrainConfig {
  double l2_lambda = 0.01;
  double learning_rate = 1.0;
  int max_iters = 500;
  double tolerance = 1e-7;  // on loss delta
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"l2_lambda", l2_lambda}, {"learning_rate", learning_rate},
            {"max_iters", max_iters}, {"tolerance", tolerance}, {"seed", seed}};
  }
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.l2_lambda = j.value("l2_lambda", 0.01);
    c.learning_rate = j.value("learning_rate", 1.0);
    c.max_iters = j.value("max_iters", 500);
    c.tolerance = j.value("tolerance", 1e-7);
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
  }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LogisticModel {
  std::vector<double> weights;  // dense, length V
  double bias = 0.0;
  TrainConfig config;
  std::vector<double> loss_trace;  // loss after each update

  double raw_score(const SparseVector& x) const {
    double z = bias;
    for (const auto& [i, w] : x.entries)
      if (i >= 0 && static_cast<std::size_t>(i) < weights.size()) z += weights[i] * w;
    return z;
  }

  nlohmann::json to_json() const {
    nlohmann::json sparse = nlohmann::json::array();
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (weights[i] != 0.0) sparse.push_back({i, weights[i]});
    return {{"dim", weights.size()}, {"weights", sparse}, {"bias", bias},
            {"config", config.to_json()}};
  }

  static LogisticModel from_json(const nlohmann::json& j) {
    LogisticModel m;
    m.weights.assign(j.at("dim").get<std::size_t>(), 0.0);
    for (const auto& e : j.at("weights"))
      m.weights.at(e.at(0).get<std::size_t>()) = e.at(1).get<double>();
    m.bias = j.at("bias").get<double>();
    m.config = TrainConfig::from_json(j.value("config", nlohmann::json::object()));
    return m;
  }
};

inline double predict_proba(const LogisticModel& m, const SparseVector& x) {
  return sigmoid(m.raw_score(x));
}

namespace detail {

inline std::size_t feature_dim(const std::vector<LabeledExample>& examples) {
  std::int32_t max_idx = -1;
  for (const auto& e : examples)
    for (const auto& [i, w] : e.features.entries) max_idx = std::max(max_idx, i);
  return static_cast<std::size_t>(max_idx + 1);
}

}  // namespace detail

// Per-example-normalized L2-regularized log loss. The bias is unregularized.
//   L(w, b) = (1/n) sum_i logloss_i + (lambda/2) ||w||^2
inline double logistic_loss(const std::vector<LabeledExample>& examples,
                            const std::vector<double>& weights, double bias,
                            double l2_lambda) {
  double data = 0.0;
  for (const auto& e : examples) {
    double z = bias;
    for (const auto& [i, w] : e.features.entries)
      if (static_cast<std::size_t>(i) < weights.size()) z += weights[i] * w;
    // log(1+exp(-|z|)) form avoids overflow for large |z|.
    const double margin = e.label == 1 ? z : -z;
    data += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  }
  data /= static_cast<double>(examples.size());
  double reg = 0.0;
  for (double w : weights) reg += w * w;
  return data + 0.5 * l2_lambda * reg;
}

// Analytic gradient of logistic_loss at (weights, bias).
inline std::pair<std::vector<double>, double> logistic_gradient(
    const std::vector<LabeledExample>& examples, const std::vector<double>& weights,
    double bias, double l2_lambda) {
  std::vector<double> gw(weights.size(), 0.0);
  double gb = 0.0;
  for (const auto& e : examples) {
    double z = bias;
    for (const auto& [i, w] : e.features.entries)
      if (static_cast<std::size_t>(i) < weights.size()) z += weights[i] * w;
    const double err = sigmoid(z) - static_cast<double>(e.label);
    gb += err;
    for (const auto& [i, w] : e.features.entries)
      if (static_cast<std::size_t>(i) < weights.size()) gw[i] += err * w;
  }
  const double inv_n = 1.0 / static_cast<double>(examples.size());
  gb *= inv_n;
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] = gw[i] * inv_n + l2_lambda * weights[i];
  return {std::move(gw), gb};
}

// Full-batch gradient descent from zero initialization; stops at max_iters or
// when the loss delta falls below tolerance. Deterministic for fixed inputs.
inline LogisticModel train_logistic(const std::vector<LabeledExample>& examples,
                                    const TrainConfig& config) {
  if (config.max_iters < 1) throw UsageError("max_iters must be >= 1");
  if (config.learning_rate <= 0) throw UsageError("learning_rate must be > 0");
  bool has_pos = false, has_neg = false;
  for (const auto& e : examples) (e.label == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DataError("train_logistic: need both classes");

  LogisticModel m;
  m.config = config;
  m.weights.assign(detail::feature_dim(examples), 0.0);
  double prev_loss = logistic_loss(examples, m.weights, m.bias, config.l2_lambda);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    auto [gw, gb] = logistic_gradient(examples, m.weights, m.bias, config.l2_lambda);
    for (std::size_t i = 0; i < m.weights.size(); ++i)
      m.weights[i] -= config.learning_rate * gw[i];
    m.bias -= config.learning_rate * gb;
    const double loss = logistic_loss(examples, m.weights, m.bias, config.l2_lambda);
    if (!std::isfinite(loss))
      throw CheckError("train_logistic: non-finite loss (learning rate too large?)");
    m.loss_trace.push_back(loss);
    if (std::abs(prev_loss - loss) < config.tolerance) break;
    prev_loss = loss;
  }
  return m;
}

// Max absolute deviation between the analytic gradient and central finite
// differences (h = 1e-5), evaluated at a seeded random point.
inline double gradient_check(const std::vector<LabeledExample>& examples,
                             const TrainConfig& config) {
  const std::size_t dim = detail::feature_dim(examples);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  std::vector<double> w(dim);
  for (auto& x : w) x = dist(rng);
  double b = dist(rng);

  auto [gw, gb] = logistic_gradient(examples, w, b, config.l2_lambda);
  const double h = 1e-5;
  double max_dev = 0.0;
  auto probe = [&](double* slot, double analytic) {
    const double orig = *slot;
    *slot = orig + h;
    const double up = logistic_loss(examples, w, b, config.l2_lambda);
    *slot = orig - h;
    const double down = logistic_loss(examples, w, b, config.l2_lambda);
    *slot = orig;
    max_dev = std::max(max_dev, std::abs((up - down) / (2 * h) - analytic));
  };
  for (std::size_t i = 0; i < dim; ++i) probe(&w[i], gw[i]);
  probe(&b, gb);
  return max_dev;
}

// ---------------------------------------------------------------------------
// Binary evaluation.

struct EvalReport {
  double f1 = 0, precision = 0, recall = 0, roc_auc = 0;
  double threshold = 0.5;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  nlohmann::json to_json() const {
    return {{"f1", f1},       {"precision", precision}, {"recall", recall},
            {"roc_auc", roc_auc}, {"threshold", threshold}, {"tp", tp},
            {"fp", fp},       {"fn", fn},               {"tn", tn}};
  }
};

// ROC-AUC via average ranks, which counts tied pairs as 1/2 and matches the
// Mann-Whitney U statistic. Degenerate single-class inputs score 0.5.
inline double roc_auc(const std::vector<std::pair<double, int>>& scored) {
  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scored[a].first < scored[b].first; });
  double rank_sum_pos = 0;
  std::int64_t n_pos = 0, n_neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].first == scored[order[i]].first) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (scored[order[k]].second == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return 0.5;
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double f1_score(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

inline EvalReport evaluate_binary(const std::vector<std::pair<double, int>>& scored,
                                  double threshold = 0.5) {
  if (scored.empty()) throw DataError("evaluate_binary: no scores");
  EvalReport rep;
  rep.threshold = threshold;
  for (const auto& [score, label] : scored) {
    const bool pred = score >= threshold;
    if (pred && label == 1) ++rep.tp;
    else if (pred) ++rep.fp;
    else if (label == 1) ++rep.fn;
    else ++rep.tn;
  }
  rep.precision = rep.tp + rep.fp == 0 ? 0.0 : static_cast<double>(rep.tp) / (rep.tp + rep.fp);
  rep.recall = rep.tp + rep.fn == 0 ? 0.0 : static_cast<double>(rep.tp) / (rep.tp + rep.fn);
  rep.f1 = f1_score(rep.tp, rep.fp, rep.fn);
  rep.roc_auc = roc_auc(scored);
  return rep;
}

// ---------------------------------------------------------------------------
// Keyword bootstrap: positives are keyword articles with the keyword deleted,
// negatives a seeded sample of the rest; the returned candidates are
// non-keyword articles the trained model scores above the expansion threshold.

struct BootstrapResult {
  std::vector<std::string> candidate_ids;
  LogisticModel model;
  textvec::TfIdfModel tfidf;
  std::int64_t n_positive = 0;
  std::int64_t n_negative = 0;
};

// Deletes every occurrence of the keyword token phrase from a token stream.
inline std::vector<std::string> delete_phrase(const std::vector<std::string>& tokens,
                                              const std::vector<std::string>& phrase) {
  if (phrase.empty()) return tokens;
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool match = i + phrase.size() <= tokens.size();
    for (std::size_t k = 0; match && k < phrase.size(); ++k)
      if (tokens[i + k] != phrase[k]) match = false;
    if (match) {
      i += phrase.size();
    } else {
      out.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

inline bool contains_phrase(const std::vector<std::string>& tokens,
                            const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; match && k < phrase.size(); ++k)
      if (tokens[i + k] != phrase[k]) match = false;
    if (match) return true;
  }
  return false;
}

inline BootstrapResult bootstrap_from_keyword(const std::vector<corpus::Article>& articles,
                                              const std::string& keyword,
                                              double negative_ratio,
                                              const TrainConfig& config,
                                              double expand_threshold = 0.5) {
  const auto phrase = textvec::tokenize(keyword);
  std::vector<std::size_t> matching, non_matching;
  std::vector<std::vector<std::string>> tokens(articles.size());
  for (std::size_t i = 0; i < articles.size(); ++i) {
    tokens[i] = textvec::tokenize(articles[i].body);
    (contains_phrase(tokens[i], phrase) ? matching : non_matching).push_back(i);
  }
  if (matching.empty()) throw DataError("bootstrap: keyword not found: " + keyword);

  BootstrapResult out;
  std::vector<std::string> docs;
  docs.reserve(articles.size());
  for (const auto& a : articles) docs.push_back(a.body);
  out.tfidf = textvec::TfIdfModel::fit(docs);

  std::vector<LabeledExample> train;
  for (std::size_t i : matching) {
    LabeledExample e;
    e.features = out.tfidf.transform(textvec::join_tokens(delete_phrase(tokens[i], phrase)));
    e.label = 1;
    e.id = articles[i].id;
    train.push_back(std::move(e));
  }
  out.n_positive = static_cast<std::int64_t>(matching.size());

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> pool = non_matching;
  std::shuffle(pool.begin(), pool.end(), rng);
  const std::size_t want = std::min<std::size_t>(
      pool.size(),
      static_cast<std::size_t>(negative_ratio * static_cast<double>(matching.size())));
  for (std::size_t k = 0; k < want; ++k) {
    LabeledExample e;
    e.features = out.tfidf.transform(articles[pool[k]].body);
    e.label = 0;
    e.id = articles[pool[k]].id;
    train.push_back(std::move(e));
  }
  out.n_negative = static_cast<std::int64_t>(want);

  out.model = train_logistic(train, config);
  for (std::size_t i : non_matching) {
    if (predict_proba(out.model, out.tfidf.transform(articles[i].body)) > expand_threshold)
      out.candidate_ids.push_back(articles[i].id);
  }
  std::sort(out.candidate_ids.begin(), out.candidate_ids.end());
  return out;
}

}  // namespace civiclink::learn
