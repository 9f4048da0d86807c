#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "civiclink/corpus.hpp"
#include "civiclink/external.hpp"
#include "civiclink/learn.hpp"
#include "civiclink/textvec.hpp"

namespace civiclink::prm {

using corpus::Article;
using corpus::CandidatePair;
using corpus::CorpusStore;
using corpus::PolicyItem;

// ---------------------------------------------------------------------------
// Step scorers. Every chain attribute depends on the article alone; the
// policy enters only through the final similarity.

// Offline fallback: high probability iff the article mentions a date within
// window_days before publication and names the governing body.
struct RuleScorerConfig {
  std::string body_phrase = "board of supervisors";
  int window_days = 31;
  double p_match = 0.9;
  double p_nomatch = 0.1;
};

// Scans raw text for ISO dates (YYYY-MM-DD).
inline std::vector<Date> extract_iso_dates(std::string_view text) {
  std::vector<Date> out;
  for (std::size_t i = 0; i + 10 <= text.size(); ++i) {
    if (text[i + 4] != '-' || text[i + 7] != '-') continue;
    bool ok = true;
    for (std::size_t k : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
      if (!std::isdigit(static_cast<unsigned char>(text[i + k]))) {
        ok = false;
        break;
      }
    if (!ok) continue;
    if (i > 0 && std::isdigit(static_cast<unsigned char>(text[i - 1]))) continue;
    if (i + 10 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 10]))) continue;
    try {
      out.push_back(Date::parse(text.substr(i, 10)));
    } catch (const DataError&) {
    }
  }
  return out;
}

inline double rule_score(const Article& a, const RuleScorerConfig& cfg) {
  bool recent_date = false;
  for (const Date& d : extract_iso_dates(a.body)) {
    const std::int64_t gap = a.publish_date - d;
    if (gap >= 0 && gap <= cfg.window_days) {
      recent_date = true;
      break;
    }
  }
  const bool body_match = learn::contains_phrase(textvec::tokenize(a.body),
                                                 textvec::tokenize(cfg.body_phrase));
  return recent_date && body_match ? cfg.p_match : cfg.p_nomatch;
}

enum class ScorerKind { Logistic, External, Rule };

struct StepResult {
  double prob = 0;
  bool degraded = false;  // external client failed, rule fallback used
};

struct ChainStep {
  std::string name;
  ScorerKind kind = ScorerKind::Rule;
  std::optional<double> gate;  // in (0,1) when present

  // Logistic scorer.
  std::shared_ptr<const learn::LogisticModel> model;
  std::shared_ptr<const textvec::TfIdfModel> tfidf;

  // External scorer (rule config doubles as its offline fallback).
  std::shared_ptr<external::ExternalYesNoClient> client;
  RuleScorerConfig rule;

  StepResult score(const Article& a) const {
    switch (kind) {
      case ScorerKind::Logistic:
        return {learn::predict_proba(*model, tfidf->transform(a.body)), false};
      case ScorerKind::Rule:
        return {rule_score(a, rule), false};
      case ScorerKind::External: {
        const std::string block =
            "Article (published " + a.publish_date.str() + "):\n" + a.title + "\n" + a.body;
        try {
          return {client->ask(client->render_prompt(block)).p_yes, false};
        } catch (const external::ExternalError&) {
          return {rule_score(a, rule), true};
        }
      }
    }
    return {};
  }
};

enum class SimilarityTarget { PolicyText, MinutesText };

struct PrmChain {
  std::vector<ChainStep> steps;
  std::shared_ptr<const textvec::EmbeddingProvider> similarity_space;
  SimilarityTarget target = SimilarityTarget::PolicyText;

  void validate() const {
    std::set<std::string> names;
    for (const auto& s : steps) {
      if (!names.insert(s.name).second) throw UsageError("duplicate chain step " + s.name);
      if (s.gate && (*s.gate <= 0 || *s.gate >= 1))
        throw UsageError("gate must lie in (0,1) for step " + s.name);
    }
  }
};

// Target text the final cosine compares against: the policy's own text by
// default, or the minutes of the meetings that discussed it.
inline std::string similarity_target_text(const PrmChain& chain, const CorpusStore& store,
                                          const PolicyItem& p) {
  if (chain.target == SimilarityTarget::PolicyText) return p.full_text();
  std::string minutes;
  for (const auto& mid : p.meeting_ids)
    if (const auto* m = store.find_meeting(mid); m && m->minutes_text) {
      if (!minutes.empty()) minutes += '\n';
      minutes += *m->minutes_text;
    }
  return minutes.empty() ? p.full_text() : minutes;
}

// ---------------------------------------------------------------------------
// Scoring.

struct LinkScore {
  std::string article_id;
  std::string policy_id;
  std::vector<double> step_probs;  // up to the prune point
  double similarity = 0;
  double combined = 0;  // product of step probs x similarity; 0 when pruned
  std::optional<std::string> pruned_at;
  bool degraded = false;
};

namespace detail {

struct ArticleSteps {
  std::vector<double> probs;
  std::optional<std::string> pruned_at;
  bool degraded = false;
  double product = 1.0;
};

inline ArticleSteps run_steps(const PrmChain& chain, const Article& a) {
  ArticleSteps out;
  for (const auto& step : chain.steps) {
    const StepResult r = step.score(a);
    out.degraded = out.degraded || r.degraded;
    out.probs.push_back(r.prob);
    if (step.gate && r.prob < *step.gate) {
      out.pruned_at = step.name;
      out.product = 0.0;
      break;
    }
    out.product *= r.prob;
  }
  return out;
}

}  // namespace detail

// Evaluates steps in order; a gated step below its gate prunes the pair
// (combined score 0), otherwise combined = prod(step probs) * similarity.
inline LinkScore score_pair(const PrmChain& chain, const CorpusStore& store, const Article& a,
                            const PolicyItem& p) {
  const auto steps = detail::run_steps(chain, a);
  LinkScore s;
  s.article_id = a.id;
  s.policy_id = p.id;
  s.step_probs = steps.probs;
  s.pruned_at = steps.pruned_at;
  s.degraded = steps.degraded;
  if (steps.pruned_at) return s;
  s.similarity = chain.similarity_space
                     ? chain.similarity_space->similarity(
                           a.body, similarity_target_text(chain, store, p))
                     : 0.0;
  s.combined = steps.product * s.similarity;
  return s;
}

// Funnel over candidate pairs. Step probabilities depend only on the article
// and are computed once per article; output order follows the candidate
// order, so results are deterministic for any job count.
inline std::vector<LinkScore> run_funnel(const PrmChain& chain, const CorpusStore& store,
                                         const std::vector<CandidatePair>& candidates,
                                         unsigned jobs = 1) {
  chain.validate();

  std::vector<const Article*> articles;
  std::unordered_map<std::string, std::size_t> article_slot;
  std::vector<const PolicyItem*> policies;
  std::unordered_map<std::string, std::size_t> policy_slot;
  for (const auto& c : candidates) {
    if (!article_slot.count(c.article_id)) {
      const Article* a = store.find_article(c.article_id);
      if (!a) throw DataError("candidate references unknown article " + c.article_id);
      article_slot[c.article_id] = articles.size();
      articles.push_back(a);
    }
    if (!policy_slot.count(c.policy_id)) {
      const PolicyItem* p = store.find_policy(c.policy_id);
      if (!p) throw DataError("candidate references unknown policy " + c.policy_id);
      policy_slot[c.policy_id] = policies.size();
      policies.push_back(p);
    }
  }

  const auto steps = parallel_map<detail::ArticleSteps>(
      articles.size(), jobs,
      [&](std::size_t i) { return detail::run_steps(chain, *articles[i]); });

  std::vector<textvec::SparseVector> article_vecs(articles.size());
  std::vector<textvec::SparseVector> policy_vecs(policies.size());
  if (chain.similarity_space) {
    article_vecs = parallel_map<textvec::SparseVector>(
        articles.size(), jobs,
        [&](std::size_t i) { return chain.similarity_space->embed(articles[i]->body); });
    policy_vecs = parallel_map<textvec::SparseVector>(
        policies.size(), jobs, [&](std::size_t i) {
          return chain.similarity_space->embed(
              similarity_target_text(chain, store, *policies[i]));
        });
  }

  return parallel_map<LinkScore>(candidates.size(), jobs, [&](std::size_t i) {
    const auto& c = candidates[i];
    const auto& st = steps[article_slot.at(c.article_id)];
    LinkScore s;
    s.article_id = c.article_id;
    s.policy_id = c.policy_id;
    s.step_probs = st.probs;
    s.pruned_at = st.pruned_at;
    s.degraded = st.degraded;
    if (!st.pruned_at) {
      s.similarity = chain.similarity_space
                         ? textvec::cosine(article_vecs[article_slot.at(c.article_id)],
                                           policy_vecs[policy_slot.at(c.policy_id)])
                         : 0.0;
      s.combined = st.product * s.similarity;
    }
    return s;
  });
}

// Truncates the chain to its first k steps, keeping the final similarity.
// k = 0 is the similarity-only base model.
inline PrmChain ablate_chain(const PrmChain& chain, std::size_t k) {
  if (k > chain.steps.size()) throw UsageError("ablate_chain: k out of range");
  PrmChain out = chain;
  out.steps.resize(k);
  return out;
}

// ---------------------------------------------------------------------------
// Gold handling and lambda calibration. Precision is computed over the
// candidate universe treating non-gold pairs as negatives; pairs that are
// gold in the *other* split are excluded so the splits stay independent.

inline std::string pair_key(const std::string& article_id, const std::string& policy_id) {
  return article_id + "\x1f" + policy_id;
}

inline std::unordered_set<std::string> gold_keys(const std::vector<corpus::GoldPair>& gold,
                                                 const std::string& split) {
  std::unordered_set<std::string> out;
  for (const auto& g : gold)
    if (g.split == split) out.insert(pair_key(g.article_id, g.policy_id));
  return out;
}

struct LambdaCalibration {
  double lambda = 0;
  double train_f1 = 0;
  std::vector<std::pair<double, double>> sweep;  // (threshold, f1), descending threshold
  bool degenerate = false;

  nlohmann::json to_json() const {
    nlohmann::json sweep_json = nlohmann::json::array();
    for (const auto& [t, f] : sweep) sweep_json.push_back({t, f});
    return {{"lambda", lambda}, {"train_f1", train_f1}, {"degenerate", degenerate},
            {"sweep", sweep_json}};
  }
};

namespace detail {

struct UniversePair {
  double score;
  bool gold;
};

inline std::vector<UniversePair> evaluation_universe(
    const std::vector<LinkScore>& scores, const std::unordered_set<std::string>& gold,
    const std::unordered_set<std::string>& exclude) {
  std::vector<UniversePair> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    const std::string key = pair_key(s.article_id, s.policy_id);
    if (exclude.count(key)) continue;
    if (s.pruned_at) {
      // Pruned pairs are never predicted; gold ones still count as misses.
      if (gold.count(key)) out.push_back({-1.0, true});
      continue;
    }
    out.push_back({s.combined, gold.count(key) > 0});
  }
  return out;
}

}  // namespace detail

// Sweeps lambda over the distinct scores, maximizing F1 against gold_train;
// ties break toward the larger lambda (higher precision).
inline LambdaCalibration calibrate_lambda(const std::vector<LinkScore>& scores,
                                          const std::unordered_set<std::string>& gold_train,
                                          const std::unordered_set<std::string>& exclude = {}) {
  if (gold_train.empty()) throw DataError("calibrate_lambda: empty gold set");
  auto universe = detail::evaluation_universe(scores, gold_train, exclude);
  std::vector<detail::UniversePair> scored;
  for (const auto& u : universe)
    if (u.score >= 0) scored.push_back(u);
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.score > b.score; });

  const auto n_gold = static_cast<std::int64_t>(gold_train.size());
  LambdaCalibration cal;
  std::int64_t tp = 0, fp = 0;
  double best_f1 = -1;
  std::size_t i = 0;
  while (i < scored.size()) {
    const double threshold = scored[i].score;
    while (i < scored.size() && scored[i].score == threshold) {
      (scored[i].gold ? tp : fp)++;
      ++i;
    }
    const double f1 = learn::f1_score(tp, fp, n_gold - tp);
    cal.sweep.emplace_back(threshold, f1);
    if (f1 > best_f1) {
      best_f1 = f1;
      cal.lambda = threshold;
    }
  }
  if (scored.empty()) {
    cal.degenerate = true;
    cal.lambda = 0;
    cal.train_f1 = 0;
    return cal;
  }
  cal.train_f1 = best_f1;
  cal.degenerate = cal.sweep.size() == 1;
  return cal;
}

// F1 of {score >= lambda} against a gold split over the same universe.
inline learn::EvalReport evaluate_links(const std::vector<LinkScore>& scores,
                                        const std::unordered_set<std::string>& gold_test,
                                        double lambda,
                                        const std::unordered_set<std::string>& exclude = {}) {
  if (gold_test.empty()) throw DataError("evaluate_links: empty gold set");
  auto universe = detail::evaluation_universe(scores, gold_test, exclude);
  learn::EvalReport rep;
  rep.threshold = lambda;
  std::vector<std::pair<double, int>> scored;
  std::int64_t gold_seen = 0;
  for (const auto& u : universe) {
    if (u.gold) ++gold_seen;
    const bool predicted = u.score >= 0 && u.score >= lambda;
    if (predicted && u.gold) ++rep.tp;
    else if (predicted) ++rep.fp;
    else if (u.gold) ++rep.fn;
    else ++rep.tn;
    scored.emplace_back(std::max(u.score, 0.0), u.gold ? 1 : 0);
  }
  // Gold pairs outside the candidate universe are unreachable misses.
  rep.fn += static_cast<std::int64_t>(gold_test.size()) - gold_seen;
  rep.precision = rep.tp + rep.fp == 0 ? 0.0 : static_cast<double>(rep.tp) / (rep.tp + rep.fp);
  rep.recall = static_cast<double>(rep.tp) / static_cast<double>(gold_test.size());
  rep.f1 = rep.precision + rep.recall == 0 ? 0.0
                                           : 2 * rep.precision * rep.recall /
                                                 (rep.precision + rep.recall);
  rep.roc_auc = scored.empty() ? 0.5 : learn::roc_auc(scored);
  return rep;
}

// ---------------------------------------------------------------------------
// Link emission.

struct Link {
  std::string article_id;
  std::string policy_id;
  double score = 0;
};

struct LinkSet {
  std::vector<Link> links;  // sorted by score descending

  bool covers(const std::string& policy_id) const {
    return std::any_of(links.begin(), links.end(),
                       [&](const Link& l) { return l.policy_id == policy_id; });
  }
};

// Every non-pruned pair at or above lambda; many-to-many by construction.
inline LinkSet emit_links(const std::vector<LinkScore>& scores, double lambda) {
  LinkSet out;
  for (const auto& s : scores)
    if (!s.pruned_at && s.combined >= lambda)
      out.links.push_back({s.article_id, s.policy_id, s.combined});
  std::sort(out.links.begin(), out.links.end(), [](const Link& a, const Link& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.article_id, a.policy_id) < std::tie(b.article_id, b.policy_id);
  });
  return out;
}

inline std::string link_scores_csv(const std::vector<LinkScore>& scores,
                                   const std::vector<std::string>& step_names) {
  std::string out = "article_id,policy_id,score,similarity";
  for (const auto& n : step_names) out += "," + n;
  out += ",pruned_at,degraded\n";
  for (const auto& s : scores) {
    std::vector<std::string> row = {s.article_id, s.policy_id, fmt_double(s.combined),
                                    fmt_double(s.similarity)};
    for (std::size_t i = 0; i < step_names.size(); ++i)
      row.push_back(i < s.step_probs.size() ? fmt_double(s.step_probs[i]) : "");
    row.push_back(s.pruned_at.value_or(""));
    row.push_back(s.degraded ? "1" : "0");
    out += csv_row(row);
  }
  return out;
}

inline std::string links_csv(const LinkSet& set) {
  std::string out = "article_id,policy_id,score\n";
  for (const auto& l : set.links)
    out += csv_row({l.article_id, l.policy_id, fmt_double(l.score)});
  return out;
}

inline LinkSet links_from_csv(const std::string& text) {
  LinkSet out;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto fields = csv_split(line);
    if (fields.size() < 3) throw DataError("links csv: bad row: " + line);
    out.links.push_back({fields[0], fields[1], std::stod(fields[2])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chain assembly. With step annotations the attribute models are trained
// supervised (h2 on articles that passed h1, mirroring how the labels were
// collected); without them, h1 falls back to the keyword bootstrap and the
// chain runs keyword -> rule. h3 is the offline rule unless an external
// client is configured.

struct ChainOptions {
  std::string keyword = "board of supervisors";
  std::string body_phrase = "board of supervisors";
  int window_days = 31;
  double negative_ratio = 1.0;
  double gate_h1 = 0.5;
  double gate_h2 = 0.5;
  double gate_h3 = 0.5;
  int annotation_budget = 0;  // 0 = use all annotations
  learn::TrainConfig train{.l2_lambda = 1e-4, .learning_rate = 4.0, .max_iters = 300};
  SimilarityTarget target = SimilarityTarget::PolicyText;
  bool use_external_h3 = false;
  external::ExternalYesNoClient::Options client;
};

inline ChainOptions chain_options_from_config(const KvConfig& cfg, ChainOptions base = {}) {
  base.keyword = cfg.get("chain.keyword", base.keyword);
  base.body_phrase = cfg.get("chain.body_phrase", base.body_phrase);
  base.window_days = static_cast<int>(cfg.get_long("chain.window_days", base.window_days));
  base.negative_ratio = cfg.get_double("chain.negative_ratio", base.negative_ratio);
  base.gate_h1 = cfg.get_double("chain.gate.h1", base.gate_h1);
  base.gate_h2 = cfg.get_double("chain.gate.h2", base.gate_h2);
  base.gate_h3 = cfg.get_double("chain.gate.h3", base.gate_h3);
  base.annotation_budget =
      static_cast<int>(cfg.get_long("chain.annotation_budget", base.annotation_budget));
  base.train.l2_lambda = cfg.get_double("chain.train.l2_lambda", base.train.l2_lambda);
  base.train.learning_rate = cfg.get_double("chain.train.learning_rate", base.train.learning_rate);
  base.train.max_iters = static_cast<int>(cfg.get_long("chain.train.max_iters", base.train.max_iters));
  base.train.seed = static_cast<std::uint64_t>(cfg.get_long("chain.train.seed", base.train.seed));
  const std::string target = cfg.get("chain.similarity_target", "");
  if (target == "minutes_text") base.target = SimilarityTarget::MinutesText;
  else if (target == "policy_text") base.target = SimilarityTarget::PolicyText;
  else if (!target.empty()) throw UsageError("unknown similarity target " + target);
  base.use_external_h3 = cfg.get_bool("chain.external_h3", base.use_external_h3);
  base.client.endpoint = cfg.get("chain.client.endpoint", base.client.endpoint);
  base.client.cache_path = cfg.get("chain.client.cache", base.client.cache_path.string());
  base.client.body_name = cfg.get("chain.client.body_name", base.client.body_name);
  return base;
}

struct BuiltChain {
  PrmChain chain;
  std::shared_ptr<const textvec::TfIdfModel> tfidf;
  std::shared_ptr<external::ExternalYesNoClient> client;
  learn::BootstrapResult bootstrap;  // populated in keyword mode
  bool used_annotations = false;
};

inline BuiltChain build_chain(const CorpusStore& store,
                              const std::vector<corpus::StepAnnotation>& annotations,
                              const ChainOptions& opt) {
  BuiltChain out;

  // Shared vector space over article bodies and policy texts.
  std::vector<std::string> docs;
  docs.reserve(store.articles().size() + store.policies().size());
  for (const auto& a : store.articles()) docs.push_back(a.body);
  for (const auto& p : store.policies()) docs.push_back(p.full_text());
  if (opt.target == SimilarityTarget::MinutesText)
    for (const auto& m : store.meetings())
      if (m.minutes_text) docs.push_back(*m.minutes_text);
  auto tfidf = std::make_shared<textvec::TfIdfModel>(textvec::TfIdfModel::fit(docs));
  out.tfidf = tfidf;

  RuleScorerConfig rule;
  rule.body_phrase = opt.body_phrase;
  rule.window_days = opt.window_days;

  auto make_logistic_step = [&](std::string name, std::shared_ptr<const learn::LogisticModel> m,
                                double gate) {
    ChainStep s;
    s.name = std::move(name);
    s.kind = ScorerKind::Logistic;
    s.model = std::move(m);
    s.tfidf = tfidf;
    s.gate = gate;
    return s;
  };

  if (!annotations.empty()) {
    out.used_annotations = true;
    std::vector<learn::LabeledExample> h1_train, h2_train;
    int used = 0;
    for (const auto& ann : annotations) {
      if (opt.annotation_budget > 0 && used >= opt.annotation_budget) break;
      const Article* a = store.find_article(ann.article_id);
      if (!a) continue;
      ++used;
      learn::LabeledExample e;
      e.features = tfidf->transform(a->body);
      e.id = a->id;
      e.label = ann.h1;
      h1_train.push_back(e);
      if (ann.h1 == 1) {
        e.label = ann.h2;
        h2_train.push_back(std::move(e));
      }
    }
    auto h1 = std::make_shared<learn::LogisticModel>(learn::train_logistic(h1_train, opt.train));
    auto h2 = std::make_shared<learn::LogisticModel>(learn::train_logistic(h2_train, opt.train));
    out.chain.steps.push_back(make_logistic_step("h1_covers_body", h1, opt.gate_h1));
    out.chain.steps.push_back(make_logistic_step("h2_votes_policy", h2, opt.gate_h2));
  } else {
    out.bootstrap =
        learn::bootstrap_from_keyword(store.articles(), opt.keyword, opt.negative_ratio, opt.train);
    auto h1 = std::make_shared<learn::LogisticModel>(out.bootstrap.model);
    ChainStep s;
    s.name = "h1_covers_body";
    s.kind = ScorerKind::Logistic;
    s.model = h1;
    s.tfidf = std::make_shared<textvec::TfIdfModel>(out.bootstrap.tfidf);
    s.gate = opt.gate_h1;
    out.chain.steps.push_back(std::move(s));
  }

  ChainStep h3;
  h3.name = "h3_recent_votes";
  h3.rule = rule;
  h3.gate = opt.gate_h3;
  if (opt.use_external_h3) {
    h3.kind = ScorerKind::External;
    out.client = std::make_shared<external::ExternalYesNoClient>(
        external::ExternalYesNoClient::options_from_env(opt.client));
    h3.client = out.client;
  } else {
    h3.kind = ScorerKind::Rule;
  }
  out.chain.steps.push_back(std::move(h3));

  out.chain.similarity_space = std::make_shared<textvec::TfidfEmbedding>(tfidf);
  out.chain.target = opt.target;
  out.chain.validate();
  return out;
}

inline std::vector<std::string> step_names(const PrmChain& chain) {
  std::vector<std::string> out;
  for (const auto& s : chain.steps) out.push_back(s.name);
  return out;
}

}  // namespace civiclink::prm
