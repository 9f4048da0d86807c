#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "civiclink/util.hpp"

namespace civiclink::textvec {

inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStopwords = {
      "a",    "about", "above", "after", "again",  "all",   "am",    "an",
      "and",  "any",   "are",   "as",    "at",     "be",    "been",  "before",
      "being", "below", "between", "both", "but",  "by",    "can",   "did",
      "do",   "does",  "doing", "down",  "during", "each",  "few",   "for",
      "from", "further", "had", "has",   "have",   "having", "he",   "her",
      "here", "hers",  "him",  "his",    "how",    "i",     "if",    "in",
      "into", "is",    "it",   "its",    "just",   "me",    "more",  "most",
      "my",   "no",    "nor",  "not",    "now",    "of",    "off",   "on",
      "once", "only",  "or",   "other",  "our",    "out",   "over",  "own",
      "s",    "same",  "she",  "should", "so",     "some",  "such",  "t",
      "than", "that",  "the",  "their",  "them",   "then",  "there", "these",
      "they", "this",  "those", "through", "to",   "too",   "under", "until",
      "up",   "very",  "was",  "we",     "were",   "what",  "when",  "where",
      "which", "while", "who", "whom",   "why",    "will",  "with",  "you",
      "your", "yours",
  };
  return kStopwords;
}

inline constexpr std::string_view kNumberToken = "<number>";

struct TokenizeOptions {
  bool mask_numbers = true;   // every maximal digit run becomes <number>
  bool drop_stopwords = false;
};

// Lowercase, punctuation-stripped, whitespace-split unigrams. A digit run may
// span internal '.'/',' separators ("750,000", "6.5") and maps to one
// <number> token when masking is on.
inline std::vector<std::string> tokenize(std::string_view text,
                                         const TokenizeOptions& opt = {}) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&](bool numeric) {
    if (cur.empty()) return;
    std::string tok = numeric && opt.mask_numbers ? std::string(kNumberToken) : cur;
    if (!opt.drop_stopwords || !stopwords().count(tok)) out.push_back(std::move(tok));
    cur.clear();
  };
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '<' && text.compare(i, kNumberToken.size(), kNumberToken) == 0) {
      // The mask token is a fixed point, so tokenize is idempotent on its
      // own joined output.
      flush(false);
      cur = kNumberToken;
      flush(true);
      i += kNumberToken.size();
    } else if (std::isdigit(c)) {
      flush(false);
      while (i < n) {
        const unsigned char d = static_cast<unsigned char>(text[i]);
        if (std::isdigit(d)) {
          cur += static_cast<char>(d);
          ++i;
        } else if ((d == '.' || d == ',') && i + 1 < n &&
                   std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
          cur += static_cast<char>(d);
          ++i;
        } else {
          break;
        }
      }
      flush(true);
    } else if (std::isalpha(c)) {
      cur += static_cast<char>(std::tolower(c));
      ++i;
    } else {
      flush(false);
      ++i;
    }
  }
  flush(false);
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SparseVector {
  // Sorted by index, no explicit zeros after normalization.
  std::vector<std::pair<std::int32_t, double>> entries;

  double norm() const {
    double s = 0;
    for (const auto& [i, w] : entries) s += w * w;
    return std::sqrt(s);
  }
  bool empty() const { return entries.empty(); }
};

inline double dot(const SparseVector& u, const SparseVector& v) {
  double s = 0;
  std::size_t i = 0, j = 0;
  while (i < u.entries.size() && j < v.entries.size()) {
    const auto ui = u.entries[i].first, vj = v.entries[j].first;
    if (ui == vj) {
      s += u.entries[i].second * v.entries[j].second;
      ++i;
      ++j;
    } else if (ui < vj) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

// Dot over shared indices divided by norms; 0 when either side is zero.
inline double cosine(const SparseVector& u, const SparseVector& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  // Accumulate in merge order so cosine(u,v) == cosine(v,u) bit-for-bit.
  return dot(u, v) / (nu * nv);
}

// ---------------------------------------------------------------------------

struct Vocabulary {
  std::unordered_map<std::string, std::int32_t> index;
  std::vector<std::string> terms;  // index -> term
  std::vector<std::int64_t> df;    // index -> document frequency
  std::int64_t n_docs = 0;

  std::int32_t size() const { return static_cast<std::int32_t>(terms.size()); }

  nlohmann::json to_json() const {
    nlohmann::json terms_obj = nlohmann::json::object();
    for (std::int32_t i = 0; i < size(); ++i)
      terms_obj[terms[i]] = {{"index", i}, {"df", df[i]}};
    return {{"terms", terms_obj}, {"n_docs", n_docs}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.n_docs = j.at("n_docs").get<std::int64_t>();
    const auto& terms = j.at("terms");
    v.terms.resize(terms.size());
    v.df.resize(terms.size());
    for (auto it = terms.begin(); it != terms.end(); ++it) {
      const std::int32_t idx = it.value().at("index").get<std::int32_t>();
      v.terms.at(idx) = it.key();
      v.df.at(idx) = it.value().at("df").get<std::int64_t>();
      v.index[it.key()] = idx;
    }
    return v;
  }
};

struct TfIdfOptions {
  TokenizeOptions tokenize;
  int ngram_max = 1;  // >1 appends joined n-grams; extension point, default off
};

inline std::vector<std::string> apply_ngrams(std::vector<std::string> tokens, int ngram_max) {
  if (ngram_max <= 1) return tokens;
  const std::size_t n = tokens.size();
  std::vector<std::string> out = tokens;
  for (int g = 2; g <= ngram_max; ++g) {
    for (std::size_t i = 0; i + g <= n; ++i) {
      std::string gram = tokens[i];
      for (int k = 1; k < g; ++k) gram += "_" + tokens[i + k];
      out.push_back(std::move(gram));
    }
  }
  return out;
}

class TfIdfModel {
 public:
  TfIdfModel() = default;

  // idf(term) = ln((1+N)/(1+df)) + 1, smoothed so no weight is zero/negative.
  static TfIdfModel fit(const std::vector<std::string>& documents,
                        const TfIdfOptions& opt = {}) {
    if (documents.empty()) throw DataError("tfidf: empty corpus");
    TfIdfModel m;
    m.opt_ = opt;
    m.vocab_.n_docs = static_cast<std::int64_t>(documents.size());
    for (const auto& doc : documents) {
      auto tokens = apply_ngrams(tokenize(doc, opt.tokenize), opt.ngram_max);
      std::unordered_set<std::string_view> seen;
      for (const auto& t : tokens) {
        if (!seen.insert(t).second) continue;
        auto [it, inserted] = m.vocab_.index.try_emplace(
            t, static_cast<std::int32_t>(m.vocab_.terms.size()));
        if (inserted) {
          m.vocab_.terms.push_back(t);
          m.vocab_.df.push_back(0);
        }
        ++m.vocab_.df[it->second];
      }
    }
    m.rebuild_idf();
    return m;
  }

  // Raw-count tf, weight = tf * idf, L2-normalized. OOV terms are dropped;
  // a document with no in-vocabulary terms maps to the zero vector.
  SparseVector transform(std::string_view text) const {
    std::unordered_map<std::int32_t, double> counts;
    for (const auto& t :
         apply_ngrams(tokenize(text, opt_.tokenize), opt_.ngram_max)) {
      auto it = vocab_.index.find(t);
      if (it != vocab_.index.end()) counts[it->second] += 1.0;
    }
    SparseVector v;
    v.entries.reserve(counts.size());
    for (const auto& [idx, tf] : counts) v.entries.emplace_back(idx, tf * idf_[idx]);
    std::sort(v.entries.begin(), v.entries.end());
    double n = v.norm();
    if (n > 0)
      for (auto& [idx, w] : v.entries) w /= n;
    return v;
  }

  double idf(const std::string& term) const {
    auto it = vocab_.index.find(term);
    return it == vocab_.index.end() ? 0.0 : idf_[it->second];
  }

  const Vocabulary& vocab() const { return vocab_; }
  const TfIdfOptions& options() const { return opt_; }

  nlohmann::json to_json() const {
    nlohmann::json j = vocab_.to_json();
    j["ngram_max"] = opt_.ngram_max;
    j["mask_numbers"] = opt_.tokenize.mask_numbers;
    j["drop_stopwords"] = opt_.tokenize.drop_stopwords;
    return j;
  }

  static TfIdfModel from_json(const nlohmann::json& j) {
    TfIdfModel m;
    m.vocab_ = Vocabulary::from_json(j);
    m.opt_.ngram_max = j.value("ngram_max", 1);
    m.opt_.tokenize.mask_numbers = j.value("mask_numbers", true);
    m.opt_.tokenize.drop_stopwords = j.value("drop_stopwords", false);
    m.rebuild_idf();
    return m;
  }

 private:
  void rebuild_idf() {
    idf_.resize(vocab_.terms.size());
    for (std::size_t i = 0; i < idf_.size(); ++i)
      idf_[i] = std::log(static_cast<double>(1 + vocab_.n_docs) /
                         static_cast<double>(1 + vocab_.df[i])) +
                1.0;
  }

  Vocabulary vocab_;
  std::vector<double> idf_;
  TfIdfOptions opt_;
};

// ---------------------------------------------------------------------------

struct WordDistribution {
  std::unordered_map<std::string, double> p;
  std::string context;

  double prob(const std::string& w) const {
    auto it = p.find(w);
    return it == p.end() ? 0.0 : it->second;
  }
};

// p(w) = count(w across docs) / total token count.
inline WordDistribution word_probs(const std::vector<std::string>& documents,
                                   const TokenizeOptions& opt = {},
                                   std::string context = "") {
  std::unordered_map<std::string, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& doc : documents)
    for (auto& t : tokenize(doc, opt)) {
      ++counts[t];
      ++total;
    }
  if (total == 0) throw DataError("word_probs: zero tokens");
  WordDistribution d;
  d.context = std::move(context);
  for (const auto& [w, c] : counts)
    d.p[w] = static_cast<double>(c) / static_cast<double>(total);
  return d;
}

// ---------------------------------------------------------------------------
// Text embeddings behind an interface so other vector spaces (dense model
// embeddings included; SparseVector holds those as index 0..d-1) can be
// swapped in. Only the TF-IDF provider ships.

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual SparseVector embed(std::string_view text) const = 0;
  virtual std::string name() const = 0;
  double similarity(std::string_view a, std::string_view b) const {
    return cosine(embed(a), embed(b));
  }
};

class TfidfEmbedding final : public EmbeddingProvider {
 public:
  explicit TfidfEmbedding(std::shared_ptr<const TfIdfModel> model) : model_(std::move(model)) {}
  SparseVector embed(std::string_view text) const override { return model_->transform(text); }
  std::string name() const override { return "tfidf"; }
  const TfIdfModel& model() const { return *model_; }

 private:
  std::shared_ptr<const TfIdfModel> model_;
};

}  // namespace civiclink::textvec
