#pragma once

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "civiclink/corpus.hpp"
#include "civiclink/newsworthy.hpp"
#include "civiclink/prmlink.hpp"
#include "civiclink/textvec.hpp"

namespace civiclink::analytics {

using corpus::CorpusStore;

// ---------------------------------------------------------------------------
// Coverage: per-meeting proposed/covered counts plus articles-per-policy and
// meetings-per-policy histograms.

struct CoverageRow {
  std::string meeting_id;
  Date date;
  std::int64_t n_proposed = 0;
  std::int64_t n_covered = 0;
  double fraction = 0;
};

struct Histogram {
  std::map<std::int64_t, std::int64_t> buckets;  // value -> count
  double mean = 0;
  double median = 0;
};

struct CoverageStats {
  std::vector<CoverageRow> series;  // one row per meeting, by date
  Histogram articles_per_policy;
  Histogram meetings_per_policy;
};

namespace detail {

inline Histogram histogram_of(const std::vector<std::int64_t>& values) {
  Histogram h;
  if (values.empty()) return h;
  std::vector<std::int64_t> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0;
  for (auto v : sorted) {
    ++h.buckets[v];
    sum += static_cast<double>(v);
  }
  h.mean = sum / static_cast<double>(sorted.size());
  const std::size_t n = sorted.size();
  h.median = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                        : (static_cast<double>(sorted[n / 2 - 1]) +
                           static_cast<double>(sorted[n / 2])) /
                              2.0;
  return h;
}

}  // namespace detail

inline CoverageStats coverage_stats(const prm::LinkSet& links, const CorpusStore& store) {
  std::unordered_set<std::string> covered;
  std::unordered_map<std::string, std::int64_t> articles_per;
  for (const auto& l : links.links) {
    covered.insert(l.policy_id);
    ++articles_per[l.policy_id];
  }
  CoverageStats out;
  for (const auto& m : store.meetings()) {
    CoverageRow row;
    row.meeting_id = m.id;
    row.date = m.date;
    std::set<std::string> proposed;
    for (const auto& item : m.agenda)
      if (item.policy_id) proposed.insert(*item.policy_id);
    row.n_proposed = static_cast<std::int64_t>(proposed.size());
    for (const auto& pid : proposed)
      if (covered.count(pid)) ++row.n_covered;
    row.fraction = row.n_proposed == 0
                       ? 0.0
                       : static_cast<double>(row.n_covered) / static_cast<double>(row.n_proposed);
    out.series.push_back(std::move(row));
  }
  std::stable_sort(out.series.begin(), out.series.end(),
                   [](const CoverageRow& a, const CoverageRow& b) { return a.date < b.date; });

  std::vector<std::int64_t> per_policy_articles, per_policy_meetings;
  for (const auto& p : store.policies()) {
    auto it = articles_per.find(p.id);
    per_policy_articles.push_back(it == articles_per.end() ? 0 : it->second);
    per_policy_meetings.push_back(
        static_cast<std::int64_t>(store.discussion_dates(p).size()));
  }
  out.articles_per_policy = detail::histogram_of(per_policy_articles);
  out.meetings_per_policy = detail::histogram_of(per_policy_meetings);
  return out;
}

// ---------------------------------------------------------------------------
// Delta word distributions: (p(w | pos) - p(w | neg)) x 100 over the full
// shared vocabulary. top_n > 0 keeps the n largest and n smallest rows.

struct DeltaWordTable {
  std::vector<std::pair<std::string, double>> rows;  // sorted by delta descending
  std::string context;

  double sum() const {
    double s = 0;
    for (const auto& [w, d] : rows) s += d;
    return s;
  }
};

inline DeltaWordTable delta_words(const std::vector<std::string>& docs_pos,
                                  const std::vector<std::string>& docs_neg, int top_n = 0,
                                  std::string context = "") {
  if (docs_pos.empty() || docs_neg.empty()) throw DataError("delta_words: empty class");
  const auto pos = textvec::word_probs(docs_pos);
  const auto neg = textvec::word_probs(docs_neg);
  std::set<std::string> vocab;
  for (const auto& [w, p] : pos.p) vocab.insert(w);
  for (const auto& [w, p] : neg.p) vocab.insert(w);
  DeltaWordTable table;
  table.context = std::move(context);
  for (const auto& w : vocab)
    table.rows.emplace_back(w, (pos.prob(w) - neg.prob(w)) * 100.0);
  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (top_n > 0 && table.rows.size() > static_cast<std::size_t>(2 * top_n)) {
    std::vector<std::pair<std::string, double>> trimmed(table.rows.begin(),
                                                        table.rows.begin() + top_n);
    trimmed.insert(trimmed.end(), table.rows.end() - top_n, table.rows.end());
    table.rows = std::move(trimmed);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Class-conditional discussion comparison over newsworthiness examples.

struct ClassMeans {
  std::int64_t n = 0;
  double mean_minutes = 0;
  double mean_words = 0;
  double mean_speakers = 0;
  double mean_commenters = 0;
};

struct DiscussionComparison {
  ClassMeans positive;
  ClassMeans negative;
  // Words-spoken distribution per class, bucketed.
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> words_hist;  // bucket -> (pos,neg)
  std::int64_t bucket_width = 25;
};

inline DiscussionComparison discussion_comparison(
    const std::vector<newsworthy::NewsworthyExample>& examples) {
  DiscussionComparison out;
  for (const auto& e : examples) {
    ClassMeans& c = e.label == 1 ? out.positive : out.negative;
    const auto words = static_cast<double>(textvec::tokenize(e.discussion_text).size());
    ++c.n;
    c.mean_minutes += e.discussion_minutes;
    c.mean_words += words;
    c.mean_speakers += static_cast<double>(e.n_speakers);
    c.mean_commenters += static_cast<double>(e.n_public_commenters);
    const std::int64_t bucket =
        static_cast<std::int64_t>(words) / out.bucket_width * out.bucket_width;
    auto& slot = out.words_hist[bucket];
    (e.label == 1 ? slot.first : slot.second)++;
  }
  for (ClassMeans* c : {&out.positive, &out.negative}) {
    if (c->n == 0) continue;
    c->mean_minutes /= static_cast<double>(c->n);
    c->mean_words /= static_cast<double>(c->n);
    c->mean_speakers /= static_cast<double>(c->n);
    c->mean_commenters /= static_cast<double>(c->n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LDA via collapsed Gibbs sampling. Defaults: alpha = 50/k, beta = 0.01.

struct TopicModel {
  int k = 0;
  double alpha = 0, beta = 0;
  std::uint64_t seed = 0;
  int iterations = 0;
  std::vector<std::string> terms;                      // index -> term
  std::vector<std::vector<std::int64_t>> topic_word;   // k x V
  std::vector<std::int64_t> topic_total;               // k
  std::vector<std::vector<std::int64_t>> doc_topic;    // D x k
  std::int64_t n_tokens = 0;
  int conservation_violations = 0;  // sweeps where token counts failed to add up

  std::vector<std::string> top_words(int topic, int m) const {
    std::vector<std::size_t> order(terms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return topic_word[topic][a] > topic_word[topic][b];
    });
    std::vector<std::string> out;
    for (int i = 0; i < m && i < static_cast<int>(order.size()); ++i)
      out.push_back(terms[order[i]]);
    return out;
  }

  int dominant_topic(std::size_t doc) const {
    const auto& row = doc_topic[doc];
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
};

inline TopicModel lda_fit(const std::vector<std::string>& documents, int k, int iterations = 200,
                          double alpha = -1, double beta = 0.01, std::uint64_t seed = 0) {
  if (k < 2) throw UsageError("lda_fit: k must be >= 2");
  if (alpha <= 0) alpha = 50.0 / static_cast<double>(k);
  TopicModel m;
  m.k = k;
  m.alpha = alpha;
  m.beta = beta;
  m.seed = seed;
  m.iterations = iterations;

  std::unordered_map<std::string, int> index;
  std::vector<std::vector<int>> docs;
  for (const auto& text : documents) {
    std::vector<int> doc;
    for (const auto& t : textvec::tokenize(text)) {
      auto [it, inserted] = index.try_emplace(t, static_cast<int>(m.terms.size()));
      if (inserted) m.terms.push_back(t);
      doc.push_back(it->second);
      ++m.n_tokens;
    }
    docs.push_back(std::move(doc));
  }
  const int v = static_cast<int>(m.terms.size());
  if (v == 0) throw DataError("lda_fit: empty corpus");
  if (k > v) throw UsageError("lda_fit: k exceeds vocabulary size");

  m.topic_word.assign(k, std::vector<std::int64_t>(v, 0));
  m.topic_total.assign(k, 0);
  m.doc_topic.assign(docs.size(), std::vector<std::int64_t>(k, 0));
  std::vector<std::vector<int>> z(docs.size());

  std::mt19937_64 rng(seed);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    z[d].resize(docs[d].size());
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const int t = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
      z[d][i] = t;
      ++m.topic_word[t][docs[d][i]];
      ++m.topic_total[t];
      ++m.doc_topic[d][t];
    }
  }

  std::vector<double> weights(k);
  const double vbeta = static_cast<double>(v) * beta;
  for (int sweep = 0; sweep < iterations; ++sweep) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const int w = docs[d][i];
        const int old_t = z[d][i];
        --m.topic_word[old_t][w];
        --m.topic_total[old_t];
        --m.doc_topic[d][old_t];
        double total = 0;
        for (int t = 0; t < k; ++t) {
          weights[t] = (static_cast<double>(m.doc_topic[d][t]) + alpha) *
                       (static_cast<double>(m.topic_word[t][w]) + beta) /
                       (static_cast<double>(m.topic_total[t]) + vbeta);
          total += weights[t];
        }
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        int new_t = k - 1;
        for (int t = 0; t < k; ++t) {
          u -= weights[t];
          if (u <= 0) {
            new_t = t;
            break;
          }
        }
        z[d][i] = new_t;
        ++m.topic_word[new_t][w];
        ++m.topic_total[new_t];
        ++m.doc_topic[d][new_t];
      }
    }
    std::int64_t total_after = 0;
    for (int t = 0; t < k; ++t) total_after += m.topic_total[t];
    if (total_after != m.n_tokens) ++m.conservation_violations;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Topic-to-newsworthiness association: documents go to their dominant topic;
// topics rank by the fraction of positive documents.

struct TopicAssociation {
  int topic = 0;
  std::int64_t n_docs = 0;
  double fraction_positive = 0;
};

struct TopicRanking {
  std::vector<TopicAssociation> ranked;  // descending fraction
  std::vector<int> excluded_topics;      // no documents assigned
};

inline TopicRanking topic_newsworthiness(const TopicModel& model, const std::vector<int>& labels) {
  if (labels.size() != model.doc_topic.size())
    throw DataError("topic_newsworthiness: label count mismatch");
  std::vector<std::int64_t> docs(model.k, 0), positives(model.k, 0);
  for (std::size_t d = 0; d < labels.size(); ++d) {
    const int t = model.dominant_topic(d);
    ++docs[t];
    if (labels[d] == 1) ++positives[t];
  }
  TopicRanking out;
  for (int t = 0; t < model.k; ++t) {
    if (docs[t] == 0) {
      out.excluded_topics.push_back(t);
      continue;
    }
    out.ranked.push_back({t, docs[t],
                          static_cast<double>(positives[t]) / static_cast<double>(docs[t])});
  }
  std::sort(out.ranked.begin(), out.ranked.end(),
            [](const TopicAssociation& a, const TopicAssociation& b) {
              if (a.fraction_positive != b.fraction_positive)
                return a.fraction_positive > b.fraction_positive;
              return a.topic < b.topic;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Charts: self-contained SVG line and bar charts, axis ranges pinned to the
// data extrema.

namespace detail {

inline std::string svg_header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace detail

inline std::string svg_line_chart(const std::string& title,
                                  const std::vector<std::string>& x_labels,
                                  const std::vector<std::pair<std::string, std::vector<double>>>&
                                      series) {
  const int w = 800, h = 400, ml = 70, mr = 20, mt = 40, mb = 50;
  double y_min = 0, y_max = 1;
  bool first = true;
  for (const auto& [name, ys] : series)
    for (double y : ys) {
      y_min = first ? y : std::min(y_min, y);
      y_max = first ? y : std::max(y_max, y);
      first = false;
    }
  if (y_max == y_min) y_max = y_min + 1;
  const std::size_t n = x_labels.size();
  auto px = [&](std::size_t i) {
    return ml + (n <= 1 ? 0.0
                        : static_cast<double>(i) * (w - ml - mr) / static_cast<double>(n - 1));
  };
  auto py = [&](double y) { return h - mb - (y - y_min) / (y_max - y_min) * (h - mt - mb); };

  std::string out = detail::svg_header(w, h);
  out += "<text x=\"" + std::to_string(w / 2) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
  out += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(mt) + "\" x2=\"" +
         std::to_string(ml) + "\" y2=\"" + std::to_string(h - mb) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(h - mb) + "\" x2=\"" +
         std::to_string(w - mr) + "\" y2=\"" + std::to_string(h - mb) + "\" stroke=\"black\"/>\n";
  out += "<text x=\"" + std::to_string(ml - 6) + "\" y=\"" + std::to_string(h - mb) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
         fmt_double(y_min, 2) + "</text>\n";
  out += "<text x=\"" + std::to_string(ml - 6) + "\" y=\"" + std::to_string(mt + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
         fmt_double(y_max, 2) + "</text>\n";
  if (!x_labels.empty()) {
    out += "<text x=\"" + std::to_string(ml) + "\" y=\"" + std::to_string(h - mb + 20) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + x_labels.front() + "</text>\n";
    out += "<text x=\"" + std::to_string(w - mr) + "\" y=\"" + std::to_string(h - mb + 20) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           x_labels.back() + "</text>\n";
  }
  const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ys = series[s].second;
    std::string points;
    for (std::size_t i = 0; i < ys.size() && i < n; ++i)
      points += fmt_double(px(i), 1) + "," + fmt_double(py(ys[i]), 1) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + colors[s % colors.size()] +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    out += "<text x=\"" + std::to_string(w - mr - 150) + "\" y=\"" +
           std::to_string(mt + 16 * (s + 1)) + "\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"" + colors[s % colors.size()] + "\">" + series[s].first + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

inline std::string svg_bar_chart(const std::string& title,
                                 const std::vector<std::string>& labels,
                                 const std::vector<double>& values) {
  const int w = 800, h = 400, ml = 70, mr = 20, mt = 40, mb = 60;
  double y_max = 1;
  for (double v : values) y_max = std::max(y_max, v);
  std::string out = detail::svg_header(w, h);
  out += "<text x=\"" + std::to_string(w / 2) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
  out += "<text x=\"" + std::to_string(ml - 6) + "\" y=\"" + std::to_string(mt + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
         fmt_double(y_max, 2) + "</text>\n";
  const std::size_t n = values.size();
  const double band = n == 0 ? 0 : static_cast<double>(w - ml - mr) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bh = values[i] / y_max * (h - mt - mb);
    out += "<rect x=\"" + fmt_double(ml + band * i + band * 0.1, 1) + "\" y=\"" +
           fmt_double(h - mb - bh, 1) + "\" width=\"" + fmt_double(band * 0.8, 1) +
           "\" height=\"" + fmt_double(bh, 1) + "\" fill=\"#1f77b4\"/>\n";
    out += "<text x=\"" + fmt_double(ml + band * i + band * 0.5, 1) + "\" y=\"" +
           std::to_string(h - mb + 16) + "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"10\">" + labels[i] + "</text>\n";
  }
  out += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(h - mb) + "\" x2=\"" +
         std::to_string(w - mr) + "\" y2=\"" + std::to_string(h - mb) + "\" stroke=\"black\"/>\n";
  out += "</svg>\n";
  return out;
}

// ---------------------------------------------------------------------------
// Report bundle: CSVs plus charts under out_dir, deterministic filenames.

struct AnalyticsOutputs {
  std::optional<CoverageStats> coverage;
  std::vector<DeltaWordTable> delta_tables;
  std::optional<DiscussionComparison> comparison;
  std::optional<TopicModel> topics;
  std::optional<TopicRanking> topic_ranking;
  int topic_top_words = 8;
};

inline std::vector<std::string> emit_reports(const AnalyticsOutputs& outputs,
                                             const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file(out_dir / name, content);
    written.push_back(name);
  };

  if (outputs.coverage) {
    const auto& cov = *outputs.coverage;
    std::string csv = "meeting_id,date,n_proposed,n_covered,fraction\n";
    for (const auto& r : cov.series)
      csv += csv_row({r.meeting_id, r.date.str(), std::to_string(r.n_proposed),
                      std::to_string(r.n_covered), fmt_double(r.fraction)});
    emit("coverage_series.csv", csv);
    auto hist_csv = [](const Histogram& h, const std::string& key) {
      std::string out = key + ",n_policies\n";
      for (const auto& [v, c] : h.buckets)
        out += csv_row({std::to_string(v), std::to_string(c)});
      out += csv_row({"mean", fmt_double(h.mean)});
      out += csv_row({"median", fmt_double(h.median)});
      return out;
    };
    emit("articles_per_policy_hist.csv", hist_csv(cov.articles_per_policy, "n_articles"));
    emit("meetings_per_policy_hist.csv", hist_csv(cov.meetings_per_policy, "n_meetings"));
    if (!cov.series.empty()) {
      std::vector<std::string> xs;
      std::vector<double> proposed, covered;
      for (const auto& r : cov.series) {
        xs.push_back(r.date.str());
        proposed.push_back(static_cast<double>(r.n_proposed));
        covered.push_back(static_cast<double>(r.n_covered));
      }
      emit("coverage_series.svg",
           svg_line_chart("Policies proposed and covered per meeting", xs,
                          {{"proposed", proposed}, {"covered", covered}}));
    }
    auto hist_chart = [&](const Histogram& h, const std::string& name, const std::string& title) {
      if (h.buckets.empty()) return;
      std::vector<std::string> labels;
      std::vector<double> values;
      for (const auto& [v, c] : h.buckets) {
        labels.push_back(std::to_string(v));
        values.push_back(static_cast<double>(c));
      }
      emit(name, svg_bar_chart(title, labels, values));
    };
    hist_chart(cov.articles_per_policy, "articles_per_policy_hist.svg",
               "News articles per policy");
    hist_chart(cov.meetings_per_policy, "meetings_per_policy_hist.svg",
               "Meetings per policy");
  }

  for (const auto& table : outputs.delta_tables) {
    std::string csv = "word,delta_x100\n";
    for (const auto& [w, d] : table.rows) csv += csv_row({w, fmt_double(d, 4)});
    emit("delta_words_" + (table.context.empty() ? "all" : table.context) + ".csv", csv);
  }

  if (outputs.comparison) {
    const auto& cmp = *outputs.comparison;
    std::string csv = "class,n,mean_minutes,mean_words,mean_speakers,mean_commenters\n";
    auto row = [&](const char* name, const ClassMeans& c) {
      if (c.n == 0) {
        csv += csv_row({name, "0", "", "", "", ""});
        return;
      }
      csv += csv_row({name, std::to_string(c.n), fmt_double(c.mean_minutes),
                      fmt_double(c.mean_words), fmt_double(c.mean_speakers),
                      fmt_double(c.mean_commenters)});
    };
    row("newsworthy", cmp.positive);
    row("not_newsworthy", cmp.negative);
    emit("discussion_comparison.csv", csv);
    std::string hist = "words_bucket,n_newsworthy,n_not_newsworthy\n";
    for (const auto& [bucket, counts] : cmp.words_hist)
      hist += csv_row({std::to_string(bucket), std::to_string(counts.first),
                       std::to_string(counts.second)});
    emit("words_per_policy_hist.csv", hist);
  }

  if (outputs.topics) {
    const auto& model = *outputs.topics;
    std::string csv = "topic,n_docs,fraction_newsworthy,top_words\n";
    if (outputs.topic_ranking) {
      for (const auto& t : outputs.topic_ranking->ranked) {
        std::string words;
        for (const auto& w : model.top_words(t.topic, outputs.topic_top_words)) {
          if (!words.empty()) words += ' ';
          words += w;
        }
        csv += csv_row({std::to_string(t.topic), std::to_string(t.n_docs),
                        fmt_double(t.fraction_positive), words});
      }
    } else {
      for (int t = 0; t < model.k; ++t) {
        std::string words;
        for (const auto& w : model.top_words(t, outputs.topic_top_words)) {
          if (!words.empty()) words += ' ';
          words += w;
        }
        csv += csv_row({std::to_string(t), "", "", words});
      }
    }
    emit("topics.csv", csv);
  }

  return written;
}

}  // namespace civiclink::analytics
