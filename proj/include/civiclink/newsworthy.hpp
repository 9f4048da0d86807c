#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "civiclink/corpus.hpp"
#include "civiclink/external.hpp"
#include "civiclink/learn.hpp"
#include "civiclink/meetings.hpp"
#include "civiclink/prmlink.hpp"
#include "civiclink/textvec.hpp"

namespace civiclink::newsworthy {

using corpus::CorpusStore;
using corpus::Meeting;
using corpus::PolicyItem;

// ---------------------------------------------------------------------------
// Dataset records: one example per (policy, meeting) appearance.

struct NewsworthyExample {
  std::string policy_id;
  int label = 0;  // 1 iff any linked article covers the policy
  std::string policy_text;
  std::int64_t n_prior_meetings = 0;
  std::int64_t n_prior_articles = 0;
  double discussion_minutes = 0;
  std::string discussion_text;
  std::int64_t n_speakers = 0;
  std::int64_t n_public_commenters = 0;
  std::string public_comment_text;
  std::string meeting_id;
  Date meeting_date;
};

inline nlohmann::json to_json(const NewsworthyExample& e) {
  return {{"policy_id", e.policy_id},
          {"label", e.label},
          {"policy_text", e.policy_text},
          {"n_prior_meetings", e.n_prior_meetings},
          {"n_prior_articles", e.n_prior_articles},
          {"discussion_minutes", e.discussion_minutes},
          {"discussion_text", e.discussion_text},
          {"n_speakers", e.n_speakers},
          {"n_public_commenters", e.n_public_commenters},
          {"public_comment_text", e.public_comment_text},
          {"meeting_id", e.meeting_id},
          {"meeting_date", e.meeting_date.str()}};
}

inline NewsworthyExample example_from_json(const nlohmann::json& j) {
  NewsworthyExample e;
  e.policy_id = j.at("policy_id").get<std::string>();
  e.label = j.at("label").get<int>();
  e.policy_text = j.value("policy_text", "");
  e.n_prior_meetings = j.value("n_prior_meetings", std::int64_t{0});
  e.n_prior_articles = j.value("n_prior_articles", std::int64_t{0});
  e.discussion_minutes = j.value("discussion_minutes", 0.0);
  e.discussion_text = j.value("discussion_text", "");
  e.n_speakers = j.value("n_speakers", std::int64_t{0});
  e.n_public_commenters = j.value("n_public_commenters", std::int64_t{0});
  e.public_comment_text = j.value("public_comment_text", "");
  e.meeting_id = j.at("meeting_id").get<std::string>();
  e.meeting_date = Date::parse(j.at("meeting_date").get<std::string>());
  return e;
}

inline void write_dataset(const std::filesystem::path& path,
                          const std::vector<NewsworthyExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    out += to_json(e).dump();
    out += '\n';
  }
  write_file(path, out);
}

inline std::vector<NewsworthyExample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<NewsworthyExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(example_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels (coverage indicator) and feature extraction.

inline std::map<std::string, int> make_labels(const std::vector<PolicyItem>& policies,
                                              const prm::LinkSet& links) {
  std::unordered_set<std::string> covered;
  for (const auto& l : links.links) covered.insert(l.policy_id);
  std::map<std::string, int> out;
  for (const auto& p : policies) out[p.id] = covered.count(p.id) ? 1 : 0;
  return out;
}

inline NewsworthyExample extract_features(
    const CorpusStore& store, const Meeting& meeting, const PolicyItem& policy,
    const prm::LinkSet& links, const std::vector<meetings::CommentAssignment>& assignments) {
  bool on_agenda = false;
  for (const auto& item : meeting.agenda)
    if (item.policy_id && *item.policy_id == policy.id) on_agenda = true;
  if (!on_agenda) throw DataError("policy " + policy.id + " not on agenda of " + meeting.id);

  NewsworthyExample e;
  e.policy_id = policy.id;
  e.meeting_id = meeting.id;
  e.meeting_date = meeting.date;
  e.policy_text = policy.full_text();
  e.label = links.covers(policy.id) ? 1 : 0;

  for (const Date& d : store.discussion_dates(policy))
    if (d < meeting.date) ++e.n_prior_meetings;
  for (const auto& l : links.links) {
    if (l.policy_id != policy.id) continue;
    if (const auto* a = store.find_article(l.article_id))
      if (a->publish_date < meeting.date) ++e.n_prior_articles;
  }

  const auto stats = meetings::policy_discussion_stats(meeting, policy.id);
  e.discussion_minutes = stats.minutes;
  e.n_speakers = stats.n_speakers;
  {
    // Discussion text: the segments inside the policy's agenda-item span.
    int item_idx = -1;
    for (std::size_t i = 0; i < meeting.agenda.size(); ++i)
      if (meeting.agenda[i].policy_id && *meeting.agenda[i].policy_id == policy.id) {
        item_idx = static_cast<int>(i);
        break;
      }
    const double start = meeting.agenda[item_idx].timestamp_s.value();
    double end = meeting.end_time();
    for (std::size_t j = item_idx + 1; j < meeting.agenda.size(); ++j)
      if (meeting.agenda[j].timestamp_s) {
        end = *meeting.agenda[j].timestamp_s;
        break;
      }
    for (const auto& seg : meeting.segments) {
      const bool inside = (seg.t_start >= start && seg.t_start < end) || seg.t_start == start;
      if (!inside) continue;
      if (!e.discussion_text.empty()) e.discussion_text += ' ';
      e.discussion_text += seg.text;
    }
  }

  int speaker_no = 0;
  for (const auto& a : assignments) {
    if (a.policy_id != policy.id) continue;
    ++e.n_public_commenters;
    ++speaker_no;
    std::string speech;
    for (const auto& seg : meeting.segments)
      if (seg.speaker_id == a.speaker_id) {
        if (!speech.empty()) speech += ' ';
        speech += seg.text;
      }
    if (!e.public_comment_text.empty()) e.public_comment_text += '\n';
    e.public_comment_text += "<SPEAKER " + std::to_string(speaker_no) + "> spoke for " +
                             fmt_double(a.minutes, 1) + " minutes and said: \"" + speech + "\"";
  }
  return e;
}

// One example per (meeting, policy-on-agenda), ordered by meeting date then
// policy id. Meetings must be pegged.
inline std::vector<NewsworthyExample> build_dataset(const CorpusStore& store,
                                                    const std::vector<Meeting>& pegged,
                                                    const prm::LinkSet& links,
                                                    double comment_tau = 0.15) {
  std::vector<const Meeting*> order;
  for (const auto& m : pegged) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(),
                   [](const Meeting* a, const Meeting* b) { return a->date < b->date; });
  std::vector<NewsworthyExample> out;
  for (const Meeting* m : order) {
    const auto spans = meetings::compute_section_spans(*m);
    const auto commenters = meetings::find_public_commenters(*m, spans);
    std::vector<const PolicyItem*> meeting_policies;
    std::vector<std::string> seen;
    for (const auto& item : m->agenda) {
      if (!item.policy_id) continue;
      if (std::find(seen.begin(), seen.end(), *item.policy_id) != seen.end()) continue;
      seen.push_back(*item.policy_id);
      if (const auto* p = store.find_policy(*item.policy_id)) meeting_policies.push_back(p);
    }
    const auto assignments =
        meetings::assign_comments(*m, commenters.speakers, meeting_policies, comment_tau);
    std::sort(seen.begin(), seen.end());
    for (const auto& pid : seen) {
      const auto* p = store.find_policy(pid);
      if (!p) continue;
      out.push_back(extract_features(store, *m, *p, links, assignments));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt assembly (sections: policy, meeting, public comment; fixed question
// line last). Text fields are truncated to the first word_limit words; the
// policy text is truncated only when policy_word_limit is set.

struct SectionMask {
  bool policy = true;
  bool meeting = true;
  bool comment = true;

  std::string name() const {
    if (policy && meeting && comment) return "full";
    std::string out;
    auto add = [&](bool on, const char* tag) {
      if (!on) return;
      if (!out.empty()) out += ", ";
      out += tag;
    };
    add(policy, "(1)");
    add(meeting, "(2)");
    add(comment, "(3)");
    return out.empty() ? "none" : out;
  }
};

inline const std::string kQuestionLine = "Is this newsworthy? Answer \"yes\" or \"no\".";

inline std::string truncate_words(const std::string& text, int limit) {
  if (limit <= 0) return text;
  std::istringstream in(text);
  std::string word, out;
  int n = 0;
  while (n < limit && in >> word) {
    if (n) out += ' ';
    out += word;
    ++n;
  }
  return out;
}

struct PromptRecord {
  std::string text;
  SectionMask mask;
  int word_limit = 50;
};

inline PromptRecord assemble_prompt(const NewsworthyExample& e, const SectionMask& mask = {},
                                    int word_limit = 50, int policy_word_limit = 0) {
  PromptRecord rec;
  rec.mask = mask;
  rec.word_limit = word_limit;
  std::string& out = rec.text;
  if (mask.policy) {
    out += "Policy description: \"" + truncate_words(e.policy_text, policy_word_limit) + "\"\n";
    out += "Presented in " + std::to_string(e.n_prior_meetings) + " prior meetings, " +
           std::to_string(e.n_prior_articles) + " news articles\n";
  }
  if (mask.meeting) {
    out += "Introduced by " + std::to_string(e.n_speakers) + " speakers in the meeting for " +
           fmt_double(e.discussion_minutes, 1) + " minutes:\n";
    out += "\"" + truncate_words(e.discussion_text, word_limit) + "\"\n";
  }
  if (mask.comment) {
    out += std::to_string(e.n_public_commenters) + " members of the public spoke.\n";
    if (!e.public_comment_text.empty())
      out += truncate_words(e.public_comment_text, word_limit) + "\n";
  }
  out += kQuestionLine;
  return rec;
}

// ---------------------------------------------------------------------------
// Temporal split: train strictly before the cutoff, test at or after. The
// train side can be class-balanced by seeded downsampling; the test side
// never is.

struct SplitConfig {
  Date cutoff;
  bool balance_train = true;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<NewsworthyExample> train;
  std::vector<NewsworthyExample> test;
};

inline std::vector<NewsworthyExample> balance_examples(std::vector<NewsworthyExample> examples,
                                                       std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < examples.size(); ++i)
    (examples[i].label == 1 ? pos : neg).push_back(i);
  auto& majority = pos.size() > neg.size() ? pos : neg;
  const std::size_t target = std::min(pos.size(), neg.size());
  std::mt19937_64 rng(seed);
  std::shuffle(majority.begin(), majority.end(), rng);
  majority.resize(target);
  std::vector<std::size_t> keep;
  keep.insert(keep.end(), pos.begin(), pos.end());
  keep.insert(keep.end(), neg.begin(), neg.end());
  std::sort(keep.begin(), keep.end());
  std::vector<NewsworthyExample> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(examples[i]));
  return out;
}

inline Split temporal_split(const std::vector<NewsworthyExample>& examples,
                            const SplitConfig& cfg) {
  Split s;
  for (const auto& e : examples)
    (e.meeting_date < cfg.cutoff ? s.train : s.test).push_back(e);
  if (s.train.empty()) throw DataError("temporal_split: empty train side");
  if (s.test.empty()) throw DataError("temporal_split: empty test side");
  if (cfg.balance_train) s.train = balance_examples(std::move(s.train), cfg.seed);
  return s;
}

// ---------------------------------------------------------------------------
// Ranker: TF-IDF over the assembled prompt text + logistic regression.
// Numbers stay unmasked so rendered counts remain features. An external
// yes/no client can score prompts instead of a trained model.

struct Ranker {
  SectionMask mask;
  int word_limit = 50;
  int policy_word_limit = 0;
  textvec::TfIdfModel tfidf;
  learn::LogisticModel model;
  std::shared_ptr<external::ExternalYesNoClient> external_client;  // optional

  double score(const NewsworthyExample& e) const {
    const std::string prompt = assemble_prompt(e, mask, word_limit, policy_word_limit).text;
    if (external_client) return external_client->ask(prompt).p_yes;
    return learn::predict_proba(model, tfidf.transform(prompt));
  }

  nlohmann::json to_json() const {
    return {{"mask", {{"policy", mask.policy}, {"meeting", mask.meeting}, {"comment", mask.comment}}},
            {"word_limit", word_limit},
            {"policy_word_limit", policy_word_limit},
            {"tfidf", tfidf.to_json()},
            {"model", model.to_json()}};
  }

  static Ranker from_json(const nlohmann::json& j) {
    Ranker r;
    r.mask.policy = j.at("mask").at("policy").get<bool>();
    r.mask.meeting = j.at("mask").at("meeting").get<bool>();
    r.mask.comment = j.at("mask").at("comment").get<bool>();
    r.word_limit = j.value("word_limit", 50);
    r.policy_word_limit = j.value("policy_word_limit", 0);
    r.tfidf = textvec::TfIdfModel::from_json(j.at("tfidf"));
    r.model = learn::LogisticModel::from_json(j.at("model"));
    return r;
  }
};

inline Ranker train_ranker(const std::vector<NewsworthyExample>& train,
                           const SectionMask& mask = {},
                           const learn::TrainConfig& config = {.l2_lambda = 1e-4,
                                                               .learning_rate = 4.0,
                                                               .max_iters = 300},
                           int word_limit = 50, int policy_word_limit = 0) {
  Ranker r;
  r.mask = mask;
  r.word_limit = word_limit;
  r.policy_word_limit = policy_word_limit;
  std::vector<std::string> prompts;
  prompts.reserve(train.size());
  for (const auto& e : train)
    prompts.push_back(assemble_prompt(e, mask, word_limit, policy_word_limit).text);
  textvec::TfIdfOptions opt;
  opt.tokenize.mask_numbers = false;
  r.tfidf = textvec::TfIdfModel::fit(prompts, opt);
  std::vector<learn::LabeledExample> examples(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    examples[i].features = r.tfidf.transform(prompts[i]);
    examples[i].label = train[i].label;
    examples[i].id = train[i].policy_id;
  }
  r.model = learn::train_logistic(examples, config);
  return r;
}

// ---------------------------------------------------------------------------
// Ranking and evaluation.

struct RankedList {
  std::string meeting_id;
  std::vector<std::pair<std::string, double>> items;  // (policy_id, score) descending
};

inline RankedList rank_meeting(const Ranker& ranker,
                               const std::vector<NewsworthyExample>& meeting_examples) {
  if (meeting_examples.empty()) throw DataError("rank_meeting: empty meeting");
  RankedList out;
  out.meeting_id = meeting_examples.front().meeting_id;
  for (const auto& e : meeting_examples) {
    if (e.meeting_id != out.meeting_id) throw DataError("rank_meeting: mixed meetings");
    out.items.emplace_back(e.policy_id, ranker.score(e));
  }
  std::sort(out.items.begin(), out.items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;  // ties by lower policy id
  });
  return out;
}

struct RankMetrics {
  double f1 = 0;
  double roc_auc = 0;
  double recall_at_10 = 0;
  double mrr = 0;

  nlohmann::json to_json() const {
    return {{"f1", f1}, {"roc_auc", roc_auc}, {"recall_at_10", recall_at_10}, {"mrr", mrr}};
  }
};

// F1 at threshold 0.5 and ROC-AUC over all test examples. R@10 is the mean
// over meetings (those with at least one positive) of the fraction of
// newsworthy policies in the top 10. MRR averages 1/rank over newsworthy
// policies; mrr_first_hit switches to the first-hit-per-meeting reading.
inline RankMetrics eval_ranker(const Ranker& ranker,
                               const std::vector<NewsworthyExample>& test, int top_k = 10,
                               bool mrr_first_hit = false) {
  if (test.empty()) throw DataError("eval_ranker: no test examples");
  bool any_positive = false;
  for (const auto& e : test) any_positive = any_positive || e.label == 1;
  if (!any_positive) throw DataError("eval_ranker: no positive test examples");

  std::map<std::string, std::vector<NewsworthyExample>> by_meeting;
  for (const auto& e : test) by_meeting[e.meeting_id].push_back(e);

  RankMetrics out;
  std::vector<std::pair<double, int>> scored;
  std::map<std::string, int> labels;
  for (const auto& e : test) labels[e.meeting_id + "\x1f" + e.policy_id] = e.label;

  double r10_sum = 0;
  std::int64_t r10_meetings = 0;
  double mrr_sum = 0;
  std::int64_t mrr_count = 0;
  for (const auto& [mid, examples] : by_meeting) {
    const auto ranked = rank_meeting(ranker, examples);
    std::int64_t n_pos = 0, hits = 0;
    for (std::size_t rank = 0; rank < ranked.items.size(); ++rank) {
      const int label = labels.at(mid + "\x1f" + ranked.items[rank].first);
      scored.emplace_back(ranked.items[rank].second, label);
      if (label == 1) {
        ++n_pos;
        if (static_cast<int>(rank) < top_k) ++hits;
        if (!mrr_first_hit || n_pos == 1) {
          mrr_sum += 1.0 / static_cast<double>(rank + 1);
          ++mrr_count;
        }
      }
    }
    if (n_pos > 0) {
      r10_sum += static_cast<double>(hits) / static_cast<double>(n_pos);
      ++r10_meetings;
    }
  }
  out.recall_at_10 = r10_meetings == 0 ? 0 : r10_sum / static_cast<double>(r10_meetings);
  out.mrr = mrr_count == 0 ? 0 : mrr_sum / static_cast<double>(mrr_count);
  const auto rep = learn::evaluate_binary(scored, 0.5);
  out.f1 = rep.f1;
  out.roc_auc = rep.roc_auc;
  return out;
}

// ---------------------------------------------------------------------------
// Ablation grids: prompt-section masks and training-cutoff years. Cutoff
// cells shrink the train window while the test window stays fixed.

struct GridCell {
  std::string name;
  bool valid = true;
  std::string note;
  RankMetrics metrics;
  std::int64_t n_train = 0;
};

struct GridSpec {
  std::vector<SectionMask> masks;
  std::vector<int> cutoff_years;
  Date test_start;  // evaluation window start (also the default train cutoff)
  bool balance_train = true;
  std::uint64_t seed = 0;
  int word_limit = 50;
  learn::TrainConfig train{.l2_lambda = 1e-4, .learning_rate = 4.0, .max_iters = 300};
};

inline std::vector<GridCell> run_ablation_grid(const std::vector<NewsworthyExample>& dataset,
                                               const GridSpec& spec, unsigned jobs = 1) {
  struct Job {
    std::string name;
    SectionMask mask;
    Date train_cutoff;
  };
  std::vector<Job> cells;
  for (const auto& mask : spec.masks) cells.push_back({mask.name(), mask, spec.test_start});
  for (int year : spec.cutoff_years) {
    const Date cutoff = Date::from_civil(year, 1, 1);
    cells.push_back({"cutoff '" + std::to_string(year % 100), SectionMask{},
                     std::min(cutoff, spec.test_start)});
  }

  return parallel_map<GridCell>(cells.size(), jobs, [&](std::size_t i) {
    const Job& job = cells[i];
    GridCell cell;
    cell.name = job.name;
    std::vector<NewsworthyExample> train, test;
    for (const auto& e : dataset) {
      if (e.meeting_date < job.train_cutoff) train.push_back(e);
      else if (e.meeting_date >= spec.test_start) test.push_back(e);
    }
    try {
      if (spec.balance_train) train = balance_examples(std::move(train), spec.seed);
      cell.n_train = static_cast<std::int64_t>(train.size());
      const Ranker ranker = train_ranker(train, job.mask, spec.train, spec.word_limit);
      cell.metrics = eval_ranker(ranker, test);
    } catch (const std::exception& e) {
      cell.valid = false;
      cell.note = e.what();
    }
    return cell;
  });
}

inline std::string grid_csv(const std::vector<GridCell>& cells) {
  std::string out = "cell,f1,roc_auc,mrr,recall_at_10,n,valid,note\n";
  for (const auto& c : cells)
    out += csv_row({c.name, fmt_double(c.metrics.f1), fmt_double(c.metrics.roc_auc),
                    fmt_double(c.metrics.mrr), fmt_double(c.metrics.recall_at_10),
                    std::to_string(c.n_train), c.valid ? "1" : "0", c.note});
  return out;
}

inline std::string ranking_csv(const RankedList& list, int top_k = 0) {
  std::string out = "meeting_id,rank,policy_id,score\n";
  const std::size_t n = top_k > 0 ? std::min<std::size_t>(top_k, list.items.size())
                                  : list.items.size();
  for (std::size_t i = 0; i < n; ++i)
    out += csv_row({list.meeting_id, std::to_string(i + 1), list.items[i].first,
                    fmt_double(list.items[i].second)});
  return out;
}

}  // namespace civiclink::newsworthy
