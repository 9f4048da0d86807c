#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "civiclink/corpus.hpp"
#include "civiclink/learn.hpp"
#include "civiclink/textvec.hpp"

namespace civiclink::meetings {

using corpus::AgendaItem;
using corpus::Meeting;
using corpus::PolicyItem;
using corpus::TranscriptSegment;

inline const std::string kPublicCommentHeader = "PUBLIC COMMENT";

// ---------------------------------------------------------------------------
// Transition labeling (the hyperlink rule). A segment is a transition iff a
// source (non-pegged) agenda timestamp falls inside it. The interval is
// closed on both ends: boundary timestamps in real exports land exactly on
// segment starts.

struct TransitionExample {
  int segment_index = -1;
  int label = 0;
};

inline std::vector<TransitionExample> label_transitions(const Meeting& meeting) {
  std::vector<double> source_ts;
  for (const auto& item : meeting.agenda)
    if (item.timestamp_s && !item.pegged) source_ts.push_back(*item.timestamp_s);
  std::vector<TransitionExample> out;
  out.reserve(meeting.segments.size());
  for (std::size_t i = 0; i < meeting.segments.size(); ++i) {
    const auto& seg = meeting.segments[i];
    int label = 0;
    for (double t : source_ts)
      if (t >= seg.t_start && t <= seg.t_end) {
        label = 1;
        break;
      }
    out.push_back({static_cast<int>(i), label});
  }
  return out;
}

// Bag-of-words transition classifier over segment text.
struct TransitionModel {
  textvec::TfIdfModel tfidf;
  learn::LogisticModel model;

  double prob(const std::string& text) const {
    return learn::predict_proba(model, tfidf.transform(text));
  }

  nlohmann::json to_json() const {
    return {{"tfidf", tfidf.to_json()}, {"model", model.to_json()}};
  }
  static TransitionModel from_json(const nlohmann::json& j) {
    return {textvec::TfIdfModel::from_json(j.at("tfidf")),
            learn::LogisticModel::from_json(j.at("model"))};
  }
};

inline bool fully_stamped(const Meeting& m) {
  for (const auto& item : m.agenda)
    if (!item.timestamp_s) return false;
  return true;
}

// Prefer meetings whose agendas carry every source timestamp: their labels
// are exact, while sparsely hyperlinked meetings mislabel the very segments
// pegging has to find. Falls back to everything when too few are complete.
inline std::vector<Meeting> transition_training_meetings(const std::vector<Meeting>& meetings) {
  std::vector<Meeting> clean;
  for (const auto& m : meetings)
    if (fully_stamped(m)) clean.push_back(m);
  if (clean.size() >= std::max<std::size_t>(3, meetings.size() / 10)) return clean;
  return meetings;
}

inline TransitionModel train_transition_model(
    const std::vector<Meeting>& meetings,
    const learn::TrainConfig& config = {.l2_lambda = 1e-4, .learning_rate = 4.0, .max_iters = 400}) {
  std::vector<std::string> docs;
  std::vector<int> labels;
  for (const auto& m : meetings) {
    for (const auto& ex : label_transitions(m)) {
      docs.push_back(m.segments[ex.segment_index].text);
      labels.push_back(ex.label);
    }
  }
  if (docs.empty()) throw DataError("train_transition_model: no segments");
  TransitionModel tm;
  tm.tfidf = textvec::TfIdfModel::fit(docs);
  std::vector<learn::LabeledExample> examples(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    examples[i].features = tm.tfidf.transform(docs[i]);
    examples[i].label = labels[i];
  }
  tm.model = learn::train_logistic(examples, config);
  return tm;
}

// ---------------------------------------------------------------------------
// Agenda pegging. An item without a timestamp is pegged to the start of the
// first segment after the previous item's timestamp whose transition
// probability clears the threshold; the search stops at the next item that
// still carries a source timestamp, which also keeps pegged timestamps
// non-decreasing. With no qualifying segment the item shares the previous
// item's timestamp (several items may sit on one segment).

struct PegResult {
  Meeting meeting;
  std::vector<std::string> warnings;
  int n_pegged = 0;
};

inline PegResult peg_agenda(const Meeting& input, const TransitionModel& model,
                            double likelihood_threshold = 0.8) {
  PegResult out;
  out.meeting = input;
  Meeting& m = out.meeting;
  const double meeting_end = m.end_time();

  std::vector<double> seg_prob(m.segments.size());
  for (std::size_t i = 0; i < m.segments.size(); ++i)
    seg_prob[i] = model.prob(m.segments[i].text);

  double prev_ts = -1.0;  // before the first segment
  for (std::size_t i = 0; i < m.agenda.size(); ++i) {
    AgendaItem& item = m.agenda[i];
    if (item.timestamp_s) {
      prev_ts = *item.timestamp_s;
      continue;
    }
    double hi = meeting_end + 1.0;
    for (std::size_t j = i + 1; j < m.agenda.size(); ++j)
      if (m.agenda[j].timestamp_s) {
        hi = *m.agenda[j].timestamp_s;
        break;
      }
    std::optional<double> pegged_ts;
    for (std::size_t s = 0; s < m.segments.size(); ++s) {
      const double t = m.segments[s].t_start;
      if (t <= prev_ts || t >= hi) continue;
      if (seg_prob[s] >= likelihood_threshold) {
        pegged_ts = t;
        break;
      }
    }
    if (!pegged_ts) {
      if (prev_ts < 0) {
        pegged_ts = 0.0;
        out.warnings.push_back("meeting " + m.id + ": first agenda item pegged to meeting start");
      } else {
        pegged_ts = prev_ts;
      }
    }
    item.timestamp_s = *pegged_ts;
    item.pegged = true;
    ++out.n_pegged;
    prev_ts = *pegged_ts;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Section spans: maximal runs of agenda items sharing a header; a span runs
// from its first timestamp to the next section's start (meeting end for the
// last). Requires pegged agendas.

struct SectionSpan {
  std::string section_header;
  double t_start = 0;
  double t_end = 0;
  int first_item = 0;  // agenda index of the run start
  int n_items = 0;
};

inline std::vector<SectionSpan> compute_section_spans(const Meeting& m) {
  std::vector<SectionSpan> spans;
  std::size_t i = 0;
  while (i < m.agenda.size()) {
    std::size_t j = i;
    while (j < m.agenda.size() && m.agenda[j].section_header == m.agenda[i].section_header) ++j;
    std::optional<double> start;
    for (std::size_t k = i; k < j && !start; ++k)
      if (m.agenda[k].timestamp_s) start = m.agenda[k].timestamp_s;
    if (start) {
      spans.push_back({m.agenda[i].section_header, *start, 0.0, static_cast<int>(i),
                       static_cast<int>(j - i)});
    }
    i = j;
  }
  const double end = m.end_time();
  for (std::size_t k = 0; k < spans.size(); ++k)
    spans[k].t_end = k + 1 < spans.size() ? spans[k + 1].t_start : end;
  return spans;
}

// ---------------------------------------------------------------------------
// Table-9-style rollup: per section header, mean minutes / policy count /
// speaker count across meetings, with population standard deviations.

struct SectionRollupRow {
  std::string section_header;
  std::int64_t n_samples = 0;
  double mean_minutes = 0, sd_minutes = 0;
  double mean_policies = 0, sd_policies = 0;
  double mean_speakers = 0, sd_speakers = 0;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

}  // namespace detail

inline std::vector<SectionRollupRow> section_rollup(const std::vector<Meeting>& meetings) {
  struct Samples {
    std::vector<double> minutes, policies, speakers;
  };
  std::map<std::string, Samples> by_header;
  for (const auto& m : meetings) {
    for (const auto& span : compute_section_spans(m)) {
      auto& s = by_header[span.section_header];
      s.minutes.push_back((span.t_end - span.t_start) / 60.0);
      int n_pol = 0;
      for (int k = span.first_item; k < span.first_item + span.n_items; ++k)
        if (m.agenda[k].policy_id) ++n_pol;
      s.policies.push_back(n_pol);
      std::set<std::string> speakers;
      for (const auto& seg : m.segments)
        if (seg.t_start < span.t_end && seg.t_end > span.t_start) speakers.insert(seg.speaker_id);
      s.speakers.push_back(static_cast<double>(speakers.size()));
    }
  }
  std::vector<SectionRollupRow> rows;
  for (const auto& [header, s] : by_header) {
    SectionRollupRow r;
    r.section_header = header;
    r.n_samples = static_cast<std::int64_t>(s.minutes.size());
    std::tie(r.mean_minutes, r.sd_minutes) = detail::mean_sd(s.minutes);
    std::tie(r.mean_policies, r.sd_policies) = detail::mean_sd(s.policies);
    std::tie(r.mean_speakers, r.sd_speakers) = detail::mean_sd(s.speakers);
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const SectionRollupRow& a, const SectionRollupRow& b) {
    return a.mean_minutes != b.mean_minutes ? a.mean_minutes > b.mean_minutes
                                            : a.section_header < b.section_header;
  });
  return rows;
}

inline std::string section_rollup_csv(const std::vector<SectionRollupRow>& rows) {
  std::string out = "section_header,n,mean_minutes,sd_minutes,mean_policies,sd_policies,"
                    "mean_speakers,sd_speakers\n";
  for (const auto& r : rows)
    out += csv_row({r.section_header, std::to_string(r.n_samples), fmt_double(r.mean_minutes),
                    fmt_double(r.sd_minutes), fmt_double(r.mean_policies),
                    fmt_double(r.sd_policies), fmt_double(r.mean_speakers),
                    fmt_double(r.sd_speakers)});
  return out;
}

// ---------------------------------------------------------------------------
// Public commenters: speakers whose every segment lies inside a PUBLIC
// COMMENT span.

struct SpeakerProfile {
  std::string speaker_id;
  std::vector<int> segment_indices;
  double total_seconds = 0;
  bool public_commenter = false;
};

struct CommenterResult {
  std::vector<SpeakerProfile> speakers;  // all speakers, flags set
  bool missing_public_comment = false;
};

inline CommenterResult find_public_commenters(const Meeting& m,
                                              const std::vector<SectionSpan>& spans) {
  std::vector<SectionSpan> pc;
  for (const auto& s : spans)
    if (s.section_header == kPublicCommentHeader) pc.push_back(s);
  CommenterResult out;
  if (pc.empty()) {
    out.missing_public_comment = true;
    return out;
  }
  std::map<std::string, SpeakerProfile> by_speaker;
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    const auto& seg = m.segments[i];
    auto& prof = by_speaker[seg.speaker_id];
    prof.speaker_id = seg.speaker_id;
    prof.segment_indices.push_back(static_cast<int>(i));
    prof.total_seconds += seg.t_end - seg.t_start;
  }
  for (auto& [id, prof] : by_speaker) {
    prof.public_commenter = true;
    for (int idx : prof.segment_indices) {
      const auto& seg = m.segments[idx];
      bool inside = false;
      for (const auto& span : pc)
        if (seg.t_start >= span.t_start && seg.t_end <= span.t_end) {
          inside = true;
          break;
        }
      if (!inside) {
        prof.public_commenter = false;
        break;
      }
    }
    out.speakers.push_back(prof);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comment attribution: TF-IDF cosine (stopwords removed) between a
// commenter's concatenated speech and each policy's title + description;
// argmax policy wins iff the similarity clears tau. One assignment per
// speaker unless multi-assignment is enabled.

struct CommentAssignment {
  std::string speaker_id;
  std::string policy_id;
  double overlap = 0;
  double minutes = 0;
};

inline std::vector<CommentAssignment> assign_comments(
    const Meeting& m, const std::vector<SpeakerProfile>& commenters,
    const std::vector<const PolicyItem*>& policies, double min_overlap = 0.15,
    bool multi_assignment = false) {
  std::vector<CommentAssignment> out;
  if (policies.empty()) return out;

  std::vector<std::string> docs;
  for (const auto* p : policies) docs.push_back(p->full_text());
  std::vector<std::string> speeches;
  for (const auto& c : commenters) {
    if (!c.public_commenter) continue;
    std::string speech;
    for (int idx : c.segment_indices) {
      if (!speech.empty()) speech += ' ';
      speech += m.segments[idx].text;
    }
    speeches.push_back(std::move(speech));
  }
  if (speeches.empty()) return out;
  std::vector<std::string> all = docs;
  all.insert(all.end(), speeches.begin(), speeches.end());
  textvec::TfIdfOptions opt;
  opt.tokenize.drop_stopwords = true;
  const auto tfidf = textvec::TfIdfModel::fit(all, opt);

  std::vector<textvec::SparseVector> policy_vecs;
  for (const auto& d : docs) policy_vecs.push_back(tfidf.transform(d));

  std::size_t speech_idx = 0;
  for (const auto& c : commenters) {
    if (!c.public_commenter) continue;
    const auto vec = tfidf.transform(speeches[speech_idx++]);
    int best = -1;
    double best_sim = 0;
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const double sim = textvec::cosine(vec, policy_vecs[p]);
      if (sim < min_overlap) continue;
      // Ties break toward the lower policy id for determinism.
      if (best < 0 || sim > best_sim ||
          (sim == best_sim && policies[p]->id < policies[best]->id)) {
        if (multi_assignment)
          out.push_back({c.speaker_id, policies[p]->id, sim, c.total_seconds / 60.0});
        best = static_cast<int>(p);
        best_sim = sim;
      } else if (multi_assignment) {
        out.push_back({c.speaker_id, policies[p]->id, sim, c.total_seconds / 60.0});
      }
    }
    if (!multi_assignment && best >= 0)
      out.push_back({c.speaker_id, policies[best]->id, best_sim, c.total_seconds / 60.0});
  }
  return out;
}

inline std::string assignments_csv(const std::string& meeting_id,
                                   const std::vector<CommentAssignment>& assignments) {
  std::string out = "meeting_id,speaker_id,policy_id,overlap,minutes\n";
  for (const auto& a : assignments)
    out += csv_row({meeting_id, a.speaker_id, a.policy_id, fmt_double(a.overlap),
                    fmt_double(a.minutes)});
  return out;
}

// ---------------------------------------------------------------------------
// Per-policy discussion stats over the agenda-item span (item timestamp to
// the next item's timestamp). A zero-length span still owns the segments
// starting exactly on it.

struct DiscussionStats {
  std::int64_t words = 0;
  double minutes = 0;
  std::int64_t n_speakers = 0;
};

inline DiscussionStats policy_discussion_stats(const Meeting& m, const std::string& policy_id) {
  int item_idx = -1;
  for (std::size_t i = 0; i < m.agenda.size(); ++i)
    if (m.agenda[i].policy_id && *m.agenda[i].policy_id == policy_id) {
      item_idx = static_cast<int>(i);
      break;
    }
  if (item_idx < 0) throw DataError("policy " + policy_id + " not on agenda of " + m.id);
  if (!m.agenda[item_idx].timestamp_s)
    throw DataError("policy_discussion_stats: agenda not pegged for " + m.id);
  const double start = *m.agenda[item_idx].timestamp_s;
  double end = m.end_time();
  for (std::size_t j = item_idx + 1; j < m.agenda.size(); ++j)
    if (m.agenda[j].timestamp_s) {
      end = *m.agenda[j].timestamp_s;
      break;
    }
  DiscussionStats stats;
  stats.minutes = std::max(0.0, end - start) / 60.0;
  std::set<std::string> speakers;
  for (const auto& seg : m.segments) {
    const bool inside = (seg.t_start >= start && seg.t_start < end) || seg.t_start == start;
    if (!inside) continue;
    stats.words += static_cast<std::int64_t>(textvec::tokenize(seg.text).size());
    speakers.insert(seg.speaker_id);
  }
  stats.n_speakers = static_cast<std::int64_t>(speakers.size());
  return stats;
}

}  // namespace civiclink::meetings
