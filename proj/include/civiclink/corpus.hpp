#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "civiclink/textvec.hpp"
#include "civiclink/util.hpp"

namespace civiclink::corpus {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Record types. JSONL schemas are documented in the README and kept stable:
// they are the contract with upstream collectors.

struct Article {
  std::string id;
  std::string url;
  Date publish_date;
  std::string title;
  std::string body;
  std::uint64_t dedup_hash = 0;
};

// Dedup normalization: lowercase, punctuation stripped, whitespace collapsed.
inline std::string normalize_body(std::string_view body) {
  return textvec::join_tokens(textvec::tokenize(body, {.mask_numbers = false}));
}

inline std::uint64_t content_hash(std::string_view text) {
  return fnv1a64(normalize_body(text));
}

struct PolicyItem {
  std::string id;  // file-number string
  std::string title;
  std::string description;
  Date introduced_date;
  std::vector<std::string> meeting_ids;  // sorted by meeting date at store build

  std::string full_text() const { return title + ". " + description; }
};

struct AgendaItem {
  std::string section_header;  // canonical uppercase header
  std::optional<std::string> policy_id;
  std::optional<double> timestamp_s;
  bool pegged = false;  // true when the timestamp was inferred, not from source
};

struct TranscriptSegment {
  std::string speaker_id;
  double t_start = 0;
  double t_end = 0;
  std::string text;
};

struct Meeting {
  std::string id;
  Date date;
  std::vector<AgendaItem> agenda;
  std::vector<TranscriptSegment> segments;
  std::optional<std::string> minutes_text;

  double end_time() const {
    double t = 0;
    for (const auto& s : segments) t = std::max(t, s.t_end);
    for (const auto& a : agenda)
      if (a.timestamp_s) t = std::max(t, *a.timestamp_s);
    return t;
  }
};

struct GoldPair {
  std::string article_id;
  std::string policy_id;
  std::string split;  // "train" | "test"
};

struct CandidatePair {
  std::string article_id;
  std::string policy_id;
  int days_gap = 0;  // publication date minus nearest prior discussion date
};

// Per-article chain-attribute labels, the stand-in for annotator judgments.
struct StepAnnotation {
  std::string article_id;
  int h1 = 0;  // covers local council politics
  int h2 = 0;  // covers votes / policy
  int h3 = 0;  // covers recent votes of the target body
};

// ---------------------------------------------------------------------------
// JSON (de)serialization.

inline json to_json(const Article& a) {
  return {{"id", a.id},       {"url", a.url},   {"publish_date", a.publish_date.str()},
          {"title", a.title}, {"body", a.body}};
}

inline json to_json(const PolicyItem& p) {
  return {{"id", p.id},
          {"title", p.title},
          {"description", p.description},
          {"introduced_date", p.introduced_date.str()},
          {"meeting_ids", p.meeting_ids}};
}

inline json to_json(const AgendaItem& a) {
  json j = {{"section_header", a.section_header}};
  if (a.policy_id) j["policy_id"] = *a.policy_id;
  if (a.timestamp_s) j["timestamp_s"] = *a.timestamp_s;
  if (a.pegged) j["pegged"] = true;
  return j;
}

inline json to_json(const TranscriptSegment& s) {
  return {{"speaker_id", s.speaker_id}, {"t_start", s.t_start}, {"t_end", s.t_end}, {"text", s.text}};
}

inline json to_json(const Meeting& m) {
  json agenda = json::array();
  for (const auto& a : m.agenda) agenda.push_back(to_json(a));
  json segments = json::array();
  for (const auto& s : m.segments) segments.push_back(to_json(s));
  json j = {{"id", m.id}, {"date", m.date.str()}, {"agenda", agenda}, {"segments", segments}};
  if (m.minutes_text) j["minutes_text"] = *m.minutes_text;
  return j;
}

inline json to_json(const GoldPair& g) {
  return {{"article_id", g.article_id}, {"policy_id", g.policy_id}, {"split", g.split}};
}

inline Article article_from_json(const json& j) {
  Article a;
  a.id = j.at("id").get<std::string>();
  a.url = j.value("url", "");
  a.publish_date = Date::parse(j.at("publish_date").get<std::string>());
  a.title = j.value("title", "");
  a.body = j.at("body").get<std::string>();
  if (normalize_body(a.body).empty()) throw DataError("article " + a.id + ": empty body");
  a.dedup_hash = content_hash(a.body);
  return a;
}

inline PolicyItem policy_from_json(const json& j) {
  PolicyItem p;
  p.id = j.at("id").get<std::string>();
  p.title = j.value("title", "");
  p.description = j.at("description").get<std::string>();
  if (p.description.empty()) throw DataError("policy " + p.id + ": empty description");
  p.introduced_date = Date::parse(j.at("introduced_date").get<std::string>());
  if (j.contains("meeting_ids")) p.meeting_ids = j.at("meeting_ids").get<std::vector<std::string>>();
  return p;
}

inline Meeting meeting_from_json(const json& j) {
  Meeting m;
  m.id = j.at("id").get<std::string>();
  m.date = Date::parse(j.at("date").get<std::string>());
  for (const auto& ja : j.value("agenda", json::array())) {
    AgendaItem a;
    a.section_header = ja.at("section_header").get<std::string>();
    if (ja.contains("policy_id") && !ja.at("policy_id").is_null())
      a.policy_id = ja.at("policy_id").get<std::string>();
    if (ja.contains("timestamp_s") && !ja.at("timestamp_s").is_null())
      a.timestamp_s = ja.at("timestamp_s").get<double>();
    a.pegged = ja.value("pegged", false);
    m.agenda.push_back(std::move(a));
  }
  double prev_start = -1;
  for (const auto& js : j.value("segments", json::array())) {
    TranscriptSegment s;
    s.speaker_id = js.at("speaker_id").get<std::string>();
    s.t_start = js.at("t_start").get<double>();
    s.t_end = js.at("t_end").get<double>();
    s.text = js.value("text", "");
    if (s.speaker_id.empty()) throw DataError("meeting " + m.id + ": empty speaker id");
    if (!(s.t_start < s.t_end) || s.t_start < 0)
      throw DataError("meeting " + m.id + ": bad segment times");
    if (s.t_start < prev_start) throw DataError("meeting " + m.id + ": segments out of order");
    prev_start = s.t_start;
    m.segments.push_back(std::move(s));
  }
  if (j.contains("minutes_text") && !j.at("minutes_text").is_null())
    m.minutes_text = j.at("minutes_text").get<std::string>();
  return m;
}

inline json to_json(const StepAnnotation& s) {
  return {{"article_id", s.article_id}, {"h1", s.h1}, {"h2", s.h2}, {"h3", s.h3}};
}

inline StepAnnotation annotation_from_json(const json& j) {
  StepAnnotation s;
  s.article_id = j.at("article_id").get<std::string>();
  s.h1 = j.at("h1").get<int>();
  s.h2 = j.at("h2").get<int>();
  s.h3 = j.at("h3").get<int>();
  for (int v : {s.h1, s.h2, s.h3})
    if (v != 0 && v != 1) throw DataError("annotation labels must be 0/1");
  return s;
}

inline GoldPair gold_from_json(const json& j) {
  GoldPair g;
  g.article_id = j.at("article_id").get<std::string>();
  g.policy_id = j.at("policy_id").get<std::string>();
  g.split = j.value("split", "train");
  if (g.split != "train" && g.split != "test")
    throw DataError("gold pair: bad split " + g.split);
  return g;
}

// ---------------------------------------------------------------------------
// Ingestion. Malformed lines are skipped and counted, never fatal.

struct IngestReport {
  std::int64_t read = 0;
  std::int64_t kept = 0;
  std::int64_t dropped_dup = 0;
  std::int64_t dropped_invalid = 0;

  json to_json() const {
    return {{"read", read}, {"kept", kept}, {"dropped_dup", dropped_dup},
            {"dropped_invalid", dropped_invalid}};
  }
};

namespace detail {

template <typename Record, typename Parse, typename DedupKey>
std::pair<std::vector<Record>, IngestReport> ingest_jsonl(
    const std::filesystem::path& path, Parse parse, DedupKey dedup_key) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Record> records;
  IngestReport report;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++report.read;
    try {
      Record r = parse(json::parse(line));
      if (!seen.insert(dedup_key(r)).second) {
        ++report.dropped_dup;
        continue;
      }
      records.push_back(std::move(r));
      ++report.kept;
    } catch (const std::exception&) {
      ++report.dropped_invalid;
    }
  }
  return {std::move(records), report};
}

}  // namespace detail

// Articles are deduplicated on the normalized-body content hash; policies and
// meetings on their ids.
inline std::pair<std::vector<Article>, IngestReport> ingest_articles(
    const std::filesystem::path& path) {
  return detail::ingest_jsonl<Article>(path, article_from_json, [](const Article& a) {
    return std::to_string(a.dedup_hash);
  });
}

inline std::pair<std::vector<PolicyItem>, IngestReport> ingest_policies(
    const std::filesystem::path& path) {
  return detail::ingest_jsonl<PolicyItem>(path, policy_from_json,
                                          [](const PolicyItem& p) { return p.id; });
}

inline std::pair<std::vector<Meeting>, IngestReport> ingest_meetings(
    const std::filesystem::path& path) {
  return detail::ingest_jsonl<Meeting>(path, meeting_from_json,
                                       [](const Meeting& m) { return m.id; });
}

inline std::pair<std::vector<GoldPair>, IngestReport> ingest_gold(
    const std::filesystem::path& path) {
  return detail::ingest_jsonl<GoldPair>(path, gold_from_json, [](const GoldPair& g) {
    return g.article_id + "\x1f" + g.policy_id;
  });
}

inline std::pair<std::vector<StepAnnotation>, IngestReport> ingest_annotations(
    const std::filesystem::path& path) {
  return detail::ingest_jsonl<StepAnnotation>(path, annotation_from_json,
                                              [](const StepAnnotation& s) { return s.article_id; });
}

template <typename Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// CorpusStore: immutable after build, safe for shared concurrent reads.

class CorpusStore {
 public:
  CorpusStore() = default;
  CorpusStore(std::vector<Article> articles, std::vector<PolicyItem> policies,
              std::vector<Meeting> meetings, std::vector<GoldPair> gold = {})
      : articles_(std::move(articles)),
        policies_(std::move(policies)),
        meetings_(std::move(meetings)),
        gold_(std::move(gold)) {
    for (std::size_t i = 0; i < articles_.size(); ++i) article_idx_[articles_[i].id] = i;
    for (std::size_t i = 0; i < meetings_.size(); ++i) meeting_idx_[meetings_[i].id] = i;
    for (std::size_t i = 0; i < policies_.size(); ++i) {
      auto& p = policies_[i];
      policy_idx_[p.id] = i;
      // meeting_ids sorted by meeting date (unresolvable ids sort last by id).
      std::stable_sort(p.meeting_ids.begin(), p.meeting_ids.end(),
                       [&](const std::string& a, const std::string& b) {
                         const Meeting* ma = find_meeting_raw(a);
                         const Meeting* mb = find_meeting_raw(b);
                         if (ma && mb) return ma->date < mb->date;
                         if (ma != mb) return ma != nullptr;
                         return a < b;
                       });
    }
  }

  const std::vector<Article>& articles() const { return articles_; }
  const std::vector<PolicyItem>& policies() const { return policies_; }
  const std::vector<Meeting>& meetings() const { return meetings_; }
  const std::vector<GoldPair>& gold() const { return gold_; }

  const Article* find_article(const std::string& id) const {
    auto it = article_idx_.find(id);
    return it == article_idx_.end() ? nullptr : &articles_[it->second];
  }
  const PolicyItem* find_policy(const std::string& id) const {
    auto it = policy_idx_.find(id);
    return it == policy_idx_.end() ? nullptr : &policies_[it->second];
  }
  const Meeting* find_meeting(const std::string& id) const { return find_meeting_raw(id); }

  // Dates on which a policy was discussed, ascending, resolved via its
  // calendar meeting_ids.
  std::vector<Date> discussion_dates(const PolicyItem& p) const {
    std::vector<Date> out;
    for (const auto& mid : p.meeting_ids)
      if (const Meeting* m = find_meeting_raw(mid)) out.push_back(m->date);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  const Meeting* find_meeting_raw(const std::string& id) const {
    auto it = meeting_idx_.find(id);
    return it == meeting_idx_.end() ? nullptr : &meetings_[it->second];
  }

  std::vector<Article> articles_;
  std::vector<PolicyItem> policies_;
  std::vector<Meeting> meetings_;
  std::vector<GoldPair> gold_;
  std::unordered_map<std::string, std::size_t> article_idx_;
  std::unordered_map<std::string, std::size_t> policy_idx_;
  std::unordered_map<std::string, std::size_t> meeting_idx_;
};

inline CorpusStore load_corpus_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  auto need = [&](const char* name) {
    fs::path p = dir / name;
    if (!fs::exists(p)) throw DataError("missing corpus file " + p.string());
    return p;
  };
  auto [articles, ra] = ingest_articles(need("articles.jsonl"));
  auto [policies, rp] = ingest_policies(need("policies.jsonl"));
  auto [meetings, rm] = ingest_meetings(need("meetings.jsonl"));
  std::vector<GoldPair> gold;
  if (fs::exists(dir / "gold.jsonl")) gold = ingest_gold(dir / "gold.jsonl").first;
  return CorpusStore(std::move(articles), std::move(policies), std::move(meetings),
                     std::move(gold));
}

// ---------------------------------------------------------------------------
// Candidate pairs: (a, p) where some meeting discussing p occurred within
// window_days before a's publication. Deterministic (article_id, policy_id)
// order; days_gap is the gap to the nearest prior discussion.

inline std::vector<CandidatePair> candidate_pairs(const CorpusStore& store, int window_days = 31) {
  if (window_days < 1) throw UsageError("window_days must be >= 1");
  struct PolicyDates {
    const std::string* id;
    std::vector<Date> dates;
  };
  std::vector<PolicyDates> discussed;
  discussed.reserve(store.policies().size());
  for (const auto& p : store.policies()) {
    auto dates = store.discussion_dates(p);
    if (!dates.empty()) discussed.push_back({&p.id, std::move(dates)});
  }
  std::vector<CandidatePair> out;
  for (const auto& a : store.articles()) {
    for (const auto& pd : discussed) {
      // Nearest discussion date <= publish_date.
      auto it = std::upper_bound(pd.dates.begin(), pd.dates.end(), a.publish_date);
      if (it == pd.dates.begin()) continue;
      const std::int64_t gap = a.publish_date - *std::prev(it);
      if (gap <= window_days)
        out.push_back({a.id, *pd.id, static_cast<int>(gap)});
    }
  }
  std::sort(out.begin(), out.end(), [](const CandidatePair& x, const CandidatePair& y) {
    return std::tie(x.article_id, x.policy_id) < std::tie(y.article_id, y.policy_id);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Agenda-coverage reconciliation: policies on the legislative calendar that
// never appear in any meeting agenda ("unpassed-policies").

struct ReconciliationReport {
  std::int64_t n_policies = 0;
  std::int64_t n_discussed = 0;  // appears in >= 1 meeting agenda
  std::int64_t n_unpassed = 0;
  std::vector<std::string> discussed_ids;
  std::vector<std::string> unpassed_ids;

  json to_json() const {
    return {{"n_policies", n_policies},
            {"n_discussed", n_discussed},
            {"n_unpassed", n_unpassed},
            {"discussed_ids", discussed_ids},
            {"unpassed_ids", unpassed_ids}};
  }
};

inline ReconciliationReport reconcile_agenda_coverage(const CorpusStore& store) {
  std::unordered_set<std::string> on_agenda;
  for (const auto& m : store.meetings())
    for (const auto& item : m.agenda)
      if (item.policy_id) on_agenda.insert(*item.policy_id);
  ReconciliationReport r;
  r.n_policies = static_cast<std::int64_t>(store.policies().size());
  for (const auto& p : store.policies()) {
    if (on_agenda.count(p.id)) {
      r.discussed_ids.push_back(p.id);
    } else {
      r.unpassed_ids.push_back(p.id);
    }
  }
  std::sort(r.discussed_ids.begin(), r.discussed_ids.end());
  std::sort(r.unpassed_ids.begin(), r.unpassed_ids.end());
  r.n_discussed = static_cast<std::int64_t>(r.discussed_ids.size());
  r.n_unpassed = static_cast<std::int64_t>(r.unpassed_ids.size());
  return r;
}

}  // namespace civiclink::corpus
