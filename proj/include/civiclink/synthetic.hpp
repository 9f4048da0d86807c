#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "civiclink/corpus.hpp"
#include "civiclink/newsworthy.hpp"

namespace civiclink::synth {

using corpus::AgendaItem;
using corpus::Article;
using corpus::GoldPair;
using corpus::Meeting;
using corpus::PolicyItem;
using corpus::StepAnnotation;
using corpus::TranscriptSegment;

// ---------------------------------------------------------------------------
// Parameters. Defaults match the default fixture used throughout the tests:
// 1,000 articles, 500 policies, 50 planted links.

struct SyntheticParams {
  std::uint64_t seed = 42;
  int n_articles = 1000;
  int n_policies = 500;
  int n_links = 50;
  int n_meetings = 60;  // weekly
  int n_topics = 20;
  double timestamp_removal_rate = 0.3;
  double merged_item_rate = 0.015;
  double keyword_omission_rate = 0.25;
  double annotation_rate = 0.35;
  double agenda_omission_rate = 0.10;
  int commenters_per_meeting = 3;
  int noise_commenters_per_meeting = 1;
  std::string start_date = "2021-01-05";
};

// ---------------------------------------------------------------------------
// Ground truth the generator keeps for oracle tests.

enum class ArticleKind { TrueLink, NonPolitics, CouncilProfile, OtherCity, StaleVote };

inline std::string article_kind_name(ArticleKind k) {
  switch (k) {
    case ArticleKind::TrueLink: return "true_link";
    case ArticleKind::NonPolitics: return "non_politics";
    case ArticleKind::CouncilProfile: return "council_profile";
    case ArticleKind::OtherCity: return "other_city";
    case ArticleKind::StaleVote: return "stale_vote";
  }
  return "?";
}

struct ArticleTruth {
  ArticleKind kind = ArticleKind::NonPolitics;
  int h1 = 0, h2 = 0, h3 = 0;
  std::string linked_policy_id;    // TrueLink only
  std::string borrowed_policy_id;  // the policy whose vocabulary was borrowed
  bool has_keyword = false;
};

struct ItemTruth {
  int agenda_index = -1;
  std::string policy_id;  // empty for header rows
  double true_timestamp = 0;
  bool removed = false;  // emitted without a timestamp
  bool merged = false;   // shares the previous item's segment
};

struct SectionTruth {
  std::string header;
  double minutes = 0;
  int n_policies = 0;
  std::set<std::string> speakers;
};

struct DiscussionTruth {
  double minutes = 0;
  std::int64_t words = 0;
  std::int64_t speakers = 0;
};

struct MeetingTruth {
  std::vector<ItemTruth> items;
  std::vector<SectionTruth> sections;
  std::vector<std::string> public_commenters;           // planted, incl. greeting-only
  std::map<std::string, std::string> commenter_policy;  // policy-addressing commenters
  std::map<std::string, DiscussionTruth> discussion;    // by policy id
};

struct SyntheticCorpus {
  std::vector<Article> articles;
  std::vector<PolicyItem> policies;
  std::vector<Meeting> meetings;
  std::vector<GoldPair> gold;
  std::vector<StepAnnotation> annotations;
  std::map<std::string, ArticleTruth> article_truth;
  std::map<std::string, MeetingTruth> meeting_truth;
  std::vector<std::string> unpassed_policy_ids;

  nlohmann::json truth_json() const {
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& [id, t] : article_truth)
      arts[id] = {{"kind", article_kind_name(t.kind)},
                  {"h1", t.h1},
                  {"h2", t.h2},
                  {"h3", t.h3},
                  {"linked_policy_id", t.linked_policy_id},
                  {"borrowed_policy_id", t.borrowed_policy_id}};
    return {{"articles", arts}, {"unpassed_policy_ids", unpassed_policy_ids}};
  }
};

// ---------------------------------------------------------------------------

namespace detail {

struct Rand {
  std::mt19937_64 g;
  explicit Rand(std::uint64_t seed) : g(seed) {}
  int below(int n) { return n <= 1 ? 0 : static_cast<int>(g() % static_cast<std::uint64_t>(n)); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(g); }
  bool chance(double p) { return uniform() < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(static_cast<int>(v.size()))];
  }
};

inline const std::vector<std::string>& syllables() {
  static const std::vector<std::string> s = {"ba", "ce", "di", "fo", "gu", "ha", "je",
                                             "ki", "lo", "mu", "na", "pe", "qui", "ro",
                                             "su", "ta", "ve", "wo", "xy", "za"};
  return s;
}

// Unique all-alpha pseudo-word per (pool, index) pair.
inline std::string topic_word(int topic, int i) {
  const auto& s = syllables();
  return s[topic % 20] + s[i % 20] + s[(topic + i) % 20];
}

inline std::string policy_unique_word(int p) {
  const auto& s = syllables();
  return s[p % 20] + s[(p / 20) % 20] + s[(p / 400) % 20] + "ix";
}

inline const std::vector<std::string>& politics_pool() {
  static const std::vector<std::string> v = {
      "board",   "supervisors", "city",     "council", "meeting", "agenda",
      "member",  "supervisor",  "clerk",    "committee", "hearing", "session",
      "chamber", "municipal",   "district", "public"};
  return v;
}

inline const std::vector<std::string>& vote_pool() {
  static const std::vector<std::string> v = {"vote", "voted", "passed", "approved",
                                             "motion", "adopted", "measure", "legislation"};
  return v;
}

inline const std::vector<std::string>& legal_pool() {
  static const std::vector<std::string> v = {
      "authorizing", "department", "grant",   "contract", "amending",  "code",
      "program",     "services",   "agreement", "appropriating", "resolution", "ordinance",
      "retroactively", "accept",   "expend",  "fiscal"};
  return v;
}

inline const std::vector<std::string>& filler_pool() {
  static const std::vector<std::string> v = {
      "weather", "restaurant", "festival", "garden",  "coffee",  "music",  "season",
      "travel",  "recipe",     "kitchen",  "painting", "museum", "hiking", "beach",
      "movie",   "theater",    "soccer",   "marathon", "bakery", "gallery"};
  return v;
}

inline const std::vector<std::string>& deliberation_pool() {
  static const std::vector<std::string> v = {"think", "know",  "want",     "people",
                                             "need",  "like",  "colleagues", "question",
                                             "point", "support", "concern",  "important"};
  return v;
}

inline const std::vector<std::string>& greeting_pool() {
  static const std::vector<std::string> v = {"hello", "good",    "afternoon", "thank",
                                             "you",   "everyone", "today",    "service",
                                             "time",  "speaking", "grateful", "community"};
  return v;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Joins tokens into sentence-ish text; periods do not change tokenization.
inline std::string render(const std::vector<std::string>& tokens, Rand& rng) {
  std::string out;
  int since_period = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
    if (++since_period >= 8 + rng.below(6) && i + 1 < tokens.size()) {
      out += '.';
      since_period = 0;
    }
  }
  out += '.';
  return out;
}

inline void sample_into(std::vector<std::string>& dst, const std::vector<std::string>& pool,
                        int n, Rand& rng) {
  for (int i = 0; i < n; ++i) dst.push_back(pool[rng.below(static_cast<int>(pool.size()))]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Corpus generation. Articles come in five kinds, each sharing vocabulary
// with some policy discussed inside its candidate window, so similarity alone
// cannot separate them; each confound kind carries the signal exactly one
// chain step removes (no politics vocabulary / no vote vocabulary / wrong
// governing body / stale vote dates).

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticParams& params) {
  if (params.n_articles < 1 || params.n_policies < 1 || params.n_meetings < 1)
    throw DataError("generate_synthetic_corpus: counts must be positive");
  if (params.n_links > params.n_articles || params.n_links < 0)
    throw DataError("generate_synthetic_corpus: bad planted-link count");

  detail::Rand rng(params.seed);
  SyntheticCorpus out;
  const Date start = Date::parse(params.start_date);

  // --- policies and their discussion calendar -----------------------------
  std::vector<std::vector<int>> meeting_policies(params.n_meetings);
  std::vector<std::vector<int>> policy_meetings(params.n_policies);
  for (int p = 0; p < params.n_policies; ++p) {
    const int first = rng.below(params.n_meetings);
    const int n_disc = 1 + rng.below(3);
    for (int k = 0; k < n_disc; ++k) {
      const int m = first + k;
      if (m >= params.n_meetings) break;
      meeting_policies[m].push_back(p);
      policy_meetings[p].push_back(m);
    }
  }

  auto meeting_id = [](int m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "M%04d", m);
    return std::string(buf);
  };
  auto meeting_date = [&](int m) { return start + 7 * m; };

  std::set<int> unpassed;
  for (int p = 0; p < params.n_policies; ++p) {
    const int topic = p % params.n_topics;
    PolicyItem item;
    item.id = std::to_string(100000 + p);
    const std::string uw = detail::policy_unique_word(p);
    std::vector<std::string> title_tokens = {detail::topic_word(topic, rng.below(18)),
                                             detail::topic_word(topic, rng.below(18)), uw};
    item.title = detail::render(title_tokens, rng);
    std::vector<std::string> desc;
    detail::sample_into(desc, detail::legal_pool(), 10, rng);
    for (int i = 0; i < 24; ++i) desc.push_back(detail::topic_word(topic, rng.below(18)));
    for (int i = 0; i < 4; ++i) desc.push_back(uw);
    desc.push_back("$" + std::to_string(100 + rng.below(900)) + ",000");
    std::shuffle(desc.begin(), desc.end(), rng.g);
    item.description = detail::render(desc, rng);
    item.introduced_date = meeting_date(policy_meetings[p].front());
    for (int m : policy_meetings[p]) item.meeting_ids.push_back(meeting_id(m));
    out.policies.push_back(std::move(item));
    if (rng.chance(params.agenda_omission_rate)) unpassed.insert(p);
  }
  for (int p : unpassed) out.unpassed_policy_ids.push_back(out.policies[p].id);

  // --- meetings: agenda, transcript, planted commenters -------------------
  const std::vector<std::string> council = {"S00", "S01", "S02", "S03", "S04", "S05"};
  const std::string clerk = "S00", president = "S01";

  // Missing hyperlinks cluster by meeting, as they do in real exports: a
  // sparse meeting loses most of its item timestamps, the rest stay fully
  // stamped, and the overall removal rate still matches the parameter.
  const double sparse_share =
      params.timestamp_removal_rate <= 0 ? 0.0 : std::max(0.45, params.timestamp_removal_rate);
  const double sparse_item_rate =
      sparse_share == 0 ? 0.0 : std::min(1.0, params.timestamp_removal_rate / sparse_share);

  for (int m = 0; m < params.n_meetings; ++m) {
    Meeting meeting;
    meeting.id = meeting_id(m);
    meeting.date = meeting_date(m);
    const bool sparse_meeting = rng.chance(sparse_share);
    MeetingTruth truth;

    std::vector<int> agenda_policies;
    for (int p : meeting_policies[m])
      if (!unpassed.count(p)) agenda_policies.push_back(p);

    struct SegRecord {
      double t_start;
      std::int64_t tokens;
      std::string speaker;
    };
    std::vector<SegRecord> seg_records;
    double t = 0;
    std::string current_section;
    std::map<std::string, std::set<std::string>> section_speakers;

    auto emit = [&](const std::string& speaker, const std::vector<std::string>& tokens,
                    double dur) {
      TranscriptSegment seg;
      seg.speaker_id = speaker;
      seg.t_start = t;
      seg.t_end = t + dur;
      seg.text = detail::render(tokens, rng);
      meeting.segments.push_back(seg);
      seg_records.push_back({t, static_cast<std::int64_t>(tokens.size()), speaker});
      section_speakers[current_section].insert(speaker);
      t += dur + rng.below(3);
      return seg.t_start;
    };

    auto add_header = [&](const std::string& header, const std::string& speaker,
                          std::vector<std::string> tokens) {
      current_section = header;
      const double ts = emit(speaker, tokens, 8 + rng.below(6));
      AgendaItem item;
      item.section_header = header;
      item.timestamp_s = ts;
      meeting.agenda.push_back(item);
      truth.items.push_back({static_cast<int>(meeting.agenda.size()) - 1, "", ts, false, false});
      truth.sections.push_back({header, 0, 0, {}});
      return ts;
    };

    // Transition phrasing in the style real meetings use between items.
    auto transition_tokens = [&](int item_no) {
      const std::string n = std::to_string(item_no);
      switch (rng.below(6)) {
        case 0: return detail::split_ws("madam clerk please call the next item. item " + n);
        case 1:
          return detail::split_ws(
              "without objection this resolution is adopted unanimously. item number " + n +
              ". item " + n);
        case 2: return detail::split_ws("those items are adopted unanimously. next item please. item " + n);
        case 3:
          return detail::split_ws(
              "without objection the ordinance is finally passed unanimously. madam clerk item number " +
              n);
        case 4: return detail::split_ws("next item. item " + n);
        default: return detail::split_ws("madam clerk would you call item " + n + " please");
      }
    };

    int item_no = 0;
    std::size_t next_policy = 0;
    auto add_policy_items = [&](const std::string& header, std::size_t count) {
      bool first_in_section = true;
      for (std::size_t k = 0; k < count && next_policy < agenda_policies.size(); ++k) {
        const int p = agenda_policies[next_policy++];
        const PolicyItem& pol = out.policies[p];
        ++item_no;
        const bool merged = !first_in_section && rng.chance(params.merged_item_rate);
        AgendaItem item;
        item.section_header = header;
        item.policy_id = pol.id;
        ItemTruth it;
        it.agenda_index = static_cast<int>(meeting.agenda.size());
        it.policy_id = pol.id;
        it.merged = merged;
        if (merged) {
          it.true_timestamp = truth.items.back().true_timestamp;
          it.removed = true;  // merged items never carry a source hyperlink
        } else {
          // Masked item numbers make the templates generalize across items.
          const double ts = emit(president, transition_tokens(item_no), 6 + rng.below(5));
          it.true_timestamp = ts;
          it.removed = sparse_meeting && rng.chance(sparse_item_rate);
          const int n_disc = 1 + rng.below(2);
          const auto policy_tokens =
              textvec::tokenize(pol.full_text(), {.mask_numbers = false});
          for (int d = 0; d < n_disc; ++d) {
            std::vector<std::string> tokens = {"colleagues"};
            detail::sample_into(tokens, detail::deliberation_pool(), 8, rng);
            detail::sample_into(tokens, policy_tokens, 16, rng);
            emit(council[2 + rng.below(4)], tokens, 20 + rng.below(30));
          }
        }
        if (!it.removed) item.timestamp_s = it.true_timestamp;
        meeting.agenda.push_back(item);
        truth.items.push_back(it);
        truth.sections.back().n_policies++;
        first_in_section = false;
      }
    };

    add_header("ROLL CALL", clerk,
               detail::split_ws(
                   "good afternoon everyone this is the regular meeting of the san francisco "
                   "board of supervisors madam clerk please call the roll"));
    for (std::size_t i = 2; i < council.size(); ++i)
      emit(council[i], {"present"}, 2 + rng.below(3));

    const std::size_t n_agenda = agenda_policies.size();
    add_header("CONSENT AGENDA", president,
               detail::split_ws("we will now move to the consent agenda. madam clerk please "
                                "call the consent items"));
    add_policy_items("CONSENT AGENDA", n_agenda * 2 / 5);
    add_header("REGULAR AGENDA", president,
               detail::split_ws("we now turn to the regular agenda. madam clerk"));
    add_policy_items("REGULAR AGENDA", n_agenda * 2 / 5);

    add_header("PUBLIC COMMENT", clerk,
               detail::split_ws("we will now open general public comment speakers will have "
                                "two minutes each first speaker please"));
    const int n_planted =
        agenda_policies.empty() ? 0 : std::min<int>(params.commenters_per_meeting,
                                                    static_cast<int>(agenda_policies.size()));
    int commenter_no = 0;
    for (int c = 0; c < n_planted; ++c) {
      const std::string speaker = "P" + std::to_string(commenter_no++);
      const int p = agenda_policies[rng.below(static_cast<int>(agenda_policies.size()))];
      const PolicyItem& pol = out.policies[p];
      std::vector<std::string> tokens =
          detail::split_ws("hello good afternoon supervisors my name is " +
                           detail::topic_word(rng.below(20), rng.below(18)) +
                           " and i rise today to speak about");
      const auto policy_tokens = textvec::tokenize(pol.full_text(), {.mask_numbers = false});
      detail::sample_into(tokens, policy_tokens, 24, rng);
      tokens.push_back(rng.chance(0.5) ? "oppose" : "support");
      emit(speaker, tokens, 30 + rng.below(50));
      truth.public_commenters.push_back(speaker);
      truth.commenter_policy[speaker] = pol.id;
    }
    for (int c = 0; c < params.noise_commenters_per_meeting; ++c) {
      const std::string speaker = "P" + std::to_string(commenter_no++);
      std::vector<std::string> tokens;
      detail::sample_into(tokens, detail::greeting_pool(), 12, rng);
      emit(speaker, tokens, 20 + rng.below(30));
      truth.public_commenters.push_back(speaker);
    }

    add_header("NEW BUSINESS", president,
               detail::split_ws("we move to new business. madam clerk please call the "
                                "remaining items"));
    add_policy_items("NEW BUSINESS", n_agenda);  // whatever remains
    add_header("ADJOURNMENT", president,
               detail::split_ws("this meeting is adjourned thank you everyone"));

    // --- per-meeting truth rollups ----------------------------------------
    const double meeting_end = meeting.segments.back().t_end;
    {
      std::vector<double> header_ts;
      for (const auto& it : truth.items)
        if (it.policy_id.empty()) header_ts.push_back(it.true_timestamp);
      for (std::size_t s = 0; s < truth.sections.size(); ++s) {
        const double lo = header_ts[s];
        const double hi = s + 1 < truth.sections.size() ? header_ts[s + 1] : meeting_end;
        truth.sections[s].minutes = (hi - lo) / 60.0;
        truth.sections[s].speakers = section_speakers[truth.sections[s].header];
      }
    }
    for (std::size_t i = 0; i < truth.items.size(); ++i) {
      if (truth.items[i].policy_id.empty()) continue;
      const double lo = truth.items[i].true_timestamp;
      const double hi =
          i + 1 < truth.items.size() ? truth.items[i + 1].true_timestamp : meeting_end;
      DiscussionTruth d;
      d.minutes = (hi - lo) / 60.0;
      std::set<std::string> speakers;
      for (const auto& rec : seg_records) {
        const bool inside = (rec.t_start >= lo && rec.t_start < hi) || rec.t_start == lo;
        if (!inside) continue;
        d.words += rec.tokens;
        speakers.insert(rec.speaker);
      }
      d.speakers = static_cast<std::int64_t>(speakers.size());
      truth.discussion[truth.items[i].policy_id] = d;
    }

    out.meeting_truth[meeting.id] = std::move(truth);
    out.meetings.push_back(std::move(meeting));
  }

  // --- articles ------------------------------------------------------------
  auto article_id = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "A%04d", i);
    return std::string(buf);
  };

  // Pick a (meeting, policy) pair so the borrowed policy sits inside the
  // article's 31-day candidate window.
  auto pick_borrow = [&](int* meeting_out) {
    int m = rng.below(params.n_meetings);
    while (meeting_policies[m].empty()) m = (m + 1) % params.n_meetings;
    *meeting_out = m;
    return meeting_policies[m][rng.below(static_cast<int>(meeting_policies[m].size()))];
  };

  auto borrow_tokens = [&](std::vector<std::string>& dst, int policy, int n) {
    const auto toks =
        textvec::tokenize(out.policies[policy].full_text(), {.mask_numbers = false});
    detail::sample_into(dst, toks, n, rng);
  };

  for (int i = 0; i < params.n_articles; ++i) {
    Article a;
    a.id = article_id(i);
    a.url = "https://news.example.com/" + a.id;
    ArticleTruth truth;
    std::vector<std::string> tokens;

    if (i < params.n_links) {
      truth.kind = ArticleKind::TrueLink;
      truth.h1 = truth.h2 = truth.h3 = 1;
      truth.has_keyword = true;
      const int p = static_cast<int>(
          static_cast<std::int64_t>(i) * params.n_policies / std::max(1, params.n_links));
      const int m = policy_meetings[p][rng.below(static_cast<int>(policy_meetings[p].size()))];
      a.publish_date = meeting_date(m) + 1 + rng.below(20);
      truth.linked_policy_id = out.policies[p].id;
      truth.borrowed_policy_id = out.policies[p].id;
      tokens = detail::split_ws("the san francisco board of supervisors voted on " +
                                meeting_date(m).str() + " to act on a local measure");
      detail::sample_into(tokens, detail::vote_pool(), 5, rng);
      detail::sample_into(tokens, detail::politics_pool(), 8, rng);
      borrow_tokens(tokens, p, 38 + rng.below(16));
      detail::sample_into(tokens, detail::filler_pool(), 8, rng);
      out.gold.push_back({a.id, out.policies[p].id, i % 2 == 0 ? "train" : "test"});
    } else {
      const int kind_idx = (i - params.n_links) % 4;
      int m = 0;
      const int p = pick_borrow(&m);
      a.publish_date = meeting_date(m) + 1 + rng.below(20);
      truth.borrowed_policy_id = out.policies[p].id;
      const bool omit_keyword = rng.chance(params.keyword_omission_rate);
      truth.has_keyword = !omit_keyword;
      switch (kind_idx) {
        case 0: {
          truth.kind = ArticleKind::NonPolitics;
          truth.has_keyword = false;
          borrow_tokens(tokens, p, 38 + rng.below(16));
          detail::sample_into(tokens, detail::filler_pool(), 30, rng);
          break;
        }
        case 1: {
          truth.kind = ArticleKind::CouncilProfile;
          truth.h1 = 1;
          tokens = detail::split_ws(
              omit_keyword ? "san francisco city hall officials gathered this week"
                           : "the san francisco board of supervisors gathered this week");
          detail::sample_into(tokens, detail::politics_pool(), 12, rng);
          borrow_tokens(tokens, p, 38 + rng.below(16));
          detail::sample_into(tokens, detail::filler_pool(), 14, rng);
          if (rng.chance(0.5)) {
            auto extra = detail::split_ws("the gathering took place on " +
                                          (a.publish_date - (2 + rng.below(20))).str());
            tokens.insert(tokens.end(), extra.begin(), extra.end());
          }
          break;
        }
        case 2: {
          truth.kind = ArticleKind::OtherCity;
          truth.h1 = truth.h2 = 1;
          const Date vote_date = a.publish_date - (2 + rng.below(20));
          tokens = detail::split_ws(
              (omit_keyword ? "alameda county leaders voted on "
                            : "the alameda county board of supervisors voted on ") +
              vote_date.str());
          detail::sample_into(tokens, detail::vote_pool(), 5, rng);
          detail::sample_into(tokens, detail::politics_pool(), 8, rng);
          borrow_tokens(tokens, p, 38 + rng.below(16));
          detail::sample_into(tokens, detail::filler_pool(), 10, rng);
          break;
        }
        default: {
          truth.kind = ArticleKind::StaleVote;
          truth.h1 = truth.h2 = 1;
          const Date vote_date = a.publish_date - (200 + rng.below(400));
          tokens = detail::split_ws(
              (omit_keyword ? "san francisco city hall officials voted on "
                            : "the san francisco board of supervisors voted on ") +
              vote_date.str());
          detail::sample_into(tokens, detail::vote_pool(), 5, rng);
          detail::sample_into(tokens, detail::politics_pool(), 8, rng);
          borrow_tokens(tokens, p, 38 + rng.below(16));
          detail::sample_into(tokens, detail::filler_pool(), 10, rng);
          break;
        }
      }
    }

    // Lead phrase stays put; the rest is shuffled for texture.
    if (tokens.size() > 12) std::shuffle(tokens.begin() + 10, tokens.end(), rng.g);
    a.body = detail::render(tokens, rng);
    std::string title;
    for (std::size_t k = 0; k < std::min<std::size_t>(6, tokens.size()); ++k) {
      if (k) title += ' ';
      title += tokens[k];
    }
    a.title = title;
    a.dedup_hash = corpus::content_hash(a.body);
    out.article_truth[a.id] = truth;
    out.articles.push_back(std::move(a));
  }

  for (const auto& a : out.articles) {
    if (!rng.chance(params.annotation_rate)) continue;
    const auto& t = out.article_truth.at(a.id);
    out.annotations.push_back({a.id, t.h1, t.h2, t.h3});
  }

  return out;
}

inline void write_synthetic_corpus(const SyntheticCorpus& corpus,
                                   const std::filesystem::path& dir) {
  corpus::write_jsonl(dir / "articles.jsonl", corpus.articles);
  corpus::write_jsonl(dir / "policies.jsonl", corpus.policies);
  corpus::write_jsonl(dir / "meetings.jsonl", corpus.meetings);
  corpus::write_jsonl(dir / "gold.jsonl", corpus.gold);
  corpus::write_jsonl(dir / "annotations.jsonl", corpus.annotations);
  write_file(dir / "truth.json", corpus.truth_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Direct fixture for newsworthiness experiments: a signal token lives in the
// policy text (section 1), is constant over the whole date range, and is
// absent from the meeting/comment sections.

struct NewsworthyFixtureParams {
  std::uint64_t seed = 7;
  int n_meetings = 120;  // monthly
  int policies_per_meeting = 14;
  double positive_rate = 0.25;
  std::string signal_token = "signaltoken";
  std::string start_date = "2013-01-15";
};

inline std::vector<newsworthy::NewsworthyExample> make_newsworthy_fixture(
    const NewsworthyFixtureParams& params) {
  detail::Rand rng(params.seed);
  const Date start = Date::parse(params.start_date);
  std::vector<newsworthy::NewsworthyExample> out;
  int policy_no = 0;
  for (int m = 0; m < params.n_meetings; ++m) {
    char mid[16];
    std::snprintf(mid, sizeof(mid), "NM%04d", m);
    // Monthly cadence: ~30.44 days keeps years aligned over a decade.
    const Date date = start + static_cast<std::int64_t>(m * 30.44);
    for (int k = 0; k < params.policies_per_meeting; ++k) {
      newsworthy::NewsworthyExample e;
      e.meeting_id = mid;
      e.meeting_date = date;
      e.policy_id = std::to_string(500000 + policy_no++);
      e.label = rng.chance(params.positive_rate) ? 1 : 0;
      std::vector<std::string> policy_tokens;
      detail::sample_into(policy_tokens, detail::legal_pool(), 8, rng);
      const int topic = rng.below(20);
      for (int i = 0; i < 12; ++i) policy_tokens.push_back(detail::topic_word(topic, rng.below(18)));
      if (e.label == 1)
        for (int i = 0; i < 3; ++i) policy_tokens.push_back(params.signal_token);
      std::shuffle(policy_tokens.begin(), policy_tokens.end(), rng.g);
      e.policy_text = detail::render(policy_tokens, rng);
      e.n_prior_meetings = rng.below(4);
      e.n_prior_articles = rng.below(3);
      e.discussion_minutes = 1 + rng.below(9);
      std::vector<std::string> disc;
      detail::sample_into(disc, detail::deliberation_pool(), 30, rng);
      e.discussion_text = detail::render(disc, rng);
      e.n_speakers = 1 + rng.below(5);
      e.n_public_commenters = rng.below(2);
      if (e.n_public_commenters > 0) {
        std::vector<std::string> commentary;
        detail::sample_into(commentary, detail::greeting_pool(), 15, rng);
        e.public_comment_text = "<SPEAKER 1> spoke for 1.0 minutes and said: \"" +
                                detail::render(commentary, rng) + "\"";
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace civiclink::synth
