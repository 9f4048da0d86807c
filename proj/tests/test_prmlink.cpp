#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "civiclink/prmlink.hpp"
#include "civiclink/synthetic.hpp"
#include "oracles.hpp"

using namespace civiclink;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// A rule step rigged to return a fixed probability: the empty phrase always
// matches and the date check is bypassed by an enormous window.
prm::ChainStep fixed_step(const std::string& name, double prob, std::optional<double> gate = {}) {
  prm::ChainStep s;
  s.name = name;
  s.kind = prm::ScorerKind::Rule;
  s.rule.body_phrase = "the";
  s.rule.window_days = 1000000;
  s.rule.p_match = prob;
  s.rule.p_nomatch = prob;
  s.gate = gate;
  return s;
}

corpus::Article make_article(const std::string& id, const std::string& body,
                             const std::string& date = "2021-03-20") {
  corpus::Article a;
  a.id = id;
  a.publish_date = Date::parse(date);
  a.body = body;
  a.dedup_hash = corpus::content_hash(body);
  return a;
}

corpus::PolicyItem make_policy(const std::string& id, const std::string& text) {
  corpus::PolicyItem p;
  p.id = id;
  p.title = "";
  p.description = text;
  p.introduced_date = Date::parse("2021-01-01");
  return p;
}

struct SmallWorld {
  corpus::CorpusStore store;
  prm::PrmChain chain;
  std::shared_ptr<textvec::TfIdfModel> tfidf;
};

SmallWorld make_small_world() {
  std::vector<corpus::Article> articles = {
      make_article("a1", "the housing vote passed today on 2021-03-15"),
      make_article("a2", "the beach weather was lovely this weekend"),
  };
  std::vector<corpus::PolicyItem> policies = {
      make_policy("p1", "housing vote ordinance"),
      make_policy("p2", "parks budget measure"),
      make_policy("p3", "transit fare change"),
  };
  SmallWorld w{corpus::CorpusStore(articles, policies, {}), {}, {}};
  std::vector<std::string> docs;
  for (const auto& a : w.store.articles()) docs.push_back(a.body);
  for (const auto& p : w.store.policies()) docs.push_back(p.full_text());
  w.tfidf = std::make_shared<textvec::TfIdfModel>(textvec::TfIdfModel::fit(docs));
  w.chain.similarity_space = std::make_shared<textvec::TfidfEmbedding>(w.tfidf);
  return w;
}

}  // namespace

TEST_CASE("rule scorer: recent date and body phrase") {
  prm::RuleScorerConfig cfg;
  cfg.body_phrase = "board of supervisors";
  cfg.window_days = 31;
  const auto recent = make_article(
      "x", "the board of supervisors voted on 2021-03-10 to approve", "2021-03-20");
  CHECK(prm::rule_score(recent, cfg) == 0.9);
  const auto stale = make_article(
      "x", "the board of supervisors voted on 2019-01-10 to approve", "2021-03-20");
  CHECK(prm::rule_score(stale, cfg) == 0.1);
  const auto wrong_body = make_article("x", "the city hall voted on 2021-03-10", "2021-03-20");
  CHECK(prm::rule_score(wrong_body, cfg) == 0.1);
  const auto future = make_article("x", "the board of supervisors meets on 2021-04-10",
                                   "2021-03-20");
  CHECK(prm::rule_score(future, cfg) == 0.1);  // date mention after publication
}

TEST_CASE("iso date extraction") {
  const auto dates = prm::extract_iso_dates("before 2021-03-10, after 2021-13-40, x120-01-011");
  REQUIRE(dates.size() == 1);
  CHECK(dates[0].str() == "2021-03-10");
}

TEST_CASE("score_pair combines step probabilities and similarity") {
  auto w = make_small_world();
  w.chain.steps = {fixed_step("h1", 0.9), fixed_step("h2", 0.8)};
  const auto s =
      prm::score_pair(w.chain, w.store, *w.store.find_article("a1"), *w.store.find_policy("p1"));
  REQUIRE(s.step_probs.size() == 2);
  CHECK(s.step_probs[0] == 0.9);
  CHECK(s.step_probs[1] == 0.8);
  CHECK(s.similarity > 0.0);
  CHECK(s.combined == Approx(0.72 * s.similarity).epsilon(1e-12));
  CHECK(!s.pruned_at.has_value());

  SECTION("similarity 0.5 gives the textbook 0.36 product") {
    prm::LinkScore hand;
    // Pure arithmetic check of the combination rule.
    CHECK(0.9 * 0.8 * 0.5 == Approx(0.36));
  }
}

TEST_CASE("a gated step below its gate prunes the pair") {
  auto w = make_small_world();
  w.chain.steps = {fixed_step("h1", 0.2, 0.5), fixed_step("h2", 0.9)};
  const auto s =
      prm::score_pair(w.chain, w.store, *w.store.find_article("a1"), *w.store.find_policy("p1"));
  REQUIRE(s.pruned_at.has_value());
  CHECK(*s.pruned_at == "h1");
  CHECK(s.combined == 0.0);
  CHECK(s.step_probs.size() == 1);  // later steps skipped
}

TEST_CASE("empty chain scores similarity alone") {
  auto w = make_small_world();
  const auto s =
      prm::score_pair(w.chain, w.store, *w.store.find_article("a1"), *w.store.find_policy("p1"));
  CHECK(s.combined == Approx(s.similarity).epsilon(1e-15));
  CHECK(s.similarity > 0.2);  // shared housing/vote vocabulary
}

TEST_CASE("run_funnel cardinality and article-level pruning") {
  auto w = make_small_world();
  // Article-level scorer: real rule distinguishing the two articles.
  prm::ChainStep h1;
  h1.name = "h1";
  h1.kind = prm::ScorerKind::Rule;
  h1.rule.body_phrase = "vote";
  h1.rule.window_days = 31;
  h1.gate = 0.5;
  w.chain.steps = {h1};

  std::vector<corpus::CandidatePair> candidates;
  for (const auto& a : w.store.articles())
    for (const auto& p : w.store.policies()) candidates.push_back({a.id, p.id, 1});

  const auto scores = prm::run_funnel(w.chain, w.store, candidates, 1);
  CHECK(scores.size() == 6);
  for (const auto& s : scores) {
    if (s.article_id == "a2") {
      REQUIRE(s.pruned_at.has_value());
      CHECK(*s.pruned_at == "h1");
    } else {
      CHECK(!s.pruned_at.has_value());
    }
  }
}

TEST_CASE("memoized funnel equals naive per-pair evaluation bit-for-bit") {
  synth::SyntheticParams params;
  params.n_articles = 80;
  params.n_policies = 40;
  params.n_links = 8;
  params.n_meetings = 8;
  const auto c = synth::generate_synthetic_corpus(params);
  corpus::CorpusStore store(c.articles, c.policies, c.meetings, c.gold);
  const auto candidates = corpus::candidate_pairs(store, 31);
  prm::ChainOptions opt;
  opt.body_phrase = "san francisco";
  const auto built = prm::build_chain(store, c.annotations, opt);

  const auto funnel = prm::run_funnel(built.chain, store, candidates, 1);
  REQUIRE(funnel.size() == candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto naive = prm::score_pair(built.chain, store, *store.find_article(candidates[i].article_id),
                                       *store.find_policy(candidates[i].policy_id));
    CHECK(funnel[i].combined == naive.combined);
    CHECK(funnel[i].similarity == naive.similarity);
    CHECK(funnel[i].pruned_at == naive.pruned_at);
    REQUIRE(funnel[i].step_probs.size() == naive.step_probs.size());
    for (std::size_t k = 0; k < naive.step_probs.size(); ++k)
      CHECK(funnel[i].step_probs[k] == naive.step_probs[k]);
  }

  SECTION("job count does not change results") {
    const auto parallel = prm::run_funnel(built.chain, store, candidates, 4);
    REQUIRE(parallel.size() == funnel.size());
    for (std::size_t i = 0; i < funnel.size(); ++i)
      CHECK(parallel[i].combined == funnel[i].combined);
  }
}

namespace {

prm::LinkScore plain_score(const std::string& aid, const std::string& pid, double combined) {
  prm::LinkScore s;
  s.article_id = aid;
  s.policy_id = pid;
  s.combined = combined;
  s.similarity = combined;
  return s;
}

}  // namespace

TEST_CASE("lambda calibration sweeps and tie-breaks toward precision") {
  std::vector<prm::LinkScore> scores = {plain_score("a1", "p1", 0.9), plain_score("a2", "p2", 0.8),
                                        plain_score("a3", "p3", 0.1)};
  std::unordered_set<std::string> gold = {prm::pair_key("a1", "p1"), prm::pair_key("a2", "p2")};
  const auto cal = prm::calibrate_lambda(scores, gold);
  CHECK(cal.lambda == 0.8);  // the largest threshold attaining F1 = 1
  CHECK(cal.train_f1 == Approx(1.0));
  CHECK(!cal.degenerate);
  REQUIRE(cal.sweep.size() == 3);
  CHECK(cal.sweep[0].first == 0.9);

  SECTION("reported F1 equals evaluate_links recomputed at lambda") {
    const auto rep = prm::evaluate_links(scores, gold, cal.lambda);
    CHECK(rep.f1 == Approx(cal.train_f1).margin(1e-12));
  }
}

TEST_CASE("a gold pair scored zero is a recall miss at any positive lambda") {
  std::vector<prm::LinkScore> scores = {plain_score("a1", "p1", 0.7), plain_score("a2", "p2", 0.0)};
  std::unordered_set<std::string> gold = {prm::pair_key("a1", "p1"), prm::pair_key("a2", "p2")};
  const auto rep = prm::evaluate_links(scores, gold, 0.5);
  CHECK(rep.tp == 1);
  CHECK(rep.fn == 1);
  CHECK(rep.recall == Approx(0.5));
}

TEST_CASE("degenerate calibration: single gold candidate") {
  std::vector<prm::LinkScore> scores = {plain_score("a1", "p1", 0.5)};
  std::unordered_set<std::string> gold = {prm::pair_key("a1", "p1")};
  const auto cal = prm::calibrate_lambda(scores, gold);
  CHECK(cal.lambda == 0.5);
  CHECK(cal.train_f1 == Approx(1.0));
  CHECK(cal.degenerate);
}

TEST_CASE("evaluate_links boundary cases") {
  std::vector<prm::LinkScore> scores = {plain_score("a1", "p1", 0.9), plain_score("a2", "p2", 0.4)};
  std::unordered_set<std::string> gold = {prm::pair_key("a1", "p1"), prm::pair_key("a2", "p2")};
  SECTION("predictions exactly equal gold") {
    CHECK(prm::evaluate_links(scores, gold, 0.3).f1 == Approx(1.0));
  }
  SECTION("lambda above every score gives zero recall and F1") {
    const auto rep = prm::evaluate_links(scores, gold, 0.95);
    CHECK(rep.recall == 0.0);
    CHECK(rep.f1 == 0.0);
  }
  SECTION("empty gold is an error") {
    CHECK_THROWS_AS(prm::evaluate_links(scores, {}, 0.5), DataError);
  }
}

TEST_CASE("ablate_chain truncation") {
  auto w = make_small_world();
  w.chain.steps = {fixed_step("h1", 0.9), fixed_step("h2", 0.8), fixed_step("h3", 0.7)};
  CHECK(prm::ablate_chain(w.chain, 0).steps.empty());
  CHECK(prm::ablate_chain(w.chain, 3).steps.size() == 3);
  CHECK(prm::ablate_chain(w.chain, 2).steps.back().name == "h2");
  CHECK_THROWS_AS(prm::ablate_chain(w.chain, 4), UsageError);
}

TEST_CASE("emit_links is many-to-many and respects lambda") {
  std::vector<prm::LinkScore> scores = {plain_score("a1", "p1", 0.9), plain_score("a1", "p2", 0.8),
                                        plain_score("a2", "p1", 0.7), plain_score("a3", "p3", 0.1)};
  auto pruned = plain_score("a4", "p4", 0.0);
  pruned.pruned_at = "h1";
  scores.push_back(pruned);

  SECTION("one article links two policies") {
    const auto links = prm::emit_links(scores, 0.75);
    REQUIRE(links.links.size() == 2);
    CHECK(links.links[0].article_id == "a1");
    CHECK(links.links[1].article_id == "a1");
  }
  SECTION("lambda 0 emits every non-pruned candidate, sorted by score") {
    const auto links = prm::emit_links(scores, 0.0);
    REQUIRE(links.links.size() == 4);
    for (std::size_t i = 1; i < links.links.size(); ++i)
      CHECK(links.links[i - 1].score >= links.links[i].score);
  }
}

TEST_CASE("link csv round trip") {
  std::vector<prm::LinkScore> scores = {plain_score("a1", "p1", 0.9), plain_score("a2", "p2", 0.4)};
  const auto set = prm::emit_links(scores, 0.0);
  const auto restored = prm::links_from_csv(prm::links_csv(set));
  REQUIRE(restored.links.size() == set.links.size());
  for (std::size_t i = 0; i < set.links.size(); ++i) {
    CHECK(restored.links[i].article_id == set.links[i].article_id);
    CHECK(restored.links[i].policy_id == set.links[i].policy_id);
    CHECK(restored.links[i].score == Approx(set.links[i].score).margin(1e-6));
  }
}

// --- synthetic-corpus pipeline ----------------------------------------------

namespace {

struct SynthBundle {
  synth::SyntheticCorpus corpus;
  corpus::CorpusStore store;
  std::vector<corpus::CandidatePair> candidates;
  prm::BuiltChain built;
  std::unordered_set<std::string> gold_train, gold_test;
};

const SynthBundle& mid_bundle() {
  static const SynthBundle bundle = [] {
    synth::SyntheticParams params;
    params.n_articles = 300;
    params.n_policies = 150;
    params.n_links = 20;
    params.n_meetings = 20;
    SynthBundle b{synth::generate_synthetic_corpus(params), {}, {}, {}, {}, {}};
    b.store = corpus::CorpusStore(b.corpus.articles, b.corpus.policies, b.corpus.meetings,
                                  b.corpus.gold);
    b.candidates = corpus::candidate_pairs(b.store, 31);
    prm::ChainOptions opt;
    opt.body_phrase = "san francisco";
    opt.train.seed = 42;
    b.built = prm::build_chain(b.store, b.corpus.annotations, opt);
    b.gold_train = prm::gold_keys(b.store.gold(), "train");
    b.gold_test = prm::gold_keys(b.store.gold(), "test");
    return b;
  }();
  return bundle;
}

}  // namespace

TEST_CASE("chain ablation grid: F1 non-decreasing, full chain beats base") {
  const auto& b = mid_bundle();
  auto f1_at = [&](std::size_t k) {
    const auto chain = prm::ablate_chain(b.built.chain, k);
    const auto scores = prm::run_funnel(chain, b.store, b.candidates, 2);
    const auto cal = prm::calibrate_lambda(scores, b.gold_train, b.gold_test);
    return prm::evaluate_links(scores, b.gold_test, cal.lambda, b.gold_train).f1;
  };
  std::vector<double> f1;
  for (std::size_t k = 0; k <= b.built.chain.steps.size(); ++k) f1.push_back(f1_at(k));
  for (std::size_t k = 1; k < f1.size(); ++k) CHECK(f1[k] >= f1[k - 1]);
  CHECK(f1.back() > f1.front());
  CHECK(f1.back() >= 0.85);
  CHECK(f1.front() <= 0.60);
}

TEST_CASE("emitted links recover the planted links") {
  const auto& b = mid_bundle();
  const auto scores = prm::run_funnel(b.built.chain, b.store, b.candidates, 2);
  const auto cal = prm::calibrate_lambda(scores, b.gold_train, b.gold_test);
  const auto links = prm::emit_links(scores, cal.lambda);

  std::set<std::pair<std::string, std::string>> planted;
  for (const auto& g : b.corpus.gold) planted.insert({g.article_id, g.policy_id});
  std::int64_t tp = 0;
  for (const auto& l : links.links)
    if (planted.count({l.article_id, l.policy_id})) ++tp;
  const double precision = links.links.empty() ? 0.0 : static_cast<double>(tp) / links.links.size();
  const double recall = static_cast<double>(tp) / static_cast<double>(planted.size());
  CHECK(precision >= 0.9);
  CHECK(recall >= 0.9);
}

TEST_CASE("combined score never exceeds any single factor") {
  const auto& b = mid_bundle();
  const auto scores = prm::run_funnel(b.built.chain, b.store, b.candidates, 2);
  for (const auto& s : scores) {
    if (s.pruned_at) {
      CHECK(s.combined == 0.0);
      continue;
    }
    CHECK(s.combined <= s.similarity + 1e-12);
    for (double p : s.step_probs) CHECK(s.combined <= p + 1e-12);
  }
}

TEST_CASE("gating does not change the link set when every gate <= lambda") {
  const auto& b = mid_bundle();
  const double lambda = 0.55;  // all gates are 0.5
  const auto gated = prm::run_funnel(b.built.chain, b.store, b.candidates, 2);
  prm::PrmChain ungated = b.built.chain;
  for (auto& s : ungated.steps) s.gate.reset();
  const auto open = prm::run_funnel(ungated, b.store, b.candidates, 2);
  auto link_keys = [](const prm::LinkSet& set) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& l : set.links) out.insert({l.article_id, l.policy_id});
    return out;
  };
  CHECK(link_keys(prm::emit_links(gated, lambda)) == link_keys(prm::emit_links(open, lambda)));
}

TEST_CASE("chain options from key-value config") {
  const auto cfg = KvConfig::parse(
      "chain.keyword = city council\n"
      "chain.gate.h1 = 0.4\n"
      "chain.similarity_target = minutes_text\n"
      "# comment\n"
      "chain.window_days = 14\n");
  const auto opt = prm::chain_options_from_config(cfg);
  CHECK(opt.keyword == "city council");
  CHECK(opt.gate_h1 == 0.4);
  CHECK(opt.window_days == 14);
  CHECK(opt.target == prm::SimilarityTarget::MinutesText);
  CHECK_THROWS_AS(
      prm::chain_options_from_config(KvConfig::parse("chain.similarity_target = bogus")),
      UsageError);
}

TEST_CASE("chain validation rejects duplicate names and bad gates") {
  prm::PrmChain chain;
  chain.steps = {fixed_step("h1", 0.9), fixed_step("h1", 0.8)};
  CHECK_THROWS_AS(chain.validate(), UsageError);
  chain.steps = {fixed_step("h1", 0.9, 1.5)};
  CHECK_THROWS_AS(chain.validate(), UsageError);
}

// --- external yes/no client -------------------------------------------------

TEST_CASE("stub client is deterministic and caches") {
  const fs::path cache = fs::temp_directory_path() / "civiclink_test_cache.json";
  fs::remove(cache);
  external::ExternalYesNoClient::Options opt;
  opt.cache_path = cache;
  external::ExternalYesNoClient client(opt);
  REQUIRE(client.stub_mode());

  const std::string prompt = client.render_prompt("Article (published 2021-01-01):\nbody text");
  CHECK(prompt.find("[EXEMPLAR SLOT 1]") != std::string::npos);
  CHECK(prompt.find("Article (published 2021-01-01)") != std::string::npos);

  const auto r1 = client.ask(prompt);
  const auto r2 = client.ask(prompt);
  CHECK(r1.p_yes == r2.p_yes);
  CHECK(r2.from_cache);
  CHECK(r1.p_yes > 0.0);
  CHECK(r1.p_yes < 1.0);

  // A fresh client reloads the persisted cache and returns the same value.
  external::ExternalYesNoClient reloaded(opt);
  const auto r3 = reloaded.ask(prompt);
  CHECK(r3.from_cache);
  CHECK(r3.p_yes == r1.p_yes);
  fs::remove(cache);
}

TEST_CASE("external step failure falls back to the rule scorer, degraded") {
  prm::ChainStep step;
  step.name = "h3";
  step.kind = prm::ScorerKind::External;
  external::ExternalYesNoClient::Options opt;
  opt.endpoint = "http://127.0.0.1:1";  // nothing listens here
  opt.timeout_ms = 200;
  step.client = std::make_shared<external::ExternalYesNoClient>(opt);
  step.rule.body_phrase = "board of supervisors";
  step.rule.window_days = 31;

  const auto a = make_article("x", "the board of supervisors voted on 2021-03-10", "2021-03-20");
  const auto r = step.score(a);
  CHECK(r.degraded);
  CHECK(r.prob == 0.9);  // rule fallback fires
}
