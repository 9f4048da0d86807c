#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <sstream>

#include "civiclink/cli.hpp"

using namespace civiclink;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_command(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("civiclink_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A small synthetic corpus shared by the CLI tests.
const fs::path& corpus_dir() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("corpus");
    const auto r = run({"synth", "--out", d.string(), "--seed", "42", "--articles", "150",
                        "--policies", "70", "--links", "14", "--meetings", "12"});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

std::map<std::string, std::string> snapshot_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (e.path().filename() == "manifest.json") continue;  // carries wall-clock timings
    out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("unknown subcommand exits 1 with usage on stderr") {
  const auto r = run({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
}

TEST_CASE("help exits 0") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("link") != std::string::npos);
}

TEST_CASE("synth writes the corpus bundle and a manifest") {
  const auto& dir = corpus_dir();
  for (const char* f : {"articles.jsonl", "policies.jsonl", "meetings.jsonl", "gold.jsonl",
                        "annotations.jsonl", "truth.json", "manifest.json"})
    CHECK(fs::exists(dir / f));
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest.at("tool_version") == cli::kToolVersion);
  CHECK(manifest.at("command") == "synth");
  CHECK(manifest.at("config").at("seed") == 42);
}

TEST_CASE("ingest subcommand validates and reports") {
  const auto out = fresh_dir("ingest");
  const auto r = run({"ingest", "--kind", "article", "--in",
                      (corpus_dir() / "articles.jsonl").string(), "--out", out.string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "articles.jsonl"));
  const auto report = nlohmann::json::parse(read_file(out / "ingest_report_article.json"));
  CHECK(report.at("kept") == 150);
  CHECK(report.at("dropped_invalid") == 0);
}

TEST_CASE("missing corpus path exits 2 with no partial outputs") {
  const auto out = fresh_dir("missing");
  const auto r = run({"link", "--corpus", "/nonexistent/corpus", "--calibrate", "--out",
                      out.string()});
  CHECK(r.code == 2);
  CHECK(fs::is_empty(out));
}

TEST_CASE("link requires exactly one of --calibrate / --lambda") {
  const auto out = fresh_dir("lambda_usage");
  const auto both = run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--lambda",
                         "0.5", "--out", out.string()});
  CHECK(both.code == 1);
  const auto neither = run({"link", "--corpus", corpus_dir().string(), "--out", out.string()});
  CHECK(neither.code == 1);
}

TEST_CASE("link --calibrate emits links, calibration and eval") {
  const auto out = fresh_dir("link");
  const auto r = run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--body-phrase",
                      "san francisco", "--out", out.string(), "--seed", "42", "--jobs", "2"});
  REQUIRE(r.code == 0);
  for (const char* f : {"links.csv", "link_scores.csv", "calibration.json", "eval.json",
                        "manifest.json"})
    CHECK(fs::exists(out / f));
  const auto eval = nlohmann::json::parse(read_file(out / "eval.json"));
  CHECK(eval.at("test").at("f1").get<double>() >= 0.8);
  const auto cal = nlohmann::json::parse(read_file(out / "calibration.json"));
  CHECK(cal.at("lambda").get<double>() > 0.0);
  // The scores CSV carries the per-step probability columns.
  const auto header = read_file(out / "link_scores.csv").substr(0, 200);
  CHECK(header.find("h1_covers_body") != std::string::npos);
  CHECK(header.find("h3_recent_votes") != std::string::npos);
  CHECK(header.find("pruned_at") != std::string::npos);
}

TEST_CASE("align pegs agendas and writes rollups") {
  const auto out = fresh_dir("align");
  const auto r = run({"align", "--corpus", corpus_dir().string(), "--out", out.string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"meetings_pegged.jsonl", "section_rollup.csv", "assignments.csv",
                        "public_commenters.csv", "transition_model.json", "align_report.json"})
    CHECK(fs::exists(out / f));
  // Every agenda item in the pegged output carries a timestamp.
  auto [meetings, report] = corpus::ingest_meetings(out / "meetings_pegged.jsonl");
  CHECK(report.dropped_invalid == 0);
  for (const auto& m : meetings)
    for (const auto& item : m.agenda) CHECK(item.timestamp_s.has_value());
  const auto rollup = read_file(out / "section_rollup.csv");
  CHECK(rollup.find("PUBLIC COMMENT") != std::string::npos);
}

TEST_CASE("newsworthy build / train / rank / eval / ablate") {
  const auto link_out = fresh_dir("link_for_news");
  REQUIRE(run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--body-phrase",
               "san francisco", "--out", link_out.string(), "--seed", "42"})
              .code == 0);

  const auto build_out = fresh_dir("news_build");
  const auto build = run({"newsworthy", "build", "--corpus", corpus_dir().string(), "--links",
                          (link_out / "links.csv").string(), "--out", build_out.string()});
  REQUIRE(build.code == 0);
  REQUIRE(fs::exists(build_out / "dataset.jsonl"));
  CHECK(fs::exists(build_out / "prompts"));
  CHECK(!fs::is_empty(build_out / "prompts"));

  const auto dataset = newsworthy::read_dataset(build_out / "dataset.jsonl");
  REQUIRE(!dataset.empty());
  // Pick a cutoff inside the corpus date range so both sides are non-empty.
  const std::string cutoff = dataset[dataset.size() / 2].meeting_date.str();

  const auto train_out = fresh_dir("news_train");
  const auto train = run({"newsworthy", "train", "--dataset",
                          (build_out / "dataset.jsonl").string(), "--cutoff", cutoff, "--out",
                          train_out.string(), "--seed", "3"});
  REQUIRE(train.code == 0);
  REQUIRE(fs::exists(train_out / "ranker.json"));

  const std::string meeting = dataset.back().meeting_id;
  const auto rank_out = fresh_dir("news_rank");
  const auto rank = run({"newsworthy", "rank", "--dataset",
                         (build_out / "dataset.jsonl").string(), "--model",
                         (train_out / "ranker.json").string(), "--meeting", meeting, "--top",
                         "10", "--out", rank_out.string()});
  REQUIRE(rank.code == 0);
  // Header plus at most 10 rows.
  const auto csv = read_file(rank_out / ("ranking_" + meeting + ".csv"));
  const auto lines = static_cast<int>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines >= 2);
  CHECK(lines <= 11);
  CHECK(rank.out.find("meeting_id,rank,policy_id,score") != std::string::npos);

  const auto eval_out = fresh_dir("news_eval");
  const auto eval = run({"newsworthy", "eval", "--dataset",
                         (build_out / "dataset.jsonl").string(), "--model",
                         (train_out / "ranker.json").string(), "--test-start", cutoff, "--out",
                         eval_out.string()});
  REQUIRE(eval.code == 0);
  CHECK(fs::exists(eval_out / "eval.json"));

  const auto ablate_out = fresh_dir("news_ablate");
  const auto ablate = run({"newsworthy", "ablate", "--dataset",
                           (build_out / "dataset.jsonl").string(), "--grid", "masks",
                           "--test-start", cutoff, "--out", ablate_out.string(), "--jobs", "2"});
  REQUIRE(ablate.code == 0);
  const auto grid = read_file(ablate_out / "ablation_grid.csv");
  CHECK(std::count(grid.begin(), grid.end(), '\n') == 5);  // header + 4 masks
}

TEST_CASE("analyze and report") {
  const auto link_out = fresh_dir("link_for_analyze");
  REQUIRE(run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--body-phrase",
               "san francisco", "--out", link_out.string(), "--seed", "42"})
              .code == 0);
  const auto build_out = fresh_dir("build_for_analyze");
  REQUIRE(run({"newsworthy", "build", "--corpus", corpus_dir().string(), "--links",
               (link_out / "links.csv").string(), "--out", build_out.string()})
              .code == 0);

  const auto out = fresh_dir("analyze");
  const auto r = run({"analyze", "--corpus", corpus_dir().string(), "--links",
                      (link_out / "links.csv").string(), "--dataset",
                      (build_out / "dataset.jsonl").string(), "--out", out.string(), "--seed",
                      "5", "--lda-iters", "60"});
  REQUIRE(r.code == 0);
  for (const char* f :
       {"coverage_series.csv", "coverage_series.svg", "articles_per_policy_hist.csv",
        "meetings_per_policy_hist.csv", "delta_words_policy_text.csv",
        "discussion_comparison.csv", "words_per_policy_hist.csv", "topics.csv"})
    CHECK(fs::exists(out / f));

  const auto report = run({"report", "--run", out.string()});
  CHECK(report.code == 0);
  CHECK(fs::exists(out / "report.json"));
  CHECK(report.out.find("manifest.json") != std::string::npos);
}

TEST_CASE("identical config and seed reproduce byte-identical outputs") {
  auto pipeline = [&](const fs::path& base) {
    const auto corpus = base / "corpus";
    fs::create_directories(corpus);
    REQUIRE(run({"synth", "--out", corpus.string(), "--seed", "7", "--articles", "120",
                 "--policies", "60", "--links", "10", "--meetings", "10"})
                .code == 0);
    const auto link_out = base / "link";
    REQUIRE(run({"link", "--corpus", corpus.string(), "--calibrate", "--body-phrase",
                 "san francisco", "--out", link_out.string(), "--seed", "7", "--jobs", "2"})
                .code == 0);
    const auto align_out = base / "align";
    REQUIRE(run({"align", "--corpus", corpus.string(), "--out", align_out.string()}).code == 0);
  };
  const auto run1 = fresh_dir("repro1");
  const auto run2 = fresh_dir("repro2");
  pipeline(run1);
  pipeline(run2);
  const auto s1 = snapshot_files(run1);
  const auto s2 = snapshot_files(run2);
  REQUIRE(s1.size() == s2.size());
  for (const auto& [name, content] : s1) {
    INFO(name);
    CHECK(content == s2.at(name));
  }
}

TEST_CASE("newsworthy eval with the external stub client") {
  const auto link_out = fresh_dir("link_ext");
  REQUIRE(run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--body-phrase",
               "san francisco", "--out", link_out.string(), "--seed", "42"})
              .code == 0);
  const auto build_out = fresh_dir("build_ext");
  REQUIRE(run({"newsworthy", "build", "--corpus", corpus_dir().string(), "--links",
               (link_out / "links.csv").string(), "--out", build_out.string()})
              .code == 0);
  const auto dataset = newsworthy::read_dataset(build_out / "dataset.jsonl");
  const auto eval_out = fresh_dir("eval_ext");
  const auto r = run({"newsworthy", "eval", "--dataset", (build_out / "dataset.jsonl").string(),
                      "--external-client", "--test-start",
                      dataset[dataset.size() / 2].meeting_date.str(), "--out",
                      eval_out.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(eval_out / "eval.json"));
  CHECK(fs::exists(eval_out / "yesno_cache.json"));
}

TEST_CASE("subcommands never mutate their inputs") {
  auto hash_dir = [](const fs::path& dir) {
    std::map<std::string, std::uint64_t> out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) out[e.path().filename().string()] = fnv1a64(read_file(e.path()));
    return out;
  };
  const auto before = hash_dir(corpus_dir());
  const auto out = fresh_dir("immutability");
  REQUIRE(run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--body-phrase",
               "san francisco", "--out", out.string(), "--seed", "42"})
              .code == 0);
  CHECK(hash_dir(corpus_dir()) == before);
}

TEST_CASE("chain config file feeds the link stage, flags win") {
  const auto out = fresh_dir("chaincfg");
  const auto cfg_path = out / "chain.cfg";
  write_file(cfg_path,
             "chain.body_phrase = san francisco\n"
             "chain.gate.h1 = 0.45\n");
  const auto r = run({"link", "--corpus", corpus_dir().string(), "--calibrate",
                      "--chain-config", cfg_path.string(), "--out", out.string(), "--seed",
                      "42"});
  CHECK(r.code == 0);
  const auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
  CHECK(manifest.at("config").at("body_phrase") == "san francisco");
}

TEST_CASE("--config supplies defaults; explicit flags still win") {
  const auto out = fresh_dir("runcfg");
  const auto cfg_path = out / "run.cfg";
  write_file(cfg_path,
             "seed = 42\n"
             "chain.body_phrase = san francisco\n"
             "chain.window_days = 14\n");
  SECTION("config values apply when flags are absent") {
    const auto r = run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--config",
                        cfg_path.string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
    CHECK(manifest.at("config").at("seed") == 42);
    CHECK(manifest.at("config").at("window_days") == 14);
    CHECK(manifest.at("config").at("body_phrase") == "san francisco");
  }
  SECTION("an explicit flag overrides the config file") {
    const auto r = run({"link", "--corpus", corpus_dir().string(), "--calibrate", "--config",
                        cfg_path.string(), "--window", "31", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
    CHECK(manifest.at("config").at("window_days") == 31);
  }
}
