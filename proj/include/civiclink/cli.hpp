#pragma once

#include <chrono>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "civiclink/analytics.hpp"
#include "civiclink/corpus.hpp"
#include "civiclink/meetings.hpp"
#include "civiclink/newsworthy.hpp"
#include "civiclink/prmlink.hpp"
#include "civiclink/synthetic.hpp"
#include "civiclink/util.hpp"

namespace civiclink::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit-code contract: 0 success, 1 usage error, 2 data error, 3 failed
// self-check.
enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kCheckFailed = 3 };

// ---------------------------------------------------------------------------
// Run manifest: config snapshot, input hashes, version, stage timings.

class RunManifest {
 public:
  RunManifest(std::string command) : command_(std::move(command)) {}

  void set_config(nlohmann::json config) { config_ = std::move(config); }

  void add_input(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) add_input(f);
      return;
    }
    inputs_[path.string()] = std::to_string(fnv1a64(read_file(path)));
  }

  class Stage {
   public:
    Stage(RunManifest* m, std::string name)
        : manifest_(m), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~Stage() {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
      manifest_->timings_.emplace_back(name_, ms);
    }

   private:
    RunManifest* manifest_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
  };

  Stage stage(std::string name) { return Stage(this, std::move(name)); }

  void write(const std::filesystem::path& out_dir) const {
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& [name, ms] : timings_) timings[name] = ms;
    const nlohmann::json j = {{"tool_version", kToolVersion},
                              {"command", command_},
                              {"config", config_},
                              {"input_hashes", inputs_},
                              {"timings_ms", timings}};
    write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  std::map<std::string, std::string> inputs_;
  std::vector<std::pair<std::string, std::int64_t>> timings_;
};

// ---------------------------------------------------------------------------

namespace detail {

struct CommonFlags {
  std::string out_dir;
  std::string config_file;
  std::uint64_t seed = 0;
  unsigned jobs = 0;

  unsigned effective_jobs() const { return jobs == 0 ? default_jobs() : jobs; }
};

inline void add_common(CLI::App* cmd, CommonFlags* flags, bool need_out = true) {
  auto* out = cmd->add_option("--out", flags->out_dir, "Output directory");
  if (need_out) out->required();
  cmd->add_option("--config", flags->config_file, "Key-value config file (flags win)");
  cmd->add_option("--seed", flags->seed, "Seed for all randomness");
  cmd->add_option("--jobs", flags->jobs, "Worker parallelism (default: cores)");
}

// Flags win over the config file: only CLI-defaulted values are replaced.
inline KvConfig load_config(const CommonFlags& flags) {
  return flags.config_file.empty() ? KvConfig{} : KvConfig::load(flags.config_file);
}

inline void require_exists(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw DataError("missing input: " + p.string());
}

inline corpus::CorpusStore load_corpus(const std::string& dir, RunManifest& manifest) {
  require_exists(dir);
  for (const char* f : {"articles.jsonl", "policies.jsonl", "meetings.jsonl"})
    require_exists(std::filesystem::path(dir) / f);
  manifest.add_input(dir);
  return corpus::load_corpus_dir(dir);
}

inline std::vector<corpus::Meeting> pegged_meetings(const corpus::CorpusStore& store,
                                                    double threshold,
                                                    const learn::TrainConfig& config,
                                                    std::vector<std::string>* warnings) {
  bool needs_pegging = false;
  for (const auto& m : store.meetings())
    for (const auto& item : m.agenda)
      if (!item.timestamp_s) needs_pegging = true;
  std::vector<corpus::Meeting> out;
  if (!needs_pegging) {
    out = store.meetings();
    return out;
  }
  const auto model = meetings::train_transition_model(
      meetings::transition_training_meetings(store.meetings()), config);
  for (const auto& m : store.meetings()) {
    auto result = meetings::peg_agenda(m, model, threshold);
    if (warnings)
      warnings->insert(warnings->end(), result.warnings.begin(), result.warnings.end());
    out.push_back(std::move(result.meeting));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns the payload it wrote so tests can poke at
// the results without re-reading files.

inline int cmd_ingest(const std::string& kind, const std::string& in_path,
                      const detail::CommonFlags& flags, std::ostream& out) {
  detail::require_exists(in_path);
  RunManifest manifest("ingest");
  manifest.add_input(in_path);
  manifest.set_config({{"kind", kind}, {"in", in_path}});
  corpus::IngestReport report;
  const std::filesystem::path dir(flags.out_dir);
  {
    auto stage = manifest.stage("ingest");
    if (kind == "article") {
      auto [records, r] = corpus::ingest_articles(in_path);
      corpus::write_jsonl(dir / "articles.jsonl", records);
      report = r;
    } else if (kind == "policy") {
      auto [records, r] = corpus::ingest_policies(in_path);
      corpus::write_jsonl(dir / "policies.jsonl", records);
      report = r;
    } else if (kind == "meeting") {
      auto [records, r] = corpus::ingest_meetings(in_path);
      corpus::write_jsonl(dir / "meetings.jsonl", records);
      report = r;
    } else {
      throw UsageError("unknown ingest kind: " + kind);
    }
  }
  write_file(dir / ("ingest_report_" + kind + ".json"), report.to_json().dump(2) + "\n");
  manifest.write(dir);
  out << "ingest " << kind << ": read=" << report.read << " kept=" << report.kept
      << " dropped_dup=" << report.dropped_dup << " dropped_invalid=" << report.dropped_invalid
      << "\n";
  return kOk;
}

inline int cmd_synth(const synth::SyntheticParams& params, const detail::CommonFlags& flags,
                     std::ostream& out) {
  RunManifest manifest("synth");
  manifest.set_config({{"seed", params.seed},
                       {"n_articles", params.n_articles},
                       {"n_policies", params.n_policies},
                       {"n_links", params.n_links},
                       {"n_meetings", params.n_meetings},
                       {"timestamp_removal_rate", params.timestamp_removal_rate}});
  std::filesystem::create_directories(flags.out_dir);
  {
    auto stage = manifest.stage("generate");
    const auto corpus = synth::generate_synthetic_corpus(params);
    synth::write_synthetic_corpus(corpus, flags.out_dir);
    out << "synth: articles=" << corpus.articles.size() << " policies=" << corpus.policies.size()
        << " meetings=" << corpus.meetings.size() << " gold=" << corpus.gold.size() << "\n";
  }
  manifest.write(flags.out_dir);
  return kOk;
}

inline int cmd_align(const std::string& corpus_dir, double threshold,
                     const detail::CommonFlags& flags, std::ostream& out) {
  RunManifest manifest("align");
  const auto store = detail::load_corpus(corpus_dir, manifest);
  manifest.set_config({{"corpus", corpus_dir}, {"threshold", threshold}, {"seed", flags.seed}});
  const std::filesystem::path dir(flags.out_dir);

  learn::TrainConfig train{.l2_lambda = 1e-4, .learning_rate = 4.0, .max_iters = 400,
                           .seed = flags.seed};
  meetings::TransitionModel model;
  {
    auto stage = manifest.stage("train_transition_model");
    model = meetings::train_transition_model(
        meetings::transition_training_meetings(store.meetings()), train);
  }
  std::vector<corpus::Meeting> pegged;
  std::vector<std::string> warnings;
  int n_pegged = 0;
  {
    auto stage = manifest.stage("peg_agendas");
    for (const auto& m : store.meetings()) {
      auto result = meetings::peg_agenda(m, model, threshold);
      n_pegged += result.n_pegged;
      warnings.insert(warnings.end(), result.warnings.begin(), result.warnings.end());
      pegged.push_back(std::move(result.meeting));
    }
  }
  std::string assignments_csv = "meeting_id,speaker_id,policy_id,overlap,minutes\n";
  std::string commenters_csv = "meeting_id,speaker_id,total_seconds\n";
  {
    auto stage = manifest.stage("commenters");
    for (const auto& m : pegged) {
      const auto spans = meetings::compute_section_spans(m);
      const auto result = meetings::find_public_commenters(m, spans);
      if (result.missing_public_comment) {
        warnings.push_back("meeting " + m.id + ": no PUBLIC COMMENT section");
        continue;
      }
      std::vector<const corpus::PolicyItem*> policies;
      for (const auto& item : m.agenda)
        if (item.policy_id)
          if (const auto* p = store.find_policy(*item.policy_id)) policies.push_back(p);
      for (const auto& s : result.speakers)
        if (s.public_commenter)
          commenters_csv += csv_row({m.id, s.speaker_id, fmt_double(s.total_seconds, 1)});
      for (const auto& a : meetings::assign_comments(m, result.speakers, policies))
        assignments_csv +=
            csv_row({m.id, a.speaker_id, a.policy_id, fmt_double(a.overlap), fmt_double(a.minutes)});
    }
  }
  corpus::write_jsonl(dir / "meetings_pegged.jsonl", pegged);
  write_file(dir / "section_rollup.csv", meetings::section_rollup_csv(meetings::section_rollup(pegged)));
  write_file(dir / "assignments.csv", assignments_csv);
  write_file(dir / "public_commenters.csv", commenters_csv);
  write_file(dir / "transition_model.json", model.to_json().dump() + "\n");
  nlohmann::json report = {{"n_pegged", n_pegged}, {"warnings", warnings}};
  write_file(dir / "align_report.json", report.dump(2) + "\n");
  manifest.write(dir);
  out << "align: pegged " << n_pegged << " agenda items across " << pegged.size()
      << " meetings\n";
  return kOk;
}

struct LinkFlags {
  bool calibrate = false;
  double lambda = -1;
  int window_days = 31;
  bool window_given = false;
  std::string annotations_path;
  std::string chain_config;
  int ablate_k = -1;  // <0 = full chain
  bool external_h3 = false;
  std::string keyword;
  std::string body_phrase;
  KvConfig file_config;  // from --config, lowest precedence
};

inline int cmd_link(const std::string& corpus_dir, const LinkFlags& lf,
                    const detail::CommonFlags& flags, std::ostream& out) {
  if (lf.calibrate == (lf.lambda >= 0))
    throw UsageError("exactly one of --calibrate / --lambda is required");
  RunManifest manifest("link");
  const auto store = detail::load_corpus(corpus_dir, manifest);
  std::vector<corpus::StepAnnotation> annotations;
  if (!lf.annotations_path.empty()) {
    detail::require_exists(lf.annotations_path);
    manifest.add_input(lf.annotations_path);
    annotations = corpus::ingest_annotations(lf.annotations_path).first;
  } else if (std::filesystem::exists(std::filesystem::path(corpus_dir) / "annotations.jsonl")) {
    annotations =
        corpus::ingest_annotations(std::filesystem::path(corpus_dir) / "annotations.jsonl").first;
  }

  prm::ChainOptions opt;
  opt = prm::chain_options_from_config(lf.file_config, opt);
  if (!lf.chain_config.empty()) {
    detail::require_exists(lf.chain_config);
    manifest.add_input(lf.chain_config);
    opt = prm::chain_options_from_config(KvConfig::load(lf.chain_config), opt);
  }
  if (lf.window_given) opt.window_days = lf.window_days;
  opt.train.seed = flags.seed;
  opt.use_external_h3 = opt.use_external_h3 || lf.external_h3;
  if (!lf.keyword.empty()) opt.keyword = lf.keyword;
  if (!lf.body_phrase.empty()) opt.body_phrase = lf.body_phrase;
  if (opt.use_external_h3 && opt.client.cache_path.empty())
    opt.client.cache_path = std::filesystem::path(flags.out_dir) / "yesno_cache.json";

  manifest.set_config({{"corpus", corpus_dir},
                       {"window_days", opt.window_days},
                       {"calibrate", lf.calibrate},
                       {"lambda", lf.lambda},
                       {"ablate_k", lf.ablate_k},
                       {"keyword", opt.keyword},
                       {"body_phrase", opt.body_phrase},
                       {"external_h3", opt.use_external_h3},
                       {"seed", flags.seed}});

  const std::filesystem::path dir(flags.out_dir);
  std::vector<corpus::CandidatePair> candidates;
  {
    auto stage = manifest.stage("candidate_pairs");
    candidates = corpus::candidate_pairs(store, opt.window_days);
  }
  prm::BuiltChain built;
  {
    auto stage = manifest.stage("build_chain");
    built = prm::build_chain(store, annotations, opt);
  }
  prm::PrmChain chain = built.chain;
  if (lf.ablate_k >= 0) chain = prm::ablate_chain(chain, lf.ablate_k);

  std::vector<prm::LinkScore> scores;
  {
    auto stage = manifest.stage("run_funnel");
    scores = prm::run_funnel(chain, store, candidates, flags.effective_jobs());
  }

  const auto gold_train = prm::gold_keys(store.gold(), "train");
  const auto gold_test = prm::gold_keys(store.gold(), "test");
  double lambda = lf.lambda;
  if (lf.calibrate) {
    if (gold_train.empty()) throw DataError("--calibrate needs gold pairs with split=train");
    auto stage = manifest.stage("calibrate");
    const auto cal = prm::calibrate_lambda(scores, gold_train, gold_test);
    lambda = cal.lambda;
    // Self-check: the swept F1 must match an independent re-evaluation.
    const auto recheck = prm::evaluate_links(scores, gold_train, lambda, gold_test);
    if (std::abs(recheck.f1 - cal.train_f1) > 1e-9)
      throw CheckError("calibration F1 does not reproduce under evaluate_links");
    write_file(dir / "calibration.json", cal.to_json().dump(2) + "\n");
  }

  {
    auto stage = manifest.stage("emit");
    write_file(dir / "link_scores.csv", prm::link_scores_csv(scores, prm::step_names(chain)));
    write_file(dir / "links.csv", prm::links_csv(prm::emit_links(scores, lambda)));
    nlohmann::json eval = {{"lambda", lambda}};
    if (!gold_test.empty())
      eval["test"] = prm::evaluate_links(scores, gold_test, lambda, gold_train).to_json();
    if (!gold_train.empty())
      eval["train"] = prm::evaluate_links(scores, gold_train, lambda, gold_test).to_json();
    write_file(dir / "eval.json", eval.dump(2) + "\n");
  }
  if (built.client) built.client->save_cache();
  manifest.write(dir);
  out << "link: " << candidates.size() << " candidates, lambda=" << fmt_double(lambda, 6) << "\n";
  return kOk;
}

struct NewsworthyFlags {
  std::string dataset;
  std::string links;
  std::string corpus_dir;
  std::string model_path;
  std::string cutoff = "2021-01-01";
  std::string test_start = "2021-01-01";
  bool no_balance = false;
  std::string mask = "123";
  int word_limit = 50;
  int policy_word_limit = 0;
  double tau = 0.15;
  std::string meeting_id;
  int top_k = 10;
  std::string grid = "both";
  std::vector<int> cutoff_years;
  bool external_client = false;
  bool mrr_first_hit = false;
};

inline newsworthy::SectionMask parse_mask(const std::string& s) {
  newsworthy::SectionMask mask;
  mask.policy = s.find('1') != std::string::npos;
  mask.meeting = s.find('2') != std::string::npos;
  mask.comment = s.find('3') != std::string::npos;
  return mask;
}

inline int cmd_newsworthy(const std::string& action, const NewsworthyFlags& nf,
                          const detail::CommonFlags& flags, std::ostream& out) {
  RunManifest manifest("newsworthy " + action);
  const std::filesystem::path dir(flags.out_dir);
  learn::TrainConfig train{.l2_lambda = 1e-4, .learning_rate = 4.0, .max_iters = 300,
                           .seed = flags.seed};

  if (action == "build") {
    const auto store = detail::load_corpus(nf.corpus_dir, manifest);
    detail::require_exists(nf.links);
    manifest.add_input(nf.links);
    manifest.set_config({{"corpus", nf.corpus_dir}, {"links", nf.links}, {"tau", nf.tau}});
    const auto links = prm::links_from_csv(read_file(nf.links));
    std::vector<std::string> warnings;
    std::vector<corpus::Meeting> pegged;
    {
      auto stage = manifest.stage("peg");
      pegged = detail::pegged_meetings(store, 0.8, train, &warnings);
    }
    std::vector<newsworthy::NewsworthyExample> dataset;
    {
      auto stage = manifest.stage("extract_features");
      dataset = newsworthy::build_dataset(store, pegged, links, nf.tau);
    }
    newsworthy::write_dataset(dir / "dataset.jsonl", dataset);
    {
      auto stage = manifest.stage("prompts");
      std::filesystem::create_directories(dir / "prompts");
      for (const auto& e : dataset)
        write_file(dir / "prompts" / (e.meeting_id + "_" + e.policy_id + ".txt"),
                   newsworthy::assemble_prompt(e).text + "\n");
    }
    manifest.write(dir);
    out << "newsworthy build: " << dataset.size() << " examples\n";
    return kOk;
  }

  detail::require_exists(nf.dataset);
  manifest.add_input(nf.dataset);
  const auto dataset = newsworthy::read_dataset(nf.dataset);
  const auto mask = parse_mask(nf.mask);

  if (action == "train") {
    manifest.set_config({{"dataset", nf.dataset}, {"cutoff", nf.cutoff},
                         {"balance", !nf.no_balance}, {"mask", mask.name()},
                         {"seed", flags.seed}});
    newsworthy::SplitConfig split_cfg{Date::parse(nf.cutoff), !nf.no_balance, flags.seed};
    const auto split = newsworthy::temporal_split(dataset, split_cfg);
    newsworthy::Ranker ranker;
    {
      auto stage = manifest.stage("train");
      ranker = newsworthy::train_ranker(split.train, mask, train, nf.word_limit,
                                        nf.policy_word_limit);
    }
    write_file(dir / "ranker.json", ranker.to_json().dump() + "\n");
    nlohmann::json report = {{"n_train", split.train.size()}, {"n_test", split.test.size()}};
    {
      auto stage = manifest.stage("eval");
      report["test_metrics"] = newsworthy::eval_ranker(ranker, split.test).to_json();
    }
    write_file(dir / "train_report.json", report.dump(2) + "\n");
    manifest.write(dir);
    out << "newsworthy train: n_train=" << split.train.size() << " n_test=" << split.test.size()
        << "\n";
    return kOk;
  }

  auto load_ranker = [&]() {
    if (nf.external_client) {
      // Generic external-classifier mode: the yes/no client scores prompts.
      newsworthy::Ranker r;
      r.mask = mask;
      r.word_limit = nf.word_limit;
      r.policy_word_limit = nf.policy_word_limit;
      external::ExternalYesNoClient::Options copt;
      copt.cache_path = dir / "yesno_cache.json";
      r.external_client = std::make_shared<external::ExternalYesNoClient>(
          external::ExternalYesNoClient::options_from_env(copt));
      return r;
    }
    detail::require_exists(nf.model_path);
    manifest.add_input(nf.model_path);
    return newsworthy::Ranker::from_json(nlohmann::json::parse(read_file(nf.model_path)));
  };

  if (action == "rank") {
    manifest.set_config({{"dataset", nf.dataset}, {"model", nf.model_path},
                         {"external", nf.external_client},
                         {"meeting", nf.meeting_id}, {"top", nf.top_k}});
    const auto ranker = load_ranker();
    std::vector<newsworthy::NewsworthyExample> meeting_examples;
    for (const auto& e : dataset)
      if (e.meeting_id == nf.meeting_id) meeting_examples.push_back(e);
    if (meeting_examples.empty()) throw DataError("no examples for meeting " + nf.meeting_id);
    const auto ranked = newsworthy::rank_meeting(ranker, meeting_examples);
    const std::string csv = newsworthy::ranking_csv(ranked, nf.top_k);
    write_file(dir / ("ranking_" + nf.meeting_id + ".csv"), csv);
    manifest.write(dir);
    out << csv;
    return kOk;
  }

  if (action == "eval") {
    manifest.set_config({{"dataset", nf.dataset}, {"model", nf.model_path},
                         {"external", nf.external_client},
                         {"test_start", nf.test_start}});
    const auto ranker = load_ranker();
    std::vector<newsworthy::NewsworthyExample> test;
    const Date start = Date::parse(nf.test_start);
    for (const auto& e : dataset)
      if (e.meeting_date >= start) test.push_back(e);
    nlohmann::json metrics;
    {
      auto stage = manifest.stage("eval");
      metrics = newsworthy::eval_ranker(ranker, test, 10, nf.mrr_first_hit).to_json();
    }
    write_file(dir / "eval.json", metrics.dump(2) + "\n");
    manifest.write(dir);
    out << metrics.dump() << "\n";
    return kOk;
  }

  if (action == "ablate") {
    manifest.set_config({{"dataset", nf.dataset}, {"grid", nf.grid},
                         {"test_start", nf.test_start}, {"seed", flags.seed}});
    newsworthy::GridSpec spec;
    spec.test_start = Date::parse(nf.test_start);
    spec.balance_train = !nf.no_balance;
    spec.seed = flags.seed;
    spec.train = train;
    if (nf.grid == "masks" || nf.grid == "both")
      spec.masks = {newsworthy::SectionMask{},
                    {true, true, false},
                    {true, false, false},
                    {false, true, true}};
    if (nf.grid == "cutoffs" || nf.grid == "both") {
      spec.cutoff_years = nf.cutoff_years;
      if (spec.cutoff_years.empty()) {
        const int last = spec.test_start.year();
        for (int y = last - 4; y <= last; ++y) spec.cutoff_years.push_back(y);
      }
    }
    std::vector<newsworthy::GridCell> cells;
    {
      auto stage = manifest.stage("grid");
      cells = newsworthy::run_ablation_grid(dataset, spec, flags.effective_jobs());
    }
    write_file(dir / "ablation_grid.csv", newsworthy::grid_csv(cells));
    manifest.write(dir);
    out << "newsworthy ablate: " << cells.size() << " cells\n";
    return kOk;
  }

  throw UsageError("unknown newsworthy action: " + action);
}

struct AnalyzeFlags {
  std::string corpus_dir;
  std::string links;
  std::string dataset;
  int lda_k = 8;
  int lda_iters = 150;
  int top_n = 20;
};

inline int cmd_analyze(const AnalyzeFlags& af, const detail::CommonFlags& flags,
                       std::ostream& out) {
  RunManifest manifest("analyze");
  const auto store = detail::load_corpus(af.corpus_dir, manifest);
  detail::require_exists(af.links);
  manifest.add_input(af.links);
  manifest.set_config({{"corpus", af.corpus_dir}, {"links", af.links}, {"dataset", af.dataset},
                       {"lda_k", af.lda_k}, {"seed", flags.seed}});
  const auto links = prm::links_from_csv(read_file(af.links));

  analytics::AnalyticsOutputs outputs;
  {
    auto stage = manifest.stage("coverage");
    outputs.coverage = analytics::coverage_stats(links, store);
    write_file(std::filesystem::path(flags.out_dir) / "reconciliation.json",
               corpus::reconcile_agenda_coverage(store).to_json().dump(2) + "\n");
  }
  if (!af.dataset.empty()) {
    detail::require_exists(af.dataset);
    manifest.add_input(af.dataset);
    const auto dataset = newsworthy::read_dataset(af.dataset);
    auto stage = manifest.stage("deltas");
    auto split_texts = [&](auto field) {
      std::pair<std::vector<std::string>, std::vector<std::string>> out;
      for (const auto& e : dataset) {
        const std::string text = field(e);
        if (text.empty()) continue;
        (e.label == 1 ? out.first : out.second).push_back(text);
      }
      return out;
    };
    auto add_delta = [&](const std::string& context, auto field) {
      const auto [pos, neg] = split_texts(field);
      if (pos.empty() || neg.empty()) return;
      auto table = analytics::delta_words(pos, neg, 0, context);
      if (std::abs(table.sum()) > 1e-4)
        throw CheckError("delta word table for " + context + " does not sum to zero");
      if (af.top_n > 0 && table.rows.size() > static_cast<std::size_t>(2 * af.top_n)) {
        std::vector<std::pair<std::string, double>> trimmed(table.rows.begin(),
                                                            table.rows.begin() + af.top_n);
        trimmed.insert(trimmed.end(), table.rows.end() - af.top_n, table.rows.end());
        table.rows = std::move(trimmed);
      }
      outputs.delta_tables.push_back(std::move(table));
    };
    add_delta("policy_text", [](const auto& e) { return e.policy_text; });
    add_delta("meeting_speech", [](const auto& e) { return e.discussion_text; });
    add_delta("public_comment", [](const auto& e) { return e.public_comment_text; });
    outputs.comparison = analytics::discussion_comparison(dataset);
  }
  {
    auto stage = manifest.stage("lda");
    std::vector<std::string> docs;
    std::vector<int> labels;
    std::unordered_set<std::string> covered;
    for (const auto& l : links.links) covered.insert(l.policy_id);
    for (const auto& p : store.policies()) {
      docs.push_back(p.full_text());
      labels.push_back(covered.count(p.id) ? 1 : 0);
    }
    if (static_cast<int>(docs.size()) > af.lda_k) {
      auto model = analytics::lda_fit(docs, af.lda_k, af.lda_iters, -1, 0.01, flags.seed);
      if (model.conservation_violations > 0)
        throw CheckError("LDA token counts not conserved");
      outputs.topic_ranking = analytics::topic_newsworthiness(model, labels);
      outputs.topics = std::move(model);
    }
  }
  const auto written = analytics::emit_reports(outputs, flags.out_dir);
  manifest.write(flags.out_dir);
  out << "analyze: wrote " << written.size() << " report files\n";
  return kOk;
}

inline int cmd_report(const std::string& run_dir, std::ostream& out) {
  detail::require_exists(run_dir);
  nlohmann::json summary = nlohmann::json::object();
  const std::filesystem::path dir(run_dir);
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  summary["files"] = files;
  for (const char* name : {"manifest.json", "eval.json", "calibration.json", "train_report.json",
                           "align_report.json"}) {
    if (!std::filesystem::exists(dir / name)) continue;
    try {
      summary[name] = nlohmann::json::parse(read_file(dir / name));
    } catch (const std::exception&) {
    }
  }
  if (summary.contains("calibration.json")) summary["calibration.json"].erase("sweep");
  write_file(dir / "report.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run_command(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"civiclink: link news coverage to local-government policy and rank "
               "newsworthiness"};
  app.require_subcommand(1);

  detail::CommonFlags common;
  std::string ingest_kind, ingest_in;
  auto* ingest = app.add_subcommand("ingest", "Validate and deduplicate a JSONL corpus file");
  ingest->add_option("--kind", ingest_kind, "article|policy|meeting")->required();
  ingest->add_option("--in", ingest_in, "Input JSONL path")->required();
  detail::add_common(ingest, &common);

  synth::SyntheticParams synth_params;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic benchmark corpus");
  synth_cmd->add_option("--articles", synth_params.n_articles);
  synth_cmd->add_option("--policies", synth_params.n_policies);
  synth_cmd->add_option("--links", synth_params.n_links);
  synth_cmd->add_option("--meetings", synth_params.n_meetings);
  synth_cmd->add_option("--removal-rate", synth_params.timestamp_removal_rate);
  synth_cmd->add_option("--start-date", synth_params.start_date);
  detail::add_common(synth_cmd, &common);

  std::string align_corpus;
  double align_threshold = 0.8;
  auto* align = app.add_subcommand("align", "Peg agendas and attribute public comments");
  align->add_option("--corpus", align_corpus, "Corpus directory")->required();
  align->add_option("--threshold", align_threshold, "Transition likelihood threshold");
  detail::add_common(align, &common);

  std::string link_corpus;
  LinkFlags lf;
  auto* link = app.add_subcommand("link", "Score and emit article-policy links");
  link->add_option("--corpus", link_corpus, "Corpus directory")->required();
  link->add_flag("--calibrate", lf.calibrate, "Calibrate lambda on gold train pairs");
  link->add_option("--lambda", lf.lambda, "Fixed score threshold");
  link->add_option("--window", lf.window_days, "Candidate window in days");
  link->add_option("--annotations", lf.annotations_path, "Step annotations JSONL");
  link->add_option("--chain-config", lf.chain_config, "Chain key-value config file");
  link->add_option("--ablate-k", lf.ablate_k, "Truncate the chain to its first k steps");
  link->add_flag("--external-h3", lf.external_h3, "Score h3 with the external yes/no client");
  link->add_option("--keyword", lf.keyword, "Bootstrap keyword");
  link->add_option("--body-phrase", lf.body_phrase, "Governing-body phrase for the rule scorer");
  detail::add_common(link, &common);

  NewsworthyFlags nf;
  auto* news = app.add_subcommand("newsworthy", "Newsworthiness dataset, training, ranking");
  news->require_subcommand(1);
  auto add_news_sub = [&](const char* name, const char* desc) {
    auto* sub = news->add_subcommand(name, desc);
    sub->add_option("--dataset", nf.dataset);
    sub->add_option("--corpus", nf.corpus_dir);
    sub->add_option("--links", nf.links);
    sub->add_option("--model", nf.model_path);
    sub->add_option("--cutoff", nf.cutoff);
    sub->add_option("--test-start", nf.test_start);
    sub->add_flag("--no-balance", nf.no_balance);
    sub->add_option("--mask", nf.mask);
    sub->add_option("--word-limit", nf.word_limit);
    sub->add_option("--policy-word-limit", nf.policy_word_limit);
    sub->add_option("--tau", nf.tau);
    sub->add_option("--meeting", nf.meeting_id);
    sub->add_option("--top", nf.top_k);
    sub->add_option("--grid", nf.grid);
    sub->add_option("--cutoff-years", nf.cutoff_years)->delimiter(',');
    sub->add_flag("--external-client", nf.external_client,
                  "Score prompts with the external yes/no client instead of a trained model");
    sub->add_flag("--mrr-first-hit", nf.mrr_first_hit,
                  "MRR over the first newsworthy hit per meeting");
    detail::add_common(sub, &common);
    return sub;
  };
  add_news_sub("build", "Extract the newsworthiness dataset from corpus + links");
  add_news_sub("train", "Train the prompt ranker on the temporal split");
  add_news_sub("rank", "Rank one meeting's policies");
  add_news_sub("eval", "Evaluate a trained ranker");
  add_news_sub("ablate", "Run the mask/cutoff ablation grids");

  AnalyzeFlags af;
  auto* analyze = app.add_subcommand("analyze", "Descriptive statistics and topic reports");
  analyze->add_option("--corpus", af.corpus_dir, "Corpus directory")->required();
  analyze->add_option("--links", af.links, "links.csv from the link stage")->required();
  analyze->add_option("--dataset", af.dataset, "Newsworthiness dataset JSONL");
  analyze->add_option("--lda-k", af.lda_k, "Topic count");
  analyze->add_option("--lda-iters", af.lda_iters, "Gibbs sweeps");
  analyze->add_option("--top-n", af.top_n, "Delta-word rows kept per side");
  detail::add_common(analyze, &common);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("--run", report_dir, "Run output directory")->required();

  try {
    std::reverse(args.begin(), args.end());  // CLI11 consumes in reverse
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  // Config file fills anything the command line left at its default.
  auto apply_config_defaults = [&](CLI::App* sub) {
    if (common.config_file.empty()) return;
    const auto cfg = KvConfig::load(common.config_file);
    if (sub->count("--seed") == 0 && cfg.has("seed"))
      common.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 0));
    if (sub->count("--jobs") == 0 && cfg.has("jobs"))
      common.jobs = static_cast<unsigned>(cfg.get_long("jobs", 0));
    if (sub == link) lf.file_config = cfg;
  };

  try {
    if (!common.out_dir.empty()) std::filesystem::create_directories(common.out_dir);
    if (ingest->parsed()) return cmd_ingest(ingest_kind, ingest_in, common, out);
    if (synth_cmd->parsed()) {
      apply_config_defaults(synth_cmd);
      synth_params.seed = common.seed;
      return cmd_synth(synth_params, common, out);
    }
    if (align->parsed()) {
      apply_config_defaults(align);
      return cmd_align(align_corpus, align_threshold, common, out);
    }
    if (link->parsed()) {
      apply_config_defaults(link);
      lf.window_given = link->count("--window") > 0;
      return cmd_link(link_corpus, lf, common, out);
    }
    if (news->parsed()) {
      apply_config_defaults(news->get_subcommands().front());
      return cmd_newsworthy(news->get_subcommands().front()->get_name(), nf, common, out);
    }
    if (analyze->parsed()) {
      apply_config_defaults(analyze);
      return cmd_analyze(af, common, out);
    }
    if (report->parsed()) return cmd_report(report_dir, out);
    err << "no subcommand\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckError& e) {
    err << "self-check failed: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace civiclink::cli
