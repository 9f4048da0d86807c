#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "civiclink/util.hpp"

namespace civiclink::external {

struct ExternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct YesNoResponse {
  double p_yes = 0.5;
  double raw_yes_logit = 0;
  double raw_no_logit = 0;
  bool from_cache = false;
};

// Yes/no classification over an HTTP endpoint, with a fully deterministic
// stub mode and a disk cache keyed by prompt hash. Requests are serialized
// through a rate limiter; the cache takes concurrent readers and exclusive
// writers.
class ExternalYesNoClient {
 public:
  static constexpr int kExemplarSlots = 10;

  struct Options {
    std::string endpoint;  // empty -> stub mode
    std::string api_key;
    int timeout_ms = 10000;
    int min_interval_ms = 0;
    std::filesystem::path cache_path;  // empty -> in-memory cache only
    std::vector<std::string> exemplars;  // up to kExemplarSlots, operator-provided
    std::string template_text;           // {exemplars} / {article} / {body} slots
    std::string body_name = "the governing body";
  };

  static Options options_from_env(Options base) {
    if (const char* e = std::getenv("CIVICLINK_YESNO_ENDPOINT")) base.endpoint = e;
    if (const char* k = std::getenv("CIVICLINK_YESNO_API_KEY")) base.api_key = k;
    return base;
  }
  static Options options_from_env() { return options_from_env(Options{}); }

  explicit ExternalYesNoClient(Options opt) : opt_(std::move(opt)) {
    if (opt_.template_text.empty()) opt_.template_text = default_template();
    opt_.exemplars.resize(kExemplarSlots, "");
    if (!opt_.cache_path.empty()) load_cache();
  }

  static std::string default_template() {
    return "Decide whether the article below reports on votes or policy decisions taken by "
           "{body} within the month before the article was published.\n\n"
           "{exemplars}"
           "{article}\n\n"
           "Does this article cover recent votes or policy decisions by {body}? "
           "Answer \"yes\" or \"no\".";
  }

  bool stub_mode() const { return opt_.endpoint.empty(); }
  const Options& options() const { return opt_; }

  std::string render_prompt(const std::string& article_block) const {
    std::string exemplars;
    for (int i = 0; i < kExemplarSlots; ++i) {
      const std::string& slot = opt_.exemplars[i];
      exemplars += "Example " + std::to_string(i + 1) + ": ";
      exemplars += slot.empty() ? "[EXEMPLAR SLOT " + std::to_string(i + 1) + "]" : slot;
      exemplars += '\n';
    }
    exemplars += '\n';
    std::string out = opt_.template_text;
    replace_all(out, "{exemplars}", exemplars);
    replace_all(out, "{article}", article_block);
    replace_all(out, "{body}", opt_.body_name);
    return out;
  }

  // Cached yes-probability for a rendered prompt. Stub mode derives it from
  // the prompt hash; HTTP mode normalizes reported yes/no token logits, or
  // maps a sampled answer to 0.9 / 0.1.
  YesNoResponse ask(const std::string& prompt) {
    const std::string key = std::to_string(fnv1a64(prompt));
    {
      std::shared_lock lock(cache_mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) {
        YesNoResponse r = it->second;
        r.from_cache = true;
        return r;
      }
    }
    YesNoResponse r = stub_mode() ? stub_answer(prompt) : http_answer(prompt);
    {
      std::unique_lock lock(cache_mutex_);
      cache_.emplace(key, r);
    }
    if (!opt_.cache_path.empty()) save_cache();
    return r;
  }

  void save_cache() const {
    std::unique_lock lock(cache_mutex_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : cache_)
      j[k] = {{"p_yes", v.p_yes}, {"raw_yes_logit", v.raw_yes_logit},
              {"raw_no_logit", v.raw_no_logit}};
    write_file(opt_.cache_path, j.dump(2) + "\n");
  }

  std::size_t cache_size() const {
    std::shared_lock lock(cache_mutex_);
    return cache_.size();
  }

 private:
  static void replace_all(std::string& s, const std::string& what, const std::string& with) {
    std::size_t pos = 0;
    while ((pos = s.find(what, pos)) != std::string::npos) {
      s.replace(pos, what.size(), with);
      pos += with.size();
    }
  }

  void load_cache() {
    if (!std::filesystem::exists(opt_.cache_path)) return;
    const auto j = nlohmann::json::parse(read_file(opt_.cache_path));
    for (auto it = j.begin(); it != j.end(); ++it) {
      YesNoResponse r;
      r.p_yes = it.value().value("p_yes", 0.5);
      r.raw_yes_logit = it.value().value("raw_yes_logit", 0.0);
      r.raw_no_logit = it.value().value("raw_no_logit", 0.0);
      cache_.emplace(it.key(), r);
    }
  }

  YesNoResponse stub_answer(const std::string& prompt) const {
    // Deterministic pseudo-probability in (0.05, 0.95).
    const std::uint64_t h = fnv1a64(prompt) ^ 0x9e3779b97f4a7c15ULL;
    YesNoResponse r;
    r.p_yes = 0.05 + 0.9 * static_cast<double>(h % 100000) / 99999.0;
    r.raw_yes_logit = std::log(r.p_yes);
    r.raw_no_logit = std::log(1.0 - r.p_yes);
    return r;
  }

  YesNoResponse http_answer(const std::string& prompt);

  Options opt_;
  mutable std::shared_mutex cache_mutex_;
  std::unordered_map<std::string, YesNoResponse> cache_;
  std::mutex request_mutex_;
  std::chrono::steady_clock::time_point last_request_{};
};

}  // namespace civiclink::external

// The HTTP path pulls in cpp-httplib; kept out of line so stub-only users
// still pay for it only once per TU.
#ifndef CIVICLINK_NO_HTTP
#include <httplib.h>

namespace civiclink::external {

inline YesNoResponse ExternalYesNoClient::http_answer(const std::string& prompt) {
  std::lock_guard guard(request_mutex_);
  if (opt_.min_interval_ms > 0) {
    const auto now = std::chrono::steady_clock::now();
    const auto since =
        std::chrono::duration_cast<std::chrono::milliseconds>(now - last_request_).count();
    if (last_request_.time_since_epoch().count() != 0 && since < opt_.min_interval_ms)
      std::this_thread::sleep_for(std::chrono::milliseconds(opt_.min_interval_ms - since));
  }
  last_request_ = std::chrono::steady_clock::now();

  auto slash = opt_.endpoint.find('/', opt_.endpoint.find("//") + 2);
  const std::string host = slash == std::string::npos ? opt_.endpoint : opt_.endpoint.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : opt_.endpoint.substr(slash);

  httplib::Client client(host);
  client.set_read_timeout(opt_.timeout_ms / 1000, (opt_.timeout_ms % 1000) * 1000);
  httplib::Headers headers;
  if (!opt_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opt_.api_key);
  const nlohmann::json body = {{"prompt", prompt}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res || res->status != 200)
    throw ExternalError("yes/no endpoint failed: " +
                        (res ? "status " + std::to_string(res->status) : "no response"));
  const auto j = nlohmann::json::parse(res->body);
  YesNoResponse r;
  if (j.contains("yes_logit") && j.contains("no_logit")) {
    r.raw_yes_logit = j.at("yes_logit").get<double>();
    r.raw_no_logit = j.at("no_logit").get<double>();
    // Normalized over the two answer tokens.
    r.p_yes = 1.0 / (1.0 + std::exp(r.raw_no_logit - r.raw_yes_logit));
  } else if (j.contains("answer")) {
    const std::string ans = j.at("answer").get<std::string>();
    r.p_yes = (ans == "yes" || ans == "Yes" || ans == "YES") ? 0.9 : 0.1;
  } else {
    throw ExternalError("yes/no endpoint: unrecognized response shape");
  }
  return r;
}

}  // namespace civiclink::external
#endif  // CIVICLINK_NO_HTTP
