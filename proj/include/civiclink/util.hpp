#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace civiclink {

// Error taxonomy mirrored by the CLI exit codes: usage -> 1, data -> 2,
// failed self-check -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Calendar dates. Stored as days since 1970-01-01; all corpus dates are
// ISO-8601 (YYYY-MM-DD).

namespace detail {

// Howard Hinnant's civil date algorithms.
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yr = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = yr + (m <= 2);
}

}  // namespace detail

struct Date {
  std::int64_t days = 0;  // since 1970-01-01

  friend auto operator<=>(const Date&, const Date&) = default;
  Date operator+(std::int64_t n) const { return Date{days + n}; }
  Date operator-(std::int64_t n) const { return Date{days - n}; }
  std::int64_t operator-(const Date& o) const { return days - o.days; }

  int year() const {
    int y;
    unsigned m, d;
    detail::civil_from_days(days, y, m, d);
    return y;
  }

  static Date from_civil(int y, unsigned m, unsigned d) {
    return Date{detail::days_from_civil(y, m, d)};
  }

  // Parses YYYY-MM-DD and rejects non-calendar dates.
  static Date parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
      throw DataError("bad date: " + std::string(s));
    auto num = [&](int a, int b) {
      int v = 0;
      for (int i = a; i < b; ++i) {
        if (s[i] < '0' || s[i] > '9') throw DataError("bad date: " + std::string(s));
        v = v * 10 + (s[i] - '0');
      }
      return v;
    };
    const int y = num(0, 4);
    const unsigned m = static_cast<unsigned>(num(5, 7));
    const unsigned d = static_cast<unsigned>(num(8, 10));
    Date out{detail::days_from_civil(y, m, d)};
    int y2;
    unsigned m2, d2;
    detail::civil_from_days(out.days, y2, m2, d2);
    if (y2 != y || m2 != m || d2 != d) throw DataError("invalid date: " + std::string(s));
    return out;
  }

  std::string str() const {
    int y;
    unsigned m, d;
    detail::civil_from_days(days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
    return buf;
  }
};

// ---------------------------------------------------------------------------
// Hashing.

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Small file helpers.

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
}

// ---------------------------------------------------------------------------
// CSV. Fields are quoted only when they contain a comma, quote or newline.

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  out += '\n';
  return out;
}

inline std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// Fixed-precision float formatting so reruns emit byte-identical files.
inline std::string fmt_double(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Key-value config files: `key = value` lines, `#` comments.

class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(std::string_view text) {
    KvConfig cfg;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      if (auto hash = line.find('#'); hash != std::string_view::npos)
        line = line.substr(0, hash);
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;
      auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return std::string(s);
      };
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) continue;
      cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static KvConfig load(const std::filesystem::path& p) { return parse(read_file(p)); }

  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = std::move(value);
        return;
      }
    entries_.emplace_back(key, std::move(value));
  }

  bool has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const auto& kv) { return kv.first == key; });
  }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    return fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    const std::string s = get(key);
    return s.empty() ? fallback : std::stod(s);
  }

  long get_long(const std::string& key, long fallback) const {
    const std::string s = get(key);
    return s.empty() ? fallback : std::stol(s);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const std::string s = get(key);
    if (s.empty()) return fallback;
    return s == "1" || s == "true" || s == "yes" || s == "on";
  }

  // Keys of the form `prefix.<i>.suffix`, in insertion order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Bounded parallel map with ordered reduction: results land in input order so
// output never depends on the job count.

template <typename Out>
std::vector<Out> parallel_map(std::size_t n, unsigned jobs,
                              const std::function<Out(std::size_t)>& fn) {
  std::vector<Out> out(n);
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(n));
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += jobs) out[i] = fn(i);
    });
  }
  for (auto& t : workers) t.join();
  return out;
}

inline unsigned default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace civiclink
