#include "gph/util.hpp"

#include <openssl/sha.h>
#include <fmt/format.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "gph/common.hpp"

namespace gph {

namespace {

std::string to_hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kHex[bytes[i] >> 4];
    out[2 * i + 1] = kHex[bytes[i] & 0xf];
  }
  return out;
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  return path.parent_path() /
         fmt::format(".{}.tmp.{}.{}", path.filename().string(), ::getpid(), counter++);
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return to_hex(digest, sizeof digest);
}

std::string field_digest(std::initializer_list<std::string_view> fields) {
  std::string buf;
  for (auto f : fields) {
    buf += std::to_string(f.size());
    buf += ':';
    buf += f;
  }
  return sha256_hex(buf);
}

std::string field_digest(const std::vector<std::string>& fields) {
  std::string buf;
  for (const auto& f : fields) {
    buf += std::to_string(f.size());
    buf += ':';
    buf += f;
  }
  return sha256_hex(buf);
}

std::uint64_t hash64(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
  return v;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  return rtrim(s);
}

std::string_view rtrim(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::string substitute(std::string_view tmpl,
                       std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto name = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [key, value] : vars) {
          if (key == name) {
            out += value;
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::FileUnreadable, "read failed for '" + path.string() + "'");
  return std::move(ss).str();
}

namespace {

std::filesystem::path write_temp(const std::filesystem::path& path, std::string_view contents) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FileUnreadable, "cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::FileUnreadable, "write failed for '" + tmp.string() + "'");
  }
  return tmp;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = write_temp(path, contents);
  std::filesystem::rename(tmp, path);
}

bool write_file_exclusive(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = write_temp(path, contents);
  // link(2) fails with EEXIST instead of replacing, which gives first-writer-wins.
  int rc = ::link(tmp.c_str(), path.c_str());
  int err = errno;
  std::filesystem::remove(tmp);
  if (rc == 0) return true;
  if (err == EEXIST) return false;
  throw Error(ErrorCode::FileUnreadable, "cannot create '" + path.string() + "'");
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Clock system_clock() { return [] { return utc_timestamp(); }; }

double round_percent(double value) {
  // Snap values that sit a hair below a .x5 boundary because of binary
  // representation (e.g. 67.875 stored as 67.87499999) before rounding.
  double scaled = value * 10.0;
  double rounded = std::round(scaled + 1e-9 * (scaled >= 0 ? 1 : -1));
  if (rounded == 0.0) rounded = 0.0;  // no "-0.0"
  return rounded / 10.0;
}

std::string format_percent(double value) { return fmt::format("{:.1f}", round_percent(value)); }

}  // namespace gph
