#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "gph/corpus.hpp"
#include "gph/util.hpp"

namespace gph::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(GPH_TEST_DATA) / name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("gph-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline corpus::MinimalPair make_pair(const std::string& paradigm, int i,
                                     Dataset dataset = Dataset::Blimp,
                                     const std::string& category = "npi_licensing") {
  corpus::MinimalPair p;
  p.id = paradigm + ":" + std::to_string(i);
  p.dataset = dataset;
  p.language = dataset == Dataset::Sling ? "zh" : dataset == Dataset::Rublimp ? "ru" : "en";
  p.paradigm = paradigm;
  p.category = category;
  p.good = "The dog " + std::to_string(i) + " in " + paradigm + " barks.";
  p.bad = "The dog " + std::to_string(i) + " in " + paradigm + " bark.";
  return p;
}

inline Clock fixed_clock(std::string when = "2024-01-01T00:00:00Z") {
  return [when] { return when; };
}

}  // namespace gph::testing
