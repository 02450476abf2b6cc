#pragma once

// Loaders for the frozen published-number fixtures under tests/data.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gph/analysis.hpp"
#include "gph/util.hpp"

namespace gph::testing {

inline nlohmann::json load_fixture(const std::filesystem::path& dir, const std::string& name) {
  return nlohmann::json::parse(read_file(dir / name));
}

/// One printed (dataset, model, condition) column of a category table.
struct CategoryColumn {
  Dataset dataset = Dataset::Custom;
  std::string model;
  std::string condition;
  std::map<std::string, double> categories;
  double printed_average = 0;
};

inline std::vector<CategoryColumn> category_columns(const std::filesystem::path& dir) {
  std::vector<CategoryColumn> out;
  for (const auto& row : load_fixture(dir, "category_tables.json")) {
    CategoryColumn c;
    c.dataset = parse_dataset(row["dataset"].get<std::string>());
    c.model = row["model"];
    c.condition = row["condition"];
    c.categories = row["categories"].get<std::map<std::string, double>>();
    c.printed_average = row["average"];
    out.push_back(std::move(c));
  }
  return out;
}

/// Category values as paradigm scores, one stand-in paradigm per category.
inline std::vector<analysis::ParadigmScore> as_scores(const CategoryColumn& c) {
  std::vector<analysis::ParadigmScore> out;
  for (const auto& [cat, v] : c.categories) {
    analysis::ParadigmScore s;
    s.paradigm = cat;
    s.category = cat;
    s.dataset = c.dataset;
    s.condition = c.condition;
    s.target_model = c.model;
    s.accuracy = v;
    s.n_pairs = 50;
    s.n_trials = 150;
    out.push_back(s);
  }
  return out;
}

/// Beginner and expert explanation scores per (dataset, category, model),
/// labelled gp:son and gpx:son.
inline std::vector<analysis::ParadigmScore> audience_scores(const std::filesystem::path& dir) {
  std::vector<analysis::ParadigmScore> out;
  for (const auto& row : load_fixture(dir, "beginner_expert_categories.json")) {
    for (const auto& model : {"gpt-3.5", "gpt-4o"}) {
      for (const auto& [alias, label] : {std::pair{"gpb", "gp:son"}, std::pair{"gpx", "gpx:son"}}) {
        analysis::ParadigmScore s;
        s.dataset = parse_dataset(row["dataset"].get<std::string>());
        s.category = row["category"];
        s.paradigm = s.category;
        s.target_model = model;
        s.condition = label;
        s.accuracy = row[model][alias];
        out.push_back(s);
      }
    }
  }
  return out;
}

struct GapFixture {
  std::map<std::string, analysis::Group> groups;
  /// language -> condition -> (slm, llm, printed gap)
  std::map<std::string, std::map<std::string, std::vector<double>>> languages;
  /// condition -> (slm, llm, printed gap)
  std::map<std::string, std::vector<double>> average;
};

inline GapFixture gap_fixture(const std::filesystem::path& dir) {
  auto j = load_fixture(dir, "group_averages.json");
  GapFixture f;
  for (const auto& [m, g] : j["groups"].items()) f.groups[m] = analysis::parse_group(g.get<std::string>());
  f.languages = j["languages"].get<decltype(f.languages)>();
  f.average = j["average"].get<decltype(f.average)>();
  return f;
}

/// Dataset averages for one condition: one stand-in model per group per
/// language carrying the printed group average.
inline std::map<std::pair<std::string, std::string>, double> gap_inputs(const GapFixture& f,
                                                                          const std::string& condition) {
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [lang, conds] : f.languages) {
    const auto& v = conds.at(condition);
    out[{lang, "slm"}] = v[0];
    out[{lang, "llm"}] = v[1];
  }
  return out;
}

inline const std::map<std::string, analysis::Group>& stand_in_groups() {
  static const std::map<std::string, analysis::Group> g{{"slm", analysis::Group::Slm},
                                                        {"llm", analysis::Group::Llm}};
  return g;
}

}  // namespace gph::testing
