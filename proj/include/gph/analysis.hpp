#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gph/common.hpp"
#include "gph/runner.hpp"

namespace gph::analysis {

struct ParadigmScore {
  std::string paradigm;
  std::string category;
  Dataset dataset = Dataset::Custom;
  std::string language;
  std::string condition;
  std::string target_model;
  double accuracy = 0;
  std::size_t n_pairs = 0;
  std::size_t n_trials = 0;
  double unparse_rate = 0;
};

/// All judgments must share (dataset, paradigm, condition, model).
ParadigmScore score_paradigm(const std::vector<runner::Judgment>& judgments);

/// Scores every (dataset, paradigm, condition, model) group, in that order.
std::vector<ParadigmScore> score_all(const std::vector<runner::Judgment>& judgments);

struct CategoryScore {
  std::string category;
  double accuracy = 0;
  std::size_t paradigm_count = 0;
};

struct MacroAverage {
  /// Sorted by category name.
  std::vector<CategoryScore> categories;
  /// Unweighted mean over categories.
  double dataset_average = 0;
};

double mean(const std::vector<double>& values);

/// Scores must come from one (dataset, condition, model). Categories are
/// unweighted means over paradigms.
MacroAverage macro_average(const std::vector<ParadigmScore>& scores);

enum class Group { Slm, Llm };

std::string_view to_string(Group g);
Group parse_group(std::string_view s);

struct LanguageGap {
  std::string language;
  double slm_avg = 0;
  double llm_avg = 0;
  double gap = 0;
};

struct GapReport {
  /// Sorted by language tag.
  std::vector<LanguageGap> languages;
  double cross_language_gap = 0;
  std::map<std::string, Group> groups;
};

/// `dataset_averages` is keyed by (language, model). Models without a group
/// are ignored.
GapReport compute_gap(const std::map<std::pair<std::string, std::string>, double>& dataset_averages,
                      const std::map<std::string, Group>& groups);

/// Percent by which the gap shrank; baseline must be positive.
double gap_reduction(double baseline_gap, double treated_gap);

struct PairedComparison {
  std::size_t n = 0;
  double mean_diff = 0;
  double sd_diff = 0;
  /// Unset when sd_diff is zero.
  std::optional<double> t_statistic;
  std::optional<double> p_value;
  std::optional<double> cohens_d;
};

/// Differences are a_i - b_i.
PairedComparison paired_comparison(const std::vector<double>& a, const std::vector<double>& b);

/// Canonical column order: base, cot, gp:*, gp+cot:*, gpx:*, gpx+cot:*,
/// control, textbook, fewshot*. Generators follow `generator_order`, then
/// name order.
std::vector<std::string> canonical_condition_order(std::vector<std::string> labels,
                                                   const std::vector<std::string>& generator_order);

/// `order` first, then any other models by name.
std::vector<std::string> model_order(const std::vector<std::string>& present,
                                     const std::vector<std::string>& order);

struct Cell {
  std::optional<double> value;
  bool best = false;
  bool second = false;
};

/// Marks the highest and second-highest values as displayed (one decimal).
/// Ties share a mark.
void flag_row(std::vector<Cell>& row);

struct Table {
  std::string title;
  std::string corner;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> cells;
};

struct MatrixOptions {
  std::vector<std::string> model_order;
  std::vector<std::string> generator_order;
};

/// Per dataset: models x conditions of dataset averages, flagged per row.
std::vector<Table> condition_matrix(const std::vector<ParadigmScore>& scores,
                                    const MatrixOptions& options);

/// Per (dataset, model): categories plus an Average row x conditions,
/// flagged per row.
std::vector<Table> category_tables(const std::vector<ParadigmScore>& scores,
                                   const MatrixOptions& options);

struct ReportOptions {
  MatrixOptions matrix;
  std::map<std::string, Group> groups;
  bool gap = false;
  std::string baseline_condition = "base";
  /// (X, Y) pairs; each is reported as Y - X.
  std::vector<std::pair<std::string, std::string>> comparisons;
  bool force_mix = false;
};

struct ReportBundle {
  std::string markdown;
  std::string csv;
};

/// Builds the full report. Byte-identical for identical inputs regardless of
/// run order.
ReportBundle build_report(const std::vector<runner::RunDirectory>& runs,
                          const ReportOptions& options);

/// Resolves "gpb", "gpx", "gpb+cot", "gpx+cot" to a unique condition label
/// among `available`; other labels must match exactly.
std::string resolve_condition_alias(const std::string& name,
                                    const std::vector<std::string>& available);

/// Vectors aligned on (dataset, category, model) for two conditions.
struct AlignedVectors {
  std::vector<std::string> keys;
  std::vector<double> x;
  std::vector<double> y;
};

AlignedVectors align_category_scores(const std::vector<ParadigmScore>& scores,
                                     const std::string& x, const std::string& y);

/// Category rows of a report CSV, as ParadigmScores with one paradigm each.
std::vector<ParadigmScore> category_scores_from_csv(std::string_view csv);

/// Y - X comparison over category scores.
PairedComparison compare_conditions(const std::vector<ParadigmScore>& scores, const std::string& x,
                                    const std::string& y);

std::string format_comparison(const std::string& x, const std::string& y,
                              const PairedComparison& c);

}  // namespace gph::analysis
