#include "gph/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "gph/stats.hpp"
#include "gph/util.hpp"

namespace gph::analysis {

using runner::Judgment;
using templates::ConditionKind;
using templates::ConditionSpec;

// ---------------------------------------------------------------- scoring

ParadigmScore score_paradigm(const std::vector<Judgment>& judgments) {
  if (judgments.empty()) throw Error(ErrorCode::EmptyJudgmentSet, "no judgments to score");
  const auto& first = judgments.front();
  auto label = first.condition.label();
  std::set<std::string> pairs;
  std::size_t correct = 0, unparsed = 0;
  for (const auto& j : judgments) {
    if (j.dataset != first.dataset || j.paradigm != first.paradigm ||
        j.target_model != first.target_model || j.condition.label() != label)
      throw Error(ErrorCode::InvalidArgument,
                  "score_paradigm needs judgments of one paradigm, condition and model");
    pairs.insert(j.pair_id);
    correct += j.correct ? 1 : 0;
    unparsed += j.choice == Choice::Unparseable ? 1 : 0;
  }
  ParadigmScore s;
  s.paradigm = first.paradigm;
  s.category = first.category;
  s.dataset = first.dataset;
  s.language = first.language;
  s.condition = label;
  s.target_model = first.target_model;
  s.n_trials = judgments.size();
  s.n_pairs = pairs.size();
  s.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(s.n_trials);
  s.unparse_rate = 100.0 * static_cast<double>(unparsed) / static_cast<double>(s.n_trials);
  return s;
}

std::vector<ParadigmScore> score_all(const std::vector<Judgment>& judgments) {
  using Key = std::tuple<Dataset, std::string, std::string, std::string>;
  std::map<Key, std::vector<Judgment>> groups;
  for (const auto& j : judgments)
    groups[{j.dataset, j.paradigm, j.condition.label(), j.target_model}].push_back(j);
  std::vector<ParadigmScore> out;
  out.reserve(groups.size());
  for (const auto& [key, js] : groups) out.push_back(score_paradigm(js));
  return out;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "mean of an empty list");
  double sum = 0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

MacroAverage macro_average(const std::vector<ParadigmScore>& scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyJudgmentSet, "no paradigm scores to average");
  const auto& first = scores.front();
  std::map<std::string, std::vector<double>> by_category;
  for (const auto& s : scores) {
    if (s.dataset != first.dataset || s.condition != first.condition ||
        s.target_model != first.target_model)
      throw Error(ErrorCode::InvalidArgument,
                  "macro_average needs scores of one dataset, condition and model");
    if (s.category.empty())
      throw Error(ErrorCode::InvalidArgument, "paradigm " + s.paradigm + " has no category");
    by_category[s.category].push_back(s.accuracy);
  }
  MacroAverage m;
  std::vector<double> cat_means;
  for (const auto& [cat, accs] : by_category) {
    m.categories.push_back({cat, mean(accs), accs.size()});
    cat_means.push_back(m.categories.back().accuracy);
  }
  m.dataset_average = mean(cat_means);
  return m;
}

// ---------------------------------------------------------------- gap

std::string_view to_string(Group g) { return g == Group::Slm ? "SLM" : "LLM"; }

Group parse_group(std::string_view s) {
  if (s == "SLM" || s == "slm") return Group::Slm;
  if (s == "LLM" || s == "llm") return Group::Llm;
  throw Error(ErrorCode::ConfigError, "unknown group '" + std::string(s) + "' (use SLM or LLM)");
}

GapReport compute_gap(const std::map<std::pair<std::string, std::string>, double>& dataset_averages,
                      const std::map<std::string, Group>& groups) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_language;
  for (const auto& [key, avg] : dataset_averages) {
    const auto& [language, model] = key;
    auto& slot = by_language[language];
    auto g = groups.find(model);
    if (g == groups.end()) continue;
    (g->second == Group::Slm ? slot.first : slot.second).push_back(avg);
  }
  if (by_language.empty()) throw Error(ErrorCode::MissingGroup, "no dataset averages given");
  GapReport report;
  report.groups = groups;
  std::vector<double> gaps;
  for (const auto& [language, slot] : by_language) {
    if (slot.first.empty()) throw Error(ErrorCode::MissingGroup, language + "/SLM");
    if (slot.second.empty()) throw Error(ErrorCode::MissingGroup, language + "/LLM");
    LanguageGap g;
    g.language = language;
    g.slm_avg = mean(slot.first);
    g.llm_avg = mean(slot.second);
    g.gap = g.llm_avg - g.slm_avg;
    gaps.push_back(g.gap);
    report.languages.push_back(g);
  }
  report.cross_language_gap = mean(gaps);
  return report;
}

double gap_reduction(double baseline_gap, double treated_gap) {
  if (!(baseline_gap > 0))
    throw Error(ErrorCode::InvalidArgument, "baseline gap must be positive");
  return 100.0 * (baseline_gap - treated_gap) / baseline_gap;
}

// ---------------------------------------------------------------- paired

PairedComparison paired_comparison(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::LengthMismatch, fmt::format("{} vs {} values", a.size(), b.size()));
  if (a.size() < 2) throw Error(ErrorCode::InvalidArgument, "paired comparison needs n >= 2");
  PairedComparison c;
  c.n = a.size();
  std::vector<double> d(c.n);
  for (std::size_t i = 0; i < c.n; ++i) d[i] = a[i] - b[i];
  c.mean_diff = mean(d);
  double ss = 0;
  for (double x : d) ss += (x - c.mean_diff) * (x - c.mean_diff);
  c.sd_diff = std::sqrt(ss / static_cast<double>(c.n - 1));
  // Constant differences leave only rounding noise in sd.
  double scale = std::max(1.0, std::fabs(c.mean_diff));
  if (c.sd_diff <= 1e-12 * scale) {
    c.sd_diff = 0.0;
    return c;
  }
  c.t_statistic = c.mean_diff / (c.sd_diff / std::sqrt(static_cast<double>(c.n)));
  c.p_value = stats::t_two_sided_p(*c.t_statistic, static_cast<double>(c.n - 1));
  c.cohens_d = c.mean_diff / c.sd_diff;
  return c;
}

// ---------------------------------------------------------------- ordering

namespace {

struct ConditionRank {
  int family;
  std::size_t generator;
  std::string name;
  unsigned shots;
  std::string label;

  bool operator<(const ConditionRank& o) const {
    return std::tie(family, generator, name, shots, label) <
           std::tie(o.family, o.generator, o.name, o.shots, o.label);
  }
};

ConditionRank rank_of(const std::string& label, const std::vector<std::string>& generators) {
  ConditionRank r{9, 0, "", 0, label};
  ConditionSpec c;
  try {
    c = ConditionSpec::parse(label);
  } catch (const Error&) {
    return r;
  }
  bool expert = c.audience == Audience::Expert;
  switch (c.kind) {
    case ConditionKind::Base: r.family = 0; break;
    case ConditionKind::Cot: r.family = 1; break;
    case ConditionKind::Gp: r.family = expert ? 4 : 2; break;
    case ConditionKind::GpCot: r.family = expert ? 5 : 3; break;
    case ConditionKind::Control: r.family = 6; break;
    case ConditionKind::Textbook: r.family = 7; break;
    case ConditionKind::FewShot: r.family = 8; break;
  }
  if (c.explanation_source) {
    auto it = std::find(generators.begin(), generators.end(), *c.explanation_source);
    r.generator = static_cast<std::size_t>(it - generators.begin());
    r.name = *c.explanation_source;
  }
  r.shots = c.shots.value_or(0);
  return r;
}

}  // namespace

std::vector<std::string> canonical_condition_order(std::vector<std::string> labels,
                                                   const std::vector<std::string>& generator_order) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::stable_sort(labels.begin(), labels.end(), [&](const auto& a, const auto& b) {
    return rank_of(a, generator_order) < rank_of(b, generator_order);
  });
  return labels;
}

std::vector<std::string> model_order(const std::vector<std::string>& present,
                                     const std::vector<std::string>& order) {
  std::set<std::string> want(present.begin(), present.end());
  std::vector<std::string> out;
  for (const auto& m : order)
    if (want.erase(m)) out.push_back(m);
  out.insert(out.end(), want.begin(), want.end());
  return out;
}

void flag_row(std::vector<Cell>& row) {
  std::set<double, std::greater<>> shown;
  for (auto& c : row) {
    c.best = c.second = false;
    if (c.value) shown.insert(round_percent(*c.value));
  }
  if (shown.empty()) return;
  auto it = shown.begin();
  double best = *it;
  std::optional<double> second;
  if (++it != shown.end()) second = *it;
  for (auto& c : row) {
    if (!c.value) continue;
    double v = round_percent(*c.value);
    c.best = v == best;
    c.second = second && v == *second;
  }
}

// ---------------------------------------------------------------- tables

namespace {

using GroupKey = std::tuple<Dataset, std::string, std::string>;  // dataset, model, condition

std::map<GroupKey, MacroAverage> macro_by_group(const std::vector<ParadigmScore>& scores) {
  std::map<GroupKey, std::vector<ParadigmScore>> groups;
  for (const auto& s : scores) groups[{s.dataset, s.target_model, s.condition}].push_back(s);
  std::map<GroupKey, MacroAverage> out;
  for (const auto& [k, v] : groups) out.emplace(k, macro_average(v));
  return out;
}

std::vector<Dataset> datasets_of(const std::vector<ParadigmScore>& scores) {
  std::set<Dataset> ds;
  for (const auto& s : scores) ds.insert(s.dataset);
  return {ds.begin(), ds.end()};
}

}  // namespace

std::vector<Table> condition_matrix(const std::vector<ParadigmScore>& scores,
                                    const MatrixOptions& options) {
  auto macro = macro_by_group(scores);
  std::vector<Table> out;
  for (auto ds : datasets_of(scores)) {
    std::vector<std::string> models, conds;
    for (const auto& s : scores)
      if (s.dataset == ds) {
        models.push_back(s.target_model);
        conds.push_back(s.condition);
      }
    Table t;
    t.title = fmt::format("{}: dataset averages (%)", to_string(ds));
    t.corner = "model";
    t.rows = model_order(models, options.model_order);
    t.columns = canonical_condition_order(conds, options.generator_order);
    for (const auto& m : t.rows) {
      std::vector<Cell> row;
      for (const auto& c : t.columns) {
        auto it = macro.find({ds, m, c});
        row.push_back({it == macro.end() ? std::nullopt : std::optional(it->second.dataset_average)});
      }
      flag_row(row);
      t.cells.push_back(std::move(row));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Table> category_tables(const std::vector<ParadigmScore>& scores,
                                   const MatrixOptions& options) {
  auto macro = macro_by_group(scores);
  std::vector<Table> out;
  for (auto ds : datasets_of(scores)) {
    std::vector<std::string> models;
    for (const auto& s : scores)
      if (s.dataset == ds) models.push_back(s.target_model);
    for (const auto& m : model_order(models, options.model_order)) {
      std::vector<std::string> conds;
      std::map<std::string, std::size_t> counts;
      for (const auto& s : scores)
        if (s.dataset == ds && s.target_model == m) conds.push_back(s.condition);
      conds = canonical_condition_order(conds, options.generator_order);
      for (const auto& c : conds)
        for (const auto& cs : macro.at({ds, m, c}).categories)
          counts[cs.category] = std::max(counts[cs.category], cs.paradigm_count);

      Table t;
      t.title = fmt::format("{} / {}: category accuracy (%)", to_string(ds), m);
      t.corner = "category (paradigms)";
      t.columns = conds;
      for (const auto& [cat, n] : counts) {
        t.rows.push_back(fmt::format("{} ({})", cat, n));
        std::vector<Cell> row;
        for (const auto& c : conds) {
          std::optional<double> v;
          for (const auto& cs : macro.at({ds, m, c}).categories)
            if (cs.category == cat) v = cs.accuracy;
          row.push_back({v});
        }
        flag_row(row);
        t.cells.push_back(std::move(row));
      }
      t.rows.push_back("Average");
      std::vector<Cell> avg;
      for (const auto& c : conds) avg.push_back({macro.at({ds, m, c}).dataset_average});
      flag_row(avg);
      t.cells.push_back(std::move(avg));
      out.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------- comparisons

std::string resolve_condition_alias(const std::string& name,
                                    const std::vector<std::string>& available) {
  if (std::find(available.begin(), available.end(), name) != available.end()) return name;
  for (auto [alias, real] : {std::pair{"gpb+cot:", "gp+cot:"}, std::pair{"gpb:", "gp:"}}) {
    std::string_view a = alias;
    if (name.rfind(a, 0) == 0) return resolve_condition_alias(real + name.substr(a.size()), available);
  }
  std::optional<std::pair<ConditionKind, Audience>> want;
  if (name == "gpb") want = {ConditionKind::Gp, Audience::Beginner};
  if (name == "gpx") want = {ConditionKind::Gp, Audience::Expert};
  if (name == "gpb+cot") want = {ConditionKind::GpCot, Audience::Beginner};
  if (name == "gpx+cot") want = {ConditionKind::GpCot, Audience::Expert};
  if (!want)
    throw Error(ErrorCode::InvalidArgument, "condition '" + name + "' not found among the runs");
  std::set<std::string> hits;
  for (const auto& label : available) {
    try {
      auto c = ConditionSpec::parse(label);
      if (c.kind == want->first && c.audience == want->second) hits.insert(label);
    } catch (const Error&) {
    }
  }
  if (hits.size() == 1) return *hits.begin();
  if (hits.empty())
    throw Error(ErrorCode::InvalidArgument, "no condition matches alias '" + name + "'");
  std::string list;
  for (const auto& h : hits) list += (list.empty() ? "" : ", ") + h;
  throw Error(ErrorCode::InvalidArgument,
              "alias '" + name + "' is ambiguous (" + list + "); name the condition fully");
}

AlignedVectors align_category_scores(const std::vector<ParadigmScore>& scores, const std::string& x,
                                     const std::string& y) {
  auto macro = macro_by_group(scores);
  std::map<std::string, double> xs, ys;
  for (const auto& [key, m] : macro) {
    const auto& [ds, model, cond] = key;
    if (cond != x && cond != y) continue;
    for (const auto& c : m.categories) {
      auto k = fmt::format("{}/{}/{}", to_string(ds), model, c.category);
      (cond == x ? xs : ys)[k] = c.accuracy;
    }
  }
  AlignedVectors v;
  for (const auto& [k, val] : xs) {
    auto it = ys.find(k);
    if (it == ys.end())
      throw Error(ErrorCode::LengthMismatch, fmt::format("{} has no {} score", k, y));
    v.keys.push_back(k);
    v.x.push_back(val);
    v.y.push_back(it->second);
  }
  for (const auto& [k, val] : ys)
    if (!xs.count(k)) throw Error(ErrorCode::LengthMismatch, fmt::format("{} has no {} score", k, x));
  return v;
}

PairedComparison compare_conditions(const std::vector<ParadigmScore>& scores, const std::string& x,
                                    const std::string& y) {
  std::vector<std::string> available;
  for (const auto& s : scores) available.push_back(s.condition);
  auto rx = resolve_condition_alias(x, available);
  auto ry = resolve_condition_alias(y, available);
  auto v = align_category_scores(scores, rx, ry);
  return paired_comparison(v.y, v.x);
}

std::string format_comparison(const std::string& x, const std::string& y,
                              const PairedComparison& c) {
  std::string out = fmt::format("{} - {} over n={} category scores: mean {:+.2f} pp, sd {:.2f} pp", y,
                                x, c.n, c.mean_diff, c.sd_diff);
  if (c.t_statistic)
    out += fmt::format(", t({}) = {:.3f}, p = {:.4g}, d = {:.3f}", c.n - 1, *c.t_statistic,
                       *c.p_value, *c.cohens_d);
  else
    out += ", t and d undefined (sd = 0)";
  return out;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
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

constexpr const char* kCsvHeader =
    "level,dataset,language,model,condition,category,paradigm,accuracy,n_pairs,n_trials,"
    "unparse_rate,paradigm_count";

std::string num(double v) { return fmt::format("{:.4f}", v); }

}  // namespace

std::vector<ParadigmScore> category_scores_from_csv(std::string_view csv) {
  auto lines = split_lines(csv);
  if (lines.empty() || trim(lines.front()).empty())
    throw Error(ErrorCode::MalformedRecord, "score CSV is empty");
  auto header = parse_csv_line(lines.front());
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"level", "dataset", "model", "condition", "category", "accuracy"})
    if (!col.count(need))
      throw Error(ErrorCode::MalformedRecord, std::string("score CSV lacks column ") + need);
  std::vector<ParadigmScore> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    // A blank line ends the score section; the gap section may follow.
    if (trim(lines[n]).empty()) break;
    auto f = parse_csv_line(lines[n]);
    if (f.size() != header.size())
      throw Error(ErrorCode::MalformedRecord, fmt::format("score CSV line {} has {} fields", n + 1, f.size()));
    if (f[col["level"]] != "category") continue;
    ParadigmScore s;
    s.dataset = parse_dataset(f[col["dataset"]]);
    if (col.count("language")) s.language = f[col["language"]];
    s.target_model = f[col["model"]];
    s.condition = f[col["condition"]];
    s.category = f[col["category"]];
    s.paradigm = s.category;
    try {
      s.accuracy = std::stod(f[col["accuracy"]]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("score CSV line {}: bad accuracy", n + 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- report

namespace {

std::string cell_text(const Cell& c) {
  if (!c.value) return "";
  auto v = format_percent(*c.value);
  if (c.best) return "**" + v + "**";
  if (c.second) return "_" + v + "_";
  return v;
}

std::string render_table(const Table& t) {
  std::string out = "### " + t.title + "\n\n| " + t.corner + " |";
  for (const auto& c : t.columns) out += " " + c + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += "---:|";
  out += "\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out += "| " + t.rows[r] + " |";
    for (const auto& c : t.cells[r]) out += " " + cell_text(c) + " |";
    out += "\n";
  }
  return out + "\n";
}

std::string language_of(const ParadigmScore& s) {
  return s.language.empty() ? std::string(to_string(s.dataset)) : s.language;
}

}  // namespace

ReportBundle build_report(const std::vector<runner::RunDirectory>& runs_in,
                          const ReportOptions& options) {
  if (runs_in.empty()) throw Error(ErrorCode::InvalidArgument, "no finished runs to report");
  std::vector<const runner::RunDirectory*> runs;
  for (const auto& r : runs_in) runs.push_back(&r);
  std::sort(runs.begin(), runs.end(),
            [](auto* a, auto* b) { return a->manifest.run_id < b->manifest.run_id; });

  // Runs touching the same dataset must have ingested identical corpora.
  std::map<std::string, std::pair<std::string, std::string>> digest_of;
  std::set<std::pair<std::string, std::string>> model_condition;
  for (const auto* r : runs) {
    for (const auto& [ds, digest] : r->manifest.corpus_digests) {
      auto [it, fresh] = digest_of.emplace(ds, std::pair{digest, r->manifest.run_id});
      if (!fresh && it->second.first != digest && !options.force_mix)
        throw Error(ErrorCode::CorpusMismatch,
                    fmt::format("runs {} and {} used different {} corpora (pass --force-mix to "
                                "report them together)",
                                it->second.second, r->manifest.run_id, ds));
    }
    for (const auto& m : r->manifest.target_models)
      for (const auto& c : r->manifest.conditions)
        if (!model_condition.insert({m, c}).second)
          throw Error(ErrorCode::InvalidArgument,
                      "more than one run for model " + m + " under condition " + c);
  }

  std::vector<Judgment> all;
  for (const auto* r : runs) all.insert(all.end(), r->judgments.begin(), r->judgments.end());
  if (all.empty()) throw Error(ErrorCode::EmptyJudgmentSet, "the runs hold no judgments");
  auto scores = score_all(all);
  auto macro = macro_by_group(scores);

  std::vector<std::string> model_names, cond_names;
  for (const auto& s : scores) {
    model_names.push_back(s.target_model);
    cond_names.push_back(s.condition);
  }
  auto models = model_order(model_names, options.matrix.model_order);
  auto conds = canonical_condition_order(cond_names, options.matrix.generator_order);
  auto model_rank = [&](const std::string& m) {
    return std::find(models.begin(), models.end(), m) - models.begin();
  };
  auto cond_rank = [&](const std::string& c) {
    return std::find(conds.begin(), conds.end(), c) - conds.begin();
  };

  // CSV
  std::string csv = std::string(kCsvHeader) + "\n";
  {
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
      return std::make_tuple(a.dataset, model_rank(a.target_model), cond_rank(a.condition),
                             a.category, a.paradigm) <
             std::make_tuple(b.dataset, model_rank(b.target_model), cond_rank(b.condition),
                             b.category, b.paradigm);
    });
    std::vector<GroupKey> group_keys;
    for (const auto& [k, m] : macro) group_keys.push_back(k);
    std::sort(group_keys.begin(), group_keys.end(), [&](const auto& a, const auto& b) {
      return std::make_tuple(std::get<0>(a), model_rank(std::get<1>(a)), cond_rank(std::get<2>(a))) <
             std::make_tuple(std::get<0>(b), model_rank(std::get<1>(b)), cond_rank(std::get<2>(b)));
    });
    std::map<Dataset, std::string> lang;
    for (const auto& s : scores) lang[s.dataset] = s.language;
    for (const auto& s : sorted)
      csv += fmt::format("paradigm,{},{},{},{},{},{},{},{},{},{},\n", to_string(s.dataset),
                         csv_field(s.language), csv_field(s.target_model), csv_field(s.condition),
                         csv_field(s.category), csv_field(s.paradigm), num(s.accuracy), s.n_pairs,
                         s.n_trials, num(s.unparse_rate));
    for (const auto& k : group_keys) {
      const auto& [ds, model, cond] = k;
      for (const auto& c : macro.at(k).categories)
        csv += fmt::format("category,{},{},{},{},{},,{},,,,{}\n", to_string(ds), csv_field(lang[ds]),
                           csv_field(model), csv_field(cond), csv_field(c.category), num(c.accuracy),
                           c.paradigm_count);
    }
    for (const auto& k : group_keys) {
      const auto& [ds, model, cond] = k;
      const auto& m = macro.at(k);
      csv += fmt::format("dataset,{},{},{},{},,,{},,,,{}\n", to_string(ds), csv_field(lang[ds]),
                         csv_field(model), csv_field(cond), num(m.dataset_average),
                         m.categories.size());
    }
  }

  // Markdown
  std::string md = "# Grammar prompting evaluation report\n\n";
  md += fmt::format("{} finished run(s), {} judgments. In every row the best value is **bold** and "
                    "the second best is _underlined_; marks compare values as displayed.\n\n",
                    runs.size(), all.size());

  md += "## Dataset averages\n\n";
  for (const auto& t : condition_matrix(scores, options.matrix)) md += render_table(t);

  md += "## Categories\n\n";
  for (const auto& t : category_tables(scores, options.matrix)) md += render_table(t);

  // Rollups across datasets for each (model, condition).
  std::set<Dataset> datasets;
  for (const auto& s : scores) datasets.insert(s.dataset);
  if (datasets.size() > 1) {
    md += "## Overall\n\n";
    for (int mode = 0; mode < 2; ++mode) {
      Table t;
      t.title = mode == 0 ? "Mean of dataset averages (%)" : "Mean of all categories (%)";
      t.corner = "model";
      t.rows = models;
      t.columns = conds;
      for (const auto& m : models) {
        std::vector<Cell> row;
        for (const auto& c : conds) {
          std::vector<double> vals;
          for (auto ds : datasets) {
            auto it = macro.find({ds, m, c});
            if (it == macro.end()) continue;
            if (mode == 0) {
              vals.push_back(it->second.dataset_average);
            } else {
              for (const auto& cs : it->second.categories) vals.push_back(cs.accuracy);
            }
          }
          row.push_back({vals.empty() ? std::nullopt : std::optional(mean(vals))});
        }
        flag_row(row);
        t.cells.push_back(std::move(row));
      }
      md += render_table(t);
    }
  }

  // Unparse rates.
  {
    md += "## Unparseable responses (%)\n\n| model |";
    for (const auto& c : conds) md += " " + c + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < conds.size(); ++i) md += "---:|";
    md += "\n";
    for (const auto& m : models) {
      md += "| " + m + " |";
      for (const auto& c : conds) {
        std::size_t n = 0, bad = 0;
        for (const auto& s : scores)
          if (s.target_model == m && s.condition == c) {
            n += s.n_trials;
            bad += static_cast<std::size_t>(std::llround(s.unparse_rate * s.n_trials / 100.0));
          }
        md += n == 0 ? " |" : " " + format_percent(100.0 * bad / n) + " |";
      }
      md += "\n";
    }
    md += "\n";
  }

  if (options.gap) {
    if (options.groups.empty())
      throw Error(ErrorCode::MissingGroup, "--gap needs SLM/LLM group tags in the config");
    md += "## Gap between model groups (LLM - SLM, pp)\n\n";
    std::vector<std::string> grouped;
    for (const auto& [m, g] : options.groups)
      grouped.push_back(fmt::format("{} = {}", m, to_string(g)));
    md += "Groups: ";
    for (std::size_t i = 0; i < grouped.size(); ++i) md += (i ? ", " : "") + grouped[i];
    md += ".\n\n";

    std::map<std::string, GapReport> per_condition;
    std::map<std::string, std::string> skipped;
    for (const auto& c : conds) {
      std::map<std::pair<std::string, std::string>, std::vector<double>> acc;
      for (const auto& [k, m] : macro) {
        if (std::get<2>(k) != c) continue;
        std::string language;
        for (const auto& s : scores)
          if (s.dataset == std::get<0>(k)) {
            language = language_of(s);
            break;
          }
        acc[{language, std::get<1>(k)}].push_back(m.dataset_average);
      }
      std::map<std::pair<std::string, std::string>, double> averages;
      for (const auto& [k, v] : acc) averages[k] = mean(v);
      try {
        per_condition.emplace(c, compute_gap(averages, options.groups));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::MissingGroup || c == options.baseline_condition) throw;
        skipped[c] = e.what();
      }
    }
    if (!per_condition.count(options.baseline_condition))
      throw Error(ErrorCode::MissingGroup,
                  "baseline condition '" + options.baseline_condition + "' has no runs");

    std::vector<std::string> gap_conds;
    for (const auto& c : conds)
      if (per_condition.count(c)) gap_conds.push_back(c);
    std::set<std::string> languages;
    for (const auto& [c, g] : per_condition)
      for (const auto& l : g.languages) languages.insert(l.language);

    auto header = [&](const std::string& corner) {
      std::string h = "| " + corner + " |";
      for (const auto& c : gap_conds) h += " " + c + " |";
      h += "\n|---|";
      for (std::size_t i = 0; i < gap_conds.size(); ++i) h += "---:|";
      return h + "\n";
    };
    for (const auto& lang : languages) {
      md += "### " + corpus::language_display_name(lang) + "\n\n" + header("");
      for (int row = 0; row < 3; ++row) {
        static const char* kNames[] = {"SLM average", "LLM average", "Gap"};
        md += std::string("| ") + kNames[row] + " |";
        for (const auto& c : gap_conds) {
          std::optional<double> v;
          for (const auto& l : per_condition.at(c).languages)
            if (l.language == lang) v = row == 0 ? l.slm_avg : row == 1 ? l.llm_avg : l.gap;
          md += v ? " " + format_percent(*v) + " |" : " |";
        }
        md += "\n";
      }
      md += "\n";
    }
    md += "### Average over languages\n\n" + header("");
    md += "| Gap |";
    for (const auto& c : gap_conds) md += " " + format_percent(per_condition.at(c).cross_language_gap) + " |";
    double base_gap = per_condition.at(options.baseline_condition).cross_language_gap;
    md += "\n| Reduction vs " + options.baseline_condition + " (%)¹ |";
    for (const auto& c : gap_conds) {
      if (base_gap > 0)
        md += " " + format_percent(gap_reduction(base_gap, per_condition.at(c).cross_language_gap)) + " |";
      else
        md += " n/a |";
    }
    md += "\n\n¹ Reductions are computed from unrounded gaps. Recomputing them from the rounded "
          "one-decimal gaps shown above can disagree by up to about half a point: a gap falling "
          "from 13.0 to 5.8 pp is a 55.4% reduction on the rounded figures, while unrounded gaps "
          "that display the same way give anything from 54.8% to 55.9%, so a rounded 56% and "
          "55.4% can describe the same data.\n\n";
    for (const auto& [c, why] : skipped)
      md += fmt::format("Condition {} is left out of the gap table: {}.\n\n", c, why);

    csv += "\n";
    csv += "gap_condition,language,slm_avg,llm_avg,gap,reduction_vs_baseline\n";
    for (const auto& c : gap_conds) {
      const auto& g = per_condition.at(c);
      for (const auto& l : g.languages)
        csv += fmt::format("{},{},{},{},{},\n", csv_field(c), csv_field(l.language), num(l.slm_avg),
                           num(l.llm_avg), num(l.gap));
      csv += fmt::format("{},average,,,{},{}\n", csv_field(c), num(g.cross_language_gap),
                         base_gap > 0 ? num(gap_reduction(base_gap, g.cross_language_gap)) : "");
    }
  }

  if (!options.comparisons.empty()) {
    md += "## Paired comparisons\n\n";
    for (const auto& [x, y] : options.comparisons) {
      auto c = compare_conditions(scores, x, y);
      std::vector<std::string> available(conds);
      md += "- " +
            format_comparison(resolve_condition_alias(x, available),
                              resolve_condition_alias(y, available), c) +
            "\n";
    }
    md += "\n";
  }

  md += "## Runs\n\n| run | model | condition | judgments | failed | seed | templates | backend | "
        "fingerprint |\n|---|---|---|---:|---:|---:|---|---|---|\n";
  for (const auto* r : runs) {
    const auto& m = r->manifest;
    md += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} | {} |\n", m.run_id,
                      m.target_models.empty() ? "" : m.target_models.front(),
                      m.conditions.empty() ? "" : m.conditions.front(), m.judgment_count,
                      m.failed_trials, m.run_seed, m.template_version, m.backend_description,
                      m.config_fingerprint.substr(0, 12));
  }
  md += "\n";
  return {md, csv};
}

}  // namespace gph::analysis
