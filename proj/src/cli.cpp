#include "gph/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "gph/analysis.hpp"
#include "gph/config.hpp"
#include "gph/corpus.hpp"
#include "gph/explain.hpp"
#include "gph/runner.hpp"
#include "gph/templates.hpp"
#include "gph/util.hpp"

namespace gph::cli {

namespace fs = std::filesystem;
using config::RunConfig;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = std::string(trim(item));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> flatten_lists(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (const auto& a : args)
    for (auto& s : split_list(a)) out.push_back(std::move(s));
  return out;
}

// ---------------------------------------------------------------- corpora

struct LoadedCorpus {
  corpus::Corpus corpus;
  std::vector<std::string> paradigms;
};

std::vector<std::string> all_paradigms(const corpus::Corpus& c) {
  std::vector<std::string> out;
  for (const auto& p : c.manifest.paradigms) out.push_back(p.name);
  return out;
}

std::vector<std::string> challenging_paradigms(const config::ChallengingRule& rule,
                                               const corpus::Corpus& c, std::ostream& err) {
  json j;
  try {
    j = json::parse(read_file(rule.scores));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, rule.scores.string() + ": " + e.what());
  }
  if (!j.contains(rule.scores_key))
    throw Error(ErrorCode::ConfigError,
                fmt::format("{} has no scores for '{}'", rule.scores.string(), rule.scores_key));
  auto scores = j.at(rule.scores_key).get<std::map<std::string, double>>();
  std::set<std::string> present;
  for (const auto& p : c.manifest.paradigms) present.insert(p.name);
  std::vector<std::string> out;
  for (auto& name : corpus::filter_challenging(scores, rule.threshold, rule.mode)) {
    if (present.count(name))
      out.push_back(std::move(name));
    else
      err << fmt::format("warning: challenging paradigm {} is not in the corpus\n", name);
  }
  return out;
}

std::vector<LoadedCorpus> load_corpora(const RunConfig& c, std::ostream& err) {
  if (c.corpora.empty()) throw Error(ErrorCode::ConfigError, "config lists no corpora");
  std::vector<LoadedCorpus> out;
  for (const auto& src : c.corpora) {
    LoadedCorpus lc;
    lc.corpus = corpus::ingest(src.path, src.format);
    if (!lc.corpus.rejected.empty())
      err << fmt::format("warning: {} rejected {} records\n", src.path.string(),
                         lc.corpus.rejected.size());
    if (!src.paradigms.empty())
      lc.paradigms = src.paradigms;
    else if (src.challenging)
      lc.paradigms = challenging_paradigms(*src.challenging, lc.corpus, err);
    else
      lc.paradigms = all_paradigms(lc.corpus);
    if (lc.paradigms.empty())
      throw Error(ErrorCode::ConfigError, "no paradigms selected from " + src.path.string());
    out.push_back(std::move(lc));
  }
  return out;
}

llm::MockBackend::AnswerKey answer_key(const std::vector<LoadedCorpus>& corpora) {
  llm::MockBackend::AnswerKey key;
  for (const auto& lc : corpora)
    for (const auto& p : lc.corpus.pairs) key.emplace(p.good, p.bad);
  return key;
}

std::map<std::string, std::string> corpus_digests(const std::vector<LoadedCorpus>& corpora) {
  std::map<std::string, std::string> out;
  for (const auto& lc : corpora)
    out[std::string(to_string(lc.corpus.manifest.dataset))] = lc.corpus.manifest.corpus_digest;
  return out;
}

struct Slice {
  std::vector<corpus::MinimalPair> pairs;
  std::map<std::pair<Dataset, std::string>, std::vector<corpus::MinimalPair>> shots;
};

Slice build_slice(const std::vector<LoadedCorpus>& corpora, std::size_t n,
                  std::optional<unsigned> shots, std::ostream& err) {
  Slice s;
  std::vector<std::string> warnings;
  for (const auto& lc : corpora) {
    if (!shots) {
      auto part = corpus::select_slice(lc.corpus.pairs, lc.paradigms, n, &warnings);
      s.pairs.insert(s.pairs.end(), part.begin(), part.end());
      continue;
    }
    for (const auto& name : lc.paradigms) {
      auto pp = corpus::paradigm_pairs(lc.corpus.pairs, name);
      if (pp.empty()) throw Error(ErrorCode::UnknownParadigm, name);
      auto split = corpus::split_shots(pp, n, *shots);
      if (split.evaluation.size() < n)
        warnings.push_back(fmt::format("{}: {} evaluation pairs after holding out {} shots", name,
                                       split.evaluation.size(), *shots));
      s.shots[{pp.front().dataset, name}] = split.shots;
      s.pairs.insert(s.pairs.end(), split.evaluation.begin(), split.evaluation.end());
    }
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return s;
}

/// Pairs shown to the generator: the tail of the paradigm, which the
/// evaluation slice reaches last (and few-shot runs never evaluate).
std::vector<corpus::MinimalPair> reference_pairs(const std::vector<corpus::MinimalPair>& pp) {
  std::size_t take = std::min<std::size_t>(3, pp.size());
  return {pp.end() - static_cast<std::ptrdiff_t>(take), pp.end()};
}

templates::TemplateSet template_set(const RunConfig& c) {
  return c.template_dir ? templates::TemplateSet::with_overrides(*c.template_dir)
                        : templates::TemplateSet::bundled();
}

templates::Renderer make_renderer(const RunConfig& c) {
  templates::Renderer r(template_set(c));
  r.set_system_text(c.system_text);
  return r;
}

void apply_backend_override(RunConfig& c, const std::string& text) {
  if (!text.empty()) c.backend_override = config::parse_backend_override(text);
}

std::vector<templates::ConditionSpec> parse_conditions(const std::vector<std::string>& labels) {
  std::vector<templates::ConditionSpec> out;
  for (const auto& l : labels) {
    auto c = templates::ConditionSpec::parse(l);
    c.validate();
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string format;
  std::string path;
  std::string emit_canonical;
  std::string manifest;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  auto format = corpus::parse_source_format(a.format);
  auto c = corpus::ingest(a.path, format);
  for (const auto& d : c.rejected) err << fmt::format("rejected {}:{}: {}\n", d.file, d.line, d.reason);

  const auto& m = c.manifest;
  std::map<std::string, std::pair<std::size_t, std::size_t>> categories;
  for (const auto& p : m.paradigms) {
    auto& [paradigms, pairs] = categories[p.category];
    ++paradigms;
    pairs += p.pair_count;
  }
  out << fmt::format("dataset {}  language {}\n", to_string(m.dataset), m.language);
  out << fmt::format("{} pairs in {} paradigms, {} categories; {} rejected\n", c.pairs.size(),
                     m.paradigms.size(), categories.size(), c.rejected.size());
  for (const auto& [name, counts] : categories)
    out << fmt::format("  {:<32} {:>4} paradigms {:>7} pairs\n", name, counts.first, counts.second);
  out << "corpus_digest " << m.corpus_digest << "\n";
  out << "source_digest " << m.source_digest << "\n";

  if (!a.emit_canonical.empty()) {
    write_file_atomic(a.emit_canonical, corpus::to_canonical_jsonl(c.pairs));
    out << "wrote " << a.emit_canonical << "\n";
  }
  std::string manifest_path = a.manifest;
  if (manifest_path.empty() && !a.emit_canonical.empty())
    manifest_path = a.emit_canonical + ".manifest.json";
  if (!manifest_path.empty()) {
    write_file_atomic(manifest_path, corpus::manifest_json(m));
    out << "wrote " << manifest_path << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- explain

struct ExplainArgs {
  std::string config;
  std::vector<std::string> audiences;
  std::vector<std::string> generators;
  std::string hygiene;
  std::string backend;
};

int cmd_explain(const ExplainArgs& a, std::ostream& out, std::ostream& err) {
  auto cfg = config::load_config(a.config);
  apply_backend_override(cfg, a.backend);
  if (!a.hygiene.empty()) cfg.hygiene = a.hygiene;
  cfg.validate();
  auto [seed, fresh] = config::ensure_seed(cfg);
  if (fresh) out << fmt::format("generated run seed {}\n", seed);

  auto conditions = parse_conditions(cfg.conditions);
  std::vector<Audience> audiences;
  for (const auto& s : flatten_lists(a.audiences)) audiences.push_back(parse_audience(s));
  if (audiences.empty()) audiences = cfg.audiences;
  if (audiences.empty()) {
    std::set<Audience> used;
    for (const auto& c : conditions)
      if (c.explanation_source) used.insert(c.audience);
    audiences.assign(used.begin(), used.end());
  }
  if (audiences.empty()) audiences = {Audience::Beginner};

  std::vector<std::string> generators = flatten_lists(a.generators);
  bool filtered = !generators.empty();
  if (!filtered) generators = cfg.generator_order();
  for (const auto& g : generators)
    if (!cfg.find_generator(g)) throw Error(ErrorCode::ConfigError, "unknown generator " + g);
  auto selected = [&](const std::string& g) {
    return std::find(generators.begin(), generators.end(), g) != generators.end();
  };
  bool want_control = false, want_textbook = false;
  for (const auto& c : conditions) {
    want_control |= c.kind == templates::ConditionKind::Control;
    want_textbook |= c.kind == templates::ConditionKind::Textbook;
  }

  auto corpora = load_corpora(cfg, err);
  auto key = answer_key(corpora);
  auto renderer = make_renderer(cfg);
  explain::ExplanationCache cache(cfg.cache_dir);
  auto transcript = std::make_shared<llm::Transcript>(cfg.out_dir / "explain" / "transcript.jsonl");
  explain::GenerationSettings settings{cfg.explain_temperature, cfg.explain_max_tokens};

  std::size_t generated = 0, cached = 0, leaks = 0;
  auto produce = [&](explain::Generator& gen, const explain::InstructionSpec& spec,
                     const explain::ParadigmKey& pk) {
    bool had = cache.get(gen.key_for(spec, pk)).has_value();
    auto e = gen.generate(spec, pk);
    ++(had ? cached : generated);
    return e;
  };
  auto hygiene = [&](const GrammarExplanation& e, const std::vector<corpus::MinimalPair>& pairs) {
    auto report = explain::check_hygiene(e, pairs);
    if (report.passed) return;
    ++leaks;
    for (const auto& s : report.leaked_sentences)
      err << fmt::format("{}: {} explanation of {} ({}) quotes a test sentence: {}\n",
                         cfg.hygiene == "strict" ? "error" : "warning", e.generator_model,
                         e.paradigm, to_string(e.audience), s);
  };

  std::map<std::string, std::unique_ptr<llm::Client>> clients;
  std::map<std::string, std::unique_ptr<explain::Generator>> gens;
  auto generator = [&](const std::string& label) -> explain::Generator& {
    auto it = gens.find(label);
    if (it != gens.end()) return *it->second;
    const auto& spec = *cfg.find_generator(label);
    auto client = std::make_unique<llm::Client>(config::make_backend(cfg, spec, key, seed),
                                                config::client_options(cfg, spec), transcript);
    auto g = std::make_unique<explain::Generator>(*client, cache, renderer, label, settings);
    clients[label] = std::move(client);
    return *(gens[label] = std::move(g));
  };

  auto paradigm_jobs = [&](const std::string& label, const std::vector<std::string>& names,
                           const LoadedCorpus& lc, Audience audience) {
    for (const auto& name : names) {
      auto pp = corpus::paradigm_pairs(lc.corpus.pairs, name);
      if (pp.empty()) throw Error(ErrorCode::UnknownParadigm, name);
      auto spec = explain::instruction_for(name, lc.corpus.manifest.language, audience,
                                           reference_pairs(pp), cfg.target_words,
                                           renderer.template_version());
      auto e = produce(generator(label), spec, {pp.front().dataset, name});
      hygiene(e, corpus::select_slice(pp, {name}, cfg.per_paradigm_n));
    }
  };

  for (const auto& label : generators)
    for (const auto& lc : corpora)
      for (auto audience : audiences) paradigm_jobs(label, lc.paradigms, lc, audience);

  if (want_textbook) {
    auto label = cfg.effective_textbook_generator();
    if (!filtered || selected(label))
      for (const auto& lc : corpora)
        paradigm_jobs(label, all_paradigms(lc.corpus), lc, Audience::Beginner);
  }
  if (want_control) {
    auto label = cfg.effective_control_generator();
    if (!filtered || selected(label))
      produce(generator(label),
              explain::control_instruction(cfg.target_words, renderer.template_version()),
              {Dataset::Custom, explain::kControlParadigm});
  }

  out << fmt::format("explanations: {} generated, {} already cached; hygiene: {} leaking\n",
                     generated, cached, leaks);
  if (leaks > 0 && cfg.hygiene == "strict")
    throw Error(ErrorCode::HygieneFailure,
                fmt::format("{} explanations quote evaluation sentences", leaks));
  return 0;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string config;
  std::vector<std::string> conditions;
  std::vector<std::string> targets;
  std::string backend;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

struct ResolvedInputs {
  runner::ConditionInputs inputs;
  std::vector<std::string> keys;
};

GrammarExplanation cached_or_missing(const explain::ExplanationCache& cache, const std::string& key,
                                     const std::string& what) {
  auto e = cache.get(key);
  if (!e)
    throw Error(ErrorCode::MissingExplanation,
                what + " is not in the explanation cache; run `gph explain` first");
  return *e;
}

ResolvedInputs resolve_inputs(const RunConfig& cfg, const templates::ConditionSpec& cond,
                              const std::vector<LoadedCorpus>& corpora, const Slice& slice,
                              const explain::ExplanationCache& cache,
                              const std::string& template_version) {
  ResolvedInputs r;
  r.inputs.shots = slice.shots;
  using templates::ConditionKind;
  if (cond.kind == ConditionKind::Gp || cond.kind == ConditionKind::GpCot) {
    std::set<std::pair<Dataset, std::string>> seen;
    for (const auto& p : slice.pairs) {
      if (!seen.emplace(p.dataset, p.paradigm).second) continue;
      auto key = explain::cache_key(p.dataset, p.paradigm, cond.audience, *cond.explanation_source,
                                    template_version);
      r.inputs.explanations[{p.dataset, p.paradigm}] = cached_or_missing(
          cache, key,
          fmt::format("{} explanation of {} from {}", to_string(cond.audience), p.paradigm,
                      *cond.explanation_source));
      r.keys.push_back(key);
    }
  } else if (cond.kind == ConditionKind::Control) {
    auto gen = cfg.effective_control_generator();
    auto key = explain::cache_key(Dataset::Custom, explain::kControlParadigm, Audience::Beginner,
                                  gen, template_version);
    r.inputs.control = cached_or_missing(cache, key, "control explanation from " + gen);
    r.keys.push_back(key);
  } else if (cond.kind == ConditionKind::Textbook) {
    auto gen = cfg.effective_textbook_generator();
    for (const auto& lc : corpora) {
      for (const auto& ps : lc.corpus.manifest.paradigms) {
        auto key = explain::cache_key(ps.dataset, ps.name, Audience::Beginner, gen, template_version);
        auto e = cached_or_missing(cache, key,
                                   fmt::format("textbook explanation of {} from {}", ps.name, gen));
        r.inputs.textbook[ps.dataset].push_back({ps.name, e.text});
        r.keys.push_back(key);
      }
    }
  }
  std::sort(r.keys.begin(), r.keys.end());
  return r;
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  auto cfg = config::load_config(a.config);
  apply_backend_override(cfg, a.backend);
  if (!a.conditions.empty()) cfg.conditions = flatten_lists(a.conditions);
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.seed) cfg.seed = a.seed;
  if (a.workers) cfg.workers = *a.workers;
  cfg.validate();

  std::vector<std::string> target_labels = flatten_lists(a.targets);
  if (target_labels.empty()) target_labels = cfg.target_order();
  if (target_labels.empty()) throw Error(ErrorCode::ConfigError, "config lists no targets");
  for (const auto& t : target_labels)
    if (!cfg.find_target(t)) throw Error(ErrorCode::ConfigError, "unknown target " + t);
  auto conditions = parse_conditions(cfg.conditions);

  auto [seed, fresh] = config::ensure_seed(cfg);
  if (fresh) out << fmt::format("generated run seed {} (stored in {})\n", seed,
                                (cfg.out_dir / "seed.txt").string());

  auto corpora = load_corpora(cfg, err);
  auto key = answer_key(corpora);
  auto digests = corpus_digests(corpora);
  auto renderer = make_renderer(cfg);
  explain::ExplanationCache cache(cfg.cache_dir);

  runner::ExecuteOptions options;
  options.workers = cfg.workers;
  options.temperature = cfg.judge_temperature;
  options.max_tokens_answer = cfg.judge_max_tokens;
  options.max_tokens_reasoning = cfg.judge_max_tokens_reasoning;

  bool any_total_failure = false;
  for (const auto& label : target_labels) {
    const auto& target = *cfg.find_target(label);
    auto backend = config::make_backend(cfg, target, key, seed);
    for (const auto& cond : conditions) {
      auto slice = build_slice(corpora, cfg.per_paradigm_n,
                               cond.kind == templates::ConditionKind::FewShot ? cond.shots
                                                                              : std::nullopt,
                               err);
      auto resolved = resolve_inputs(cfg, cond, corpora, slice, cache, renderer.template_version());

      runner::RunRequest req;
      req.run_id = runner::run_id_for(label, cond);
      req.slice = std::move(slice.pairs);
      req.condition = cond;
      req.target_model = label;
      req.run_seed = seed;
      req.corpus_digests = digests;

      ordered_json fp;
      fp["corpus_digests"] = digests;
      fp["slice_digest"] = corpus::corpus_digest(req.slice);
      fp["per_paradigm_n"] = cfg.per_paradigm_n;
      fp["condition"] = cond.label();
      fp["target"] = {target.label, target.model};
      fp["seed"] = seed;
      fp["template_version"] = renderer.template_version();
      fp["system_text"] = cfg.system_text ? ordered_json(*cfg.system_text) : ordered_json(nullptr);
      fp["judge"] = {options.temperature, options.max_tokens_answer, options.max_tokens_reasoning};
      fp["explanation_keys"] = resolved.keys;
      fp["backend"] = backend->describe();
      req.config_fingerprint = sha256_hex(fp.dump());

      auto run_dir = cfg.out_dir / "runs" / req.run_id;
      auto transcript_path = run_dir / "transcript.jsonl";
      std::shared_ptr<const llm::TranscriptIndex> prefill;
      if (fs::exists(transcript_path))
        prefill = std::make_shared<const llm::TranscriptIndex>(llm::load_transcript(transcript_path));
      llm::Client client(backend, config::client_options(cfg, target),
                         std::make_shared<llm::Transcript>(transcript_path), prefill);

      auto outcome = runner::execute(req, client, renderer, resolved.inputs, options, run_dir);
      const auto& m = outcome.manifest;
      out << fmt::format("{}: {} judgments over {} pairs, {} failed{}\n", m.run_id,
                         m.judgment_count, m.pair_count, m.failed_trials,
                         outcome.reused ? " (already complete)" : "");
      if (m.judgment_count > 0 && m.failed_trials == m.judgment_count) {
        err << fmt::format("error: every trial of {} failed at the backend\n", m.run_id);
        any_total_failure = true;
      }
    }
  }
  return any_total_failure ? static_cast<int>(ExitCode::BackendFailure) : 0;
}

// ---------------------------------------------------------------- report / compare

struct ReportArgs {
  std::string config;
  std::string out;
  std::string runs;
  bool gap = false;
  std::string baseline = "base";
  std::vector<std::string> compare;
  std::vector<std::string> groups;
  bool force_mix = false;
};

std::map<std::string, analysis::Group> parse_groups(const std::vector<std::string>& args) {
  std::map<std::string, analysis::Group> out;
  for (const auto& a : flatten_lists(args)) {
    auto eq = a.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "--group expects <model>=SLM|LLM, got " + a);
    out[a.substr(0, eq)] = analysis::parse_group(a.substr(eq + 1));
  }
  return out;
}

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream&) {
  std::optional<RunConfig> cfg;
  if (!a.config.empty()) cfg = config::load_config(a.config);
  fs::path out_dir = !a.out.empty() ? fs::path(a.out) : cfg ? cfg->out_dir : fs::path("out");
  fs::path runs_dir = !a.runs.empty() ? fs::path(a.runs) : out_dir / "runs";
  if (a.compare.size() % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "--compare takes two condition names");

  analysis::ReportOptions opts;
  if (cfg) {
    opts.matrix.model_order = cfg->target_order();
    opts.matrix.generator_order = cfg->generator_order();
    opts.groups = cfg->groups();
  }
  for (const auto& [k, v] : parse_groups(a.groups)) opts.groups[k] = v;
  opts.gap = a.gap;
  opts.baseline_condition = a.baseline;
  for (std::size_t i = 0; i + 1 < a.compare.size(); i += 2)
    opts.comparisons.emplace_back(a.compare[i], a.compare[i + 1]);
  opts.force_mix = a.force_mix;

  auto runs = runner::load_runs(runs_dir);
  if (runs.empty()) throw Error(ErrorCode::EmptyJudgmentSet, "no finished runs under " + runs_dir.string());
  auto bundle = analysis::build_report(runs, opts);
  auto report_dir = out_dir / "report";
  write_file_atomic(report_dir / "report.md", bundle.markdown);
  write_file_atomic(report_dir / "report.csv", bundle.csv);
  out << fmt::format("{} runs -> {}, {}\n", runs.size(), (report_dir / "report.md").string(),
                     (report_dir / "report.csv").string());
  return 0;
}

struct CompareArgs {
  std::string x, y;
  std::string runs;
  std::string scores;
};

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream&) {
  std::vector<analysis::ParadigmScore> scores;
  if (!a.scores.empty()) {
    scores = analysis::category_scores_from_csv(read_file(a.scores));
  } else {
    fs::path runs_dir = a.runs.empty() ? fs::path("out/runs") : fs::path(a.runs);
    std::vector<runner::Judgment> all;
    for (auto& r : runner::load_runs(runs_dir))
      all.insert(all.end(), r.judgments.begin(), r.judgments.end());
    if (all.empty()) throw Error(ErrorCode::EmptyJudgmentSet, "no judgments under " + runs_dir.string());
    scores = analysis::score_all(all);
  }
  auto c = analysis::compare_conditions(scores, a.x, a.y);
  std::vector<std::string> available;
  for (const auto& s : scores) available.push_back(s.condition);
  out << analysis::format_comparison(analysis::resolve_condition_alias(a.x, available),
                                     analysis::resolve_condition_alias(a.y, available), c)
      << "\n";
  return 0;
}

// ---------------------------------------------------------------- cache archive

fs::path cache_root(const std::string& cache, const std::string& config_path) {
  if (!cache.empty()) return cache;
  if (!config_path.empty()) return config::load_config(config_path).cache_dir;
  return "cache";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grammar-prompting evaluation harness for minimal-pair benchmarks", "gph"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Read a benchmark and print its paradigm summary");
  ingest_cmd->add_option("--format", ingest.format, "blimp-jsonl, sling, rublimp-jsonl, canonical-jsonl")
      ->required();
  ingest_cmd->add_option("path", ingest.path, "File or directory")->required();
  ingest_cmd->add_option("--emit-canonical", ingest.emit_canonical, "Write canonical JSON Lines here");
  ingest_cmd->add_option("--manifest", ingest.manifest, "Write the corpus manifest here");

  ExplainArgs explain_args;
  auto* explain_cmd = app.add_subcommand("explain", "Fill the explanation cache");
  explain_cmd->add_option("--config", explain_args.config)->required();
  explain_cmd->add_option("--audience", explain_args.audiences, "beginner or expert; repeatable");
  explain_cmd->add_option("--generator", explain_args.generators, "Generator label; repeatable");
  explain_cmd->add_option("--check-hygiene", explain_args.hygiene)
      ->check(CLI::IsMember({"warn", "strict"}));
  explain_cmd->add_option("--backend", explain_args.backend, "Override every backend");

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Judge minimal pairs under each condition");
  run_cmd->add_option("--config", run_args.config)->required();
  run_cmd->add_option("--conditions", run_args.conditions, "Comma-separated condition labels");
  run_cmd->add_option("--targets", run_args.targets, "Comma-separated target labels");
  run_cmd->add_option("--backend", run_args.backend,
                      "mock-oracle:p=<p>[,seed=<n>], mock-scripted:always=<text>, replay:<path>");
  run_cmd->add_option("--out", run_args.out, "Output directory");
  run_cmd->add_option("--seed", run_args.seed);
  run_cmd->add_option("--workers", run_args.workers)->check(CLI::PositiveNumber);

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Tables, gap analysis and comparisons");
  report_cmd->add_option("--config", report.config, "Supplies model order and SLM/LLM groups");
  report_cmd->add_option("--out", report.out, "Output directory holding runs/");
  report_cmd->add_option("--runs", report.runs, "Run directory root (default <out>/runs)");
  report_cmd->add_flag("--gap", report.gap, "Add the SLM/LLM gap tables");
  report_cmd->add_option("--baseline", report.baseline, "Condition the gap reduction is measured against");
  report_cmd->add_option("--compare", report.compare, "Two condition names; repeatable")
      ->expected(2)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  report_cmd->add_option("--group", report.groups, "<model>=SLM|LLM; repeatable");
  report_cmd->add_flag("--force-mix", report.force_mix, "Allow runs over different corpora");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "Paired comparison of two conditions (Y - X)");
  compare_cmd->add_option("x", compare.x)->required();
  compare_cmd->add_option("y", compare.y)->required();
  auto* runs_opt = compare_cmd->add_option("--runs", compare.runs, "Run directory root");
  compare_cmd->add_option("--scores", compare.scores, "report.csv to read category scores from")
      ->excludes(runs_opt);

  std::string cache_dir, config_path, archive_path;
  auto* export_cmd = app.add_subcommand("export-cache", "Write the explanation cache as one archive");
  export_cmd->add_option("--cache", cache_dir);
  export_cmd->add_option("--config", config_path);
  export_cmd->add_option("-o,--output", archive_path, "Archive file (default: stdout)");

  auto* import_cmd = app.add_subcommand("import-cache", "Add an archive's explanations to the cache");
  import_cmd->add_option("archive", archive_path)->required();
  import_cmd->add_option("--cache", cache_dir);
  import_cmd->add_option("--config", config_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::UserError);
  }

  try {
    if (*ingest_cmd) return cmd_ingest(ingest, out, err);
    if (*explain_cmd) return cmd_explain(explain_args, out, err);
    if (*run_cmd) return cmd_run(run_args, out, err);
    if (*report_cmd) return cmd_report(report, out, err);
    if (*compare_cmd) return cmd_compare(compare, out, err);
    if (*export_cmd) {
      explain::ExplanationCache cache(cache_root(cache_dir, config_path));
      auto text = explain::export_explanations(cache);
      if (archive_path.empty()) {
        out << text;
      } else {
        write_file_atomic(archive_path, text);
        out << fmt::format("exported {} explanations to {}\n", cache.all().size(), archive_path);
      }
      return 0;
    }
    if (*import_cmd) {
      explain::ExplanationCache cache(cache_root(cache_dir, config_path));
      auto n = explain::import_explanations(cache, read_file(archive_path));
      out << fmt::format("imported {} explanations into {}\n", n, cache.root().string());
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e.code()));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::UserError);
  }
  return static_cast<int>(ExitCode::UserError);
}

}  // namespace gph::cli
