#include "fedida/experiment.hpp"

#include "fedida/parallel.hpp"
#include "fedida/random.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace fedida {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int g_verbosity = 0;

void note(const std::string& msg) {
  if (g_verbosity > 0) std::cerr << "[fedida] " << msg << '\n';
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

PenaltyConfig parse_penalty(const json& j, PenaltyConfig base, const std::string& where) {
  check_keys(j, {"mode", "lambda", "gamma"}, where);
  if (j.contains("mode")) base.mode = parse_penalty_mode(j.at("mode").get<std::string>());
  base.lambda = get_or(j, "lambda", base.lambda);
  base.gamma = get_or(j, "gamma", base.gamma);
  base.validate();
  return base;
}

std::optional<RoseConfig> parse_rose(const json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  if (j.is_boolean()) return j.get<bool>() ? std::optional<RoseConfig>(RoseConfig{}) : std::nullopt;
  check_keys(j, {"n_target", "smoothing", "scope"}, where);
  RoseConfig r;
  if (j.contains("n_target") && !j.at("n_target").is_null()) {
    if (j.at("n_target").is_string()) {
      if (j.at("n_target").get<std::string>() != "auto") throw ConfigError(where + ".n_target must be an integer or \"auto\"");
    } else {
      const auto v = j.at("n_target").get<long long>();
      if (v < 1) throw ConfigError(where + ".n_target must be at least 1");
      r.n_target = static_cast<std::size_t>(v);
    }
  }
  if (j.contains("smoothing") && !j.at("smoothing").is_null()) r.smoothing = j.at("smoothing").get<double>();
  const auto scope = get_or<std::string>(j, "scope", "batch");
  if (scope == "batch") r.scope = RoseScope::batch;
  else if (scope == "client") r.scope = RoseScope::client;
  else throw ConfigError(where + ".scope must be \"batch\" or \"client\"");
  r.validate();
  return r;
}

void check_path(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

ExperimentConfig parse_config_impl(const json& j, const fs::path& base_dir) {
  check_keys(j, {"seed", "output_dir", "dataset", "partition", "split", "models", "federation", "setups", "evaluation",
                 "tuner", "ablation", "variance"},
             "config");
  ExperimentConfig cfg;
  cfg.source = j;
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

  // dataset
  const json& dj = j.at("dataset");
  const auto type = dj.at("type").get<std::string>();
  if (type == "csv") {
    check_keys(dj, {"type", "path", "schema"}, "dataset");
    cfg.dataset.kind = DatasetConfig::Kind::csv;
    cfg.dataset.path = base_dir / dj.at("path").get<std::string>();
    cfg.dataset.schema = base_dir / dj.at("schema").get<std::string>();
    check_path(cfg.dataset.path, "dataset file");
    check_path(cfg.dataset.schema, "schema file");
    load_schema(cfg.dataset.schema);
  } else if (type == "synthetic") {
    check_keys(dj, {"type", "preset", "n", "spec"}, "dataset");
    cfg.dataset.kind = DatasetConfig::Kind::synthetic;
    if (dj.contains("spec")) {
      cfg.dataset.synthetic = synthetic_spec_from_json(dj.at("spec"));
    } else {
      const auto preset = get_or<std::string>(dj, "preset", "imbalanced");
      if (preset != "imbalanced") throw ConfigError("unknown synthetic preset '" + preset + "'");
      cfg.dataset.synthetic = imbalanced_synthetic_spec(get_or<Eigen::Index>(dj, "n", 2000), 0);
    }
    if (cfg.dataset.synthetic.n < 50) throw ConfigError("synthetic dataset needs at least 50 rows");
  } else {
    throw ConfigError("dataset.type must be \"csv\" or \"synthetic\"");
  }

  // partition
  if (j.contains("partition")) {
    const json& pj = j.at("partition");
    check_keys(pj, {"clients", "mode", "skew_attribute", "skew_weights"}, "partition");
    cfg.partition.client_count = get_or(pj, "clients", 5);
    const auto mode = get_or<std::string>(pj, "mode", "homogeneous");
    if (mode == "homogeneous") cfg.partition.mode = PartitionMode::homogeneous;
    else if (mode == "attribute-skewed") cfg.partition.mode = PartitionMode::attribute_skewed;
    else throw ConfigError("partition.mode must be \"homogeneous\" or \"attribute-skewed\"");
    cfg.partition.skew_attribute = get_or<std::string>(pj, "skew_attribute", "");
    cfg.partition.skew_weights = get_or<std::vector<std::vector<double>>>(pj, "skew_weights", {});
  }
  if (cfg.partition.client_count < 1) throw ConfigError("partition needs at least 1 client");

  if (j.contains("split")) {
    const auto s = j.at("split").get<std::vector<double>>();
    if (s.size() != 3) throw ConfigError("split must list three ratios (train, val, test)");
    cfg.split = {s[0], s[1], s[2]};
  }
  for (double r : cfg.split)
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  if (std::abs(cfg.split[0] + cfg.split[1] + cfg.split[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  if (j.contains("models")) {
    cfg.models.clear();
    for (const auto& m : j.at("models")) {
      try {
        cfg.models.push_back(parse_model_kind(m.get<std::string>()));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
    if (cfg.models.empty()) throw ConfigError("models must not be empty");
  }

  // federation
  FederationConfig& fc = cfg.federation;
  if (j.contains("federation")) {
    const json& fj = j.at("federation");
    check_keys(fj, {"strategy", "rounds", "local_epochs", "batch_size", "lr", "personalization_steps", "parallelism",
                    "penalty", "rose"},
               "federation");
    if (fj.contains("strategy")) fc.strategy = parse_strategy(fj.at("strategy").get<std::string>());
    fc.rounds = get_or(fj, "rounds", fc.rounds);
    if (fj.contains("local_epochs")) {
      const json& e = fj.at("local_epochs");
      fc.local_epochs = e.is_array() ? e.get<std::vector<int>>() : std::vector<int>{e.get<int>()};
    }
    fc.batch_size = get_or(fj, "batch_size", fc.batch_size);
    fc.lr = get_or(fj, "lr", fc.lr);
    fc.personalization_steps = get_or(fj, "personalization_steps", fc.personalization_steps);
    fc.parallelism = get_or(fj, "parallelism", fc.parallelism);
    if (fj.contains("penalty")) fc.penalty = parse_penalty(fj.at("penalty"), fc.penalty, "federation.penalty");
    if (fj.contains("rose")) fc.rose = parse_rose(fj.at("rose"), "federation.rose");
  }
  fc.validate(static_cast<std::size_t>(cfg.partition.client_count));

  // setups
  if (j.contains("setups")) {
    for (const auto& sj : j.at("setups")) {
      check_keys(sj, {"name", "strategy", "penalty", "rose"}, "setup");
      SetupConfig s;
      s.name = sj.at("name").get<std::string>();
      if (s.name.empty()) throw ConfigError("setup names must not be empty");
      s.strategy = sj.contains("strategy") ? parse_strategy(sj.at("strategy").get<std::string>()) : fc.strategy;
      s.penalty = sj.contains("penalty") ? parse_penalty(sj.at("penalty"), fc.penalty, "setup '" + s.name + "' penalty")
                                         : fc.penalty;
      s.rose = sj.contains("rose") ? parse_rose(sj.at("rose"), "setup '" + s.name + "' rose") : fc.rose;
      cfg.setups.push_back(std::move(s));
    }
  } else {
    cfg.setups.push_back({to_string(fc.strategy), fc.strategy, PenaltyConfig{fc.penalty.mode, 0.0, 0.0}, std::nullopt});
  }
  if (cfg.setups.empty()) throw ConfigError("setups must not be empty");
  std::set<std::string> names;
  for (const auto& s : cfg.setups)
    if (!names.insert(s.name).second) throw ConfigError("duplicate setup name '" + s.name + "'");

  // evaluation
  if (j.contains("evaluation")) {
    const json& ej = j.at("evaluation");
    check_keys(ej, {"threshold", "min_group_size", "metric_mode", "bootstrap_replicates", "stratified"}, "evaluation");
    auto& m = cfg.evaluation.metrics;
    m.threshold = get_or(ej, "threshold", m.threshold);
    const auto min_size = get_or<long long>(ej, "min_group_size", static_cast<long long>(m.min_group_size));
    if (min_size < 1) throw ConfigError("evaluation.min_group_size must be at least 1");
    m.min_group_size = static_cast<std::size_t>(min_size);
    if (ej.contains("metric_mode")) m.mode = parse_metric_mode(ej.at("metric_mode").get<std::string>());
    cfg.evaluation.bootstrap_replicates = get_or(ej, "bootstrap_replicates", cfg.evaluation.bootstrap_replicates);
    cfg.evaluation.stratified = get_or(ej, "stratified", cfg.evaluation.stratified);
  }
  if (!(cfg.evaluation.metrics.threshold > 0.0 && cfg.evaluation.metrics.threshold < 1.0))
    throw ConfigError("evaluation.threshold must be in (0, 1)");
  if (cfg.evaluation.bootstrap_replicates < 1) throw ConfigError("evaluation.bootstrap_replicates must be positive");

  // tuner
  if (j.contains("tuner")) {
    const json& tj = j.at("tuner");
    check_keys(tj, {"lambda_grid", "degradation_factor", "lambda_epochs", "lambda_count", "gamma_range", "m", "m_refine",
                    "setup"},
               "tuner");
    auto& t = cfg.tuner;
    t.lambda.grid = get_or(tj, "lambda_grid", t.lambda.grid);
    t.lambda.degradation_factor = get_or(tj, "degradation_factor", t.lambda.degradation_factor);
    t.lambda.epochs = get_or(tj, "lambda_epochs", t.lambda.epochs);
    t.lambda_count = get_or(tj, "lambda_count", t.lambda_count);
    if (tj.contains("gamma_range")) {
      const auto r = tj.at("gamma_range").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("tuner.gamma_range must have two entries");
      t.gamma_lo = r[0];
      t.gamma_hi = r[1];
    }
    t.m = get_or(tj, "m", t.m);
    t.m_refine = get_or(tj, "m_refine", t.m_refine);
    t.setup = get_or<std::string>(tj, "setup", "");
  }
  cfg.tuner.lambda.validate();
  if (cfg.tuner.lambda_count < 1) throw ConfigError("tuner.lambda_count must be at least 1");
  if (!(cfg.tuner.gamma_lo >= 0.0 && cfg.tuner.gamma_hi > cfg.tuner.gamma_lo))
    throw ConfigError("tuner.gamma_range must satisfy 0 <= lo < hi");
  if (cfg.tuner.m < 2 || cfg.tuner.m_refine < 2) throw ConfigError("tuner.m and tuner.m_refine must be at least 2");
  if (!cfg.tuner.setup.empty()) cfg.setup(cfg.tuner.setup);

  if (j.contains("ablation")) {
    const json& aj = j.at("ablation");
    check_keys(aj, {"lambdas", "oversampling"}, "ablation");
    cfg.ablation.lambdas = get_or(aj, "lambdas", cfg.ablation.lambdas);
    cfg.ablation.oversampling = get_or(aj, "oversampling", cfg.ablation.oversampling);
  }
  if (cfg.ablation.lambdas.empty() || cfg.ablation.oversampling.empty())
    throw ConfigError("ablation needs at least one lambda and one oversampling flag");
  for (double l : cfg.ablation.lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("ablation lambdas must be finite and non-negative");

  if (j.contains("variance")) {
    const json& vj = j.at("variance");
    check_keys(vj, {"baseline", "fedida"}, "variance");
    cfg.variance.baseline = get_or<std::string>(vj, "baseline", "");
    cfg.variance.fedida = get_or<std::string>(vj, "fedida", "");
    if (!cfg.variance.baseline.empty()) cfg.setup(cfg.variance.baseline);
    if (!cfg.variance.fedida.empty()) cfg.setup(cfg.variance.fedida);
  }
  return cfg;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "setup" : out;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const MetricSummary& m) {
  return {{"mean", num(m.mean)}, {"sd", num(m.sd)}, {"ci95_normal", {num(m.ci_lo), num(m.ci_hi)}}, {"n", m.n}};
}

std::string model_name(ModelKind k) { return std::string(to_string(k)); }

/// Writes files under the output directory and remembers them for the manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }

  void text(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
    if (!out) throw Error("write failed for " + p.string());
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void jsonl(const std::string& name, const std::vector<json>& lines) {
    std::string s;
    for (const auto& l : lines) s += l.dump() + "\n";
    text(name, s);
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

struct RunContext {
  const ExperimentConfig& cfg;
  const PreparedData& data;
  Artifacts& out;
};

json seeds_json(const ExperimentConfig& cfg) {
  return {{"seed", cfg.seed},
          {"partition", derive_seed(cfg.seed, {1})},
          {"split_base", derive_seed(cfg.seed, {2})},
          {"federation", derive_seed(cfg.seed, {3})},
          {"synthetic", derive_seed(cfg.seed, {4, cfg.dataset.synthetic.seed})},
          {"bootstrap", derive_seed(cfg.seed, {5})}};
}

struct Trained {
  FederationResult fed;
  std::vector<FairnessReport> reports;
};

Trained train_and_test(const RunContext& ctx, const std::string& setup_name, const FederationConfig& fc,
                       ModelKind model) {
  note("training " + setup_name + " / " + model_name(model));
  Trained t;
  t.fed = run_federation(ctx.data.train, fc);
  t.reports = test_reports(t.fed, ctx.data.test, ctx.cfg.evaluation.metrics, setup_name, model_name(model), ctx.cfg.seed);
  return t;
}

json params_json(const FederationResult& fed) {
  json clients = json::array();
  for (const auto& p : fed.client_models) clients.push_back(to_json(p));
  return {{"global", to_json(fed.global)}, {"clients", clients}};
}

std::vector<json> report_lines(const std::vector<FairnessReport>& reports, const std::vector<ColumnSchema>& sensitive) {
  std::vector<json> lines;
  for (const auto& r : reports) lines.push_back(to_json(r, sensitive));
  return lines;
}

void append_plot_rows(std::string& csv, const std::vector<FairnessReport>& reports) {
  for (const auto& r : reports) {
    const std::pair<const char*, double> metrics[] = {{"auroc", r.auroc}, {"dpd", r.dpd},   {"dpr", r.dpr},
                                                      {"dfpr", r.dfpr},   {"dppv", r.dppv}, {"accuracy", r.accuracy}};
    for (const auto& [name, v] : metrics)
      csv += csv_field(r.setup) + "," + csv_field(r.model) + "," + std::to_string(r.client) + "," + name + "," + fmt(v) + "\n";
  }
}

const SetupConfig& tuner_setup(const ExperimentConfig& cfg) {
  return cfg.tuner.setup.empty() ? cfg.setups.back() : cfg.setup(cfg.tuner.setup);
}

// ---------------------------------------------------------------------------

void cmd_run(const RunContext& ctx) {
  std::vector<ResultsRow> rows;
  std::vector<json> reports, traces;
  std::string plot = "setup,model,client,metric,value\n";
  for (ModelKind model : ctx.cfg.models) {
    for (const auto& s : ctx.cfg.setups) {
      const auto t = train_and_test(ctx, s.name, ctx.cfg.federation_for(s, model), model);
      rows.push_back(summarize_reports(s.name, model_name(model), t.reports));
      for (auto& l : report_lines(t.reports, ctx.data.sensitive)) reports.push_back(std::move(l));
      for (const auto& tr : t.fed.traces) {
        json line = to_json(tr);
        line["setup"] = s.name;
        line["model"] = model_name(model);
        traces.push_back(std::move(line));
      }
      append_plot_rows(plot, t.reports);
      ctx.out.json_file("params/" + slug(s.name) + "_" + model_name(model) + ".json", params_json(t.fed));
    }
  }
  ctx.out.text("results.csv", results_csv(rows));
  ctx.out.json_file("results.json", results_json(rows));
  ctx.out.jsonl("client_reports.jsonl", reports);
  ctx.out.jsonl("traces.jsonl", traces);
  ctx.out.text("plot_data.csv", plot);
}

void cmd_tune_lambda(const RunContext& ctx) {
  const auto& setup = tuner_setup(ctx.cfg);
  json doc = {{"setup", setup.name}, {"degradation_factor", ctx.cfg.tuner.lambda.degradation_factor},
              {"grid", ctx.cfg.tuner.lambda.grid}, {"models", json::object()}};
  for (ModelKind model : ctx.cfg.models) {
    const auto fc = ctx.cfg.federation_for(setup, model);
    const std::size_t k = ctx.data.train.size();
    std::vector<LambdaSearchTrace> traces(k);
    note("lambda search for " + model_name(model));
    parallel_for(k, fc.parallelism, [&](std::size_t c) {
      traces[c] = search_lambda_local(ctx.data.train[c], ctx.data.val[c], fc, ctx.cfg.tuner.lambda,
                                      derive_seed(fc.seed, {c, 0x6c616d626461ULL}), ctx.cfg.evaluation.metrics.threshold);
    });
    std::vector<double> selected;
    json clients = json::array();
    for (std::size_t c = 0; c < k; ++c) {
      selected.push_back(traces[c].selected);
      json tj = to_json(traces[c]);
      tj["client"] = c;
      clients.push_back(std::move(tj));
    }
    std::string warning;
    const auto candidates = combine_lambda(selected, ctx.cfg.tuner.lambda_count, &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << '\n';
    doc["models"][model_name(model)] = {{"clients", clients},
                                        {"lambda_max", *std::min_element(selected.begin(), selected.end())},
                                        {"candidates", candidates},
                                        {"warning", warning.empty() ? json(nullptr) : json(warning)}};
  }
  ctx.out.json_file("lambda_search.json", doc);
}

void cmd_tune_gamma(const RunContext& ctx) {
  const auto& setup = tuner_setup(ctx.cfg);
  json doc = {{"setup", setup.name},
              {"lambda", setup.penalty.lambda},
              {"gamma_range", {ctx.cfg.tuner.gamma_lo, ctx.cfg.tuner.gamma_hi}},
              {"m", ctx.cfg.tuner.m},
              {"m_refine", ctx.cfg.tuner.m_refine},
              {"models", json::object()}};
  std::vector<ResultsRow> rows;
  std::vector<json> reports;
  for (ModelKind model : ctx.cfg.models) {
    const auto fc = ctx.cfg.federation_for(setup, model);
    note("gamma search for " + model_name(model));
    const auto run = fedida_full(ctx.data.train, ctx.data.val, fc, ctx.cfg.tuner.gamma_lo, ctx.cfg.tuner.gamma_hi,
                                 ctx.cfg.tuner.m, ctx.cfg.tuner.m_refine, ctx.cfg.evaluation.metrics);
    doc["models"][model_name(model)] = to_json(run);
    const auto test = test_reports(run.model, ctx.data.test, ctx.cfg.evaluation.metrics, setup.name, model_name(model),
                                   ctx.cfg.seed);
    rows.push_back(summarize_reports(setup.name, model_name(model), test));
    for (auto& l : report_lines(test, ctx.data.sensitive)) reports.push_back(std::move(l));
    ctx.out.json_file("params/" + slug(setup.name) + "_" + model_name(model) + "_tuned.json", params_json(run.model));
  }
  ctx.out.json_file("gamma_search.json", doc);
  ctx.out.text("tuned_results.csv", results_csv(rows));
  ctx.out.jsonl("tuned_client_reports.jsonl", reports);
}

void cmd_variance(const RunContext& ctx) {
  const int replicates = ctx.cfg.evaluation.bootstrap_replicates;
  if (replicates < 10) throw ConfigError("variance study needs at least 10 bootstrap replicates, got " + std::to_string(replicates));
  const auto& base = ctx.cfg.variance.baseline.empty() ? ctx.cfg.setups.front() : ctx.cfg.setup(ctx.cfg.variance.baseline);
  const auto& fed = ctx.cfg.variance.fedida.empty() ? ctx.cfg.setups.back() : ctx.cfg.setup(ctx.cfg.variance.fedida);
  const TabularDataset pooled = TabularDataset::concat(ctx.data.test);
  json doc = {{"baseline", base.name}, {"fedida", fed.name}, {"test_rows", pooled.rows()}, {"models", json::object()}};
  std::string csv = "model,metric,var_baseline,var_fedida,difference,n_baseline,n_fedida\n";
  for (ModelKind model : ctx.cfg.models) {
    const auto fb = run_federation(ctx.data.train, ctx.cfg.federation_for(base, model));
    const auto ff = run_federation(ctx.data.train, ctx.cfg.federation_for(fed, model));
    note("bootstrap variance for " + model_name(model));
    const auto rep = variance_study(fb.global, ff.global, pooled, ctx.cfg.evaluation.metrics, replicates,
                                    ctx.cfg.evaluation.stratified, derive_seed(ctx.cfg.seed, {5}),
                                    ctx.cfg.federation.parallelism);
    doc["models"][model_name(model)] = to_json(rep);
    for (const auto& r : rep.rows)
      csv += model_name(model) + "," + to_string(r.metric) + "," + fmt(r.var_baseline) + "," + fmt(r.var_fedida) + "," +
             fmt(r.difference()) + "," + std::to_string(r.n_baseline) + "," + std::to_string(r.n_fedida) + "\n";
  }
  ctx.out.json_file("variance.json", doc);
  ctx.out.text("variance.csv", csv);
}

void cmd_ablation(const RunContext& ctx) {
  const auto cells = ablation_cells(ctx.cfg.ablation);
  std::string csv = "variant,lambda,oversampling,model";
  for (const char* m : {"auroc", "dpd", "dpr", "dfpr", "dppv"}) csv += std::string(",") + m + "_mean," + m + "_sd";
  csv += "\n";
  json rows = json::array();
  std::vector<json> reports;
  for (ModelKind model : ctx.cfg.models) {
    for (const auto& cell : cells) {
      SetupConfig s;
      s.name = cell.variant + (cell.lambda > 0.0 ? " (lambda=" + fmt(cell.lambda) + ")" : "");
      s.strategy = ctx.cfg.federation.strategy;
      s.penalty = ctx.cfg.federation.penalty;
      s.penalty.lambda = cell.lambda;
      if (cell.lambda == 0.0 && !cell.oversampling) s.penalty.gamma = 0.0;
      if (cell.oversampling) s.rose = ctx.cfg.federation.rose ? ctx.cfg.federation.rose : std::optional<RoseConfig>(RoseConfig{});
      const auto t = train_and_test(ctx, s.name, ctx.cfg.federation_for(s, model), model);
      const auto row = summarize_reports(s.name, model_name(model), t.reports);
      csv += csv_field(cell.variant) + "," + fmt(cell.lambda) + "," + (cell.oversampling ? "yes" : "no") + "," +
             model_name(model);
      for (const auto* m : {&row.auroc, &row.dpd, &row.dpr, &row.dfpr, &row.dppv}) csv += "," + fmt(m->mean) + "," + fmt(m->sd);
      csv += "\n";
      rows.push_back({{"variant", cell.variant},
                      {"lambda", cell.lambda},
                      {"oversampling", cell.oversampling},
                      {"model", model_name(model)},
                      {"auroc", to_json(row.auroc)},
                      {"dpd", to_json(row.dpd)},
                      {"dpr", to_json(row.dpr)},
                      {"dfpr", to_json(row.dfpr)},
                      {"dppv", to_json(row.dppv)}});
      for (auto& l : report_lines(t.reports, ctx.data.sensitive)) reports.push_back(std::move(l));
    }
  }
  ctx.out.text("ablation.csv", csv);
  ctx.out.json_file("ablation.json", {{"rows", rows}});
  ctx.out.jsonl("ablation_client_reports.jsonl", reports);
}

std::string cell(const json& m) {
  if (!m.is_object() || m.at("mean").is_null()) return "n/a";
  char buf[64];
  const double sd = m.at("sd").is_null() ? 0.0 : m.at("sd").get<double>();
  std::snprintf(buf, sizeof buf, "%.3f +- %.3f", m.at("mean").get<double>(), sd);
  return buf;
}

void cmd_report(Artifacts& out) {
  std::ostringstream md;
  bool any = false;
  auto read = [&](const char* name) -> std::optional<json> {
    std::ifstream in(out.dir() / name);
    if (!in) return std::nullopt;
    any = true;
    return json::parse(in);
  };
  if (auto r = read("results.json")) {
    md << "## Results (mean +- sd over clients)\n\n| setup | model | AUROC | DPD | DPR | DFPR | DPPV |\n|---|---|---|---|---|---|---|\n";
    for (const auto& row : r->at("rows"))
      md << "| " << row.at("setup").get<std::string>() << " | " << row.at("model").get<std::string>() << " | "
         << cell(row.at("auroc")) << " | " << cell(row.at("dpd")) << " | " << cell(row.at("dpr")) << " | "
         << cell(row.at("dfpr")) << " | " << cell(row.at("dppv")) << " |\n";
    md << "\n";
  }
  if (auto a = read("ablation.json")) {
    md << "## Ablation\n\n| variant | lambda | oversampling | model | AUROC | DPD | DPR | DFPR | DPPV |\n|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& row : a->at("rows"))
      md << "| " << row.at("variant").get<std::string>() << " | " << fmt(row.at("lambda").get<double>()) << " | "
         << (row.at("oversampling").get<bool>() ? "yes" : "no") << " | " << row.at("model").get<std::string>() << " | "
         << cell(row.at("auroc")) << " | " << cell(row.at("dpd")) << " | " << cell(row.at("dpr")) << " | "
         << cell(row.at("dfpr")) << " | " << cell(row.at("dppv")) << " |\n";
    md << "\n";
  }
  if (auto v = read("variance.json")) {
    md << "## Bootstrap variance (" << v->at("baseline").get<std::string>() << " vs " << v->at("fedida").get<std::string>()
       << ")\n\n| model | metric | var baseline | var FedIDA | difference |\n|---|---|---|---|---|\n";
    for (const auto& [model, rep] : v->at("models").items())
      for (const auto& row : rep.at("rows"))
        md << "| " << model << " | " << row.at("metric").get<std::string>() << " | "
           << (row.at("var_baseline").is_null() ? "n/a" : fmt(row.at("var_baseline").get<double>())) << " | "
           << (row.at("var_fedida").is_null() ? "n/a" : fmt(row.at("var_fedida").get<double>())) << " | "
           << (row.at("difference").is_null() ? "n/a" : fmt(row.at("difference").get<double>())) << " |\n";
    md << "\n";
  }
  if (auto g = read("gamma_search.json")) {
    md << "## Gamma search\n\n";
    for (const auto& [model, run] : g->at("models").items())
      md << "- " << model << ": gamma_s = " << fmt(run.at("gamma_s").get<double>())
         << ", gamma_final = " << fmt(run.at("gamma_final").get<double>()) << "\n";
    md << "\n";
  }
  if (auto l = read("lambda_search.json")) {
    md << "## Lambda search\n\n";
    for (const auto& [model, res] : l->at("models").items()) {
      md << "- " << model << ": lambda_max = " << fmt(res.at("lambda_max").get<double>()) << ", candidates =";
      for (const auto& c : res.at("candidates")) md << " " << fmt(c.get<double>());
      md << "\n";
    }
    md << "\n";
  }
  if (!any) throw Error("no results found in " + out.dir().string() + "; run another command first");
  out.text("report.md", md.str());
  std::cout << md.str();
}

/// One manifest per output directory: commands run with the same config hash
/// accumulate under "runs"; a different hash starts over.
void write_manifest(const fs::path& path, const std::string& command, const json& run) {
  json doc;
  if (std::ifstream in(path); in) {
    try {
      doc = json::parse(in);
    } catch (const json::exception&) {
      doc = json();
    }
  }
  if (!doc.is_object() || doc.value("config_hash", "") != run.at("config_hash").get<std::string>() ||
      !doc.contains("runs")) {
    doc = {{"config_hash", run.at("config_hash")}, {"config", run.at("config")}, {"seeds", run.at("seeds")},
           {"runs", json::object()}};
  }
  json entry = run;
  entry.erase("config");
  entry.erase("config_hash");
  entry.erase("seeds");
  doc["runs"][command] = entry;
  std::set<std::string> files;
  bool failed = false;
  for (const auto& [name, r] : doc["runs"].items()) {
    for (const auto& f : r.at("artifacts")) files.insert(f.get<std::string>());
    failed = failed || r.at("status") != "ok";
  }
  doc["artifacts"] = files;
  doc["status"] = failed ? "failed" : "ok";
  std::ofstream out(path, std::ios::binary);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------

const SetupConfig& ExperimentConfig::setup(const std::string& name) const {
  for (const auto& s : setups)
    if (s.name == name) return s;
  throw ConfigError("no setup named '" + name + "'");
}

FederationConfig ExperimentConfig::federation_for(const SetupConfig& s, ModelKind model) const {
  FederationConfig fc = federation;
  fc.strategy = s.strategy;
  fc.penalty = s.penalty;
  fc.rose = s.rose;
  fc.model = model;
  fc.seed = derive_seed(seed, {3});
  return fc;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  try {
    return parse_config_impl(j, base_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.source["seed"] = seed;
}

std::string config_hash(const json& j) {
  json content = j;
  if (content.is_object()) content.erase("output_dir");
  const std::string s = content.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  TabularDataset ds;
  if (cfg.dataset.kind == DatasetConfig::Kind::csv) {
    note("loading " + cfg.dataset.path.string());
    ds = load_csv(cfg.dataset.path, load_schema(cfg.dataset.schema), LoadOptions{false});
  } else {
    SyntheticSpec spec = cfg.dataset.synthetic;
    spec.seed = derive_seed(cfg.seed, {4, spec.seed});
    ds = generate_synthetic(spec);
  }
  PartitionPlan plan = cfg.partition;
  plan.seed = derive_seed(cfg.seed, {1});
  const auto parts = partition(ds, plan);
  PreparedData out;
  out.sensitive = ds.sensitive;
  out.dropped_rows = ds.dropped_rows;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto sp = split_train_val_test(parts[k], cfg.split[0], cfg.split[1], cfg.split[2], derive_seed(cfg.seed, {2, k}));
    out.train.push_back(std::move(sp.train));
    out.val.push_back(std::move(sp.val));
    out.test.push_back(std::move(sp.test));
  }
  const auto st = Standardizer::fit(TabularDataset::concat(out.train));
  for (auto* group : {&out.train, &out.val, &out.test})
    for (auto& d : *group) st.apply(d);
  return out;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary m;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++m.n;
    }
  if (m.n == 0) {
    m.mean = m.sd = m.ci_lo = m.ci_hi = kNaN;
    return m;
  }
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0.0;
  for (double v : values)
    if (std::isfinite(v)) ss += (v - m.mean) * (v - m.mean);
  m.sd = m.n > 1 ? std::sqrt(ss / static_cast<double>(m.n - 1)) : 0.0;
  const double half = 1.96 * m.sd / std::sqrt(static_cast<double>(m.n));
  m.ci_lo = m.mean - half;
  m.ci_hi = m.mean + half;
  return m;
}

ResultsRow summarize_reports(const std::string& setup, const std::string& model,
                             const std::vector<FairnessReport>& reports) {
  auto collect = [&](double FairnessReport::*f) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.*f);
    return summarize(v);
  };
  return {setup,
          model,
          collect(&FairnessReport::auroc),
          collect(&FairnessReport::dpd),
          collect(&FairnessReport::dpr),
          collect(&FairnessReport::dfpr),
          collect(&FairnessReport::dppv),
          collect(&FairnessReport::accuracy)};
}

std::string results_csv(const std::vector<ResultsRow>& rows) {
  std::string s = "setup,model";
  for (const char* m : {"auroc", "dpd", "dpr", "dfpr", "dppv", "accuracy"})
    for (const char* f : {"mean", "sd", "ci95_lo", "ci95_hi", "n"}) s += std::string(",") + m + "_" + f;
  s += "\n";
  for (const auto& r : rows) {
    s += csv_field(r.setup) + "," + csv_field(r.model);
    for (const auto* m : {&r.auroc, &r.dpd, &r.dpr, &r.dfpr, &r.dppv, &r.accuracy})
      s += "," + fmt(m->mean) + "," + fmt(m->sd) + "," + fmt(m->ci_lo) + "," + fmt(m->ci_hi) + "," + std::to_string(m->n);
    s += "\n";
  }
  return s;
}

json results_json(const std::vector<ResultsRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"setup", r.setup},
                   {"model", r.model},
                   {"auroc", to_json(r.auroc)},
                   {"dpd", to_json(r.dpd)},
                   {"dpr", to_json(r.dpr)},
                   {"dfpr", to_json(r.dfpr)},
                   {"dppv", to_json(r.dppv)},
                   {"accuracy", to_json(r.accuracy)}});
  return {{"rows", out}, {"sd", "sample standard deviation over clients"}, {"ci", "normal approximation, 95%"}};
}

std::vector<FairnessReport> test_reports(const FederationResult& fed, const std::vector<TabularDataset>& test,
                                         const MetricOptions& opts, const std::string& setup, const std::string& model,
                                         std::uint64_t seed) {
  auto reports = validate_clients(fed, test, opts);
  for (auto& r : reports) {
    r.setup = setup;
    r.model = model;
    r.seed = seed;
  }
  return reports;
}

RowList bootstrap_rows(const SubgroupIndex& index, Eigen::Index rows, bool stratified, Rng& rng) {
  RowList out;
  out.reserve(static_cast<std::size_t>(rows));
  if (stratified) {
    for (const auto& [key, members] : index.groups) {
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      for (std::size_t i = 0; i < members.size(); ++i) out.push_back(members[pick(rng)]);
    }
  } else {
    std::uniform_int_distribution<Eigen::Index> pick(0, rows - 1);
    for (Eigen::Index i = 0; i < rows; ++i) out.push_back(pick(rng));
  }
  return out;
}

VarianceReport variance_study(const ModelParams& baseline, const ModelParams& fedida, const TabularDataset& test,
                              const MetricOptions& opts, int replicates, bool stratified, std::uint64_t seed,
                              int parallelism) {
  if (replicates < 10)
    throw ConfigError("variance study needs at least 10 bootstrap replicates, got " + std::to_string(replicates));
  if (test.empty()) throw Error("variance study: empty test set");
  const auto index = build_subgroup_index(test, false);
  const Vector pb = forward(baseline, test.a).probs;
  const Vector pf = forward(fedida, test.a).probs;
  constexpr MetricId ids[4] = {MetricId::dpd, MetricId::dpr, MetricId::dfpr, MetricId::dppv};

  VarianceReport rep;
  rep.replicates = replicates;
  rep.stratified = stratified;
  rep.baseline_values.resize(static_cast<std::size_t>(replicates));
  rep.fedida_values.resize(static_cast<std::size_t>(replicates));
  parallel_for(static_cast<std::size_t>(replicates), parallelism, [&](std::size_t r) {
    Rng rng(derive_seed(seed, {r}));
    const RowList rows = bootstrap_rows(index, test.rows(), stratified, rng);
    const IndexMatrix s = test.s(rows, Eigen::all);
    const Labels y = test.y(rows);
    const auto idx = build_subgroup_index(s, y, false);
    const Vector sb = pb(rows), sf = pf(rows);
    for (int m = 0; m < 4; ++m) {
      auto value = [&](const Vector& scores) {
        try {
          return metric_value(ids[m], scores, y, idx, opts);
        } catch (const Error&) {
          return kNaN;
        }
      };
      rep.baseline_values[r][static_cast<std::size_t>(m)] = value(sb);
      rep.fedida_values[r][static_cast<std::size_t>(m)] = value(sf);
    }
  });

  auto variance = [](const std::vector<std::array<double, 4>>& vals, int m, std::size_t& n) {
    double sum = 0.0;
    n = 0;
    for (const auto& v : vals)
      if (std::isfinite(v[static_cast<std::size_t>(m)])) {
        sum += v[static_cast<std::size_t>(m)];
        ++n;
      }
    if (n == 0) return kNaN;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& v : vals)
      if (std::isfinite(v[static_cast<std::size_t>(m)])) ss += (v[static_cast<std::size_t>(m)] - mean) * (v[static_cast<std::size_t>(m)] - mean);
    return ss / static_cast<double>(n);
  };
  for (int m = 0; m < 4; ++m) {
    VarianceRow row;
    row.metric = ids[m];
    row.var_baseline = variance(rep.baseline_values, m, row.n_baseline);
    row.var_fedida = variance(rep.fedida_values, m, row.n_fedida);
    rep.rows.push_back(row);
  }
  return rep;
}

json to_json(const VarianceReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"metric", to_string(r.metric)},
                    {"var_baseline", num(r.var_baseline)},
                    {"var_fedida", num(r.var_fedida)},
                    {"difference", num(r.difference())},
                    {"n_baseline", r.n_baseline},
                    {"n_fedida", r.n_fedida}});
  auto values = [](const std::vector<std::array<double, 4>>& vals) {
    json out = json::array();
    for (const auto& v : vals) out.push_back({num(v[0]), num(v[1]), num(v[2]), num(v[3])});
    return out;
  };
  return {{"replicates", report.replicates},
          {"stratified", report.stratified},
          {"variance", "population (divisor = replicates with a defined value)"},
          {"rows", rows},
          {"replicate_columns", {"dpd", "dpr", "dfpr", "dppv"}},
          {"baseline_values", values(report.baseline_values)},
          {"fedida_values", values(report.fedida_values)}};
}

std::vector<AblationCell> ablation_cells(const AblationConfig& cfg) {
  const bool on = std::find(cfg.oversampling.begin(), cfg.oversampling.end(), true) != cfg.oversampling.end();
  const bool off = std::find(cfg.oversampling.begin(), cfg.oversampling.end(), false) != cfg.oversampling.end();
  std::vector<double> positive;
  for (double l : cfg.lambdas)
    if (l > 0.0 && std::find(positive.begin(), positive.end(), l) == positive.end()) positive.push_back(l);
  std::vector<AblationCell> cells{{"Baseline", 0.0, false}};
  if (off)
    for (double l : positive) cells.push_back({"Fairness Only", l, false});
  if (on) {
    cells.push_back({"Oversampling Only", 0.0, true});
    for (double l : positive) cells.push_back({"FedIDA", l, true});
  }
  return cells;
}

std::string to_string(Command c) {
  switch (c) {
    case Command::run: return "run";
    case Command::tune_lambda: return "tune-lambda";
    case Command::tune_gamma: return "tune-gamma";
    case Command::variance_study: return "variance-study";
    case Command::ablation: return "ablation";
    case Command::report: return "report";
  }
  return "?";
}

fs::path resolve_output_dir(const CommandOptions& opts, const ExperimentConfig& cfg) {
  if (opts.output_dir) return *opts.output_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("FEDIDA_OUTPUT_DIR"); env && *env) return env;
  return "fedida-out";
}

int run_command(Command command, const CommandOptions& opts) {
  g_verbosity = opts.verbosity;
  ExperimentConfig cfg;
  try {
    cfg = load_config(opts.config);
    if (opts.seed) override_seed(cfg, *opts.seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  json manifest = {{"command", to_string(command)},
                   {"config_path", opts.config.string()},
                   {"config_hash", config_hash(cfg.source)},
                   {"config", cfg.source},
                   {"seeds", seeds_json(cfg)},
                   {"status", "running"}};

  std::optional<Artifacts> out;
  int code = 0;
  try {
    out.emplace(resolve_output_dir(opts, cfg));
    if (command == Command::report) {
      cmd_report(*out);
    } else {
      const PreparedData data = prepare_data(cfg);
      manifest["dropped_rows"] = data.dropped_rows;
      json sizes = json::array();
      for (std::size_t k = 0; k < data.train.size(); ++k)
        sizes.push_back({{"client", k}, {"train", data.train[k].rows()}, {"val", data.val[k].rows()}, {"test", data.test[k].rows()}});
      manifest["clients"] = sizes;
      const RunContext ctx{cfg, data, *out};
      switch (command) {
        case Command::run: cmd_run(ctx); break;
        case Command::tune_lambda: cmd_tune_lambda(ctx); break;
        case Command::tune_gamma: cmd_tune_gamma(ctx); break;
        case Command::variance_study: cmd_variance(ctx); break;
        case Command::ablation: cmd_ablation(ctx); break;
        case Command::report: break;
      }
    }
    manifest["status"] = "ok";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    code = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    code = 3;
  }
  if (out) {
    manifest["artifacts"] = out->files();
    try {
      write_manifest(out->dir() / "manifest.json", to_string(command), manifest);
    } catch (const std::exception& e) {
      std::cerr << "error: cannot write manifest: " << e.what() << '\n';
      if (code == 0) code = 3;
    }
  }
  return code;
}

}  // namespace fedida
