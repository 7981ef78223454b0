#ifndef FEDIDA_EXPERIMENT_HPP
#define FEDIDA_EXPERIMENT_HPP

// Config-driven pipelines behind the command-line tool.

#include "fedida/data.hpp"
#include "fedida/federation.hpp"
#include "fedida/metrics.hpp"
#include "fedida/tuner.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fedida {

struct DatasetConfig {
  enum class Kind { csv, synthetic } kind = Kind::synthetic;
  std::filesystem::path path;
  std::filesystem::path schema;
  SyntheticSpec synthetic;
};

/// One trained configuration, e.g. "FedAvg" or "FedIDA (FedAvg)".
struct SetupConfig {
  std::string name;
  Strategy strategy = Strategy::fedavg;
  PenaltyConfig penalty;
  std::optional<RoseConfig> rose;
};

struct EvaluationConfig {
  MetricOptions metrics;
  int bootstrap_replicates = 30;
  bool stratified = true;
};

struct TunerConfig {
  LambdaSearchConfig lambda;
  int lambda_count = 4;
  double gamma_lo = 0.0001;
  double gamma_hi = 0.1;
  int m = 10;
  int m_refine = 10;
  std::string setup;  // setup whose penalty/oversampling the tuner uses; empty = last
};

struct AblationConfig {
  std::vector<double> lambdas{2.0, 3.0};
  std::vector<bool> oversampling{true, false};
};

struct VarianceConfig {
  std::string baseline;  // setup names; empty = first and last setup
  std::string fedida;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  DatasetConfig dataset;
  PartitionPlan partition;
  std::array<double, 3> split{0.7, 0.1, 0.2};
  std::vector<ModelKind> models{ModelKind::linear};
  FederationConfig federation;  // shared settings; setups override strategy, penalty and rose
  std::vector<SetupConfig> setups;
  EvaluationConfig evaluation;
  TunerConfig tuner;
  AblationConfig ablation;
  VarianceConfig variance;
  nlohmann::json source;  // parsed document after overrides

  const SetupConfig& setup(const std::string& name) const;
  /// Federation settings for one setup and model.
  FederationConfig federation_for(const SetupConfig& s, ModelKind model) const;
};

/// Parses and validates; relative paths resolve against `base_dir`. Throws
/// ConfigError on any problem, before anything is computed.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Replaces the seed everywhere it propagates.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

/// FNV-1a of the canonical JSON dump without "output_dir", as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

struct PreparedData {
  std::vector<TabularDataset> train, val, test;
  std::vector<ColumnSchema> sensitive;
  std::size_t dropped_rows = 0;
};

/// Load or generate, partition, split per client, then standardize continuous
/// features with statistics of the pooled training splits.
PreparedData prepare_data(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Results

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample sd over clients; 0 for a single client
  double ci_lo = 0.0;
  double ci_hi = 0.0;  // normal approximation, mean +- 1.96 sd / sqrt(n)
  std::size_t n = 0;   // clients with a defined value
};

/// Summary of the finite entries of `values`.
MetricSummary summarize(const std::vector<double>& values);

struct ResultsRow {
  std::string setup;
  std::string model;
  MetricSummary auroc, dpd, dpr, dfpr, dppv, accuracy;
};

ResultsRow summarize_reports(const std::string& setup, const std::string& model,
                             const std::vector<FairnessReport>& reports);

std::string results_csv(const std::vector<ResultsRow>& rows);
nlohmann::json results_json(const std::vector<ResultsRow>& rows);

/// Per-client test reports for every client model.
std::vector<FairnessReport> test_reports(const FederationResult& fed, const std::vector<TabularDataset>& test,
                                         const MetricOptions& opts, const std::string& setup, const std::string& model,
                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Variance study

struct VarianceRow {
  MetricId metric = MetricId::dpd;
  double var_baseline = 0.0;
  double var_fedida = 0.0;
  std::size_t n_baseline = 0;  // replicates with a defined value
  std::size_t n_fedida = 0;
  double difference() const { return var_fedida - var_baseline; }
};

struct VarianceReport {
  int replicates = 0;
  bool stratified = true;
  std::vector<VarianceRow> rows;  // dpd, dpr, dfpr, dppv
  std::vector<std::array<double, 4>> baseline_values;  // per replicate, NaN when undefined
  std::vector<std::array<double, 4>> fedida_values;
};

/// Row indices of one bootstrap replicate. Stratified resampling draws with
/// replacement inside every sensitive subgroup, keeping its count.
RowList bootstrap_rows(const SubgroupIndex& index, Eigen::Index rows, bool stratified, Rng& rng);

/// Population variance (divisor T) of each metric over `replicates` bootstrap
/// test sets, evaluated for both models on the same resamples.
VarianceReport variance_study(const ModelParams& baseline, const ModelParams& fedida, const TabularDataset& test,
                              const MetricOptions& opts, int replicates, bool stratified, std::uint64_t seed,
                              int parallelism = 1);

nlohmann::json to_json(const VarianceReport& report);

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  std::string variant;  // Baseline, Fairness Only, Oversampling Only, FedIDA
  double lambda = 0.0;
  bool oversampling = false;
};

/// Baseline first, then fairness-only per lambda, oversampling-only, FedIDA per
/// lambda. Zero lambdas fold into the baseline/oversampling-only rows.
std::vector<AblationCell> ablation_cells(const AblationConfig& cfg);

// ---------------------------------------------------------------------------
// Commands. Each writes its artifacts and manifest.json under the output
// directory; on failure the manifest records status "failed".

enum class Command { run, tune_lambda, tune_gamma, variance_study, ablation, report };

std::string to_string(Command c);

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  int verbosity = 0;
};

/// Resolution order: flag, config "output_dir", FEDIDA_OUTPUT_DIR, "fedida-out".
std::filesystem::path resolve_output_dir(const CommandOptions& opts, const ExperimentConfig& cfg);

/// Returns the process exit code: 0 success, 2 configuration error, 3 runtime failure.
int run_command(Command command, const CommandOptions& opts);

}  // namespace fedida

#endif  // FEDIDA_EXPERIMENT_HPP
