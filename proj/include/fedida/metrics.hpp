#ifndef FEDIDA_METRICS_HPP
#define FEDIDA_METRICS_HPP

#include "fedida/data.hpp"
#include "fedida/types.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace fedida {

/// hard: group rates of 1[score >= threshold]. soft: group means of the scores
/// themselves. PPV always conditions on the thresholded prediction.
enum class MetricMode { hard, soft };
enum class MetricId { dpd, dpr, dfpr, dppv };

std::string to_string(MetricMode mode);
MetricMode parse_metric_mode(const std::string& name);
std::string to_string(MetricId id);

struct MetricOptions {
  double threshold = 0.5;
  std::size_t min_group_size = 5;
  MetricMode mode = MetricMode::hard;
};

/// Mann-Whitney U / (n_pos * n_neg) with midranks for ties.
double auroc(const Vector& scores, const Labels& y);

/// Per-group statistics behind every parity metric.
struct GroupStats {
  std::size_t size = 0;
  std::size_t negatives = 0;
  std::size_t predicted_positive = 0;
  double positive_rate = 0.0;  // NaN when size == 0
  double fpr = 0.0;            // NaN without negatives
  double ppv = 0.0;            // NaN without predicted positives
};

std::map<GroupKey, GroupStats> group_stats(const Vector& scores, const Labels& y, const SubgroupIndex& index,
                                           const MetricOptions& opts);

struct GapResult {
  double gap = 0.0;
  std::map<GroupKey, double> rates;  // eligible groups only
  std::vector<GroupKey> skipped;
};

struct ParityResult {
  double dpd = 0.0;
  double dpr = 0.0;
  std::map<GroupKey, double> rates;
  std::vector<GroupKey> skipped;
};

ParityResult demographic_parity(const Vector& scores, const Labels& y, const SubgroupIndex& index,
                                const MetricOptions& opts = {});
GapResult dfpr(const Vector& scores, const Labels& y, const SubgroupIndex& index, const MetricOptions& opts = {});
GapResult dppv(const Vector& scores, const Labels& y, const SubgroupIndex& index, const MetricOptions& opts = {});

/// Value of one metric; throws like the underlying operation.
double metric_value(MetricId id, const Vector& scores, const Labels& y, const SubgroupIndex& index,
                    const MetricOptions& opts);

struct FairnessReport {
  double auroc = 0.0;
  double dpd = 0.0;
  double dpr = 0.0;
  double dfpr = 0.0;
  double dppv = 0.0;
  double accuracy = 0.0;
  std::map<GroupKey, double> per_group_positive_rate;
  std::map<GroupKey, double> per_group_fpr;
  std::map<GroupKey, double> per_group_ppv;
  std::map<std::string, std::vector<GroupKey>> skipped_groups;  // "dp", "fpr", "ppv"
  MetricOptions options;
  std::size_t rows = 0;
  // provenance
  std::string setup;
  std::string model;
  int client = -1;
  std::uint64_t seed = 0;
};

/// Full report. Metrics whose preconditions fail are NaN (serialized as null)
/// instead of aborting the whole evaluation.
FairnessReport evaluate(const Vector& probs, const Labels& y, const SubgroupIndex& index, const MetricOptions& opts);

nlohmann::json to_json(const FairnessReport& report, const std::vector<ColumnSchema>& sensitive);

struct ProbeResult {
  double before = 0.0;
  double after = 0.0;
  double bound = 0.0;
};

/// Replaces one row's (score, label) and recomputes `metric`. The bound is the
/// largest move of the affected group's conditional mean (1/size of the set it
/// averages over); for DPR it is scaled by 1/delta^2 with delta the smallest
/// group rate before or after. When the eligible group set changes the bound
/// falls back to 1, the range of every metric.
ProbeResult perturbation_probe(MetricId metric, const Vector& scores, const Labels& y, const SubgroupIndex& index,
                               Eigen::Index row, double new_score, int new_label, const MetricOptions& opts);

}  // namespace fedida

#endif  // FEDIDA_METRICS_HPP
