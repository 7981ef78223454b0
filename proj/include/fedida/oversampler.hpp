#ifndef FEDIDA_OVERSAMPLER_HPP
#define FEDIDA_OVERSAMPLER_HPP

#include "fedida/data.hpp"
#include "fedida/random.hpp"
#include "fedida/types.hpp"

#include <optional>

namespace fedida {

enum class RoseScope { batch, client };

struct RoseConfig {
  /// nullopt: balance every present (s, y) subgroup up to the largest one.
  std::optional<std::size_t> n_target;
  /// Kernel width multiplier h. nullopt: 0.1 * n_group^(-1/(p+4)) per group, p = perturbed columns.
  std::optional<double> smoothing;
  std::uint64_t seed = 0;
  RoseScope scope = RoseScope::batch;

  void validate() const;
};

struct AugmentedBatch {
  Matrix a;
  IndexMatrix s;
  Labels y;
  std::vector<bool> synthetic_mask;
  std::vector<Eigen::Index> source_row;  // input row copied, or seed row of a synthetic one
  std::size_t n_target = 0;
  bool passthrough = false;  // single subgroup under auto target: returned unchanged

  Eigen::Index rows() const { return y.size(); }
};

/// Population standard deviation per column.
Vector column_scale(const Matrix& rows);

/// Diagonal of the noise covariance: (h * sigma_j)^2, where sigma_j is the
/// within-group standard deviation, or `fallback_scale(j)` when that is zero
/// (constant feature or single-row group).
Vector estimate_sigma(const Matrix& group_rows, double h, const Vector& fallback_scale);

double default_smoothing(std::size_t group_rows, Eigen::Index features);

/// Subgroup balancing by (sensitive combination, outcome). `index` must be an
/// outcome-keyed index of the batch rows. Oversized groups are downsampled
/// without replacement; undersized ones keep every row and gain synthetic rows
/// x0 + eps, eps ~ N(0, Sigma), with x0 drawn uniformly from the group.
/// `perturb` selects the columns that receive noise (empty = all); the others,
/// e.g. one-hot indicators, are copied from x0.
AugmentedBatch fairness_aware_rose(const Matrix& a, const IndexMatrix& s, const Labels& y,
                                   const SubgroupIndex& index, const RoseConfig& cfg, Rng& rng,
                                   const std::vector<bool>& perturb = {});

/// Convenience overload seeded from cfg.seed; perturbs continuous columns only.
AugmentedBatch fairness_aware_rose(const TabularDataset& batch, const RoseConfig& cfg);

}  // namespace fedida

#endif  // FEDIDA_OVERSAMPLER_HPP
