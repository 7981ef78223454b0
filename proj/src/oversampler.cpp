#include "fedida/oversampler.hpp"

#include <algorithm>
#include <cmath>

namespace fedida {

void RoseConfig::validate() const {
  if (n_target && *n_target < 1) throw ConfigError("rose: fixed n_target must be at least 1");
  if (smoothing && !(*smoothing > 0.0 && std::isfinite(*smoothing)))
    throw ConfigError("rose: smoothing must be positive and finite");
}

Vector column_scale(const Matrix& rows) {
  if (rows.rows() == 0) return Vector::Zero(rows.cols());
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  return ((rows.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(rows.rows()))
      .sqrt()
      .transpose();
}

Vector estimate_sigma(const Matrix& group_rows, double h, const Vector& fallback_scale) {
  if (group_rows.rows() < 1) throw Error("estimate_sigma: group has no rows");
  if (fallback_scale.size() != group_rows.cols()) throw Error("estimate_sigma: fallback scale has wrong length");
  Vector scale = group_rows.rows() > 1 ? column_scale(group_rows) : Vector::Zero(group_rows.cols());
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (scale(j) == 0.0) scale(j) = fallback_scale(j);
  return (h * scale).array().square();
}

double default_smoothing(std::size_t group_rows, Eigen::Index features) {
  return 0.1 * std::pow(static_cast<double>(std::max<std::size_t>(group_rows, 1)),
                        -1.0 / (static_cast<double>(features) + 4.0));
}

AugmentedBatch fairness_aware_rose(const Matrix& a, const IndexMatrix& s, const Labels& y,
                                   const SubgroupIndex& index, const RoseConfig& cfg, Rng& rng,
                                   const std::vector<bool>& perturb) {
  cfg.validate();
  if (!perturb.empty() && static_cast<Eigen::Index>(perturb.size()) != a.cols())
    throw Error("fairness_aware_rose: perturbation mask length differs from the feature count");
  std::vector<Eigen::Index> noisy;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    if (perturb.empty() || perturb[static_cast<std::size_t>(j)]) noisy.push_back(j);
  if (y.size() == 0) throw Error("fairness_aware_rose: empty batch");
  if (!index.by_outcome) throw Error("fairness_aware_rose: subgroup index must be keyed by outcome");
  if (index.total() != static_cast<std::size_t>(y.size()))
    throw Error("fairness_aware_rose: subgroup index does not match the batch");

  AugmentedBatch out;
  std::size_t target = 0;
  if (cfg.n_target) {
    target = *cfg.n_target;
  } else {
    for (const auto& [key, rows] : index.groups) target = std::max(target, rows.size());
  }
  out.n_target = target;

  std::vector<Eigen::Index> source;
  std::vector<bool> synthetic;
  if (!cfg.n_target && index.group_count() < 2) {
    out.passthrough = true;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      source.push_back(i);
      synthetic.push_back(false);
    }
    out.a = a;
    out.s = s;
    out.y = y;
    out.synthetic_mask = std::move(synthetic);
    out.source_row = std::move(source);
    return out;
  }

  const Vector global_scale = column_scale(a(Eigen::all, noisy));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> noise;  // per synthetic row, parallel to the synthetic entries of `source`

  for (const auto& [key, rows] : index.groups) {
    const std::size_t have = rows.size();
    if (have >= target) {
      RowList pool = rows;
      for (std::size_t i = 0; i < target; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      pool.resize(target);
      std::sort(pool.begin(), pool.end());
      for (auto r : pool) {
        source.push_back(r);
        synthetic.push_back(false);
      }
      continue;
    }
    for (auto r : rows) {
      source.push_back(r);
      synthetic.push_back(false);
    }
    const Matrix group = a(rows, noisy);
    const double h = cfg.smoothing ? *cfg.smoothing : default_smoothing(have, static_cast<Eigen::Index>(noisy.size()));
    const Vector sd = estimate_sigma(group, h, global_scale).cwiseSqrt();
    std::uniform_int_distribution<std::size_t> pick(0, have - 1);
    for (std::size_t i = have; i < target; ++i) {
      source.push_back(rows[pick(rng)]);
      synthetic.push_back(true);
      Vector eps(sd.size());
      for (Eigen::Index j = 0; j < eps.size(); ++j) eps(j) = sd(j) * normal(rng);
      noise.push_back(std::move(eps));
    }
  }

  const auto n = static_cast<Eigen::Index>(source.size());
  out.a.resize(n, a.cols());
  out.s.resize(n, s.cols());
  out.y.resize(n);
  std::size_t next_noise = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = source[static_cast<std::size_t>(i)];
    out.a.row(i) = a.row(src);
    if (synthetic[static_cast<std::size_t>(i)]) out.a(i, noisy) += noise[next_noise++].transpose();
    out.s.row(i) = s.row(src);
    out.y(i) = y(src);
  }
  out.synthetic_mask = std::move(synthetic);
  out.source_row = std::move(source);
  return out;
}

AugmentedBatch fairness_aware_rose(const TabularDataset& batch, const RoseConfig& cfg) {
  Rng rng(cfg.seed);
  return fairness_aware_rose(batch.a, batch.s, batch.y, build_subgroup_index(batch, true), cfg, rng, batch.continuous);
}

}  // namespace fedida
