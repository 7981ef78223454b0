#ifndef FEDIDA_PENALTY_HPP
#define FEDIDA_PENALTY_HPP

// Cross-group same-label score-difference penalty and the composite local
// objective  loss + lambda * penalty + gamma * ||weights||^2.

#include "fedida/data.hpp"
#include "fedida/model.hpp"
#include "fedida/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace fedida {

/// signed_ordered: sum over ordered cross-group pairs of d(y_i,y_j)(s_i - s_j).
///   Antisymmetric, so it is identically zero; kept for fidelity checks.
/// absolute_pair: |s_i - s_j| over unordered cross-group pairs (default).
/// squared_group_mean: per unordered group pair, the squared mean signed
///   same-label difference, weighted by n_k n_k'.
enum class PenaltyMode { signed_ordered, absolute_pair, squared_group_mean };

std::string to_string(PenaltyMode mode);
PenaltyMode parse_penalty_mode(const std::string& name);

struct PenaltyConfig {
  PenaltyMode mode = PenaltyMode::absolute_pair;
  double lambda = 0.0;
  double gamma = 0.0;

  void validate() const {
    if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("penalty lambda must be finite and non-negative");
    if (!std::isfinite(gamma) || gamma < 0.0) throw ConfigError("penalty gamma must be finite and non-negative");
  }
};

template <typename Scalar>
struct PenaltyValue {
  Scalar value{0};
  std::size_t pair_count = 0;  // same-label cross-group pairs entering the sum
  Scalar normalizer{0};        // sum over k != k' of n_k n_k'
};

template <typename Scalar>
struct ScorePenalty {
  PenaltyValue<Scalar> value;
  Vec<Scalar> score_grad;  // d value / d score_i
};

/// Dense group id per row (0..K-1) in key order of a sensitive-only index.
struct GroupAssignment {
  std::vector<int> group_of;
  int groups = 0;
};

GroupAssignment assign_groups(const SubgroupIndex& index, Eigen::Index rows);

namespace detail {

/// Adds sign * sum_{i<j} |s_i - s_j| over `rows` to `value` and the matching
/// subgradient (sign(0) = 0) to `grad`, by sorting instead of enumerating pairs.
template <typename Scalar>
void add_abs_pairs(const Vec<Scalar>& s, RowList rows, Scalar sign, Scalar& value, Vec<Scalar>& grad) {
  if (rows.size() < 2) return;
  std::sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) { return s(a) < s(b); });
  const std::size_t m = rows.size();
  for (std::size_t lo = 0; lo < m;) {
    std::size_t hi = lo;
    while (hi + 1 < m && s(rows[hi + 1]) == s(rows[lo])) ++hi;
    // lo entries are strictly smaller, m - 1 - hi strictly larger.
    const Scalar net = Scalar(static_cast<double>(lo)) - Scalar(static_cast<double>(m - 1 - hi));
    for (std::size_t t = lo; t <= hi; ++t) {
      value += sign * net * s(rows[t]);
      grad(rows[t]) += sign * net;
    }
    lo = hi + 1;
  }
}

}  // namespace detail

/// Penalty in score space. A batch with fewer than two groups yields zero.
template <typename Scalar>
ScorePenalty<Scalar> penalty_on_scores(const Vec<Scalar>& scores, const Labels& y, const GroupAssignment& ga,
                                       PenaltyMode mode) {
  const Eigen::Index n = scores.size();
  if (y.size() != n || static_cast<Eigen::Index>(ga.group_of.size()) != n)
    throw Error("penalty: scores, labels and groups differ in length");
  ScorePenalty<Scalar> out;
  out.score_grad = Vec<Scalar>::Zero(n);

  std::vector<double> sizes(static_cast<std::size_t>(ga.groups), 0.0);
  for (int g : ga.group_of) sizes[static_cast<std::size_t>(g)] += 1.0;
  double ordered_pairs = 0.0, total = static_cast<double>(n);
  for (double nk : sizes) ordered_pairs += nk * (total - nk);
  out.value.normalizer = Scalar(ordered_pairs);
  if (ordered_pairs <= 0.0) return out;

  const auto& grp = ga.group_of;
  switch (mode) {
    case PenaltyMode::signed_ordered: {
      Scalar sum(0);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
          if (grp[static_cast<std::size_t>(i)] == grp[static_cast<std::size_t>(j)] || y(i) != y(j)) continue;
          sum += scores(i) - scores(j);
          out.score_grad(i) += Scalar(1);
          out.score_grad(j) -= Scalar(1);
          ++out.value.pair_count;
        }
      out.value.value = sum / out.value.normalizer;
      out.score_grad /= out.value.normalizer;
      break;
    }
    case PenaltyMode::absolute_pair: {
      // Cross-group pairs = all same-label pairs minus same-label pairs inside a group.
      const auto k = static_cast<std::size_t>(ga.groups);
      std::vector<RowList> by_label(2), by_cell(2 * k);
      for (Eigen::Index i = 0; i < n; ++i) {
        by_label[static_cast<std::size_t>(y(i))].push_back(i);
        by_cell[2 * static_cast<std::size_t>(grp[static_cast<std::size_t>(i)]) + static_cast<std::size_t>(y(i))].push_back(i);
      }
      Scalar sum(0);
      std::size_t pairs = 0;
      for (const auto& rows : by_label) {
        detail::add_abs_pairs(scores, rows, Scalar(1), sum, out.score_grad);
        pairs += rows.size() * (rows.size() - (rows.empty() ? 0 : 1)) / 2;
      }
      for (const auto& rows : by_cell) {
        detail::add_abs_pairs(scores, rows, Scalar(-1), sum, out.score_grad);
        pairs -= rows.size() * (rows.size() - (rows.empty() ? 0 : 1)) / 2;
      }
      out.value.pair_count = pairs;
      const Scalar z = out.value.normalizer / Scalar(2);
      out.value.value = sum / z;
      out.score_grad /= z;
      break;
    }
    case PenaltyMode::squared_group_mean: {
      const auto k = static_cast<std::size_t>(ga.groups);
      // per (group, label): count and score sum
      std::vector<double> cnt(2 * k, 0.0);
      std::vector<Scalar> sum(2 * k, Scalar(0));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto slot = 2 * static_cast<std::size_t>(grp[static_cast<std::size_t>(i)]) + static_cast<std::size_t>(y(i));
        cnt[slot] += 1.0;
        sum[slot] += scores(i);
      }
      const Scalar z = out.value.normalizer / Scalar(2);
      // mean[a*k+b] = M_ab, antisymmetric
      std::vector<Scalar> mean(k * k, Scalar(0));
      Scalar value(0);
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
          const double nn = sizes[a] * sizes[b];
          Scalar m(0);
          for (std::size_t lab = 0; lab < 2; ++lab) {
            m += Scalar(cnt[2 * b + lab]) * sum[2 * a + lab] - Scalar(cnt[2 * a + lab]) * sum[2 * b + lab];
            out.value.pair_count += static_cast<std::size_t>(cnt[2 * a + lab] * cnt[2 * b + lab]);
          }
          m /= Scalar(nn);
          mean[a * k + b] = m;
          mean[b * k + a] = -m;
          value += Scalar(nn) * m * m;
        }
      out.value.value = value / z;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(grp[static_cast<std::size_t>(i)]);
        const auto lab = static_cast<std::size_t>(y(i));
        Scalar g(0);
        for (std::size_t b = 0; b < k; ++b)
          if (b != a) g += mean[a * k + b] * Scalar(cnt[2 * b + lab]);
        out.score_grad(i) = Scalar(2) * g / z;
      }
      break;
    }
  }
  return out;
}

/// Scores entering the penalty: w.a for linear models, output logits for FCNN.
template <typename Scalar>
Vec<Scalar> penalty_scores(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a,
                           ForwardCache<Scalar>* cache = nullptr) {
  Vec<Scalar> s = forward_logits(params, a, cache);
  if (params.kind == ModelKind::linear) s.array() -= params.layers.front().bias(0);
  return s;
}

template <typename Scalar>
PenaltyValue<Scalar> penalty(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a, const Labels& y,
                             const SubgroupIndex& index, const PenaltyConfig& cfg) {
  return penalty_on_scores(penalty_scores(params, a), y, assign_groups(index, a.rows()), cfg.mode).value;
}

template <typename Scalar>
BasicModelParams<Scalar> penalty_grad(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a, const Labels& y,
                                      const SubgroupIndex& index, const PenaltyConfig& cfg) {
  ForwardCache<Scalar> cache;
  const auto s = penalty_scores(params, a, &cache);
  const auto p = penalty_on_scores(s, y, assign_groups(index, a.rows()), cfg.mode);
  // The bias shifts every score equally, so its penalty gradient is sum(score_grad) = 0.
  return backward(params, cache, p.score_grad);
}

template <typename Scalar>
struct ObjectiveValue {
  Scalar value{0};
  Scalar loss{0};
  PenaltyValue<Scalar> penalty;
  BasicModelParams<Scalar> grad;
};

template <typename Scalar>
ObjectiveValue<Scalar> composite_objective(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a,
                                           const Labels& y, const SubgroupIndex& index, const PenaltyConfig& cfg) {
  if (a.rows() == 0) throw Error("composite_objective: empty batch");
  if (a.rows() != y.size()) throw Error("composite_objective: feature/label row mismatch");
  check_labels(y);
  ForwardCache<Scalar> cache;
  const Vec<Scalar> logits = forward_logits(params, a, &cache);
  ObjectiveValue<Scalar> out;
  out.loss = bce_from_logits(logits, y);
  Vec<Scalar> dlogits = bce_logit_grad(logits, y);
  out.value = out.loss;
  if (cfg.lambda > 0.0) {
    Vec<Scalar> scores = logits;
    if (params.kind == ModelKind::linear) scores.array() -= params.layers.front().bias(0);
    const auto p = penalty_on_scores(scores, y, assign_groups(index, a.rows()), cfg.mode);
    out.penalty = p.value;
    out.value += Scalar(cfg.lambda) * p.value.value;
    dlogits += Scalar(cfg.lambda) * p.score_grad;
  }
  out.grad = backward(params, cache, dlogits);
  if (cfg.gamma > 0.0) {
    out.value += Scalar(cfg.gamma) * weight_sq_norm(params);
    for (std::size_t l = 0; l < params.layers.size(); ++l)
      out.grad.layers[l].weight += Scalar(2.0 * cfg.gamma) * params.layers[l].weight;
  }
  return out;
}

}  // namespace fedida

#endif  // FEDIDA_PENALTY_HPP
