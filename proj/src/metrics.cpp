#include "fedida/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedida {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(MetricMode mode) { return mode == MetricMode::hard ? "hard" : "soft"; }

MetricMode parse_metric_mode(const std::string& name) {
  if (name == "hard") return MetricMode::hard;
  if (name == "soft") return MetricMode::soft;
  throw ConfigError("unknown metric mode '" + name + "' (expected hard or soft)");
}

std::string to_string(MetricId id) {
  switch (id) {
    case MetricId::dpd: return "dpd";
    case MetricId::dpr: return "dpr";
    case MetricId::dfpr: return "dfpr";
    case MetricId::dppv: return "dppv";
  }
  return "?";
}

double auroc(const Vector& scores, const Labels& y) {
  if (scores.size() != y.size()) throw Error("auroc: score/label length mismatch");
  const auto n = static_cast<std::size_t>(scores.size());
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) pos += y(i) == 1 ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0) throw Error("auroc: no samples of class 1 (positive)");
  if (neg == 0) throw Error("auroc: no samples of class 0 (negative)");

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return scores(l) < scores(r); });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores(order[j + 1]) == scores(order[i])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (y(order[k]) == 1) rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::map<GroupKey, GroupStats> group_stats(const Vector& scores, const Labels& y, const SubgroupIndex& index,
                                           const MetricOptions& opts) {
  if (scores.size() != y.size()) throw Error("fairness metrics: score/label length mismatch");
  const bool soft = opts.mode == MetricMode::soft;
  std::map<GroupKey, GroupStats> out;
  for (const auto& [key, rows] : index.groups) {
    GroupStats g;
    double rate = 0.0, fp = 0.0, tp = 0.0;
    for (auto r : rows) {
      if (r < 0 || r >= scores.size()) throw Error("fairness metrics: subgroup index refers to a missing row");
      const bool predicted = scores(r) >= opts.threshold;
      const double v = soft ? scores(r) : (predicted ? 1.0 : 0.0);
      rate += v;
      if (y(r) == 0) {
        ++g.negatives;
        fp += v;
      }
      if (predicted) {
        ++g.predicted_positive;
        tp += y(r) == 1 ? 1.0 : 0.0;
      }
    }
    g.size = rows.size();
    g.positive_rate = g.size ? rate / static_cast<double>(g.size) : kNaN;
    g.fpr = g.negatives ? fp / static_cast<double>(g.negatives) : kNaN;
    g.ppv = g.predicted_positive ? tp / static_cast<double>(g.predicted_positive) : kNaN;
    out.emplace(key, g);
  }
  return out;
}

namespace {

template <typename Count, typename Value>
GapResult max_gap(const std::map<GroupKey, GroupStats>& stats, std::size_t min_size, Count count, Value value,
                  const char* what) {
  GapResult res;
  for (const auto& [key, g] : stats) {
    if (count(g) >= min_size && count(g) > 0)
      res.rates.emplace(key, value(g));
    else
      res.skipped.push_back(key);
  }
  if (res.rates.size() < 2)
    throw Error(std::string(what) + ": fewer than two eligible groups (min size " + std::to_string(min_size) + ")");
  double lo = 1.0, hi = 0.0;
  for (const auto& [key, v] : res.rates) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  res.gap = hi - lo;
  return res;
}

}  // namespace

ParityResult demographic_parity(const Vector& scores, const Labels& y, const SubgroupIndex& index,
                                const MetricOptions& opts) {
  const auto stats = group_stats(scores, y, index, opts);
  auto gap = max_gap(
      stats, opts.min_group_size, [](const GroupStats& g) { return g.size; },
      [](const GroupStats& g) { return g.positive_rate; }, "demographic parity");
  double lo = 1.0, hi = 0.0;
  for (const auto& [key, v] : gap.rates) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= 0.0) throw Error("demographic parity ratio undefined: every eligible group has a zero positive rate");
  return {gap.gap, lo / hi, std::move(gap.rates), std::move(gap.skipped)};
}

GapResult dfpr(const Vector& scores, const Labels& y, const SubgroupIndex& index, const MetricOptions& opts) {
  const auto stats = group_stats(scores, y, index, opts);
  if (std::all_of(stats.begin(), stats.end(), [](const auto& kv) { return kv.second.negatives == 0; }))
    throw Error("dfpr: no group contains negatives");
  return max_gap(
      stats, opts.min_group_size, [](const GroupStats& g) { return g.negatives; },
      [](const GroupStats& g) { return g.fpr; }, "dfpr");
}

GapResult dppv(const Vector& scores, const Labels& y, const SubgroupIndex& index, const MetricOptions& opts) {
  const auto stats = group_stats(scores, y, index, opts);
  return max_gap(
      stats, opts.min_group_size, [](const GroupStats& g) { return g.predicted_positive; },
      [](const GroupStats& g) { return g.ppv; }, "dppv");
}

double metric_value(MetricId id, const Vector& scores, const Labels& y, const SubgroupIndex& index,
                    const MetricOptions& opts) {
  switch (id) {
    case MetricId::dpd: return demographic_parity(scores, y, index, opts).dpd;
    case MetricId::dpr: return demographic_parity(scores, y, index, opts).dpr;
    case MetricId::dfpr: return dfpr(scores, y, index, opts).gap;
    case MetricId::dppv: return dppv(scores, y, index, opts).gap;
  }
  throw Error("unknown metric");
}

FairnessReport evaluate(const Vector& probs, const Labels& y, const SubgroupIndex& index, const MetricOptions& opts) {
  FairnessReport rep;
  rep.options = opts;
  rep.rows = static_cast<std::size_t>(y.size());
  try {
    rep.auroc = auroc(probs, y);
  } catch (const Error&) {
    rep.auroc = kNaN;
  }
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) correct += ((probs(i) >= opts.threshold ? 1 : 0) == y(i)) ? 1 : 0;
  rep.accuracy = y.size() ? static_cast<double>(correct) / static_cast<double>(y.size()) : kNaN;

  const auto stats = group_stats(probs, y, index, opts);
  for (const auto& [key, g] : stats) {
    rep.per_group_positive_rate[key] = g.positive_rate;
    rep.per_group_fpr[key] = g.fpr;
    rep.per_group_ppv[key] = g.ppv;
  }
  try {
    auto dp = demographic_parity(probs, y, index, opts);
    rep.dpd = dp.dpd;
    rep.dpr = dp.dpr;
    rep.skipped_groups["dp"] = dp.skipped;
  } catch (const Error&) {
    // DPD may still exist when only the ratio is undefined.
    try {
      auto g = max_gap(
          stats, opts.min_group_size, [](const GroupStats& s) { return s.size; },
          [](const GroupStats& s) { return s.positive_rate; }, "demographic parity");
      rep.dpd = g.gap;
      rep.skipped_groups["dp"] = g.skipped;
    } catch (const Error&) {
      rep.dpd = kNaN;
    }
    rep.dpr = kNaN;
  }
  try {
    auto g = dfpr(probs, y, index, opts);
    rep.dfpr = g.gap;
    rep.skipped_groups["fpr"] = g.skipped;
  } catch (const Error&) {
    rep.dfpr = kNaN;
  }
  try {
    auto g = dppv(probs, y, index, opts);
    rep.dppv = g.gap;
    rep.skipped_groups["ppv"] = g.skipped;
  } catch (const Error&) {
    rep.dppv = kNaN;
  }
  return rep;
}

nlohmann::json to_json(const FairnessReport& r, const std::vector<ColumnSchema>& sensitive) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  auto group_map = [&](const std::map<GroupKey, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[key_label(k, sensitive)] = num(v);
    return j;
  };
  nlohmann::json skipped = nlohmann::json::object();
  for (const auto& [tag, keys] : r.skipped_groups) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& k : keys) list.push_back(key_label(k, sensitive));
    skipped[tag] = std::move(list);
  }
  return {{"setup", r.setup},
          {"model", r.model},
          {"client", r.client},
          {"seed", r.seed},
          {"rows", r.rows},
          {"auroc", num(r.auroc)},
          {"accuracy", num(r.accuracy)},
          {"dpd", num(r.dpd)},
          {"dpr", num(r.dpr)},
          {"dfpr", num(r.dfpr)},
          {"dppv", num(r.dppv)},
          {"threshold", r.options.threshold},
          {"min_group_size", r.options.min_group_size},
          {"metric_mode", to_string(r.options.mode)},
          {"per_group_positive_rate", group_map(r.per_group_positive_rate)},
          {"per_group_fpr", group_map(r.per_group_fpr)},
          {"per_group_ppv", group_map(r.per_group_ppv)},
          {"skipped_groups", std::move(skipped)}};
}

ProbeResult perturbation_probe(MetricId metric, const Vector& scores, const Labels& y, const SubgroupIndex& index,
                               Eigen::Index row, double new_score, int new_label, const MetricOptions& opts) {
  if (row < 0 || row >= scores.size()) throw Error("perturbation_probe: row out of range");
  if (new_label != 0 && new_label != 1) throw Error("perturbation_probe: label must be 0 or 1");
  if (index.by_outcome && new_label != y(row))
    throw Error("perturbation_probe: replacement changes the row's subgroup");
  const GroupKey* key = index.key_of(row);
  if (!key) throw Error("perturbation_probe: row belongs to no subgroup");

  Vector scores2 = scores;
  Labels y2 = y;
  scores2(row) = new_score;
  y2(row) = new_label;

  ProbeResult res;
  res.before = metric_value(metric, scores, y, index, opts);
  res.after = metric_value(metric, scores2, y2, index, opts);

  const auto s1 = group_stats(scores, y, index, opts);
  const auto s2 = group_stats(scores2, y2, index, opts);

  auto eligible = [&](const std::map<GroupKey, GroupStats>& st) {
    std::vector<GroupKey> keys;
    for (const auto& [k, g] : st) {
      const std::size_t c = metric == MetricId::dfpr   ? g.negatives
                            : metric == MetricId::dppv ? g.predicted_positive
                                                       : g.size;
      if (c >= opts.min_group_size && c > 0) keys.push_back(k);
    }
    return keys;
  };
  if (eligible(s1) != eligible(s2)) {
    res.bound = 1.0;
    return res;
  }

  const auto& g1 = s1.at(*key);
  const auto& g2 = s2.at(*key);
  std::size_t m1 = 0, m2 = 0;
  bool touched = false;
  switch (metric) {
    case MetricId::dpd:
    case MetricId::dpr:
      m1 = g1.size;
      m2 = g2.size;
      touched = true;
      break;
    case MetricId::dfpr:
      m1 = g1.negatives;
      m2 = g2.negatives;
      touched = y(row) == 0 || new_label == 0;
      break;
    case MetricId::dppv:
      m1 = g1.predicted_positive;
      m2 = g2.predicted_positive;
      touched = scores(row) >= opts.threshold || new_score >= opts.threshold;
      break;
  }
  const double rate_move = touched ? 1.0 / static_cast<double>(std::max(m1, m2)) : 0.0;
  if (metric != MetricId::dpr) {
    res.bound = rate_move;
    return res;
  }
  double delta = std::numeric_limits<double>::infinity();
  for (const auto* st : {&s1, &s2})
    for (const auto& [k, g] : *st)
      if (g.size >= opts.min_group_size && g.size > 0) delta = std::min(delta, g.positive_rate);
  res.bound = delta > 0.0 ? rate_move / (delta * delta) : std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace fedida
