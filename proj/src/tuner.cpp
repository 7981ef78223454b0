#include "fedida/tuner.hpp"

#include "fedida/parallel.hpp"
#include "fedida/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fedida {

void LambdaSearchConfig::validate() const {
  if (grid.empty()) throw ConfigError("lambda grid must not be empty");
  if (grid.front() != 0.0) throw ConfigError("lambda grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]) || !std::isfinite(grid[i])) throw ConfigError("lambda grid must be strictly increasing");
  if (!(degradation_factor > 0.0 && degradation_factor <= 1.0))
    throw ConfigError("degradation_factor must be in (0, 1]");
  if (epochs < 1) throw ConfigError("lambda search needs at least one epoch per candidate");
}

LambdaSearchTrace search_lambda(const std::vector<double>& grid, double degradation_factor,
                                const std::function<double(double)>& accuracy_of) {
  if (grid.empty()) throw Error("search_lambda: empty grid");
  LambdaSearchTrace trace;
  trace.acc0 = accuracy_of(grid.front());
  if (!std::isfinite(trace.acc0)) throw Error("search_lambda: baseline accuracy is not finite");
  trace.lambdas.push_back(grid.front());
  trace.accuracies.push_back(trace.acc0);
  trace.selected = grid.front();
  const double floor = degradation_factor * trace.acc0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double acc = accuracy_of(grid[i]);
    trace.lambdas.push_back(grid[i]);
    trace.accuracies.push_back(acc);
    if (!(acc >= floor)) break;
    trace.selected = grid[i];
  }
  return trace;
}

LambdaSearchTrace search_lambda_local(const TabularDataset& train, const TabularDataset& val,
                                      const FederationConfig& base, const LambdaSearchConfig& cfg,
                                      std::uint64_t stream_seed, double threshold) {
  cfg.validate();
  if (val.empty()) throw Error("search_lambda_local: client has no validation rows");
  const ModelParams init = initial_params(base, train.feature_count());
  auto accuracy_of = [&](double lambda) {
    FederationConfig c = base;
    c.penalty.lambda = lambda;
    const auto fitted = local_train(init, train, c, cfg.epochs, stream_seed);
    const Vector probs = forward(fitted.params, val.a).probs;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < val.rows(); ++i) correct += ((probs(i) >= threshold ? 1 : 0) == val.y(i)) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(val.rows());
  };
  return search_lambda(cfg.grid, cfg.degradation_factor, accuracy_of);
}

std::vector<double> combine_lambda(const std::vector<double>& per_client, int count, std::string* warning) {
  if (per_client.empty()) throw Error("combine_lambda: no client values");
  if (count < 1) throw ConfigError("lambda count must be at least 1");
  const double lambda_max = *std::min_element(per_client.begin(), per_client.end());
  if (!(lambda_max > 0.0)) {
    if (warning) *warning = "smallest client lambda is not positive; using the single candidate 0";
    return {0.0};
  }
  std::vector<double> out;
  for (int i = 1; i <= count; ++i) out.push_back(lambda_max * i / count);
  out.back() = lambda_max;
  return out;
}

std::vector<double> linspace(double lo, double hi, int m) {
  if (m < 1) throw ConfigError("linspace needs at least one point");
  if (m == 1) return {lo};
  std::vector<double> out;
  for (int i = 0; i < m; ++i) out.push_back(lo + (hi - lo) * i / (m - 1));
  out.back() = hi;
  return out;
}

std::size_t select_gamma(const std::vector<GammaCandidate>& candidates) {
  if (candidates.empty()) throw Error("select_gamma: no candidates");
  double best_auroc = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates)
    if (std::isfinite(c.auroc)) best_auroc = std::max(best_auroc, c.auroc);
  const double guard = 0.995 * best_auroc;
  std::size_t pick = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (std::isfinite(best_auroc) && !(c.auroc >= guard)) continue;
    if (pick == candidates.size()) {
      pick = i;
      continue;
    }
    const auto& p = candidates[pick];
    const double cd = std::isnan(c.dpd) ? std::numeric_limits<double>::infinity() : c.dpd;
    const double pd = std::isnan(p.dpd) ? std::numeric_limits<double>::infinity() : p.dpd;
    if (cd < pd || (cd == pd && c.gamma < p.gamma)) pick = i;
  }
  return pick == candidates.size() ? 0 : pick;
}

std::vector<FairnessReport> validate_clients(const FederationResult& fed, const std::vector<TabularDataset>& val,
                                             const MetricOptions& opts) {
  if (fed.client_models.size() != val.size()) throw Error("validate_clients: one validation set per client required");
  std::vector<FairnessReport> out;
  for (std::size_t k = 0; k < val.size(); ++k) {
    const Vector probs = forward(fed.client_models[k], val[k].a).probs;
    auto rep = evaluate(probs, val[k].y, build_subgroup_index(val[k], false), opts);
    rep.client = static_cast<int>(k);
    out.push_back(std::move(rep));
  }
  return out;
}

namespace {

double finite_mean(const std::vector<FairnessReport>& reports, double FairnessReport::*field) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : reports)
    if (std::isfinite(r.*field)) {
      sum += r.*field;
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

GammaSelection optimize_gamma(const std::vector<double>& grid, const FederationConfig& base,
                              const std::vector<TabularDataset>& train, const std::vector<TabularDataset>& val,
                              const MetricOptions& opts) {
  if (grid.empty()) throw Error("optimize_gamma: empty grid");
  GammaSelection sel;
  sel.candidates.resize(grid.size());
  FederationConfig inner = base;
  inner.parallelism = 1;
  parallel_for(grid.size(), base.parallelism, [&](std::size_t i) {
    FederationConfig c = inner;
    c.penalty.gamma = grid[i];
    const auto fed = run_federation(train, c);
    auto& cand = sel.candidates[i];
    cand.gamma = grid[i];
    cand.client_reports = validate_clients(fed, val, opts);
    cand.auroc = finite_mean(cand.client_reports, &FairnessReport::auroc);
    cand.dpd = finite_mean(cand.client_reports, &FairnessReport::dpd);
  });
  sel.best = select_gamma(sel.candidates);
  return sel;
}

std::vector<double> refine_grid(const std::vector<double>& coarse, std::size_t s, int m_refine) {
  if (coarse.empty() || s >= coarse.size()) throw Error("refine_grid: index outside the coarse grid");
  if (m_refine < 2) throw ConfigError("refined grid needs at least two values");
  const double lo = coarse[s == 0 ? 0 : s - 1];
  const double hi = coarse[std::min(s + 1, coarse.size() - 1)];
  auto out = linspace(lo, hi, m_refine);
  const double centre = coarse[s];
  const double tol = 1e-12 * std::max(1.0, std::abs(centre));
  auto near = std::find_if(out.begin(), out.end(), [&](double g) { return std::abs(g - centre) <= tol; });
  if (near != out.end())
    *near = centre;  // linspace rounding must not drop the coarse winner
  else
    out.insert(std::upper_bound(out.begin(), out.end(), centre), centre);
  return out;
}

FedidaRun fedida_full(const std::vector<TabularDataset>& train, const std::vector<TabularDataset>& val,
                      const FederationConfig& base, double gamma_lo, double gamma_hi, int m, int m_refine,
                      const MetricOptions& opts) {
  if (m < 2 || m_refine < 2) throw ConfigError("gamma search needs m >= 2 and m' >= 2");
  if (!(gamma_lo >= 0.0) || !(gamma_hi > gamma_lo)) throw ConfigError("gamma range must satisfy 0 <= lo < hi");
  FedidaRun run;
  run.coarse_grid = linspace(gamma_lo, gamma_hi, m);
  run.coarse = optimize_gamma(run.coarse_grid, base, train, val, opts);
  run.refined_grid = refine_grid(run.coarse_grid, run.coarse.best, m_refine);
  run.refined = optimize_gamma(run.refined_grid, base, train, val, opts);
  run.gamma_final = run.refined.gamma();
  FederationConfig final_cfg = base;
  final_cfg.penalty.gamma = run.gamma_final;
  run.model = run_federation(train, final_cfg);
  return run;
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const LambdaSearchTrace& trace) {
  nlohmann::json acc = nlohmann::json::array();
  for (double a : trace.accuracies) acc.push_back(number(a));
  return {{"lambdas", trace.lambdas}, {"accuracies", acc}, {"acc0", number(trace.acc0)}, {"selected", trace.selected}};
}

nlohmann::json to_json(const GammaSelection& selection) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : selection.candidates) {
    nlohmann::json per_client = nlohmann::json::array();
    for (const auto& r : c.client_reports)
      per_client.push_back({{"client", r.client}, {"auroc", number(r.auroc)}, {"dpd", number(r.dpd)}});
    cands.push_back({{"gamma", c.gamma}, {"auroc", number(c.auroc)}, {"dpd", number(c.dpd)}, {"clients", per_client}});
  }
  return {{"candidates", cands}, {"best_index", selection.best}, {"best_gamma", selection.gamma()}};
}

nlohmann::json to_json(const FedidaRun& run) {
  return {{"coarse_grid", run.coarse_grid},
          {"coarse", to_json(run.coarse)},
          {"gamma_s", run.coarse.gamma()},
          {"refined_grid", run.refined_grid},
          {"refined", to_json(run.refined)},
          {"gamma_final", run.gamma_final},
          {"final_checksum", checksum(run.model.global)}};
}

}  // namespace fedida
