#ifndef FEDIDA_TUNER_HPP
#define FEDIDA_TUNER_HPP

#include "fedida/federation.hpp"
#include "fedida/metrics.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace fedida {

struct LambdaSearchConfig {
  std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0};
  double degradation_factor = 0.995;
  int epochs = 1;  // local epochs per candidate

  /// grid strictly increasing from 0, factor in (0, 1], epochs >= 1.
  void validate() const;
};

struct LambdaSearchTrace {
  std::vector<double> lambdas;     // candidates actually evaluated
  std::vector<double> accuracies;  // parallel to lambdas
  double acc0 = 0.0;
  double selected = 0.0;
};

/// Walks the grid in order and stops at the first candidate whose accuracy is
/// below factor * accuracy_of(grid[0]); returns the last candidate before it.
LambdaSearchTrace search_lambda(const std::vector<double>& grid, double degradation_factor,
                                const std::function<double(double)>& accuracy_of);

/// One client's search: a fresh local model per candidate trained for
/// cfg.epochs on `train`, scored by thresholded accuracy on `val`.
LambdaSearchTrace search_lambda_local(const TabularDataset& train, const TabularDataset& val,
                                      const FederationConfig& base, const LambdaSearchConfig& cfg,
                                      std::uint64_t stream_seed, double threshold = 0.5);

/// `count` equally spaced values in (0, min(per_client)]. A non-positive
/// minimum yields {0} and sets *warning.
std::vector<double> combine_lambda(const std::vector<double>& per_client, int count, std::string* warning = nullptr);

/// m points from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int m);

struct GammaCandidate {
  double gamma = 0.0;
  double auroc = 0.0;  // mean over clients, validation split
  double dpd = 0.0;
  std::vector<FairnessReport> client_reports;
};

struct GammaSelection {
  std::vector<GammaCandidate> candidates;
  std::size_t best = 0;
  double gamma() const { return candidates.at(best).gamma; }
};

/// Among candidates with auroc >= 0.995 * best auroc, the smallest DPD; ties
/// go to the smaller gamma. Candidates with an undefined DPD rank last.
std::size_t select_gamma(const std::vector<GammaCandidate>& candidates);

/// Per-client validation reports of a federation result.
std::vector<FairnessReport> validate_clients(const FederationResult& fed, const std::vector<TabularDataset>& val,
                                             const MetricOptions& opts);

/// One full federated run per gamma (same seed for every candidate).
GammaSelection optimize_gamma(const std::vector<double>& grid, const FederationConfig& base,
                              const std::vector<TabularDataset>& train, const std::vector<TabularDataset>& val,
                              const MetricOptions& opts);

/// m' values spanning the coarse neighbours of coarse[s] (clamped at the
/// ends), with coarse[s] itself inserted when the spacing skips it.
std::vector<double> refine_grid(const std::vector<double>& coarse, std::size_t s, int m_refine);

struct FedidaRun {
  std::vector<double> coarse_grid;
  GammaSelection coarse;
  std::vector<double> refined_grid;
  GammaSelection refined;
  double gamma_final = 0.0;
  FederationResult model;
};

/// Coarse search over linspace(range, m), refinement around the winner, then
/// a final run with (base lambda, gamma_final).
FedidaRun fedida_full(const std::vector<TabularDataset>& train, const std::vector<TabularDataset>& val,
                      const FederationConfig& base, double gamma_lo, double gamma_hi, int m, int m_refine,
                      const MetricOptions& opts);

nlohmann::json to_json(const LambdaSearchTrace& trace);
nlohmann::json to_json(const GammaSelection& selection);
nlohmann::json to_json(const FedidaRun& run);

}  // namespace fedida

#endif  // FEDIDA_TUNER_HPP
