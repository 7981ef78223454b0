#ifndef FEDIDA_FEDERATION_HPP
#define FEDIDA_FEDERATION_HPP

#include "fedida/data.hpp"
#include "fedida/model.hpp"
#include "fedida/oversampler.hpp"
#include "fedida/penalty.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace fedida {

enum class Strategy { central, local, fedavg, pfedavg };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

struct FederationConfig {
  Strategy strategy = Strategy::fedavg;
  ModelKind model = ModelKind::linear;
  int rounds = 10;
  /// Per-client local epochs; a single entry applies to every client.
  std::vector<int> local_epochs{5};
  int batch_size = 128;
  double lr = 0.1;
  PenaltyConfig penalty;
  std::optional<RoseConfig> rose;
  int personalization_steps = 1;
  std::uint64_t seed = 0;
  int parallelism = 1;

  int epochs_for(std::size_t client) const;
  /// Throws ConfigError on violated invariants.
  void validate(std::size_t clients) const;
};

struct ClientTrace {
  int client = 0;
  std::size_t samples = 0;  // n_k, before any oversampling
  std::size_t steps = 0;
  double loss = 0.0;        // mean prediction loss over the steps
  double penalty = 0.0;     // mean fairness penalty value over the steps
  std::size_t synthetic_rows = 0;
  std::size_t single_group_batches = 0;  // batches where the penalty was 0 for lack of pairs
};

struct RoundTrace {
  int round = 0;
  std::vector<ClientTrace> clients;
  std::uint64_t checksum = 0;
};

nlohmann::json to_json(const RoundTrace& trace);

struct LocalResult {
  ModelParams params;
  ClientTrace trace;
};

/// `epochs` passes of mini-batch SGD on the composite objective. With
/// cfg.rose set, each batch (or the whole client set, for client scope) is
/// rebalanced before the step. All randomness comes from `stream_seed`.
LocalResult local_train(const ModelParams& init, const TabularDataset& train, const FederationConfig& cfg, int epochs,
                        std::uint64_t stream_seed);

/// `steps` single mini-batch SGD updates (used for PFedAvg personalization).
ModelParams personalize(const ModelParams& global, const TabularDataset& train, const FederationConfig& cfg, int steps,
                        std::uint64_t stream_seed);

/// Weighted mean with weights n_k / sum(n).
ModelParams aggregate(const std::vector<ModelParams>& params, const std::vector<double>& weights);

/// A participant: owns its training data and only ever hands back
/// serialized parameters.
class Client {
 public:
  Client(int id, TabularDataset train) : id_(id), train_(std::move(train)) {}

  int id() const { return id_; }
  std::size_t sample_count() const { return static_cast<std::size_t>(train_.rows()); }

  /// Receives the global model as JSON, trains, replies with JSON.
  nlohmann::json train(const nlohmann::json& global, const FederationConfig& cfg, int round, ClientTrace* trace) const;
  nlohmann::json personalize(const nlohmann::json& global, const FederationConfig& cfg) const;

 private:
  int id_;
  TabularDataset train_;
};

struct FederationResult {
  ModelParams global;
  /// The model each client evaluates with: the global model (central, fedavg),
  /// its own model (local), or its personalized copy (pfedavg).
  std::vector<ModelParams> client_models;
  std::vector<RoundTrace> traces;
};

ModelParams initial_params(const FederationConfig& cfg, Eigen::Index features);

/// Rounds of local training and aggregation over the clients' training sets.
/// central pools every client into one; local never aggregates.
FederationResult run_federation(const std::vector<TabularDataset>& client_train, const FederationConfig& cfg);

/// Mean BCE of `params` over the union of datasets.
double mean_loss(const ModelParams& params, const std::vector<TabularDataset>& datasets);

}  // namespace fedida

#endif  // FEDIDA_FEDERATION_HPP
