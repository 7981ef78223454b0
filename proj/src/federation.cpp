#include "fedida/federation.hpp"

#include "fedida/parallel.hpp"
#include "fedida/random.hpp"

#include <algorithm>
#include <numeric>

namespace fedida {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::central: return "central";
    case Strategy::local: return "local";
    case Strategy::fedavg: return "fedavg";
    case Strategy::pfedavg: return "pfedavg";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "central") return Strategy::central;
  if (name == "local") return Strategy::local;
  if (name == "fedavg") return Strategy::fedavg;
  if (name == "pfedavg") return Strategy::pfedavg;
  throw ConfigError("unknown strategy '" + name + "'");
}

int FederationConfig::epochs_for(std::size_t client) const {
  if (local_epochs.size() == 1) return local_epochs.front();
  return local_epochs.at(client);
}

void FederationConfig::validate(std::size_t clients) const {
  if (clients < 1) throw ConfigError("federation needs at least one client");
  if (rounds < 0) throw ConfigError("rounds must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (local_epochs.empty()) throw ConfigError("local_epochs must not be empty");
  if (local_epochs.size() != 1 && local_epochs.size() != clients)
    throw ConfigError("local_epochs must have one entry or one per client (" + std::to_string(clients) + ")");
  for (int e : local_epochs)
    if (e < 0) throw ConfigError("local epochs must be non-negative");
  if (personalization_steps < 0) throw ConfigError("personalization_steps must be non-negative");
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
  penalty.validate();
  if (rose) rose->validate();
}

nlohmann::json to_json(const RoundTrace& trace) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& c : trace.clients) {
    clients.push_back({{"client", c.client},
                       {"samples", c.samples},
                       {"steps", c.steps},
                       {"loss", c.loss},
                       {"penalty", c.penalty},
                       {"synthetic_rows", c.synthetic_rows},
                       {"single_group_batches", c.single_group_batches}});
  }
  return {{"round", trace.round}, {"clients", std::move(clients)}, {"checksum", trace.checksum}};
}

namespace {

struct BatchView {
  Matrix a;
  IndexMatrix s;
  Labels y;
};

struct Stepper {
  const FederationConfig& cfg;
  Rng& rng;
  ClientTrace& trace;
  const std::vector<bool>& continuous;  // columns ROSE perturbs
  double loss_sum = 0.0;
  double penalty_sum = 0.0;

  ModelParams step(const ModelParams& w, BatchView batch) {
    if (cfg.rose && cfg.rose->scope == RoseScope::batch) {
      const auto by_outcome = build_subgroup_index(batch.s, batch.y, true);
      auto aug = fairness_aware_rose(batch.a, batch.s, batch.y, by_outcome, *cfg.rose, rng, continuous);
      trace.synthetic_rows += static_cast<std::size_t>(std::count(aug.synthetic_mask.begin(), aug.synthetic_mask.end(), true));
      batch = {std::move(aug.a), std::move(aug.s), std::move(aug.y)};
    }
    const auto index = build_subgroup_index(batch.s, batch.y, false);
    if (cfg.penalty.lambda > 0.0 && index.group_count() < 2) ++trace.single_group_batches;
    const auto obj = composite_objective(w, batch.a, batch.y, index, cfg.penalty);
    ++trace.steps;
    loss_sum += obj.loss;
    penalty_sum += obj.penalty.value;
    return apply_update(w, obj.grad, cfg.lr);
  }

  void finish() {
    if (trace.steps) {
      trace.loss = loss_sum / static_cast<double>(trace.steps);
      trace.penalty = penalty_sum / static_cast<double>(trace.steps);
    }
  }
};

BatchView take(const TabularDataset& ds, const RowList& rows) {
  return {ds.a(rows, Eigen::all), ds.s(rows, Eigen::all), ds.y(rows)};
}

// Client-scope oversampling: rebalance the whole training set once.
TabularDataset maybe_rebalance_client(const TabularDataset& train, const FederationConfig& cfg, Rng& rng,
                                      ClientTrace& trace) {
  if (!cfg.rose || cfg.rose->scope != RoseScope::client) return train;
  const auto index = build_subgroup_index(train, true);
  auto aug = fairness_aware_rose(train.a, train.s, train.y, index, *cfg.rose, rng, train.continuous);
  trace.synthetic_rows += static_cast<std::size_t>(std::count(aug.synthetic_mask.begin(), aug.synthetic_mask.end(), true));
  TabularDataset out;
  out.a = std::move(aug.a);
  out.s = std::move(aug.s);
  out.y = std::move(aug.y);
  out.row_ids.resize(static_cast<std::size_t>(out.y.size()));
  std::iota(out.row_ids.begin(), out.row_ids.end(), std::int64_t{0});
  out.feature_names = train.feature_names;
  out.continuous = train.continuous;
  out.sensitive = train.sensitive;
  return out;
}

}  // namespace

LocalResult local_train(const ModelParams& init, const TabularDataset& train, const FederationConfig& cfg, int epochs,
                        std::uint64_t stream_seed) {
  if (train.empty()) throw Error("local_train: client dataset is empty");
  LocalResult res{init, {}};
  res.trace.samples = static_cast<std::size_t>(train.rows());
  if (epochs <= 0) return res;

  Rng rng(stream_seed);
  const TabularDataset data = maybe_rebalance_client(train, cfg, rng, res.trace);
  const auto n = static_cast<std::size_t>(data.rows());
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  RowList order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Stepper stepper{cfg, rng, res.trace, data.continuous};
  for (int e = 0; e < epochs; ++e) {
    if (n > b) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += b) {
      const RowList rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + b)));
      res.params = stepper.step(res.params, take(data, rows));
    }
  }
  stepper.finish();
  return res;
}

ModelParams personalize(const ModelParams& global, const TabularDataset& train, const FederationConfig& cfg, int steps,
                        std::uint64_t stream_seed) {
  if (train.empty()) throw Error("personalize: client dataset is empty");
  Rng rng(stream_seed);
  ClientTrace trace;
  const TabularDataset data = maybe_rebalance_client(train, cfg, rng, trace);
  const auto n = static_cast<std::size_t>(data.rows());
  const auto b = std::min(n, static_cast<std::size_t>(cfg.batch_size));
  RowList order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Stepper stepper{cfg, rng, trace, data.continuous};
  ModelParams w = global;
  std::size_t at = 0;
  for (int k = 0; k < steps; ++k) {
    if (at + b > n) {
      std::shuffle(order.begin(), order.end(), rng);
      at = 0;
    }
    const RowList rows(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(at + b));
    at += b;
    w = stepper.step(w, take(data, rows));
  }
  return w;
}

ModelParams aggregate(const std::vector<ModelParams>& params, const std::vector<double>& weights) {
  if (params.empty()) throw Error("aggregate: no client parameters");
  if (params.size() != weights.size()) throw Error("aggregate: one weight per client required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw Error("aggregate: weights must be positive");
    total += w;
  }
  for (const auto& p : params)
    if (!p.same_shape(params.front())) throw Error("aggregate: client parameter shapes differ");
  ModelParams out = params.front().zeros_like();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double share = weights[k] / total;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      out.layers[l].weight += share * params[k].layers[l].weight;
      out.layers[l].bias += share * params[k].layers[l].bias;
    }
  }
  return out;
}

nlohmann::json Client::train(const nlohmann::json& global, const FederationConfig& cfg, int round,
                             ClientTrace* trace) const {
  const auto seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(id_), static_cast<std::uint64_t>(round)});
  auto res = local_train(params_from_json(global), train_, cfg, cfg.epochs_for(static_cast<std::size_t>(id_)), seed);
  res.trace.client = id_;
  if (trace) *trace = res.trace;
  return to_json(res.params);
}

nlohmann::json Client::personalize(const nlohmann::json& global, const FederationConfig& cfg) const {
  const auto seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(id_), 0x706572736fULL});
  return to_json(fedida::personalize(params_from_json(global), train_, cfg, cfg.personalization_steps, seed));
}

ModelParams initial_params(const FederationConfig& cfg, Eigen::Index features) {
  return init_params(cfg.model, features, derive_seed(cfg.seed, {0x696e6974ULL}));
}

namespace {

// Server loop shared by central, fedavg and pfedavg.
ModelParams federated_rounds(const std::vector<Client>& clients, const FederationConfig& cfg, ModelParams global,
                             std::vector<RoundTrace>& traces) {
  std::vector<double> weights;
  for (const auto& c : clients) weights.push_back(static_cast<double>(c.sample_count()));
  for (int t = 1; t <= cfg.rounds; ++t) {
    const nlohmann::json wire = to_json(global);
    std::vector<nlohmann::json> replies(clients.size());
    RoundTrace trace{t, std::vector<ClientTrace>(clients.size()), 0};
    parallel_for(clients.size(), cfg.parallelism,
                 [&](std::size_t k) { replies[k] = clients[k].train(wire, cfg, t, &trace.clients[k]); });
    std::vector<ModelParams> updates;
    updates.reserve(replies.size());
    for (const auto& r : replies) updates.push_back(params_from_json(r));
    global = aggregate(updates, weights);
    trace.checksum = checksum(global);
    traces.push_back(std::move(trace));
  }
  return global;
}

}  // namespace

FederationResult run_federation(const std::vector<TabularDataset>& client_train, const FederationConfig& cfg) {
  if (client_train.empty()) throw Error("run_federation: no clients");
  cfg.validate(client_train.size());
  const auto p = client_train.front().feature_count();
  for (const auto& ds : client_train) {
    if (ds.empty()) throw Error("run_federation: a client has an empty training set");
    if (ds.feature_count() != p) throw Error("run_federation: clients disagree on feature count");
  }

  FederationResult res;
  res.global = initial_params(cfg, p);
  const std::size_t k = client_train.size();

  switch (cfg.strategy) {
    case Strategy::central: {
      FederationConfig pooled_cfg = cfg;
      pooled_cfg.local_epochs = {cfg.epochs_for(0)};
      const std::vector<Client> pooled{Client(0, TabularDataset::concat(client_train))};
      res.global = federated_rounds(pooled, pooled_cfg, res.global, res.traces);
      res.client_models.assign(k, res.global);
      break;
    }
    case Strategy::fedavg:
    case Strategy::pfedavg: {
      std::vector<Client> clients;
      for (std::size_t c = 0; c < k; ++c) clients.emplace_back(static_cast<int>(c), client_train[c]);
      res.global = federated_rounds(clients, cfg, res.global, res.traces);
      if (cfg.strategy == Strategy::fedavg) {
        res.client_models.assign(k, res.global);
      } else {
        const nlohmann::json wire = to_json(res.global);
        std::vector<nlohmann::json> replies(k);
        parallel_for(k, cfg.parallelism, [&](std::size_t c) { replies[c] = clients[c].personalize(wire, cfg); });
        for (const auto& r : replies) res.client_models.push_back(params_from_json(r));
      }
      break;
    }
    case Strategy::local: {
      std::vector<Client> clients;
      for (std::size_t c = 0; c < k; ++c) clients.emplace_back(static_cast<int>(c), client_train[c]);
      std::vector<nlohmann::json> models(k, to_json(res.global));
      for (int t = 1; t <= cfg.rounds; ++t) {
        RoundTrace trace{t, std::vector<ClientTrace>(k), 0};
        parallel_for(k, cfg.parallelism, [&](std::size_t c) { models[c] = clients[c].train(models[c], cfg, t, &trace.clients[c]); });
        std::uint64_t h = 0;
        for (const auto& m : models) h = mix64(h ^ checksum(params_from_json(m)));
        trace.checksum = h;
        res.traces.push_back(std::move(trace));
      }
      for (const auto& m : models) res.client_models.push_back(params_from_json(m));
      break;
    }
  }
  return res;
}

double mean_loss(const ModelParams& params, const std::vector<TabularDataset>& datasets) {
  double total = 0.0, n = 0.0;
  for (const auto& ds : datasets) {
    if (ds.empty()) continue;
    const auto logits = forward_logits(params, ds.a);
    total += bce_from_logits(logits, ds.y) * static_cast<double>(ds.rows());
    n += static_cast<double>(ds.rows());
  }
  if (n == 0.0) throw Error("mean_loss: no rows");
  return total / n;
}

}  // namespace fedida
