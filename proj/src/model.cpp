#include "fedida/model.hpp"

#include <cstring>

namespace fedida {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::linear ? "linear" : "fcnn"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear" || name == "lr") return ModelKind::linear;
  if (name == "fcnn") return ModelKind::fcnn;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected linear or fcnn)");
}

ModelParams init_linear(Eigen::Index p) {
  if (p < 1) throw Error("init_linear: need at least one input");
  return {ModelKind::linear, {{Matrix::Zero(1, p), Vector::Zero(1)}}};
}

ModelParams init_fcnn(Eigen::Index p, std::uint64_t seed, Eigen::Index hidden) {
  if (p < 1 || hidden < 1) throw Error("init_fcnn: bad dimensions");
  Rng rng(seed);
  auto layer = [&rng](Eigen::Index out, Eigen::Index in) {
    const double r = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-r, r);
    Layer<double> l{Matrix(out, in), Vector(out)};
    for (Eigen::Index j = 0; j < in; ++j)
      for (Eigen::Index i = 0; i < out; ++i) l.weight(i, j) = u(rng);
    for (Eigen::Index i = 0; i < out; ++i) l.bias(i) = u(rng);
    return l;
  };
  ModelParams params{ModelKind::fcnn, {}};
  params.layers.push_back(layer(hidden, p));
  params.layers.push_back(layer(1, hidden));
  return params;
}

ModelParams init_params(ModelKind kind, Eigen::Index p, std::uint64_t seed) {
  return kind == ModelKind::linear ? init_linear(p) : init_fcnn(p, seed);
}

nlohmann::json to_json(const ModelParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) row.push_back(l.weight(i, j));
      w.push_back(std::move(row));
    }
    layers.push_back({{"weight", std::move(w)}, {"bias", std::vector<double>(l.bias.begin(), l.bias.end())}});
  }
  return {{"kind", std::string(to_string(params.kind))}, {"layers", std::move(layers)}};
}

namespace {

ModelParams parse_params(const nlohmann::json& j) {
  ModelParams params;
  params.kind = parse_model_kind(j.at("kind").get<std::string>());
  for (const auto& lj : j.at("layers")) {
    const auto& w = lj.at("weight");
    const auto& b = lj.at("bias");
    const auto rows = static_cast<Eigen::Index>(w.size());
    const auto cols = rows ? static_cast<Eigen::Index>(w.at(0).size()) : 0;
    Layer<double> l{Matrix(rows, cols), Vector(static_cast<Eigen::Index>(b.size()))};
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (static_cast<Eigen::Index>(w.at(i).size()) != cols) throw Error("ragged weight matrix in params JSON");
      for (Eigen::Index k = 0; k < cols; ++k) l.weight(i, k) = w.at(i).at(k).get<double>();
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = b.at(i).get<double>();
    if (l.bias.size() != rows) throw Error("bias length does not match weight rows in params JSON");
    params.layers.push_back(std::move(l));
  }
  const std::size_t expected = params.kind == ModelKind::linear ? 1 : 2;
  if (params.layers.size() != expected) throw Error("params JSON has wrong number of layers for its kind");
  for (std::size_t i = 1; i < params.layers.size(); ++i)
    if (params.layers[i].weight.cols() != params.layers[i - 1].weight.rows())
      throw Error("params JSON layer shapes do not chain");
  if (!params.all_finite()) throw Error("params JSON contains non-finite entries");
  return params;
}

}  // namespace

ModelParams params_from_json(const nlohmann::json& j) {
  try {
    return parse_params(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed params JSON: ") + e.what());
  }
}

std::uint64_t checksum(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) feed(l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) feed(l.bias(i));
  }
  return h;
}

}  // namespace fedida
