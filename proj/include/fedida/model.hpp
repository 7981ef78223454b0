#ifndef FEDIDA_MODEL_HPP
#define FEDIDA_MODEL_HPP

// Differentiable predictors: a linear scorer and a one-hidden-layer fully
// connected network. Everything here is templated on the scalar type so the
// gradient checks can run in extended precision.

#include "fedida/random.hpp"
#include "fedida/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace fedida {

enum class ModelKind { linear, fcnn };

inline constexpr Eigen::Index kFcnnHiddenUnits = 100;

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

template <typename Scalar>
struct Layer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;    // out
};

/// Layered parameters. Linear = one 1 x p layer; FCNN = (H x p, 1 x H).
/// Gradients share this type.
template <typename Scalar>
struct BasicModelParams {
  ModelKind kind = ModelKind::linear;
  std::vector<Layer<Scalar>> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  bool same_shape(const BasicModelParams& o) const {
    if (kind != o.kind || layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight.rows() != o.layers[i].weight.rows() ||
          layers[i].weight.cols() != o.layers[i].weight.cols() ||
          layers[i].bias.size() != o.layers[i].bias.size())
        return false;
    }
    return true;
  }

  BasicModelParams zeros_like() const {
    BasicModelParams z{kind, layers};
    for (auto& l : z.layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
    return z;
  }

  /// Weights then bias, layer by layer, column-major within each weight.
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(size());
    Eigen::Index at = 0;
    for (const auto& l : layers) {
      out.segment(at, l.weight.size()) = l.weight.reshaped();
      at += l.weight.size();
      out.segment(at, l.bias.size()) = l.bias;
      at += l.bias.size();
    }
    return out;
  }

  void assign(const Vec<Scalar>& flat) {
    if (flat.size() != size()) throw Error("flat parameter vector has wrong length");
    Eigen::Index at = 0;
    for (auto& l : layers) {
      l.weight.reshaped() = flat.segment(at, l.weight.size());
      at += l.weight.size();
      l.bias = flat.segment(at, l.bias.size());
      at += l.bias.size();
    }
  }

  template <typename Other>
  BasicModelParams<Other> cast() const {
    BasicModelParams<Other> out;
    out.kind = kind;
    for (const auto& l : layers)
      out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    return out;
  }

  BasicModelParams& operator+=(const BasicModelParams& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }

  BasicModelParams& operator*=(Scalar c) {
    for (auto& l : layers) {
      l.weight *= c;
      l.bias *= c;
    }
    return *this;
  }

  friend bool operator==(const BasicModelParams& a, const BasicModelParams& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
      if (a.layers[i].weight != b.layers[i].weight || a.layers[i].bias != b.layers[i].bias) return false;
    return true;
  }
};

using ModelParams = BasicModelParams<double>;

/// Zero-initialized linear scorer over p inputs.
ModelParams init_linear(Eigen::Index p);
/// FCNN with entries ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ModelParams init_fcnn(Eigen::Index p, std::uint64_t seed, Eigen::Index hidden = kFcnnHiddenUnits);
ModelParams init_params(ModelKind kind, Eigen::Index p, std::uint64_t seed);

nlohmann::json to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);
/// FNV-1a over the raw bytes of every entry; cheap identity check for traces.
std::uint64_t checksum(const ModelParams& params);

template <typename Scalar>
struct BasicBatchScores {
  Vec<Scalar> logits;
  Vec<Scalar> probs;
};
using BatchScores = BasicBatchScores<double>;

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(z)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar z) {
  using std::exp;
  using std::log1p;
  return z > Scalar(0) ? z + log1p(exp(-z)) : log1p(exp(z));
}

/// Layer activations kept for backprop. activations[0] is the input batch.
template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> pre;          // pre-activation per layer
  std::vector<Mat<Scalar>> activations;  // input to each layer
};

template <typename Scalar>
Vec<Scalar> forward_logits(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a,
                           ForwardCache<Scalar>* cache = nullptr) {
  if (a.cols() != params.input_dim())
    throw Error("feature matrix has " + std::to_string(a.cols()) + " columns, model expects " +
                std::to_string(params.input_dim()));
  if (!a.allFinite()) throw Error("non-finite value in feature matrix");
  Mat<Scalar> x = a;
  if (cache) {
    cache->pre.clear();
    cache->activations.clear();
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Mat<Scalar> z = x * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    if (cache) {
      cache->activations.push_back(x);
      cache->pre.push_back(z);
    }
    x = (i + 1 < params.layers.size()) ? Mat<Scalar>(z.cwiseMax(Scalar(0))) : z;
  }
  return x.col(0);
}

template <typename Scalar>
BasicBatchScores<Scalar> forward(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a) {
  BasicBatchScores<Scalar> out;
  out.logits = forward_logits(params, a);
  out.probs = out.logits.unaryExpr([](Scalar z) { return sigmoid(z); });
  return out;
}

/// Gradient of sum_i dlogits_i * logit_i with respect to the parameters.
template <typename Scalar>
BasicModelParams<Scalar> backward(const BasicModelParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                                  const Vec<Scalar>& dlogits) {
  BasicModelParams<Scalar> grad = params.zeros_like();
  Mat<Scalar> delta = dlogits;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    grad.layers[i].weight = delta.transpose() * cache.activations[i];
    grad.layers[i].bias = delta.colwise().sum().transpose();
    if (i > 0) {
      delta = (delta * params.layers[i].weight).cwiseProduct(
          cache.pre[i - 1].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
    }
  }
  return grad;
}

/// Mean binary cross-entropy computed from logits.
template <typename Scalar>
Scalar bce_from_logits(const Vec<Scalar>& logits, const Labels& y) {
  Scalar total(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) total += softplus(logits(i)) - Scalar(y(i)) * logits(i);
  return total / Scalar(logits.size());
}

/// d(mean BCE)/d(logit_i) = (sigmoid(z_i) - y_i) / n.
template <typename Scalar>
Vec<Scalar> bce_logit_grad(const Vec<Scalar>& logits, const Labels& y) {
  const Scalar n(logits.size());
  Vec<Scalar> g(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) g(i) = (sigmoid(logits(i)) - Scalar(y(i))) / n;
  return g;
}

template <typename Scalar>
struct LossGrad {
  Scalar loss;
  BasicModelParams<Scalar> grad;
};

inline void check_labels(const Labels& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0 && y(i) != 1) throw Error("labels must be 0 or 1");
}

template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const BasicModelParams<Scalar>& params, const Mat<Scalar>& a, const Labels& y) {
  if (a.rows() == 0) throw Error("loss_and_grad: empty batch");
  if (a.rows() != y.size()) throw Error("loss_and_grad: feature/label row mismatch");
  check_labels(y);
  ForwardCache<Scalar> cache;
  const Vec<Scalar> logits = forward_logits(params, a, &cache);
  return {bce_from_logits(logits, y), backward(params, cache, bce_logit_grad(logits, y))};
}

/// params - lr * grad
template <typename Scalar>
BasicModelParams<Scalar> apply_update(BasicModelParams<Scalar> params, const BasicModelParams<Scalar>& grad,
                                      Scalar lr) {
  if (!params.same_shape(grad)) throw Error("apply_update: gradient shape mismatch");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    params.layers[i].weight -= lr * grad.layers[i].weight;
    params.layers[i].bias -= lr * grad.layers[i].bias;
  }
  return params;
}

/// Squared l2 norm over weights only; biases are not regularized.
template <typename Scalar>
Scalar weight_sq_norm(const BasicModelParams<Scalar>& params) {
  Scalar s(0);
  for (const auto& l : params.layers) s += l.weight.squaredNorm();
  return s;
}

}  // namespace fedida

#endif  // FEDIDA_MODEL_HPP
