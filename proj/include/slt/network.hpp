#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "slt/error.hpp"

namespace slt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Layer sizes [n0, n1, ..., nL] of a dense ReLU network.
struct Architecture {
  std::vector<Index> widths;
  /// Final layer skips the ReLU (regression values or logits).
  bool output_linear = false;

  int depth() const { return static_cast<int>(widths.size()) - 1; }
  Index input_width() const { return widths.front(); }
  Index output_width() const { return widths.back(); }
  /// Width of parameterized layer l (1-based, as in the layer numbering).
  Index width(int l) const { return widths[static_cast<std::size_t>(l)]; }

  void validate() const {
    detail::require_config(widths.size() >= 2, "architecture needs at least two widths");
    for (auto w : widths) detail::require_config(w >= 1, "architecture widths must be >= 1");
  }

  bool operator==(const Architecture&) const = default;
};

/// One matrix and one vector per layer; the common shape of parameters,
/// masks, popup scores, gradients and optimizer buffers.
struct ParameterTensors {
  std::vector<Matrix> weights;  // W(l) is n_l x n_{l-1}
  std::vector<Vector> biases;   // b(l) has n_l entries

  static ParameterTensors filled(const Architecture& arch, double value) {
    arch.validate();
    ParameterTensors t;
    for (int l = 1; l <= arch.depth(); ++l) {
      t.weights.push_back(Matrix::Constant(arch.width(l), arch.width(l - 1), value));
      t.biases.push_back(Vector::Constant(arch.width(l), value));
    }
    return t;
  }

  int layers() const { return static_cast<int>(weights.size()); }

  std::size_t count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  std::size_t weight_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    return n;
  }

  bool same_shape(const ParameterTensors& o) const {
    if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols())
        return false;
      if (biases[l].size() != o.biases[l].size()) return false;
    }
    return true;
  }

  bool matches(const Architecture& arch) const { return shapes_match(weights, biases, arch); }

  static bool shapes_match(const std::vector<Matrix>& weights, const std::vector<Vector>& biases,
                           const Architecture& arch) {
    if (static_cast<int>(weights.size()) != arch.depth() || biases.size() != weights.size())
      return false;
    for (int l = 1; l <= arch.depth(); ++l) {
      const auto& w = weights[static_cast<std::size_t>(l - 1)];
      if (w.rows() != arch.width(l) || w.cols() != arch.width(l - 1)) return false;
      if (biases[static_cast<std::size_t>(l - 1)].size() != arch.width(l)) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  bool operator==(const ParameterTensors& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    return true;
  }
};

/// Binary retain (1) / prune (0) indicator per weight and bias.
struct Mask : ParameterTensors {
  static Mask ones(const Architecture& arch) { return Mask{ParameterTensors::filled(arch, 1.0)}; }
  static Mask zeros(const Architecture& arch) { return Mask{ParameterTensors::filled(arch, 0.0)}; }

  std::size_t retained() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>((weights[l].array() != 0.0).count() +
                                    (biases[l].array() != 0.0).count());
    return n;
  }

  std::size_t retained_weights() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>((w.array() != 0.0).count());
    return n;
  }

  /// Retained fraction over weights and biases.
  double parameter_sparsity() const {
    return static_cast<double>(retained()) / static_cast<double>(count());
  }

  /// Retained fraction over weights only (biases not counted).
  double weight_sparsity() const {
    return static_cast<double>(retained_weights()) / static_cast<double>(weight_count());
  }

  bool is_binary() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!(weights[l].array() == 0.0 || weights[l].array() == 1.0).all()) return false;
      if (!(biases[l].array() == 0.0 || biases[l].array() == 1.0).all()) return false;
    }
    return true;
  }
};

struct Gradients : ParameterTensors {};

/// Dense ReLU MLP: h(l) = W(l) x(l-1) + b(l), x(l) = relu(h(l)).
struct Network {
  Architecture arch;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Network zeros(const Architecture& arch) {
    auto t = ParameterTensors::filled(arch, 0.0);
    return Network{arch, std::move(t.weights), std::move(t.biases)};
  }

  int depth() const { return arch.depth(); }

  ParameterTensors parameters() const { return ParameterTensors{weights, biases}; }

  void set_parameters(ParameterTensors p) {
    detail::require_shape(p.matches(arch), "parameter shapes do not match architecture");
    weights = std::move(p.weights);
    biases = std::move(p.biases);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  bool shapes_ok() const { return ParameterTensors::shapes_match(weights, biases, arch); }

  void validate() const {
    arch.validate();
    detail::require_shape(shapes_ok(), "network parameter shapes do not match architecture");
    for (std::size_t l = 0; l < weights.size(); ++l)
      detail::require_shape(weights[l].allFinite() && biases[l].allFinite(),
                            "network parameters must be finite");
  }

  /// Copy with masked-out parameters overwritten by zero.
  Network masked(const Mask& mask) const {
    detail::require_shape(mask.matches(arch), "mask shape does not match network");
    Network out = *this;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights[l] = weights[l].cwiseProduct(mask.weights[l]);
      out.biases[l] = biases[l].cwiseProduct(mask.biases[l]);
    }
    return out;
  }

  bool operator==(const Network& o) const {
    return arch == o.arch && weights == o.weights && biases == o.biases;
  }
};

/// Per-layer pre-activations and activations for one batch (samples are columns).
/// activations[0] is the input batch; pre[l-1], activations[l] belong to layer l.
struct ForwardTrace {
  std::vector<Matrix> pre;
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
  Index batch_size() const { return activations.front().cols(); }
};

namespace detail {

inline bool layer_is_relu(const Architecture& arch, int l) {
  return l < arch.depth() || !arch.output_linear;
}

inline ForwardTrace forward_impl(const Network& net, const Mask* mask, const Matrix& batch) {
  const auto& arch = net.arch;
  require_shape(batch.cols() >= 1, "batch must contain at least one column");
  require_shape(batch.rows() == arch.input_width(), "batch rows must equal input width");
  require_shape(net.shapes_ok(), "network parameter shapes do not match architecture");
  if (mask) require_shape(mask->matches(arch), "mask shape does not match network");

  ForwardTrace trace;
  trace.pre.reserve(static_cast<std::size_t>(arch.depth()));
  trace.activations.reserve(static_cast<std::size_t>(arch.depth()) + 1);
  trace.activations.push_back(batch);
  for (int l = 1; l <= arch.depth(); ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    Matrix h;
    if (mask) {
      h.noalias() = net.weights[k].cwiseProduct(mask->weights[k]) * trace.activations.back();
      h.colwise() += net.biases[k].cwiseProduct(mask->biases[k]);
    } else {
      h.noalias() = net.weights[k] * trace.activations.back();
      h.colwise() += net.biases[k];
    }
    Matrix x = layer_is_relu(arch, l) ? Matrix(h.cwiseMax(0.0)) : h;
    trace.pre.push_back(std::move(h));
    trace.activations.push_back(std::move(x));
  }
  return trace;
}

// dL/dh(l) for every layer, propagated through the masked network.
inline std::vector<Matrix> backprop_deltas(const Network& net, const Mask* mask,
                                           const ForwardTrace& trace, const Matrix& loss_grad) {
  const auto& arch = net.arch;
  const auto L = static_cast<std::size_t>(arch.depth());
  require_shape(trace.pre.size() == L && trace.activations.size() == L + 1,
                "trace depth does not match network");
  require_shape(loss_grad.rows() == arch.output_width() && loss_grad.cols() == trace.batch_size(),
                "loss gradient shape does not match trace output");
  for (std::size_t l = 0; l < L; ++l)
    require_shape(trace.pre[l].rows() == net.weights[l].rows() &&
                      trace.activations[l].rows() == net.weights[l].cols() &&
                      trace.pre[l].cols() == trace.batch_size(),
                  "stale trace: shapes differ from network");
  if (mask) require_shape(mask->matches(arch), "mask shape does not match network");

  std::vector<Matrix> deltas(L);
  Matrix delta = loss_grad;
  for (std::size_t k = L; k-- > 0;) {
    if (layer_is_relu(arch, static_cast<int>(k) + 1))
      delta = delta.cwiseProduct((trace.pre[k].array() > 0.0).cast<double>().matrix());
    if (k > 0) {
      Matrix next;
      if (mask)
        next.noalias() = net.weights[k].cwiseProduct(mask->weights[k]).transpose() * delta;
      else
        next.noalias() = net.weights[k].transpose() * delta;
      deltas[k] = std::move(delta);
      delta = std::move(next);
    } else {
      deltas[k] = std::move(delta);
    }
  }
  return deltas;
}

}  // namespace detail

inline ForwardTrace forward(const Network& net, const Matrix& batch) {
  return detail::forward_impl(net, nullptr, batch);
}

/// Forward pass with elementwise-masked parameters (W*M_w, b*M_b).
inline ForwardTrace forward(const Network& net, const Mask& mask, const Matrix& batch) {
  return detail::forward_impl(net, &mask, batch);
}

inline Matrix predict(const Network& net, const Matrix& batch) {
  return forward(net, batch).output();
}

inline Matrix predict(const Network& net, const Mask& mask, const Matrix& batch) {
  return forward(net, mask, batch).output();
}

/// True parameter gradients of the masked network; pruned entries get exactly 0.
inline Gradients backward_train(const Network& net, const Mask& mask, const ForwardTrace& trace,
                                const Matrix& loss_grad) {
  auto deltas = detail::backprop_deltas(net, &mask, trace, loss_grad);
  Gradients g;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    Matrix gw;
    gw.noalias() = deltas[k] * trace.activations[k].transpose();
    g.weights.push_back(gw.cwiseProduct(mask.weights[k]));
    g.biases.push_back(deltas[k].rowwise().sum().cwiseProduct(mask.biases[k]));
  }
  return g;
}

inline Gradients backward_train(const Network& net, const ForwardTrace& trace,
                                const Matrix& loss_grad) {
  auto deltas = detail::backprop_deltas(net, nullptr, trace, loss_grad);
  Gradients g;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    Matrix gw;
    gw.noalias() = deltas[k] * trace.activations[k].transpose();
    g.weights.push_back(std::move(gw));
    g.biases.push_back(deltas[k].rowwise().sum());
  }
  return g;
}

/// Straight-through popup-score gradients. For weight (l,i,j) this is
/// dL/dh_i(l) * w_ij * x_j(l-1); for bias (l,i) it is dL/dh_i(l) * b_i.
/// Every parameter gets a gradient, pruned or not.
inline Gradients backward_scores(const Network& net, const Mask& mask, const ForwardTrace& trace,
                                 const Matrix& loss_grad) {
  auto deltas = detail::backprop_deltas(net, &mask, trace, loss_grad);
  Gradients g;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    Matrix gw;
    gw.noalias() = deltas[k] * trace.activations[k].transpose();
    g.weights.push_back(gw.cwiseProduct(net.weights[k]));
    g.biases.push_back(deltas[k].rowwise().sum().cwiseProduct(net.biases[k]));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Losses. Both average over samples; the gradient is w.r.t. the network output.

struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Mean over samples and outputs of (prediction - target)^2.
inline LossValue mse_loss(const Matrix& prediction, const Matrix& target) {
  detail::require_shape(prediction.rows() == target.rows() && prediction.cols() == target.cols(),
                        "prediction and target shapes differ");
  const double n = static_cast<double>(prediction.size());
  Matrix diff = prediction - target;
  return {diff.squaredNorm() / n, diff * (2.0 / n)};
}

inline double mse(const Matrix& prediction, const Matrix& target) {
  detail::require_shape(prediction.rows() == target.rows() && prediction.cols() == target.cols(),
                        "prediction and target shapes differ");
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

/// Mean softmax cross-entropy of logit columns against integer labels.
inline LossValue cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  detail::require_shape(static_cast<std::size_t>(logits.cols()) == labels.size(),
                        "label count differs from batch size");
  const double n = static_cast<double>(logits.cols());
  LossValue out;
  out.grad.resize(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    detail::require_shape(y >= 0 && y < logits.rows(), "label out of range");
    const double m = logits.col(c).maxCoeff();
    Vector e = (logits.col(c).array() - m).exp().matrix();
    const double z = e.sum();
    out.value += std::log(z) + m - logits(y, c);
    out.grad.col(c) = e / z;
    out.grad(y, c) -= 1.0;
  }
  out.value /= n;
  out.grad /= n;
  return out;
}

inline double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  double total = 0.0;
  for (Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    total += std::log((logits.col(c).array() - m).exp().sum()) + m -
             logits(labels[static_cast<std::size_t>(c)], c);
  }
  return total / static_cast<double>(logits.cols());
}

inline double accuracy(const Matrix& logits, std::span<const int> labels) {
  detail::require_shape(static_cast<std::size_t>(logits.cols()) == labels.size(),
                        "label count differs from batch size");
  std::size_t hits = 0;
  for (Index c = 0; c < logits.cols(); ++c) {
    Index arg = 0;
    logits.col(c).maxCoeff(&arg);
    if (arg == labels[static_cast<std::size_t>(c)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.cols());
}

}  // namespace slt
