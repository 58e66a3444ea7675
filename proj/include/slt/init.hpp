#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "slt/error.hpp"
#include "slt/network.hpp"
#include "slt/rng.hpp"

namespace slt {

enum class InitScheme { uniform, normal, looks_linear };

inline std::string_view to_string(InitScheme s) {
  switch (s) {
    case InitScheme::uniform: return "uniform";
    case InitScheme::normal: return "normal";
    case InitScheme::looks_linear: return "looks_linear";
  }
  return "?";
}

inline InitScheme parse_init_scheme(std::string_view s) {
  if (s == "uniform") return InitScheme::uniform;
  if (s == "normal" || s == "he") return InitScheme::normal;
  if (s == "looks_linear" || s == "looks-linear" || s == "orthogonal")
    return InitScheme::looks_linear;
  throw ConfigError("unknown init scheme: " + std::string(s));
}

/// Initialization recipe. Bias scales are never stored: layer l uses the
/// running product of the first l weight scales.
struct InitSpec {
  InitScheme scheme = InitScheme::normal;
  /// Per-layer weight scale; empty means sqrt(2 / n_l) for every layer.
  /// Uniform: half-width of U[-s, s]. Normal: standard deviation.
  std::vector<double> sigma_w;
  bool zero_bias = false;
  std::uint64_t seed = 0;

  std::vector<double> weight_scales(const Architecture& arch) const {
    arch.validate();
    if (sigma_w.empty()) {
      std::vector<double> s;
      for (int l = 1; l <= arch.depth(); ++l)
        s.push_back(std::sqrt(2.0 / static_cast<double>(arch.width(l))));
      return s;
    }
    detail::require_config(static_cast<int>(sigma_w.size()) == arch.depth(),
                           "sigma_w needs one entry per layer");
    for (double s : sigma_w)
      detail::require_config(s > 0.0 && std::isfinite(s), "sigma_w entries must be positive");
    return sigma_w;
  }

  /// sigma_b,l = prod_{m<=l} sigma_w,m.
  std::vector<double> bias_scales(const Architecture& arch) const {
    return running_product(weight_scales(arch));
  }

  static std::vector<double> running_product(const std::vector<double>& s) {
    std::vector<double> out;
    out.reserve(s.size());
    double p = 1.0;
    for (double v : s) out.push_back(p *= v);
    return out;
  }
};

namespace detail {

enum : std::uint64_t { kStreamWeights = 1, kStreamBiases = 2 };

inline void fill_uniform(Matrix& m, Rng& rng, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = scale * u(rng);
}

inline void fill_normal(Matrix& m, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = scale * n(rng);
}

inline Vector sample_vector(Index n, Rng& rng, double scale, bool normal) {
  Matrix v(n, 1);
  if (normal)
    fill_normal(v, rng, scale);
  else
    fill_uniform(v, rng, scale);
  return v.col(0);
}

}  // namespace detail

/// Haar-distributed matrix with orthonormal rows or columns (whichever is the
/// shorter side): QR of a Gaussian matrix with sign-corrected R diagonal.
inline Matrix random_orthogonal(Index rows, Index cols, Rng& rng) {
  const bool tall = rows >= cols;
  Matrix g(tall ? rows : cols, tall ? cols : rows);
  detail::fill_normal(g, rng, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
  Matrix r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (Index k = 0; k < g.cols(); ++k)
    if (r(k, k) < 0.0) q.col(k) *= -1.0;
  return tall ? q : Matrix(q.transpose());
}

inline Network init_uniform(const Architecture& arch, const InitSpec& spec) {
  detail::require_config(spec.scheme == InitScheme::uniform, "init_uniform needs the uniform scheme");
  const auto sw = spec.weight_scales(arch);
  const auto sb = spec.bias_scales(arch);
  Network net = Network::zeros(arch);
  for (int l = 1; l <= arch.depth(); ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    auto rw = make_rng(spec.seed, {detail::kStreamWeights, k});
    detail::fill_uniform(net.weights[k], rw, sw[k]);
    if (!spec.zero_bias) {
      auto rb = make_rng(spec.seed, {detail::kStreamBiases, k});
      net.biases[k] = detail::sample_vector(arch.width(l), rb, sb[k], false);
    }
  }
  return net;
}

inline Network init_normal(const Architecture& arch, const InitSpec& spec) {
  detail::require_config(spec.scheme == InitScheme::normal, "init_normal needs the normal scheme");
  const auto sw = spec.weight_scales(arch);
  const auto sb = spec.bias_scales(arch);
  Network net = Network::zeros(arch);
  for (int l = 1; l <= arch.depth(); ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    auto rw = make_rng(spec.seed, {detail::kStreamWeights, k});
    detail::fill_normal(net.weights[k], rw, sw[k]);
    if (!spec.zero_bias) {
      auto rb = make_rng(spec.seed, {detail::kStreamBiases, k});
      net.biases[k] = detail::sample_vector(arch.width(l), rb, sb[k], true);
    }
  }
  return net;
}

/// Mirrored ("looks-linear") orthogonal initialization.
///
/// Layer 1 uses the stacked form [W0; -W0] (input has no mirror structure),
/// hidden layers the block form [[W0, -W0], [-W0, W0]] with b = [b0; -b0].
/// A linear output layer reads the pair difference: W = [W0, -W0], b = b0.
/// W0 entries have marginal variance 2 / n_l; b0 ~ N(0, sigma_b,l^2).
inline Network init_looks_linear(const Architecture& arch, const InitSpec& spec) {
  detail::require_config(spec.scheme == InitScheme::looks_linear,
                         "init_looks_linear needs the looks_linear scheme");
  const int L = arch.depth();
  for (int l = 1; l <= L; ++l) {
    const bool relu = l < L || !arch.output_linear;
    if (relu && arch.width(l) % 2 != 0)
      throw ConfigError("looks-linear init needs even width at layer " + std::to_string(l));
  }
  const auto sb = spec.bias_scales(arch);
  Network net = Network::zeros(arch);
  for (int l = 1; l <= L; ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    const bool mirrored_out = l < L || !arch.output_linear;
    const bool mirrored_in = l > 1;
    const Index n_out = arch.width(l);
    const Index r = mirrored_out ? n_out / 2 : n_out;
    const Index c = mirrored_in ? arch.width(l - 1) / 2 : arch.width(l - 1);

    auto rw = make_rng(spec.seed, {detail::kStreamWeights, k});
    Matrix w0 = random_orthogonal(r, c, rw);
    // orthonormal columns (r >= c) have entry variance 1/r, orthonormal rows 1/c
    w0 *= std::sqrt(2.0 * static_cast<double>(std::max(r, c)) / static_cast<double>(n_out));

    Vector b0 = Vector::Zero(r);
    if (!spec.zero_bias) {
      auto rb = make_rng(spec.seed, {detail::kStreamBiases, k});
      b0 = detail::sample_vector(r, rb, sb[k], true);
    }

    Matrix& w = net.weights[k];
    if (mirrored_in && mirrored_out) {
      w << w0, -w0, -w0, w0;
    } else if (mirrored_out) {
      w << w0, -w0;
    } else if (mirrored_in) {
      w << w0, -w0;
    } else {
      w = w0;
    }
    if (mirrored_out)
      net.biases[k] << b0, -b0;
    else
      net.biases[k] = b0;
  }
  return net;
}

inline Network initialize(const Architecture& arch, const InitSpec& spec) {
  switch (spec.scheme) {
    case InitScheme::uniform: return init_uniform(arch, spec);
    case InitScheme::normal: return init_normal(arch, spec);
    case InitScheme::looks_linear: return init_looks_linear(arch, spec);
  }
  throw ConfigError("unknown init scheme");
}

}  // namespace slt
