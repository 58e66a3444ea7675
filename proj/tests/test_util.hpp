#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "slt/network.hpp"
#include "slt/rng.hpp"

namespace slt::test {

inline Network random_network(const Architecture& arch, std::uint64_t seed, double scale = 1.0) {
  Network net = Network::zeros(arch);
  auto rng = make_rng(seed, {0x7E57});
  std::normal_distribution<double> n(0.0, scale);
  for (auto& w : net.weights)
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  for (auto& b : net.biases)
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = n(rng);
  return net;
}

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  auto rng = make_rng(seed, {0xA7});
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Mask random_mask(const Architecture& arch, std::uint64_t seed, double keep = 0.5) {
  Mask m = Mask::zeros(arch);
  auto rng = make_rng(seed, {0x3A5C});
  std::bernoulli_distribution coin(keep);
  for (auto& w : m.weights)
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = coin(rng) ? 1.0 : 0.0;
  for (auto& b : m.biases)
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = coin(rng) ? 1.0 : 0.0;
  return m;
}

/// Central difference of f at x along coordinate v (modified in place, then restored).
inline double central_difference(const std::function<double()>& f, double& v, double h = 1e-6) {
  const double orig = v;
  v = orig + h;
  const double up = f();
  v = orig - h;
  const double down = f();
  v = orig;
  return (up - down) / (2.0 * h);
}

}  // namespace slt::test
