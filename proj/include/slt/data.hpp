#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slt/error.hpp"
#include "slt/network.hpp"
#include "slt/rng.hpp"

namespace slt {

enum class TaskKind { regression, classification };

/// Inputs are columns of an n0 x N matrix. Regression targets live in
/// `targets` (nL x N); class labels in `labels`.
struct Dataset {
  Matrix inputs;
  Matrix targets;
  std::vector<int> labels;
  TaskKind kind = TaskKind::regression;
  int num_classes = 0;
  nlohmann::json provenance = nlohmann::json::object();

  Index size() const { return inputs.cols(); }
  Index input_width() const { return inputs.rows(); }
  Index output_width() const {
    return kind == TaskKind::regression ? targets.rows() : num_classes;
  }

  /// Columns `idx` as a new dataset (provenance carried over).
  Dataset subset(std::span<const Index> idx) const {
    Dataset out;
    out.kind = kind;
    out.num_classes = num_classes;
    out.provenance = provenance;
    out.inputs.resize(inputs.rows(), static_cast<Index>(idx.size()));
    if (kind == TaskKind::regression) out.targets.resize(targets.rows(), static_cast<Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
      const auto col = static_cast<Index>(c);
      out.inputs.col(col) = inputs.col(idx[c]);
      if (kind == TaskKind::regression) out.targets.col(col) = targets.col(idx[c]);
      else out.labels.push_back(labels[static_cast<std::size_t>(idx[c])]);
    }
    return out;
  }
};

struct ShiftedReluSpec {
  Index n = 10000;
  double shift = 0.5;
  double noise_sd = 0.01;
};

/// x ~ U[-1, 1], y = relu(x + shift) + N(0, noise_sd^2).
inline Dataset gen_shifted_relu(const ShiftedReluSpec& spec, std::uint64_t seed) {
  detail::require_config(spec.n >= 1, "dataset size must be >= 1");
  detail::require_config(spec.noise_sd >= 0.0, "noise sd must be non-negative");
  Dataset ds;
  ds.kind = TaskKind::regression;
  ds.inputs.resize(1, spec.n);
  ds.targets.resize(1, spec.n);
  auto rx = make_rng(seed, {1});
  auto rn = make_rng(seed, {2});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index i = 0; i < spec.n; ++i) {
    const double x = u(rx);
    ds.inputs(0, i) = x;
    ds.targets(0, i) = std::max(x + spec.shift, 0.0) + spec.noise_sd * noise(rn);
  }
  ds.provenance = {{"generator", "shifted_relu"}, {"n", spec.n},     {"shift", spec.shift},
                   {"noise_sd", spec.noise_sd},   {"seed", seed}};
  return ds;
}

struct OnionSpec {
  Index n = 10000;
  double flip_prob = 0.01;
};

inline double onion_level(double x1, double x2) {
  return 0.5 * (x1 - 0.3) * (x1 - 0.3) + 1.2 * (x2 + 0.5) * (x2 + 0.5);
}

/// Class of level value y against boundaries (0.2, 0.5, 0.7), lower-inclusive bins.
inline int onion_class(double y) {
  if (y < 0.2) return 0;
  if (y < 0.5) return 1;
  if (y < 0.7) return 2;
  return 3;
}

inline constexpr int kOnionClasses = 4;

/// Elliptic-ring classification; labels flip to a neighbouring ring with
/// probability flip_prob (the end classes have a single neighbour).
inline Dataset gen_onion(const OnionSpec& spec, std::uint64_t seed) {
  detail::require_config(spec.n >= 1, "dataset size must be >= 1");
  detail::require_config(spec.flip_prob >= 0.0 && spec.flip_prob <= 1.0,
                         "flip probability must lie in [0, 1]");
  Dataset ds;
  ds.kind = TaskKind::classification;
  ds.num_classes = kOnionClasses;
  ds.inputs.resize(2, spec.n);
  auto rx = make_rng(seed, {1});
  auto rf = make_rng(seed, {3});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (Index i = 0; i < spec.n; ++i) {
    const double x1 = u(rx);
    const double x2 = u(rx);
    ds.inputs(0, i) = x1;
    ds.inputs(1, i) = x2;
    int c = onion_class(onion_level(x1, x2));
    const double flip = u01(rf);
    const double side = u01(rf);
    if (flip < spec.flip_prob) {
      if (c == 0) c = 1;
      else if (c == kOnionClasses - 1) c = kOnionClasses - 2;
      else c += side < 0.5 ? -1 : 1;
    }
    ds.labels.push_back(c);
  }
  ds.provenance = {{"generator", "onion"}, {"n", spec.n}, {"flip_prob", spec.flip_prob},
                   {"seed", seed}};
  return ds;
}

struct SplitDatasets {
  Dataset train;
  Dataset test;
};

/// Uniform shuffle split into disjoint train/test parts.
inline SplitDatasets split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  detail::require_config(test_fraction > 0.0 && test_fraction < 1.0,
                         "test fraction must lie in (0, 1)");
  const Index n = ds.size();
  const auto n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n)
    throw ConfigError("split leaves an empty train or test part");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  auto rng = make_rng(seed, {0x5EED});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::span<const Index> all(idx);
  SplitDatasets out{ds.subset(all.subspan(static_cast<std::size_t>(n_test))),
                    ds.subset(all.first(static_cast<std::size_t>(n_test)))};
  out.train.provenance["split"] = {{"part", "train"}, {"test_fraction", test_fraction}, {"seed", seed}};
  out.test.provenance["split"] = {{"part", "test"}, {"test_fraction", test_fraction}, {"seed", seed}};
  return out;
}

// ---------------------------------------------------------------------------
// CSV persistence: header x0..x{n0-1}, then y0.. (regression) or label.

inline void write_dataset_csv(const Dataset& ds, std::ostream& os) {
  for (Index r = 0; r < ds.inputs.rows(); ++r) os << (r ? "," : "") << 'x' << r;
  if (ds.kind == TaskKind::regression)
    for (Index r = 0; r < ds.targets.rows(); ++r) os << ",y" << r;
  else
    os << ",label";
  os << '\n';
  os.precision(17);
  for (Index c = 0; c < ds.size(); ++c) {
    for (Index r = 0; r < ds.inputs.rows(); ++r) os << (r ? "," : "") << ds.inputs(r, c);
    if (ds.kind == TaskKind::regression)
      for (Index r = 0; r < ds.targets.rows(); ++r) os << ',' << ds.targets(r, c);
    else
      os << ',' << ds.labels[static_cast<std::size_t>(c)];
    os << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw StructuralError("empty dataset CSV");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  Index nx = 0, ny = 0;
  bool labelled = false;
  for (const auto& h : header) {
    if (!h.empty() && h[0] == 'x') ++nx;
    else if (!h.empty() && h[0] == 'y') ++ny;
    else if (h == "label") labelled = true;
    else throw StructuralError("unknown CSV column: " + h);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size()) throw StructuralError("ragged dataset CSV row");
    rows.push_back(std::move(row));
  }
  Dataset ds;
  ds.kind = labelled ? TaskKind::classification : TaskKind::regression;
  const auto n = static_cast<Index>(rows.size());
  ds.inputs.resize(nx, n);
  if (!labelled) ds.targets.resize(ny, n);
  for (Index c = 0; c < n; ++c) {
    const auto& row = rows[static_cast<std::size_t>(c)];
    for (Index r = 0; r < nx; ++r) ds.inputs(r, c) = row[static_cast<std::size_t>(r)];
    if (labelled) {
      const int y = static_cast<int>(row[static_cast<std::size_t>(nx)]);
      ds.labels.push_back(y);
      ds.num_classes = std::max(ds.num_classes, y + 1);
    } else {
      for (Index r = 0; r < ny; ++r) ds.targets(r, c) = row[static_cast<std::size_t>(nx + r)];
    }
  }
  return ds;
}

}  // namespace slt
