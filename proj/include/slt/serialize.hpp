#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "slt/construct.hpp"
#include "slt/data.hpp"
#include "slt/error.hpp"
#include "slt/network.hpp"

namespace slt {

inline constexpr int kNetworkFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw StructuralError("weight matrix has the wrong number of rows");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw StructuralError("weight matrix has the wrong number of columns");
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, Index n) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n)
    throw StructuralError("bias vector has the wrong length");
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline nlohmann::json tensors_to_json(const ParameterTensors& t) {
  nlohmann::json j = {{"weights", nlohmann::json::array()}, {"biases", nlohmann::json::array()}};
  for (const auto& w : t.weights) j["weights"].push_back(matrix_to_json(w));
  for (const auto& b : t.biases) j["biases"].push_back(vector_to_json(b));
  return j;
}

inline void tensors_from_json(const nlohmann::json& j, const Architecture& arch, ParameterTensors& t) {
  const auto L = static_cast<std::size_t>(arch.depth());
  if (!j.contains("weights") || !j.contains("biases") || j["weights"].size() != L ||
      j["biases"].size() != L)
    throw StructuralError("parameter arrays do not match the architecture depth");
  t.weights.clear();
  t.biases.clear();
  for (std::size_t k = 0; k < L; ++k) {
    const int l = static_cast<int>(k) + 1;
    t.weights.push_back(matrix_from_json(j["weights"][k], arch.width(l), arch.width(l - 1)));
    t.biases.push_back(vector_from_json(j["biases"][k], arch.width(l)));
  }
}

}  // namespace detail

/// Network, plus optional mask and popup scores, as a versioned document.
struct NetworkDocument {
  Network net;
  std::optional<Mask> mask;
  std::optional<ParameterTensors> scores;
  double lambda = 1.0;
  nlohmann::json provenance = nlohmann::json::object();
};

inline nlohmann::json to_json(const NetworkDocument& doc) {
  nlohmann::json j;
  j["version"] = kNetworkFormatVersion;
  j["widths"] = doc.net.arch.widths;
  j["output_linear"] = doc.net.arch.output_linear;
  const auto p = detail::tensors_to_json(doc.net.parameters());
  j["weights"] = p["weights"];
  j["biases"] = p["biases"];
  j["lambda"] = doc.lambda;
  if (doc.mask) j["mask"] = detail::tensors_to_json(*doc.mask);
  if (doc.scores) j["scores"] = detail::tensors_to_json(*doc.scores);
  if (!doc.provenance.empty()) j["provenance"] = doc.provenance;
  return j;
}

inline NetworkDocument network_document_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw StructuralError("network document has no version");
  const int version = j["version"].get<int>();
  if (version != kNetworkFormatVersion)
    throw StructuralError("unsupported network format version " + std::to_string(version));
  NetworkDocument doc;
  doc.net.arch.widths = j.at("widths").get<std::vector<Index>>();
  doc.net.arch.output_linear = j.at("output_linear").get<bool>();
  doc.net.arch.validate();
  ParameterTensors p;
  detail::tensors_from_json(j, doc.net.arch, p);
  doc.net.set_parameters(p);
  doc.lambda = j.value("lambda", 1.0);
  if (j.contains("mask")) {
    Mask m;
    detail::tensors_from_json(j["mask"], doc.net.arch, m);
    if (!m.is_binary()) throw StructuralError("mask entries must be 0 or 1");
    doc.mask = std::move(m);
  }
  if (j.contains("scores")) {
    ParameterTensors s;
    detail::tensors_from_json(j["scores"], doc.net.arch, s);
    doc.scores = std::move(s);
  }
  if (j.contains("provenance")) doc.provenance = j["provenance"];
  return doc;
}

inline nlohmann::json to_json(const Network& net) { return to_json(NetworkDocument{net, {}, {}, 1.0, {}}); }

inline Network network_from_json(const nlohmann::json& j) { return network_document_from_json(j).net; }

// ---------------------------------------------------------------------------
// Construction plan and report

inline nlohmann::json to_json(const ConstructionPlan& plan) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : plan.entries)
    entries.push_back({{"layer", e.layer},        {"kind", to_string(e.kind)},
                       {"row", e.row},            {"col", e.col},
                       {"theta", e.theta},        {"pool", e.pool},
                       {"subset", e.subset},      {"achieved", e.achieved},
                       {"residual", e.residual},  {"ok", e.ok}});
  return {{"success", plan.success},
          {"tolerance", plan.tolerance},
          {"failures", plan.failures},
          {"entries", std::move(entries)}};
}

inline nlohmann::json to_json(const ConstructionReport& rep) {
  return {{"success", rep.success},
          {"sup_error", rep.sup_error},
          {"lambda", rep.ticket.lambda},
          {"parameter_sparsity", rep.parameter_sparsity},
          {"weight_sparsity", rep.weight_sparsity},
          {"mother_widths", rep.mother.net.arch.widths},
          {"mother_parameters", rep.mother.net.parameter_count()},
          {"ticket_parameters", rep.ticket.mask.retained()},
          {"C", rep.mother.C},
          {"delta", rep.mother.delta},
          {"delta_l", rep.mother.delta_l},
          {"epsilon", rep.budget.epsilon},
          {"eps_l", rep.budget.eps},
          {"sup_l1", rep.budget.sup_l1},
          {"k_max", rep.budget.k_max},
          {"target_scale", rep.target_scale.sigma},
          {"plan", to_json(rep.ticket.plan)}};
}

// ---------------------------------------------------------------------------
// Files

/// Write via a temporary sibling and rename, so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os << content;
    if (!os) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
}

/// Dataset as CSV plus a JSON sidecar (path + ".json") holding its provenance.
inline void save_dataset(const std::filesystem::path& csv_path, const Dataset& ds) {
  std::ostringstream os;
  write_dataset_csv(ds, os);
  write_file_atomic(csv_path, os.str());
  auto side = csv_path;
  side += ".json";
  nlohmann::json meta = ds.provenance;
  meta["kind"] = ds.kind == TaskKind::regression ? "regression" : "classification";
  meta["num_classes"] = ds.num_classes;
  meta["size"] = ds.size();
  save_json(side, meta);
}

inline Dataset load_dataset(const std::filesystem::path& csv_path) {
  std::istringstream is(read_file(csv_path));
  Dataset ds = read_dataset_csv(is);
  auto side = csv_path;
  side += ".json";
  if (std::filesystem::exists(side)) {
    ds.provenance = load_json(side);
    if (ds.kind == TaskKind::classification)
      ds.num_classes = std::max(ds.num_classes, ds.provenance.value("num_classes", 0));
  }
  return ds;
}

}  // namespace slt
