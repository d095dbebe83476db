#include "gsina/dataset_io.hpp"

#include "gsina/error.hpp"

#include <fstream>
#include <sstream>

namespace gsina {

using nlohmann::json;

namespace {

std::vector<bool> mask_from_json(const json& j) {
  std::vector<bool> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
  return out;
}

json mask_to_json(const std::vector<bool>& mask) {
  json out = json::array();
  for (bool b : mask) out.push_back(b ? 1 : 0);
  return out;
}

}  // namespace

json example_to_json(const LabeledExample& example) {
  const Graph& g = example.graph;
  json j;
  j["num_nodes"] = g.num_nodes();
  json edges = json::array();
  for (Index e = 0; e < g.num_edges(); ++e) edges.push_back({g.edge_u(e), g.edge_v(e)});
  j["edges"] = std::move(edges);
  json feats = json::array();
  for (Index i = 0; i < g.num_nodes(); ++i) {
    json row = json::array();
    for (Index k = 0; k < g.feat_dim(); ++k) row.push_back(g.features()(i, k));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  j["label"] = example.label;
  if (example.gt_edge_mask) j["gt_edge_mask"] = mask_to_json(*example.gt_edge_mask);
  if (example.gt_node_mask) j["gt_node_mask"] = mask_to_json(*example.gt_node_mask);
  if (example.node_labels) j["node_labels"] = *example.node_labels;
  if (example.env) j["env"] = *example.env;
  return j;
}

LabeledExample example_from_json(const json& j) {
  const auto n = j.at("num_nodes").get<Index>();
  std::vector<std::pair<Index, Index>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw Error(ErrorCode::Parse, "edge must be [u, v]");
    edges.emplace_back(e[0].get<Index>(), e[1].get<Index>());
  }
  const auto& feats = j.at("features");
  if (static_cast<Index>(feats.size()) != n) {
    throw Error(ErrorCode::FeatureDimMismatch, "features has " + std::to_string(feats.size()) + " rows");
  }
  const Index dim = n > 0 ? static_cast<Index>(feats[0].size()) : 0;
  Matrix x(n, dim);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(feats[i].size()) != dim) throw Error(ErrorCode::FeatureDimMismatch, "ragged features");
    for (Index k = 0; k < dim; ++k) x(i, k) = feats[i][k].get<double>();
  }
  LabeledExample ex{Graph(n, edges, std::move(x)), j.at("label").get<Index>(), {}, {}, {}, {}};
  if (j.contains("gt_edge_mask")) ex.gt_edge_mask = mask_from_json(j["gt_edge_mask"]);
  if (j.contains("gt_node_mask")) ex.gt_node_mask = mask_from_json(j["gt_node_mask"]);
  if (j.contains("node_labels")) ex.node_labels = j["node_labels"].get<std::vector<Index>>();
  if (j.contains("env")) ex.env = j["env"].get<std::string>();
  ex.validate(0);
  return ex;
}

void write_jsonl(std::ostream& out, const Dataset& dataset) {
  for (const auto& ex : dataset) out << example_to_json(ex).dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_jsonl(out, dataset);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Dataset read_jsonl(std::istream& in) {
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Parse) throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": " + e.what());
      throw;
    }
  }
  return out;
}

Dataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_jsonl(in);
}

}  // namespace gsina
