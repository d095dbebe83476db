#include "gsina/graph.hpp"

#include "gsina/error.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace gsina {

namespace {

std::pair<Index, Index> canonical(Index u, Index v) { return u < v ? std::pair{u, v} : std::pair{v, u}; }

}  // namespace

Graph::Graph(Index num_nodes, const std::vector<std::pair<Index, Index>>& edges, Matrix features)
    : num_nodes_(num_nodes), features_(std::move(features)) {
  if (num_nodes < 0) throw Error(ErrorCode::IndexOutOfRange, "negative node count");
  if (features_.rows() != num_nodes) {
    throw Error(ErrorCode::FeatureDimMismatch, "feature rows " + std::to_string(features_.rows()) +
                                                   " != num_nodes " + std::to_string(num_nodes));
  }
  std::set<std::pair<Index, Index>> seen;
  edge_u_.reserve(edges.size());
  edge_v_.reserve(edges.size());
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "edge (" + std::to_string(u) + "," + std::to_string(v) + ") with " + std::to_string(num_nodes) + " nodes");
    }
    if (u == v) throw Error(ErrorCode::SelfLoop, "node " + std::to_string(u));
    if (!seen.insert(canonical(u, v)).second) {
      throw Error(ErrorCode::DuplicateEdge, "(" + std::to_string(u) + "," + std::to_string(v) + ")");
    }
    edge_u_.push_back(u);
    edge_v_.push_back(v);
  }
  const std::size_t m = edge_u_.size();
  arc_src_.resize(2 * m);
  arc_dst_.resize(2 * m);
  arc_edge_.resize(2 * m);
  for (std::size_t e = 0; e < m; ++e) {
    arc_src_[2 * e] = edge_u_[e];
    arc_dst_[2 * e] = edge_v_[e];
    arc_src_[2 * e + 1] = edge_v_[e];
    arc_dst_[2 * e + 1] = edge_u_[e];
    arc_edge_[2 * e] = arc_edge_[2 * e + 1] = static_cast<Index>(e);
  }
}

std::vector<std::pair<Index, Index>> Graph::edges() const {
  std::vector<std::pair<Index, Index>> out(edge_u_.size());
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = {edge_u_[e], edge_v_[e]};
  return out;
}

std::vector<Index> Graph::degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(num_nodes_), 0);
  for (Index s : arc_src_) ++deg[s];
  return deg;
}

void Graph::validate() const {
  const Index m = num_edges();
  if (static_cast<Index>(arc_src_.size()) != 2 * m || arc_dst_.size() != arc_src_.size() ||
      arc_edge_.size() != arc_src_.size()) {
    throw Error(ErrorCode::InvalidGraph, "arc table size");
  }
  if (features_.rows() != num_nodes_) throw Error(ErrorCode::InvalidGraph, "feature rows");
  std::vector<int> arcs_per_edge(static_cast<std::size_t>(m), 0);
  std::set<std::tuple<Index, Index, Index>> arcs;
  for (std::size_t a = 0; a < arc_src_.size(); ++a) {
    const Index u = arc_src_[a], v = arc_dst_[a], e = arc_edge_[a];
    if (u < 0 || v < 0 || u >= num_nodes_ || v >= num_nodes_ || e < 0 || e >= m) {
      throw Error(ErrorCode::InvalidGraph, "arc index out of range");
    }
    if (u == v) throw Error(ErrorCode::InvalidGraph, "self-loop arc");
    ++arcs_per_edge[e];
    arcs.emplace(u, v, e);
  }
  for (const auto& [u, v, e] : arcs) {
    if (!arcs.count({v, u, e})) throw Error(ErrorCode::InvalidGraph, "arc without reciprocal");
  }
  for (int c : arcs_per_edge) {
    if (c != 2) throw Error(ErrorCode::InvalidGraph, "edge without exactly two arcs");
  }
}

bool operator==(const Graph& a, const Graph& b) {
  return a.num_nodes_ == b.num_nodes_ && a.edge_u_ == b.edge_u_ && a.edge_v_ == b.edge_v_ &&
         a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_;
}

Graph new_graph(Index num_nodes, const std::vector<std::pair<Index, Index>>& edges, Matrix features) {
  return Graph(num_nodes, edges, std::move(features));
}

std::vector<Index> incident_edges(const Graph& graph, Index node) {
  if (node < 0 || node >= graph.num_nodes()) {
    throw Error(ErrorCode::IndexOutOfRange, "node " + std::to_string(node));
  }
  std::vector<Index> out;
  for (Index e = 0; e < graph.num_edges(); ++e) {
    if (graph.edge_u(e) == node || graph.edge_v(e) == node) out.push_back(e);
  }
  return out;
}

std::vector<Index> inverse_permutation(const std::vector<Index>& perm) {
  std::vector<Index> inv(perm.size(), -1);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const Index p = perm[i];
    if (p < 0 || p >= static_cast<Index>(perm.size()) || inv[p] != -1) {
      throw Error(ErrorCode::InvalidPermutation, "not a bijection");
    }
    inv[p] = static_cast<Index>(i);
  }
  return inv;
}

Graph permute_nodes(const Graph& graph, const std::vector<Index>& perm) {
  if (static_cast<Index>(perm.size()) != graph.num_nodes()) {
    throw Error(ErrorCode::InvalidPermutation, "size " + std::to_string(perm.size()));
  }
  inverse_permutation(perm);  // throws unless perm is a bijection
  Matrix features(graph.num_nodes(), graph.feat_dim());
  for (Index i = 0; i < graph.num_nodes(); ++i) features.row(perm[i]) = graph.features().row(i);
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(graph.num_edges()));
  for (Index e = 0; e < graph.num_edges(); ++e) edges.emplace_back(perm[graph.edge_u(e)], perm[graph.edge_v(e)]);
  return Graph(graph.num_nodes(), edges, std::move(features));
}

bool structurally_equal(const Graph& a, const Graph& b) {
  if (a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges() || a.feat_dim() != b.feat_dim()) return false;
  if (a.features() != b.features()) return false;
  std::multiset<std::pair<Index, Index>> ea, eb;
  for (Index e = 0; e < a.num_edges(); ++e) ea.insert(canonical(a.edge_u(e), a.edge_v(e)));
  for (Index e = 0; e < b.num_edges(); ++e) eb.insert(canonical(b.edge_u(e), b.edge_v(e)));
  return ea == eb;
}

void LabeledExample::validate(Index num_classes) const {
  if (label < 0 || (num_classes > 0 && label >= num_classes)) {
    throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(label));
  }
  if (gt_edge_mask && static_cast<Index>(gt_edge_mask->size()) != graph.num_edges()) {
    throw Error(ErrorCode::InvalidGraph, "gt_edge_mask length");
  }
  if (gt_node_mask && static_cast<Index>(gt_node_mask->size()) != graph.num_nodes()) {
    throw Error(ErrorCode::InvalidGraph, "gt_node_mask length");
  }
  if (node_labels) {
    if (static_cast<Index>(node_labels->size()) != graph.num_nodes()) {
      throw Error(ErrorCode::InvalidGraph, "node_labels length");
    }
    for (Index y : *node_labels) {
      if (y < 0) throw Error(ErrorCode::InvalidLabel, "node label " + std::to_string(y));
    }
  }
}

GraphBatch batch(const std::vector<const LabeledExample*>& examples) {
  if (examples.empty()) throw Error(ErrorCode::EmptyBatch, "no graphs");
  const Index feat_dim = examples.front()->graph.feat_dim();
  GraphBatch out;
  out.node_offsets.push_back(0);
  out.edge_offsets.push_back(0);
  bool all_node_labels = true;
  for (const auto* ex : examples) {
    if (ex->graph.feat_dim() != feat_dim) {
      throw Error(ErrorCode::FeatureDimMismatch,
                  std::to_string(ex->graph.feat_dim()) + " vs " + std::to_string(feat_dim));
    }
    out.node_offsets.push_back(out.node_offsets.back() + ex->graph.num_nodes());
    out.edge_offsets.push_back(out.edge_offsets.back() + ex->graph.num_edges());
    all_node_labels = all_node_labels && ex->node_labels.has_value();
  }
  const Index total_nodes = out.node_offsets.back();
  Matrix features(total_nodes, feat_dim);
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(out.edge_offsets.back()));
  out.segment_of_node.reserve(static_cast<std::size_t>(total_nodes));
  out.segment_of_edge.reserve(edges.capacity());
  for (std::size_t g = 0; g < examples.size(); ++g) {
    const Graph& graph = examples[g]->graph;
    const Index off = out.node_offsets[g];
    if (graph.num_nodes() > 0) features.middleRows(off, graph.num_nodes()) = graph.features();
    for (Index e = 0; e < graph.num_edges(); ++e) {
      edges.emplace_back(graph.edge_u(e) + off, graph.edge_v(e) + off);
      out.segment_of_edge.push_back(static_cast<Index>(g));
    }
    out.segment_of_node.insert(out.segment_of_node.end(), static_cast<std::size_t>(graph.num_nodes()),
                               static_cast<Index>(g));
    out.labels.push_back(examples[g]->label);
    if (all_node_labels) {
      out.node_labels.insert(out.node_labels.end(), examples[g]->node_labels->begin(), examples[g]->node_labels->end());
    }
  }
  out.merged = Graph(total_nodes, edges, std::move(features));
  return out;
}

GraphBatch batch(const Dataset& examples) {
  std::vector<const LabeledExample*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return batch(ptrs);
}

std::vector<Graph> unbatch(const GraphBatch& b) {
  std::vector<Graph> out;
  out.reserve(static_cast<std::size_t>(b.num_graphs()));
  for (Index g = 0; g < b.num_graphs(); ++g) {
    const Index n0 = b.node_offsets[g], n1 = b.node_offsets[g + 1];
    const Index e0 = b.edge_offsets[g], e1 = b.edge_offsets[g + 1];
    std::vector<std::pair<Index, Index>> edges;
    for (Index e = e0; e < e1; ++e) edges.emplace_back(b.merged.edge_u(e) - n0, b.merged.edge_v(e) - n0);
    out.emplace_back(n1 - n0, edges, Matrix(b.merged.features().middleRows(n0, n1 - n0)));
  }
  return out;
}

}  // namespace gsina
