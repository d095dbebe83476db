#ifndef GSINA_GRAPH_HPP
#define GSINA_GRAPH_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gsina {

using Index = std::ptrdiff_t;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Simple undirected graph stored as reciprocal arc pairs. Edge `e` owns arcs
/// `2e` (u -> v) and `2e + 1` (v -> u), both tagged with edge id `e`.
class Graph {
 public:
  Graph() = default;

  /// Validating constructor. Throws IndexOutOfRange, SelfLoop, DuplicateEdge,
  /// or FeatureDimMismatch (feature rows != num_nodes).
  Graph(Index num_nodes, const std::vector<std::pair<Index, Index>>& edges, Matrix features);

  Index num_nodes() const { return num_nodes_; }
  Index num_edges() const { return static_cast<Index>(edge_u_.size()); }
  Index num_arcs() const { return 2 * num_edges(); }
  Index feat_dim() const { return features_.cols(); }

  // Endpoints in insertion orientation.
  Index edge_u(Index e) const { return edge_u_[e]; }
  Index edge_v(Index e) const { return edge_v_[e]; }
  std::pair<Index, Index> edge(Index e) const { return {edge_u_[e], edge_v_[e]}; }
  std::vector<std::pair<Index, Index>> edges() const;

  const std::vector<Index>& arc_src() const { return arc_src_; }
  const std::vector<Index>& arc_dst() const { return arc_dst_; }
  const std::vector<Index>& arc_edge() const { return arc_edge_; }

  const Matrix& features() const { return features_; }

  std::vector<Index> degrees() const;

  /// Re-checks every structural invariant; throws InvalidGraph on violation.
  void validate() const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  Index num_nodes_ = 0;
  std::vector<Index> edge_u_, edge_v_;
  std::vector<Index> arc_src_, arc_dst_, arc_edge_;
  Matrix features_;
};

Graph new_graph(Index num_nodes, const std::vector<std::pair<Index, Index>>& edges, Matrix features);

/// Edge ids (each once, ascending) incident to `node`.
std::vector<Index> incident_edges(const Graph& graph, Index node);

/// Relabels node `i` as `perm[i]`. Edge ids keep their meaning: edge `e` of the
/// result joins the images of the endpoints of edge `e` of the input, so
/// per-edge masks and attentions stay valid without remapping.
Graph permute_nodes(const Graph& graph, const std::vector<Index>& perm);

std::vector<Index> inverse_permutation(const std::vector<Index>& perm);

/// Same edge set (as unordered pairs, ignoring id order) and identical features.
bool structurally_equal(const Graph& a, const Graph& b);

struct LabeledExample {
  Graph graph;
  Index label = 0;
  std::optional<std::vector<bool>> gt_edge_mask;
  std::optional<std::vector<bool>> gt_node_mask;
  std::optional<std::vector<Index>> node_labels;
  std::optional<std::string> env;

  /// Throws InvalidLabel / InvalidGraph when labels or masks disagree with the graph.
  void validate(Index num_classes) const;
};

using Dataset = std::vector<LabeledExample>;

struct GraphBatch {
  Graph merged;
  std::vector<Index> node_offsets;  // size B + 1
  std::vector<Index> edge_offsets;  // size B + 1
  std::vector<Index> segment_of_node;
  std::vector<Index> segment_of_edge;
  std::vector<Index> labels;
  std::vector<Index> node_labels;  // empty unless every member carries node labels

  Index num_graphs() const { return static_cast<Index>(labels.size()); }
};

GraphBatch batch(const std::vector<const LabeledExample*>& examples);
GraphBatch batch(const Dataset& examples);

/// Splits a batch back into its member graphs.
std::vector<Graph> unbatch(const GraphBatch& batch);

}  // namespace gsina

#endif  // GSINA_GRAPH_HPP
