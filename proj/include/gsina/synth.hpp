#ifndef GSINA_SYNTH_HPP
#define GSINA_SYNTH_HPP

#include "gsina/graph.hpp"
#include "gsina/rng.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string_view>

namespace gsina {

/// Label-determining motif. The enumerator value is the class index.
enum class MotifKind { Cycle = 0, House = 1, Crane = 2 };

/// Spurious base graph. Under bias, label y is paired with BaseKind(y).
enum class BaseKind { Tree = 0, Ladder = 1, Wheel = 2 };

enum class FeatureMode { DegreeOneHot, UniformRandom };

std::string_view to_string(MotifKind kind);
std::string_view to_string(BaseKind kind);

/// Edge list over nodes [0, num_nodes) without features.
struct Fragment {
  Index num_nodes = 0;
  std::vector<std::pair<Index, Index>> edges;
};

struct SynthConfig {
  double bias_b = 0.9;
  Index n_train = 600;
  Index n_val = 200;
  Index n_test = 600;
  Index base_min = 20;
  Index base_max = 30;
  FeatureMode feat_mode = FeatureMode::DegreeOneHot;
  // DegreeOneHot: one-hot of min(degree, feat_dim - 1).
  Index feat_dim = 11;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);

/// Cycle: 5-cycle. House: square 0-1-2-3 with apex 4 on 0 and 1.
/// Crane: triangle 0-1-2, neck 2-3, legs 3-4 and 3-5.
Fragment make_motif(MotifKind kind);

/// Throws SizeTooSmall when size < 4.
Fragment make_base(BaseKind kind, Index size, Rng& rng);

struct AttachedGraph {
  Fragment fragment;  // base nodes first, then motif nodes
  std::vector<bool> gt_edge_mask;
  std::vector<bool> gt_node_mask;
};

/// Joins the fragments with one bridge edge between a random base node and a
/// random motif node. The bridge is the last edge.
AttachedGraph attach(const Fragment& base, const Fragment& motif, Rng& rng);

Matrix make_features(const Fragment& fragment, FeatureMode mode, Index feat_dim, Rng& rng);

struct SynthSplits {
  Dataset train, val, test;
};

/// Train and validation bases follow the bias; the test split is unbiased.
/// Every example carries gt masks, motif-membership node labels, and the base
/// kind name as its environment tag.
SynthSplits generate_dataset(const SynthConfig& config);

/// Base kind recorded in an example's environment tag.
BaseKind base_kind_of(const LabeledExample& example);

}  // namespace gsina

#endif  // GSINA_SYNTH_HPP
