#ifndef GSINA_TOPR_HPP
#define GSINA_TOPR_HPP

#include "gsina/graph.hpp"
#include "gsina/rng.hpp"
#include "gsina/sinkhorn.hpp"
#include "gsina/tape.hpp"

#include <string_view>
#include <vector>

namespace gsina {

/// Micro runs one transport problem per graph; Macro treats the batch as one.
enum class SegmentMode { Micro, Macro };

std::string_view to_string(SegmentMode mode);
SegmentMode parse_segment_mode(std::string_view text);

struct TopRConfig {
  double r = 0.5;
  double tau = 1.0;
  double sigma = 1.0;
  int n_iters = 10;
  SegmentMode mode = SegmentMode::Micro;

  /// Throws InvalidRatio / InvalidConfig.
  void validate() const;
  bool degenerate() const { return r == 1.0; }
};

struct TopRResult {
  Var alpha;                             // m x 1 edge attention
  std::vector<ConvergenceTrace> traces;  // one per segment, when requested
};

/// Differentiable soft top-r over `scores` (m x 1). `segment_of_edge` assigns
/// each score to a segment in [0, num_segments); Macro mode ignores it.
/// Gumbel noise for segment s is drawn from `rng.stream(s)`, so segments are
/// independent of evaluation order. r == 1 returns constant ones.
TopRResult soft_top_r(const Var& scores, const std::vector<Index>& segment_of_edge, Index num_segments,
                      const TopRConfig& config, const Rng& rng, bool record_trace = false);

/// alpha_v[i] = max over edges incident to i; 0 for isolated nodes.
Var node_attention(const Graph& graph, const Var& alpha_e);

}  // namespace gsina

#endif  // GSINA_TOPR_HPP
