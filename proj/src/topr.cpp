#include "gsina/topr.hpp"

#include "gsina/error.hpp"

#include <cmath>

namespace gsina {

std::string_view to_string(SegmentMode mode) { return mode == SegmentMode::Micro ? "micro" : "macro"; }

SegmentMode parse_segment_mode(std::string_view text) {
  if (text == "micro") return SegmentMode::Micro;
  if (text == "macro") return SegmentMode::Macro;
  throw Error(ErrorCode::InvalidConfig, "mode must be micro or macro, got " + std::string(text));
}

void TopRConfig::validate() const {
  if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidRatio, "r must lie in (0, 1], got " + std::to_string(r));
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be > 0");
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "sigma must be >= 0");
  if (n_iters < 1) throw Error(ErrorCode::InvalidConfig, "n_iters must be >= 1");
}

namespace {

void require_marginal(const Matrix& sums, std::string_view what) {
  if (sums.size() > 0 && !(sums.minCoeff() >= kMarginalFloor)) {
    throw Error(ErrorCode::ZeroMarginal, std::string(what) + " sum underflowed");
  }
}

}  // namespace

TopRResult soft_top_r(const Var& scores, const std::vector<Index>& segment_of_edge, Index num_segments,
                      const TopRConfig& config, const Rng& rng, bool record_trace) {
  config.validate();
  if (scores.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "scores must be m x 1");
  const Index m = scores.rows();
  const bool macro = config.mode == SegmentMode::Macro;
  const std::vector<Index> seg = macro ? std::vector<Index>(static_cast<std::size_t>(m), 0) : segment_of_edge;
  const Index S = macro ? 1 : num_segments;
  if (static_cast<Index>(seg.size()) != m) throw Error(ErrorCode::ShapeMismatch, "segment map length");

  std::vector<Index> count(static_cast<std::size_t>(S), 0);
  for (Index s : seg) {
    if (s < 0 || s >= S) throw Error(ErrorCode::IndexOutOfRange, "segment id " + std::to_string(s));
    ++count[s];
  }
  for (Index s = 0; s < S; ++s) {
    if (count[s] == 0) throw Error(ErrorCode::SegmentTooSmall, "segment " + std::to_string(s) + " has no edges");
  }
  if (S == 0) throw Error(ErrorCode::SegmentTooSmall, "no segments");

  Tape& tape = *scores.tape();
  TopRResult out;
  if (config.degenerate()) {
    out.alpha = tape.constant(Matrix::Ones(m, 1));
    return out;
  }

  Var perturbed = scores;
  if (config.sigma > 0.0) {
    Matrix noise(m, 1);
    std::vector<Rng> streams;
    streams.reserve(static_cast<std::size_t>(S));
    for (Index s = 0; s < S; ++s) streams.push_back(rng.stream(static_cast<std::uint64_t>(s)));
    for (Index e = 0; e < m; ++e) noise(e, 0) = -config.sigma * std::log(-std::log(streams[seg[e]].uniform_open()));
    perturbed = scores + tape.constant(std::move(noise));
  }

  // Cost rows against the unperturbed per-segment anchors.
  const Var hi = segment_max(scores, seg, S);
  const Var lo = -segment_max(-scores, seg, S);
  const Var d0 = perturbed - gather_rows(lo, seg);
  const Var d1 = gather_rows(hi, seg) - perturbed;
  const double inv_tau = 1.0 / config.tau;
  Var a = exp(-clamp(d0 * inv_tau, -kExpArgLimit, kExpArgLimit));
  Var b = exp(-clamp(d1 * inv_tau, -kExpArgLimit, kExpArgLimit));

  Matrix target0(S, 1), target1(S, 1);
  for (Index s = 0; s < S; ++s) {
    target0(s, 0) = (1.0 - config.r) * static_cast<double>(count[s]);
    target1(s, 0) = config.r * static_cast<double>(count[s]);
  }
  const Var r0 = tape.constant(target0);
  const Var r1 = tape.constant(target1);

  if (record_trace) out.traces.assign(static_cast<std::size_t>(S), ConvergenceTrace{});
  Matrix prev_a = a.value(), prev_b = b.value();
  for (int k = 0; k < config.n_iters; ++k) {
    const Var sum0 = segment_sum(a, seg, S);
    const Var sum1 = segment_sum(b, seg, S);
    require_marginal(sum0.value(), "row 0");
    require_marginal(sum1.value(), "row 1");
    a = a * gather_rows(r0 / sum0, seg);
    b = b * gather_rows(r1 / sum1, seg);
    const Var col = a + b;
    require_marginal(col.value(), "column");
    a = a / col;
    b = b / col;
    if (record_trace) {
      Matrix row0 = Matrix::Zero(S, 1), row1 = Matrix::Zero(S, 1), delta = Matrix::Zero(S, 1);
      for (Index e = 0; e < m; ++e) {
        row0(seg[e], 0) += a.value()(e, 0);
        row1(seg[e], 0) += b.value()(e, 0);
        const double da = a.value()(e, 0) - prev_a(e, 0), db = b.value()(e, 0) - prev_b(e, 0);
        delta(seg[e], 0) += da * da + db * db;
      }
      for (Index s = 0; s < S; ++s) {
        out.traces[s].row_residual.push_back(std::hypot(row0(s, 0) - target0(s, 0), row1(s, 0) - target1(s, 0)));
        out.traces[s].plan_delta.push_back(std::sqrt(delta(s, 0)));
      }
      prev_a = a.value();
      prev_b = b.value();
    }
  }
  out.alpha = b;
  return out;
}

Var node_attention(const Graph& graph, const Var& alpha_e) {
  if (alpha_e.rows() != graph.num_edges() || alpha_e.cols() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "edge attention must be num_edges x 1");
  }
  return segment_max(gather_rows(alpha_e, graph.arc_edge()), graph.arc_src(), graph.num_nodes());
}

}  // namespace gsina
