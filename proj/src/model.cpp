#include "gsina/model.hpp"

#include "gsina/error.hpp"

#include <cmath>

namespace gsina {

void ModelConfig::validate() const {
  if (in_dim <= 0 || hidden_dim <= 0 || num_classes <= 0) throw Error(ErrorCode::InvalidConfig, "dims must be > 0");
  if (num_layers < 0 || score_layers < 0) throw Error(ErrorCode::InvalidConfig, "layer counts must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidConfig, "dropout must lie in [0, 1)");
  topr.validate();
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"in_dim", c.in_dim},
          {"hidden_dim", c.hidden_dim},
          {"num_layers", c.num_layers},
          {"score_layers", c.score_layers},
          {"num_classes", c.num_classes},
          {"dropout", c.dropout},
          {"readout", c.readout == Readout::Sum ? "sum" : "mean"},
          {"r", c.topr.r},
          {"tau", c.topr.tau},
          {"sigma", c.topr.sigma},
          {"iters", c.topr.n_iters},
          {"mode", to_string(c.topr.mode)},
          {"ablate_gumbel", c.ablate_gumbel},
          {"ablate_node_attn", c.ablate_node_attn}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.in_dim = j.at("in_dim").get<Index>();
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.num_layers = j.at("num_layers").get<int>();
  c.score_layers = j.at("score_layers").get<int>();
  c.num_classes = j.at("num_classes").get<Index>();
  c.dropout = j.at("dropout").get<double>();
  c.readout = j.at("readout").get<std::string>() == "mean" ? Readout::Mean : Readout::Sum;
  c.topr.r = j.at("r").get<double>();
  c.topr.tau = j.at("tau").get<double>();
  c.topr.sigma = j.at("sigma").get<double>();
  c.topr.n_iters = j.at("iters").get<int>();
  c.topr.mode = parse_segment_mode(j.at("mode").get<std::string>());
  c.ablate_gumbel = j.at("ablate_gumbel").get<bool>();
  c.ablate_node_attn = j.at("ablate_node_attn").get<bool>();
  c.validate();
  return c;
}

void ScoreNorm::update(double batch_mean, double batch_std) {
  running_mean = (1.0 - momentum) * running_mean + momentum * batch_mean;
  running_std = (1.0 - momentum) * running_std + momentum * batch_std;
}

namespace {

Matrix glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j) w(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
  return w;
}

void add_linear(ParamStore& store, const std::string& prefix, Index in, Index out, Rng& rng) {
  store.add(prefix + ".w", glorot(in, out, rng));
  store.add(prefix + ".b", Matrix::Zero(1, out));
}

void add_mlp2(ParamStore& store, const std::string& prefix, Index in, Index hidden, Index out, Rng& rng) {
  add_linear(store, prefix + ".l1", in, hidden, rng);
  add_linear(store, prefix + ".l2", hidden, out, rng);
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng = Rng(init_seed).stream("init");
  const Index h = config_.hidden_dim;
  Index dim = config_.in_dim;
  for (int l = 0; l < config_.score_layers; ++l) {
    add_mlp2(params_, "phi.gin" + std::to_string(l), dim, h, h, rng);
    dim = h;
  }
  add_mlp2(params_, "phi.edge", 2 * dim, h, 1, rng);
  dim = config_.in_dim;
  for (int l = 0; l < config_.num_layers; ++l) {
    add_mlp2(params_, "theta.gin" + std::to_string(l), dim, h, h, rng);
    dim = h;
  }
  add_mlp2(params_, "theta.head", dim, h, config_.num_classes, rng);
}

TensorMap Model::state() const {
  TensorMap out = params_.values();
  Matrix stats(1, 2);
  stats << norm_.running_mean, norm_.running_std;
  out.emplace("norm.stats", stats);
  return out;
}

void Model::load_state(const TensorMap& state) {
  TensorMap params;
  for (const auto& [name, m] : state) {
    if (name == "norm.stats") {
      if (m.size() != 2) throw Error(ErrorCode::ShapeMismatch, "norm.stats");
      norm_.running_mean = m(0, 0);
      norm_.running_std = m(0, 1);
    } else {
      params.emplace(name, m);
    }
  }
  for (const auto& [name, _] : params_.values()) {
    if (!params.count(name)) throw Error(ErrorCode::MissingGradient, "checkpoint lacks parameter " + name);
  }
  params_.assign(params);
}

Var Dropout::operator()(const Var& x) {
  if (!active_) return x;
  const double keep = 1.0 - rate_;
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.rows(); ++i)
    for (Index j = 0; j < mask.cols(); ++j) mask(i, j) = rng_.uniform() < keep ? 1.0 / keep : 0.0;
  return x * x.tape()->constant(std::move(mask));
}

Var linear(const Binding& p, const std::string& prefix, const Var& x) {
  const Var& w = p[prefix + ".w"];
  const Var& b = p[prefix + ".b"];
  return matmul(x, w) + broadcast_row(b, x.rows());
}

Var mlp2(const Binding& p, const std::string& prefix, const Var& x) {
  return linear(p, prefix + ".l2", relu(linear(p, prefix + ".l1", x)));
}

Var weighted_message_pass(const Binding& p, const std::string& prefix, const Graph& graph, const Var& h,
                          const Var& alpha_e) {
  if (h.rows() != graph.num_nodes()) throw Error(ErrorCode::ShapeMismatch, "node states vs graph size");
  Var messages = gather_rows(h, graph.arc_src());
  if (alpha_e.valid()) {
    if (alpha_e.rows() != graph.num_edges() || alpha_e.cols() != 1) {
      throw Error(ErrorCode::ShapeMismatch, "edge attention must be num_edges x 1");
    }
    messages = messages * broadcast_col(gather_rows(alpha_e, graph.arc_edge()), h.cols());
  }
  const Var agg = segment_sum(messages, graph.arc_dst(), graph.num_nodes());
  return mlp2(p, prefix, h + agg);
}

Var encode_nodes(const Binding& p, const ModelConfig& config, const Graph& graph, const Var& x, Dropout& dropout) {
  if (x.cols() != config.in_dim) throw Error(ErrorCode::ShapeMismatch, "feature dim " + std::to_string(x.cols()));
  Var h = x;
  for (int l = 0; l < config.score_layers; ++l) {
    h = dropout(relu(weighted_message_pass(p, "phi.gin" + std::to_string(l), graph, h, Var{})));
  }
  return h;
}

Var edge_scores(const Binding& p, const Graph& graph, const Var& embeddings, bool train_mode, const ScoreNorm& norm,
                ScoreNorm* norm_update) {
  const Index m = graph.num_edges();
  if (train_mode && m < 2) throw Error(ErrorCode::TooFewEdges, "normalization needs >= 2 edges, got " + std::to_string(m));
  std::vector<Index> u(static_cast<std::size_t>(m)), v(static_cast<std::size_t>(m));
  for (Index e = 0; e < m; ++e) {
    u[e] = graph.edge_u(e);
    v[e] = graph.edge_v(e);
  }
  // Both endpoint orders, averaged: an index-based orientation would make the
  // score depend on node numbering.
  const Var nu = gather_rows(embeddings, u), nv = gather_rows(embeddings, v);
  const std::vector<Var> fwd{nu, nv}, bwd{nv, nu};
  const Var raw = (mlp2(p, "phi.edge", concat(fwd, Axis::Cols)) + mlp2(p, "phi.edge", concat(bwd, Axis::Cols))) * 0.5;
  if (!train_mode) {
    return (raw + (-norm.running_mean)) * (1.0 / (norm.running_std + 1e-5));
  }
  const Var mu = mean(raw);
  const Var centered = raw - broadcast_row(mu, m);
  // The 1e-12 floor keeps the sqrt adjoint finite when every raw score is equal.
  const Var std_dev = sqrt(mean(centered * centered) + 1e-12);
  if (norm_update) norm_update->update(mu.item(), std_dev.item());
  return centered / broadcast_row(std_dev + 1e-5, m);
}

Var readout(const Var& h, const Var& alpha_v, const std::vector<Index>& segment_of_node, Index num_segments,
            Readout kind) {
  if (alpha_v.rows() != h.rows() || alpha_v.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "node attention shape");
  std::vector<Index> count(static_cast<std::size_t>(num_segments), 0);
  for (Index s : segment_of_node) {
    if (s < 0 || s >= num_segments) throw Error(ErrorCode::IndexOutOfRange, "segment id " + std::to_string(s));
    ++count[s];
  }
  for (Index s = 0; s < num_segments; ++s) {
    if (count[s] == 0) throw Error(ErrorCode::EmptySegment, "graph " + std::to_string(s) + " has no nodes");
  }
  const Var pooled = segment_sum(h * broadcast_col(alpha_v, h.cols()), segment_of_node, num_segments);
  if (kind == Readout::Sum) return pooled;
  Matrix inv(num_segments, h.cols());
  for (Index s = 0; s < num_segments; ++s) inv.row(s).setConstant(1.0 / static_cast<double>(count[s]));
  return pooled * h.tape()->constant(std::move(inv));
}

namespace {

struct Attention {
  Var scores, alpha_e, alpha_v;
  std::vector<ConvergenceTrace> traces;
};

Attention extract_subgraph(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                           const ForwardOptions& options, const Var& x) {
  const ModelConfig& cfg = model.config();
  const Graph& g = batch.merged;
  Attention out;
  if (cfg.topr.degenerate()) {
    out.alpha_e = tape.constant(Matrix::Ones(g.num_edges(), 1));
    out.alpha_v = tape.constant(Matrix::Ones(g.num_nodes(), 1));
    return out;
  }
  Dropout dropout(cfg.dropout, options.train_mode, options.dropout_rng.stream("phi"));
  const Var emb = encode_nodes(p, cfg, g, x, dropout);
  out.scores = edge_scores(p, g, emb, options.train_mode, model.score_norm(), options.norm_update);
  TopRConfig topr = cfg.topr;
  if (!options.train_mode || cfg.ablate_gumbel) topr.sigma = 0.0;
  TopRResult sel = soft_top_r(out.scores, batch.segment_of_edge, batch.num_graphs(), topr, options.gumbel_rng,
                              options.record_trace);
  out.alpha_e = sel.alpha;
  out.traces = std::move(sel.traces);
  out.alpha_v = cfg.ablate_node_attn ? tape.constant(Matrix::Ones(g.num_nodes(), 1)) : node_attention(g, out.alpha_e);
  return out;
}

Var predictor_layers(const Binding& p, const ModelConfig& cfg, const Graph& g, Var h, const Var& alpha_e,
                     Dropout& dropout) {
  for (int l = 0; l < cfg.num_layers; ++l) {
    h = dropout(relu(weighted_message_pass(p, "theta.gin" + std::to_string(l), g, h, alpha_e)));
  }
  return h;
}

}  // namespace

GraphForward forward_graph(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                           const ForwardOptions& options) {
  const ModelConfig& cfg = model.config();
  const Var x = tape.constant(batch.merged.features());
  Attention att = extract_subgraph(tape, p, model, batch, options, x);
  Dropout dropout(cfg.dropout, options.train_mode, options.dropout_rng.stream("theta"));
  const Var h = predictor_layers(p, cfg, batch.merged, x, att.alpha_e, dropout);
  const Var pooled = readout(h, att.alpha_v, batch.segment_of_node, batch.num_graphs(), cfg.readout);
  return {mlp2(p, "theta.head", pooled), att.scores, att.alpha_e, att.alpha_v, std::move(att.traces)};
}

NodeForward forward_node(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                         const ForwardOptions& options) {
  const ModelConfig& cfg = model.config();
  const Var x = tape.constant(batch.merged.features());
  Attention att = extract_subgraph(tape, p, model, batch, options, x);
  Dropout dropout(cfg.dropout, options.train_mode, options.dropout_rng.stream("theta"));
  const Var h = predictor_layers(p, cfg, batch.merged, x, att.alpha_e, dropout);
  return {mlp2(p, "theta.head", h), att.scores, att.alpha_e, std::move(att.traces)};
}

Var forward_plain_gin(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                      const ForwardOptions& options) {
  const ModelConfig& cfg = model.config();
  const Graph& g = batch.merged;
  Var h = tape.constant(g.features());
  Dropout dropout(cfg.dropout, options.train_mode, options.dropout_rng.stream("theta"));
  for (int l = 0; l < cfg.num_layers; ++l) {
    Var messages = gather_rows(h, g.arc_src());
    const Var agg = segment_sum(messages, g.arc_dst(), g.num_nodes());
    h = dropout(relu(mlp2(p, "theta.gin" + std::to_string(l), h + agg)));
  }
  Var pooled = segment_sum(h, batch.segment_of_node, batch.num_graphs());
  if (cfg.readout == Readout::Mean) {
    Matrix inv(batch.num_graphs(), h.cols());
    for (Index s = 0; s < batch.num_graphs(); ++s) {
      inv.row(s).setConstant(1.0 / static_cast<double>(batch.node_offsets[s + 1] - batch.node_offsets[s]));
    }
    pooled = pooled * tape.constant(std::move(inv));
  }
  return mlp2(p, "theta.head", pooled);
}

Var loss_nll(const Var& logits, const std::vector<Index>& labels) {
  const Index n = logits.rows(), k = logits.cols();
  if (static_cast<Index>(labels.size()) != n) throw Error(ErrorCode::ShapeMismatch, "labels vs logits rows");
  if (n == 0) throw Error(ErrorCode::EmptyBatch, "no rows");
  Matrix onehot = Matrix::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(labels[i]));
    onehot(i, labels[i]) = 1.0;
  }
  const Var picked = sum(log_softmax_rows(logits) * logits.tape()->constant(std::move(onehot)));
  return picked * (-1.0 / static_cast<double>(n));
}

}  // namespace gsina
