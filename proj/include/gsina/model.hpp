#ifndef GSINA_MODEL_HPP
#define GSINA_MODEL_HPP

#include "gsina/graph.hpp"
#include "gsina/optim.hpp"
#include "gsina/rng.hpp"
#include "gsina/tape.hpp"
#include "gsina/topr.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gsina {

enum class Readout { Sum, Mean };

struct ModelConfig {
  Index in_dim = 11;
  Index hidden_dim = 32;
  int num_layers = 2;        // predictor GIN layers
  int score_layers = 2;      // score-head GIN layers
  Index num_classes = 3;
  double dropout = 0.3;
  Readout readout = Readout::Sum;
  TopRConfig topr;
  bool ablate_gumbel = false;
  bool ablate_node_attn = false;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Running statistics of the edge-score normalization.
struct ScoreNorm {
  double running_mean = 0.0;
  double running_std = 1.0;
  double momentum = 0.1;

  void update(double batch_mean, double batch_std);
};

/// Score head parameters live under "phi.", predictor parameters under "theta.".
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  ModelConfig& config() { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  ScoreNorm& score_norm() { return norm_; }
  const ScoreNorm& score_norm() const { return norm_; }

  /// Parameters plus normalization statistics, suitable for a checkpoint.
  TensorMap state() const;
  void load_state(const TensorMap& state);

 private:
  ModelConfig config_;
  ParamStore params_;
  ScoreNorm norm_;
};

struct ForwardOptions {
  bool train_mode = false;
  Rng gumbel_rng{0};
  Rng dropout_rng{0};
  bool record_trace = false;
  // Receives batch statistics in train mode; null leaves the model untouched.
  ScoreNorm* norm_update = nullptr;
};

/// Per-forward dropout mask source.
class Dropout {
 public:
  Dropout(double rate, bool active, Rng rng) : rate_(rate), active_(active && rate > 0.0), rng_(rng) {}
  Var operator()(const Var& x);

 private:
  double rate_;
  bool active_;
  Rng rng_;
};

/// x W + b with W named `prefix.w`, b named `prefix.b` (b is 1 x out).
Var linear(const Binding& p, const std::string& prefix, const Var& x);

/// Linear -> ReLU -> Linear.
Var mlp2(const Binding& p, const std::string& prefix, const Var& x);

/// GIN layer with attention-weighted messages:
/// h_i' = MLP(h_i + sum over arcs j->i of alpha_e[edge] * h_j). eps is fixed at 0.
/// An invalid `alpha_e` means unit weights (no multiplication at all).
Var weighted_message_pass(const Binding& p, const std::string& prefix, const Graph& graph, const Var& h,
                          const Var& alpha_e);

/// Score-head encoder: `score_layers` unweighted GIN layers (ReLU + dropout after each).
Var encode_nodes(const Binding& p, const ModelConfig& config, const Graph& graph, const Var& x, Dropout& dropout);

/// One normalized score per undirected edge: the mean of the MLP over [n_i, n_j]
/// and [n_j, n_i].
/// Train mode normalizes with batch statistics; eval uses `norm`.
Var edge_scores(const Binding& p, const Graph& graph, const Var& embeddings, bool train_mode, const ScoreNorm& norm,
                ScoreNorm* norm_update);

/// Segment reduction of alpha_v * h. Throws EmptySegment for a node-less segment.
Var readout(const Var& h, const Var& alpha_v, const std::vector<Index>& segment_of_node, Index num_segments,
            Readout kind);

struct GraphForward {
  Var logits;   // B x K
  Var scores;   // m x 1 normalized edge scores (invalid when r == 1)
  Var alpha_e;  // m x 1
  Var alpha_v;  // n x 1
  std::vector<ConvergenceTrace> traces;
};

struct NodeForward {
  Var logits;  // n x K
  Var scores;
  Var alpha_e;
  std::vector<ConvergenceTrace> traces;
};

GraphForward forward_graph(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                           const ForwardOptions& options);
NodeForward forward_node(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                         const ForwardOptions& options);

/// Plain GIN + pooling on the predictor parameters, with no attention anywhere.
Var forward_plain_gin(Tape& tape, const Binding& p, const Model& model, const GraphBatch& batch,
                      const ForwardOptions& options);

/// Mean negative log-likelihood of `labels` under softmax(logits).
Var loss_nll(const Var& logits, const std::vector<Index>& labels);

}  // namespace gsina

#endif  // GSINA_MODEL_HPP
