#ifndef GSINA_TRAIN_HPP
#define GSINA_TRAIN_HPP

#include "gsina/graph.hpp"
#include "gsina/metrics.hpp"
#include "gsina/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gsina {

enum class Task { GraphLevel, NodeLevel };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct TrainConfig {
  int epochs = 100;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  int patience = 10;  // 0 disables early stopping
  std::uint64_t seed = 0;
  ModelConfig model;
  Task task = Task::GraphLevel;
  // Runs the attention-free GIN path (reference for the r == 1 check).
  bool plain_gin = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

/// Shuffles with the "shuffle" stream of `config.seed`, steps Adam on mean NLL,
/// selects on validation accuracy (ties go to the earlier epoch) and returns the
/// best epoch's parameters. Throws EmptyDataset, Divergence.
TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& config);

struct MetricsReport {
  double accuracy = 0.0;
  double loss = 0.0;
  std::optional<double> roc_auc;          // binary tasks
  std::optional<double> interpret_edge_auc;  // graph task with masks, r < 1
  std::optional<double> precision_at_k;
};

nlohmann::json to_json(const MetricsReport& report);

/// Sigma-0, dropout-free forward in batches; never touches model state.
MetricsReport evaluate(const Model& model, const Dataset& ds, Task task, Index batch_size = 32, bool plain_gin = false);

struct GraphAttention {
  std::vector<double> edge_attn;
  std::vector<double> node_attn;
  std::vector<double> trace;  // row residual per Sinkhorn iteration
};

/// Per-graph eval-mode attention. r == 1 yields all ones and an empty trace.
std::vector<GraphAttention> collect_attention(const Model& model, const Dataset& ds, Index batch_size = 32);

std::vector<std::uint8_t> mask_bytes(const std::vector<bool>& mask);

struct AblationRow {
  std::string name;
  std::vector<double> test_accuracy;  // one per seed
  std::vector<double> edge_auc;       // empty when undefined (r == 1)
  MeanStd accuracy_summary;
  MeanStd edge_auc_summary;
};

/// Variants: full, w/o Gumbel, w/o NodeAttn, w/o G&N, ERM (r = 1). Every variant
/// sees the same seeds and data order. `jobs` > 1 trains seeds concurrently.
std::vector<AblationRow> ablation_suite(const Dataset& train_ds, const Dataset& val_ds, const Dataset& test_ds,
                                        const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                        int jobs = 1);

nlohmann::json to_json(const std::vector<AblationRow>& rows);

}  // namespace gsina

#endif  // GSINA_TRAIN_HPP
