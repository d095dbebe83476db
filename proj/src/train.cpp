#include "gsina/train.hpp"

#include "gsina/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

namespace gsina {

std::string_view to_string(Task task) { return task == Task::GraphLevel ? "graph" : "node"; }

Task parse_task(std::string_view text) {
  if (text == "graph") return Task::GraphLevel;
  if (text == "node") return Task::NodeLevel;
  throw Error(ErrorCode::InvalidConfig, "task must be graph or node, got " + std::string(text));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error(ErrorCode::InvalidConfig, "lr must be >= 0");
  if (patience < 0 || patience > epochs) throw Error(ErrorCode::InvalidConfig, "patience must lie in [0, epochs]");
  model.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.learning_rate},
          {"patience", c.patience},     {"seed", c.seed},             {"task", to_string(c.task)},
          {"plain_gin", c.plain_gin},   {"model", to_json(c.model)}};
}

namespace {

std::vector<Index> labels_for(const GraphBatch& b, Task task) {
  if (task == Task::GraphLevel) return b.labels;
  if (b.node_labels.size() != static_cast<std::size_t>(b.merged.num_nodes())) {
    throw Error(ErrorCode::InvalidLabel, "node-level task needs node labels on every example");
  }
  return b.node_labels;
}

Var logits_for(Tape& tape, const Binding& p, const Model& model, const GraphBatch& b, Task task, bool plain_gin,
               const ForwardOptions& opt) {
  if (plain_gin) {
    if (task == Task::NodeLevel) throw Error(ErrorCode::InvalidConfig, "plain GIN path is graph-level only");
    return forward_plain_gin(tape, p, model, b, opt);
  }
  if (task == Task::GraphLevel) return forward_graph(tape, p, model, b, opt).logits;
  return forward_node(tape, p, model, b, opt).logits;
}

std::vector<std::vector<const LabeledExample*>> chunks(const Dataset& ds, const std::vector<std::size_t>& order,
                                                       Index batch_size) {
  std::vector<std::vector<const LabeledExample*>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const LabeledExample*> c;
    for (std::size_t j = i; j < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++j) {
      c.push_back(&ds[order[j]]);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& config) {
  config.validate();
  if (train_ds.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (val_ds.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");

  TrainResult res{Model(config.model, config.seed), {}, 0, -std::numeric_limits<double>::infinity(), false};
  Model& model = res.model;
  const Rng root(config.seed);
  const Rng shuffle_root = root.stream("shuffle");
  const Rng gumbel_root = root.stream("gumbel");
  const Rng dropout_root = root.stream("dropout");
  AdamConfig adam;
  adam.lr = config.learning_rate;

  std::vector<std::size_t> order(train_ds.size());
  TensorMap best_state = model.state();
  std::uint64_t step = 0;
  int bad_epochs = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler = shuffle_root.stream(static_cast<std::uint64_t>(epoch));
    shuffler.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& members : chunks(train_ds, order, config.batch_size)) {
      const GraphBatch b = batch(members);
      Tape tape;
      const Binding p = bind(model.params(), tape);
      ForwardOptions opt;
      opt.train_mode = true;
      opt.gumbel_rng = gumbel_root.stream(step);
      opt.dropout_rng = dropout_root.stream(step);
      opt.norm_update = &model.score_norm();
      ++step;
      Var loss;
      try {
        loss = loss_nll(logits_for(tape, p, model, b, config.task, config.plain_gin, opt), labels_for(b, config.task));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteValue) {
          throw Error(ErrorCode::Divergence, "epoch " + std::to_string(epoch) + ": " + e.what());
        }
        throw;
      }
      const double value = loss.item();
      if (!std::isfinite(value)) throw Error(ErrorCode::Divergence, "non-finite loss at epoch " + std::to_string(epoch));
      TensorMap grads;
      try {
        grads = collect_gradients(p, tape.backward(loss));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteValue) throw Error(ErrorCode::Divergence, e.what());
        throw;
      }
      adam_step(model.params(), grads, adam);
      loss_sum += value * static_cast<double>(members.size());
      seen += members.size();
    }
    const double val = evaluate(model, val_ds, config.task, config.batch_size, config.plain_gin).accuracy;
    res.history.push_back({epoch, loss_sum / static_cast<double>(seen), val});
    if (val > res.best_val) {
      res.best_val = val;
      res.best_epoch = epoch;
      best_state = model.state();
      bad_epochs = 0;
    } else if (config.patience > 0 && ++bad_epochs >= config.patience) {
      res.stopped_early = epoch < config.epochs;
      break;
    }
  }
  model.load_state(best_state);
  return res;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"accuracy", r.accuracy}, {"loss", r.loss}};
  auto opt = [&](const char* key, const std::optional<double>& v) {
    j[key] = v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  opt("roc_auc", r.roc_auc);
  opt("interpret_edge_auc", r.interpret_edge_auc);
  opt("precision_at_k", r.precision_at_k);
  return j;
}

std::vector<std::uint8_t> mask_bytes(const std::vector<bool>& mask) { return {mask.begin(), mask.end()}; }

MetricsReport evaluate(const Model& model, const Dataset& ds, Task task, Index batch_size, bool plain_gin) {
  MetricsReport rep;
  if (ds.empty()) return rep;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);

  const bool binary = model.config().num_classes == 2;
  const bool with_masks = task == Task::GraphLevel && !plain_gin && !model.config().topr.degenerate() &&
                          std::all_of(ds.begin(), ds.end(), [](const LabeledExample& e) { return e.gt_edge_mask.has_value(); });
  std::vector<double> pos_prob, all_alpha;
  std::vector<std::uint8_t> pos_label, all_mask;
  double prec_sum = 0.0;
  std::size_t prec_count = 0, correct_weighted = 0, rows = 0;
  double loss_sum = 0.0;

  for (const auto& members : chunks(ds, order, batch_size)) {
    const GraphBatch b = batch(members);
    Tape tape;
    const Binding p = bind(model.params(), tape);
    ForwardOptions opt;  // eval: no Gumbel, no dropout, frozen statistics
    Var logits;
    Var alpha;
    if (plain_gin) {
      logits = forward_plain_gin(tape, p, model, b, opt);
    } else if (task == Task::GraphLevel) {
      GraphForward f = forward_graph(tape, p, model, b, opt);
      logits = f.logits;
      alpha = f.alpha_e;
    } else {
      logits = forward_node(tape, p, model, b, opt).logits;
    }
    const std::vector<Index> labels = labels_for(b, task);
    const Index n = static_cast<Index>(labels.size());
    loss_sum += loss_nll(logits, labels).item() * static_cast<double>(n);
    correct_weighted += static_cast<std::size_t>(std::llround(accuracy(logits.value(), labels) * static_cast<double>(n)));
    rows += static_cast<std::size_t>(n);
    if (binary) {
      for (Index i = 0; i < n; ++i) {
        const auto row = logits.value().row(i);
        pos_prob.push_back(1.0 / (1.0 + std::exp(row(0) - row(1))));
        pos_label.push_back(labels[i] == 1);
      }
    }
    if (with_masks) {
      for (std::size_t g = 0; g < members.size(); ++g) {
        const Index e0 = b.edge_offsets[g], e1 = b.edge_offsets[g + 1];
        std::vector<double> a(static_cast<std::size_t>(e1 - e0));
        for (Index e = e0; e < e1; ++e) a[e - e0] = alpha.value()(e, 0);
        const std::vector<std::uint8_t> mask = mask_bytes(*members[g]->gt_edge_mask);
        all_alpha.insert(all_alpha.end(), a.begin(), a.end());
        all_mask.insert(all_mask.end(), mask.begin(), mask.end());
        if (!a.empty()) {
          prec_sum += interpret_metrics(a, mask).precision_at_k;
          ++prec_count;
        }
      }
    }
  }
  rep.accuracy = static_cast<double>(correct_weighted) / static_cast<double>(rows);
  rep.loss = loss_sum / static_cast<double>(rows);
  if (binary) rep.roc_auc = roc_auc(pos_prob, pos_label);
  if (with_masks && prec_count > 0) {
    rep.interpret_edge_auc = roc_auc(all_alpha, all_mask);
    rep.precision_at_k = prec_sum / static_cast<double>(prec_count);
  }
  return rep;
}

std::vector<GraphAttention> collect_attention(const Model& model, const Dataset& ds, Index batch_size) {
  std::vector<GraphAttention> out;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  for (const auto& members : chunks(ds, order, batch_size)) {
    const GraphBatch b = batch(members);
    Tape tape;
    const Binding p = bind(model.params(), tape);
    ForwardOptions opt;
    opt.record_trace = true;
    const GraphForward f = forward_graph(tape, p, model, b, opt);
    for (std::size_t g = 0; g < members.size(); ++g) {
      GraphAttention ga;
      for (Index e = b.edge_offsets[g]; e < b.edge_offsets[g + 1]; ++e) ga.edge_attn.push_back(f.alpha_e.value()(e, 0));
      for (Index v = b.node_offsets[g]; v < b.node_offsets[g + 1]; ++v) ga.node_attn.push_back(f.alpha_v.value()(v, 0));
      const bool macro = model.config().topr.mode == SegmentMode::Macro;
      if (!f.traces.empty()) ga.trace = f.traces[macro ? 0 : g].row_residual;
      out.push_back(std::move(ga));
    }
  }
  return out;
}

namespace {

struct Variant {
  std::string name;
  TrainConfig config;
};

std::vector<Variant> variants(const TrainConfig& base) {
  std::vector<Variant> v;
  TrainConfig c = base;
  c.model.ablate_gumbel = false;
  c.model.ablate_node_attn = false;
  v.push_back({"full", c});
  c.model.ablate_gumbel = true;
  v.push_back({"w/o Gumbel", c});
  c.model.ablate_gumbel = false;
  c.model.ablate_node_attn = true;
  v.push_back({"w/o NodeAttn", c});
  c.model.ablate_gumbel = true;
  v.push_back({"w/o G&N", c});
  c.model.ablate_gumbel = false;
  c.model.ablate_node_attn = false;
  c.model.topr.r = 1.0;
  v.push_back({"ERM (r=1)", c});
  return v;
}

}  // namespace

std::vector<AblationRow> ablation_suite(const Dataset& train_ds, const Dataset& val_ds, const Dataset& test_ds,
                                        const TrainConfig& base, const std::vector<std::uint64_t>& seeds, int jobs) {
  if (seeds.size() < 3) throw Error(ErrorCode::InvalidConfig, "ablation needs at least 3 seeds");
  const std::vector<Variant> vs = variants(base);
  const std::size_t total = vs.size() * seeds.size();
  std::vector<MetricsReport> results(total);
  auto run = [&](std::size_t idx) {
    TrainConfig c = vs[idx / seeds.size()].config;
    c.seed = seeds[idx % seeds.size()];
    const TrainResult tr = train(train_ds, val_ds, c);
    results[idx] = evaluate(tr.model, test_ds, c.task, c.batch_size);
  };
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t start = 0; start < total; start += width) {
    std::vector<std::future<void>> pending;
    for (std::size_t i = start; i < std::min(total, start + width); ++i) pending.push_back(std::async(std::launch::async, run, i));
    for (auto& f : pending) f.get();
  }
  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < vs.size(); ++v) {
    AblationRow row;
    row.name = vs[v].name;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const MetricsReport& r = results[v * seeds.size() + s];
      row.test_accuracy.push_back(r.accuracy);
      if (r.interpret_edge_auc) row.edge_auc.push_back(*r.interpret_edge_auc);
    }
    row.accuracy_summary = mean_std(row.test_accuracy);
    row.edge_auc_summary = mean_std(row.edge_auc);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    nlohmann::json j = {{"name", r.name}, {"test_accuracy", r.test_accuracy}, {"accuracy", to_json(r.accuracy_summary)}};
    if (!r.edge_auc.empty()) {
      j["edge_auc"] = r.edge_auc;
      j["edge_auc_summary"] = to_json(r.edge_auc_summary);
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace gsina
