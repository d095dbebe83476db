#include "gsina/cli.hpp"

#include "gsina/dataset_io.hpp"
#include "gsina/diagnostics.hpp"
#include "gsina/error.hpp"
#include "gsina/metrics.hpp"
#include "gsina/synth.hpp"
#include "gsina/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

namespace gsina {

namespace fs = std::filesystem;
using nlohmann::json;

std::map<std::string, std::string> read_run_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": empty key");
    std::replace(key.begin(), key.end(), '_', '-');
    if (!out.emplace(key, value).second) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": repeated key " + key);
    }
  }
  return out;
}

std::map<std::string, std::string> read_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  return read_run_config(in);
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Io, "cannot create directory " + dir.string());
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Parse:
    case ErrorCode::MissingMask:
    case ErrorCode::EmptyDataset:
    case ErrorCode::FeatureDimMismatch:
      return kExitIo;
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidRatio:
      return kExitUsage;
    case ErrorCode::Divergence:
      return kExitDivergence;
    case ErrorCode::DegenerateTrace:
      return kExitCheckFailed;
    default:
      return 1;
  }
}

// Half-open (0, 1] for the selection ratio.
const CLI::Validator kRatio(
    [](std::string& s) {
      const double v = std::stod(s);
      return v > 0.0 && v <= 1.0 ? std::string() : "ratio must lie in (0, 1], got " + s;
    },
    "(0,1]");

const CLI::Validator kPositive(
    [](std::string& s) { return std::stod(s) > 0.0 ? std::string() : "value must be > 0, got " + s; }, "POSITIVE");

struct GenDataArgs {
  SynthConfig synth;
  std::string feat_mode = "degree";
  std::string out;
};

struct ModelArgs {
  double r = 0.5, tau = 1.0, sigma = 1.0, dropout = 0.3;
  int iters = 10, layers = 2, score_layers = 2;
  Index hidden = 32;
  std::string mode = "micro", readout = "sum";
  bool ablate_gumbel = false, ablate_node_attn = false;
};

struct TrainArgs {
  ModelArgs model;
  std::string data, out, task = "graph";
  int epochs = 100, patience = 10;
  Index batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string checkpoint, data, out;
  Index batch_size = 32;
};

struct ConvergeArgs {
  Index m = 32;
  double r = 0.5, tau = 1.0;
  int trials = 100, iters = 30;
  std::uint64_t seed = 0;
  std::string out;
};

struct GradcheckArgs {
  Index m = 8;
  double r = 0.5, tau = 1.0, tol = 1e-4;
  int iters = 10;
  std::uint64_t seed = 0;
};

struct AttnArgs {
  std::string checkpoint, data, out;
  Index batch_size = 32;
};

void add_model_options(CLI::App* sub, ModelArgs& a) {
  sub->add_option("--r", a.r, "Subgraph ratio r; 1 disables selection (ERM)")->check(kRatio)->capture_default_str();
  sub->add_option("--tau", a.tau, "Sinkhorn temperature")->check(kPositive)->capture_default_str();
  sub->add_option("--sigma", a.sigma, "Gumbel noise factor at train time")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--iters", a.iters, "Sinkhorn iterations")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--mode", a.mode, "Per-graph (micro) or per-batch (macro) selection")
      ->check(CLI::IsMember({"micro", "macro"}))
      ->capture_default_str();
  sub->add_flag("--ablate-gumbel", a.ablate_gumbel, "Disable Gumbel noise");
  sub->add_flag("--ablate-nodeattn", a.ablate_node_attn, "Disable node attention in the readout");
  sub->add_option("--hidden", a.hidden, "Hidden width")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--layers", a.layers, "Predictor GIN layers")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--score-layers", a.score_layers, "Score-head GIN layers")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--dropout", a.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.99))->capture_default_str();
  sub->add_option("--readout", a.readout, "Graph pooling")->check(CLI::IsMember({"sum", "mean"}))->capture_default_str();
}

ModelConfig to_model_config(const ModelArgs& a, Index in_dim, Index num_classes) {
  ModelConfig c;
  c.in_dim = in_dim;
  c.num_classes = num_classes;
  c.hidden_dim = a.hidden;
  c.num_layers = a.layers;
  c.score_layers = a.score_layers;
  c.dropout = a.dropout;
  c.readout = a.readout == "mean" ? Readout::Mean : Readout::Sum;
  c.topr.r = a.r;
  c.topr.tau = a.tau;
  c.topr.sigma = a.sigma;
  c.topr.n_iters = a.iters;
  c.topr.mode = parse_segment_mode(a.mode);
  c.ablate_gumbel = a.ablate_gumbel;
  c.ablate_node_attn = a.ablate_node_attn;
  return c;
}

Index infer_classes(const Dataset& ds, Task task) {
  Index k = 1;
  for (const LabeledExample& ex : ds) {
    if (task == Task::GraphLevel) {
      k = std::max(k, ex.label + 1);
    } else {
      if (!ex.node_labels) throw Error(ErrorCode::InvalidLabel, "node-level task needs node labels");
      for (Index y : *ex.node_labels) k = std::max(k, y + 1);
    }
  }
  return std::max<Index>(k, 2);
}

int cmd_gen_data(GenDataArgs a, std::ostream& out) {
  a.synth.feat_mode = a.feat_mode == "uniform" ? FeatureMode::UniformRandom : FeatureMode::DegreeOneHot;
  a.synth.validate();
  const SynthSplits splits = generate_dataset(a.synth);
  const fs::path dir(a.out);
  ensure_dir(dir);
  write_jsonl(dir / "train.jsonl", splits.train);
  write_jsonl(dir / "val.jsonl", splits.val);
  write_jsonl(dir / "test.jsonl", splits.test);
  write_json(dir / "meta.json", {{"schema_version", kSchemaVersion}, {"generator", "spurious-motif"},
                                 {"config", to_json(a.synth)}});
  out << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
      << " examples to " << dir.string() << '\n';
  return kExitOk;
}

struct LoadedModel {
  Model model;
  Task task;
};

LoadedModel load_model(const fs::path& dir) {
  const json meta = read_json(dir / "model.json");
  Model model(model_config_from_json(meta.at("model")), 0);
  model.load_state(read_checkpoint(dir / "model.ckpt"));
  return {std::move(model), parse_task(meta.at("task").get<std::string>())};
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const fs::path data(a.data);
  const Dataset train_ds = read_jsonl(data / "train.jsonl");
  const Dataset val_ds = read_jsonl(data / "val.jsonl");
  if (train_ds.empty()) throw Error(ErrorCode::EmptyDataset, "empty training split");
  TrainConfig tc;
  tc.task = parse_task(a.task);
  tc.epochs = a.epochs;
  tc.patience = a.patience;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  tc.model = to_model_config(a.model, train_ds.front().graph.feat_dim(), infer_classes(train_ds, tc.task));
  tc.validate();
  if (tc.model.topr.degenerate()) out << "ERM-degenerate mode: r = 1, every edge and node attention is 1\n";

  const TrainResult res = train(train_ds, val_ds, tc);
  const MetricsReport val = evaluate(res.model, val_ds, tc.task, tc.batch_size);

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_checkpoint(dir / "model.ckpt", res.model.state());
  write_json(dir / "model.json",
             {{"schema_version", kSchemaVersion}, {"model", to_json(tc.model)}, {"task", to_string(tc.task)}});
  json history = json::array();
  for (const EpochRecord& r : res.history) {
    history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_accuracy", r.val_metric}});
  }
  write_json(dir / "metrics.json", {{"schema_version", kSchemaVersion},
                                    {"command", "train"},
                                    {"config", to_json(tc)},
                                    {"history", history},
                                    {"best_epoch", res.best_epoch},
                                    {"stopped_early", res.stopped_early},
                                    {"validation", to_json(val)}});
  out << "final validation accuracy: " << std::fixed << std::setprecision(4) << val.accuracy << " (epoch "
      << res.best_epoch << ")\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const LoadedModel lm = load_model(a.checkpoint);
  const Dataset ds = read_jsonl(a.data);
  if (ds.empty()) throw Error(ErrorCode::EmptyDataset, "empty dataset " + a.data);
  const MetricsReport rep = evaluate(lm.model, ds, lm.task, a.batch_size);
  const json j = {{"schema_version", kSchemaVersion}, {"command", "eval"}, {"metrics", to_json(rep)}};
  if (a.out.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_json(a.out, j);
  }
  return kExitOk;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_converge(const ConvergeArgs& a, std::ostream& out) {
  if (!(a.r > 0.0 && a.r < 1.0)) throw Error(ErrorCode::InvalidRatio, "converge needs r in (0, 1)");
  const std::vector<ConvergenceTrial> trials = convergence_study(a.m, a.r, a.tau, a.trials, a.iters, a.seed);
  std::vector<double> rho, r2;
  for (const ConvergenceTrial& t : trials) {
    rho.push_back(t.fit.rho);
    r2.push_back(t.fit.r2);
  }
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    ensure_dir(dir);
    std::ofstream rho_csv(dir / "rho.csv"), trace_csv(dir / "traces.csv");
    if (!rho_csv || !trace_csv) throw Error(ErrorCode::Io, "cannot write CSV into " + dir.string());
    rho_csv << std::setprecision(17) << "trial,rho,r2\n";
    trace_csv << std::setprecision(17) << "trial,iter,row_residual,plan_delta\n";
    for (std::size_t t = 0; t < trials.size(); ++t) {
      rho_csv << t << ',' << rho[t] << ',' << r2[t] << '\n';
      const ConvergenceTrace& tr = trials[t].trace;
      for (std::size_t k = 0; k < tr.row_residual.size(); ++k) {
        trace_csv << t << ',' << k + 1 << ',' << tr.row_residual[k] << ',' << tr.plan_delta[k] << '\n';
      }
    }
  }
  const bool all_contracting = std::all_of(rho.begin(), rho.end(), [](double v) { return v < 1.0; });
  const json j = {{"schema_version", kSchemaVersion},
                  {"command", "converge"},
                  {"m", a.m},
                  {"r", a.r},
                  {"tau", a.tau},
                  {"trials", a.trials},
                  {"iters", a.iters},
                  {"rho",
                   {{"min", quantile(rho, 0.0)},
                    {"q25", quantile(rho, 0.25)},
                    {"median", quantile(rho, 0.5)},
                    {"q75", quantile(rho, 0.75)},
                    {"max", quantile(rho, 1.0)}}},
                  {"r2_min", quantile(r2, 0.0)},
                  {"all_contracting", all_contracting}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

json report_json(const GradCheckReport& r) {
  return {{"max_error", r.max_error}, {"pass", r.pass}, {"worst_input", r.worst_input}, {"worst_index", r.worst_index}};
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.m < 1) throw Error(ErrorCode::InvalidConfig, "m must be >= 1");
  const GradCheckReport topr = check_topr_gradient(a.m, a.r, a.tau, a.iters, a.tol, a.seed);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.topr.r = a.r;
  mc.topr.tau = a.tau;
  mc.topr.n_iters = a.iters;
  const GradCheckReport e2e = check_end_to_end_gradient(mc, a.tol, a.seed);
  const bool pass = topr.pass && e2e.pass;
  const json j = {{"schema_version", kSchemaVersion}, {"command", "gradcheck"}, {"tol", a.tol},
                  {"soft_top_r", report_json(topr)},  {"end_to_end", report_json(e2e)}, {"pass", pass}};
  out << j.dump(2) << '\n';
  return pass ? kExitOk : kExitCheckFailed;
}

int cmd_attn_dump(const AttnArgs& a, std::ostream& out) {
  const LoadedModel lm = load_model(a.checkpoint);
  const Dataset ds = read_jsonl(a.data);
  const std::vector<GraphAttention> att = collect_attention(lm.model, ds, a.batch_size);
  json graphs = json::array();
  std::vector<std::vector<double>> alphas;
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t g = 0; g < att.size(); ++g) {
    graphs.push_back({{"edge_attn", att[g].edge_attn}, {"node_attn", att[g].node_attn}, {"trace", att[g].trace}});
    if (!ds[g].gt_edge_mask) throw Error(ErrorCode::MissingMask, "example " + std::to_string(g) + " has no edge mask");
    alphas.push_back(att[g].edge_attn);
    masks.push_back(mask_bytes(*ds[g].gt_edge_mask));
  }
  const SeparabilityReport sep = separability_report(alphas, masks);
  const fs::path dir(a.out);
  ensure_dir(dir);
  write_json(dir / "attention.json", {{"schema_version", kSchemaVersion}, {"graphs", graphs}});
  write_histogram_csv(dir / "histogram.csv", sep);
  out << json{{"schema_version", kSchemaVersion}, {"command", "attn-dump"}, {"graphs", att.size()},
              {"overlap", sep.overlap}}.dump(2)
      << '\n';
  return kExitOk;
}

// Splices config-file entries in as --key=value ahead of the user's flags,
// skipping keys the user set explicitly.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty() || rest.empty()) return rest;
  std::set<std::string> given;
  for (const std::string& s : rest) {
    if (s.rfind("--", 0) == 0) given.insert(s.substr(2, s.find('=') == std::string::npos ? std::string::npos : s.find('=') - 2));
  }
  std::vector<std::string> merged{rest.front()};
  for (const auto& [key, value] : read_run_config(config_path)) {
    if (!given.count(key)) merged.push_back("--" + key + "=" + value);
  }
  merged.insert(merged.end(), rest.begin() + 1, rest.end());
  return merged;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GSINA: soft top-r invariant subgraph learning on synthetic graphs", "gsina"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate biased train/val and unbiased test splits");
  gen_cmd->add_option("--bias", gen.synth.bias_b, "Spurious correlation degree b")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  gen_cmd->add_option("--n-train", gen.synth.n_train)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n-val", gen.synth.n_val)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n-test", gen.synth.n_test)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--base-min", gen.synth.base_min)->check(CLI::Range(4, 100000))->capture_default_str();
  gen_cmd->add_option("--base-max", gen.synth.base_max)->check(CLI::Range(4, 100000))->capture_default_str();
  gen_cmd->add_option("--feat-mode", gen.feat_mode)->check(CLI::IsMember({"degree", "uniform"}))->capture_default_str();
  gen_cmd->add_option("--feat-dim", gen.synth.feat_dim)->check(CLI::Range(2, 4096))->capture_default_str();
  gen_cmd->add_option("--seed", gen.synth.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train on <data>/train.jsonl, select on <data>/val.jsonl");
  add_model_options(train_cmd, tr.model);
  train_cmd->add_option("--data", tr.data, "Directory with train.jsonl and val.jsonl")->required();
  train_cmd->add_option("--out", tr.out, "Output directory for model.ckpt, model.json, metrics.json")->required();
  train_cmd->add_option("--task", tr.task)->check(CLI::IsMember({"graph", "node"}))->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--patience", tr.patience, "Early-stop patience; 0 disables")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Directory written by train")->required();
  eval_cmd->add_option("--data", ev.data, "JSON Lines dataset")->required();
  eval_cmd->add_option("--out", ev.out, "Write the report here instead of stdout");
  eval_cmd->add_option("--batch-size", ev.batch_size)->check(CLI::PositiveNumber)->capture_default_str();

  ConvergeArgs cv;
  auto* conv_cmd = app.add_subcommand("converge", "Empirical Sinkhorn contraction rate");
  conv_cmd->add_option("--m", cv.m, "Edges per instance")->check(CLI::PositiveNumber)->capture_default_str();
  conv_cmd->add_option("--r", cv.r)->check(kRatio)->capture_default_str();
  conv_cmd->add_option("--tau", cv.tau)->check(kPositive)->capture_default_str();
  conv_cmd->add_option("--trials", cv.trials)->check(CLI::PositiveNumber)->capture_default_str();
  conv_cmd->add_option("--iters", cv.iters)->check(CLI::PositiveNumber)->capture_default_str();
  conv_cmd->add_option("--seed", cv.seed)->capture_default_str();
  conv_cmd->add_option("--out", cv.out, "Directory for rho.csv and traces.csv");

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of soft top-r and the full loss");
  grad_cmd->add_option("--m", gc.m)->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--r", gc.r)->check(kRatio)->capture_default_str();
  grad_cmd->add_option("--tau", gc.tau)->check(kPositive)->capture_default_str();
  grad_cmd->add_option("--iters", gc.iters)->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--tol", gc.tol)->check(kPositive)->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed)->capture_default_str();

  AttnArgs at;
  auto* attn_cmd = app.add_subcommand("attn-dump", "Dump eval-mode attention and the separability histogram");
  attn_cmd->add_option("--checkpoint", at.checkpoint)->required();
  attn_cmd->add_option("--data", at.data)->required();
  attn_cmd->add_option("--out", at.out)->required();
  attn_cmd->add_option("--batch-size", at.batch_size)->check(CLI::PositiveNumber)->capture_default_str();

  // Consumed by expand_config before parsing; registered only for --help.
  std::string config_path;
  for (CLI::App* sub : app.get_subcommands({})) {
    sub->add_option("--config", config_path, "key=value file; command-line flags take precedence");
  }

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::Parse ? kExitUsage : exit_code_for(e.code());
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (conv_cmd->parsed()) return cmd_converge(cv, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(gc, out);
    if (attn_cmd->parsed()) return cmd_attn_dump(at, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace gsina
