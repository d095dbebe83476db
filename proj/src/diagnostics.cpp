#include "gsina/diagnostics.hpp"

#include "gsina/error.hpp"
#include "gsina/synth.hpp"
#include "gsina/topr.hpp"

namespace gsina {

RhoEstimate estimate_rho_window(const std::vector<double>& residuals, int first, int last, double floor) {
  if (first < 1 || last < first) throw Error(ErrorCode::InvalidConfig, "bad fit window");
  std::vector<double> window;
  for (int k = first; k <= last && k <= static_cast<int>(residuals.size()); ++k) {
    const double v = residuals[static_cast<std::size_t>(k - 1)];
    if (v <= floor) break;
    window.push_back(v);
  }
  return estimate_rho(window);
}

std::vector<ConvergenceTrial> convergence_study(Index m, double r, double tau, int trials, int iters,
                                                std::uint64_t seed) {
  if (m < 1 || trials < 1 || iters < 1) throw Error(ErrorCode::InvalidConfig, "m, trials, iters must be >= 1");
  const Rng root(seed);
  std::vector<ConvergenceTrial> out;
  for (int t = 0; t < trials; ++t) {
    Rng rng = root.stream(static_cast<std::uint64_t>(t));
    Vector s(m);
    for (Index e = 0; e < m; ++e) s[e] = rng.normal();
    ConvergenceTrial trial{m, r, tau, {}, {}};
    soft_top_r_reference<double>(s, r, tau, iters, 0.0, nullptr, &trial.trace);
    trial.fit = estimate_rho_window(trial.trace.row_residual, 1, iters);
    out.push_back(std::move(trial));
  }
  return out;
}

GradCheckReport check_topr_gradient(Index m, double r, double tau, int n_iters, double tol, std::uint64_t seed) {
  Rng rng = Rng(seed).stream("gradcheck");
  Matrix s(m, 1), w(m, 1);
  for (Index e = 0; e < m; ++e) s(e, 0) = rng.normal();
  for (Index e = 0; e < m; ++e) w(e, 0) = 2.0 * rng.uniform() - 1.0;
  TopRConfig cfg;
  cfg.r = r;
  cfg.tau = tau;
  cfg.sigma = 0.0;
  cfg.n_iters = n_iters;
  const std::vector<Index> seg(static_cast<std::size_t>(m), 0);
  auto f = [&](Tape& tape, const Var& x) {
    const Var a = soft_top_r(x, seg, 1, cfg, Rng(0)).alpha;
    return sum(a * tape.constant(w)) + 0.5 * sum(a * a);
  };
  return grad_check(f, s, 1e-5, tol);
}

GradCheckReport check_end_to_end_gradient(const ModelConfig& config, double tol, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_train = 2;
  sc.n_val = 1;
  sc.n_test = 1;
  sc.base_min = 4;
  sc.base_max = 6;
  sc.feat_dim = config.in_dim;
  sc.seed = seed;
  const Dataset ds = generate_dataset(sc).train;
  const GraphBatch b = batch(ds);
  const Model model(config, seed);

  std::vector<std::string> names;
  std::vector<Matrix> inputs;
  for (const auto& [name, value] : model.params().values()) {
    names.push_back(name);
    inputs.push_back(value);
  }
  const Rng root(seed);
  auto f = [&](Tape& tape, std::span<const Var> xs) {
    Binding p;
    for (std::size_t i = 0; i < names.size(); ++i) p.vars.emplace(names[i], xs[i]);
    ForwardOptions opt;
    opt.train_mode = true;
    opt.gumbel_rng = root.stream("gumbel");
    opt.dropout_rng = root.stream("dropout");
    return loss_nll(forward_graph(tape, p, model, b, opt).logits, b.labels);
  };
  return grad_check(f, inputs, 1e-5, tol);
}

}  // namespace gsina
