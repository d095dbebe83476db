#include "gsina/diagnostics.hpp"
#include "gsina/error.hpp"
#include "gsina/model.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace gsina;

namespace {

ModelConfig small_config(double r, Readout readout = Readout::Sum) {
  ModelConfig c;
  c.in_dim = 3;
  c.hidden_dim = 8;
  c.num_layers = 2;
  c.score_layers = 2;
  c.num_classes = 3;
  c.dropout = 0.0;
  c.readout = readout;
  c.topr.r = r;
  c.topr.sigma = 0.0;
  return c;
}

Dataset random_dataset(int graphs, Rng& rng, Index feat_dim = 3) {
  Dataset ds;
  for (int i = 0; i < graphs; ++i) {
    LabeledExample ex;
    ex.graph = test::random_graph(4 + static_cast<Index>(rng.index(6)), 3, feat_dim, rng);
    ex.label = static_cast<Index>(rng.index(3));
    ds.push_back(ex);
  }
  return ds;
}

Matrix logits_of(const Model& model, const GraphBatch& b, bool train = false, std::uint64_t seed = 0) {
  Tape t;
  const Binding p = bind(model.params(), t);
  ForwardOptions opt;
  opt.train_mode = train;
  opt.gumbel_rng = Rng(seed);
  opt.dropout_rng = Rng(seed + 1);
  return forward_graph(t, p, model, b, opt).logits.value();
}

}  // namespace

TEST_CASE("config validation and JSON round trip") {
  ModelConfig c = small_config(0.4);
  CHECK_NOTHROW(c.validate());
  c.readout = Readout::Mean;
  c.topr.mode = SegmentMode::Macro;
  c.ablate_gumbel = true;
  const ModelConfig back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  c.topr.r = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(0.4);
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("parameter layout and deterministic init") {
  const Model a(small_config(0.4), 3), b(small_config(0.4), 3), c(small_config(0.4), 4);
  CHECK(a.params().contains("phi.gin0.l1.w"));
  CHECK(a.params().contains("phi.edge.l1.w"));
  CHECK(a.params().at("phi.edge.l1.w").rows() == 16);
  CHECK(a.params().contains("theta.head.l2.b"));
  CHECK(a.params().at("theta.head.l2.w").cols() == 3);
  CHECK(a.params().at("theta.gin0.l1.b").isZero());
  CHECK(a.params().values() == b.params().values());
  CHECK(a.params().values() != c.params().values());
}

TEST_CASE("state round trip includes normalization statistics") {
  Model a(small_config(0.4), 1);
  a.score_norm().running_mean = 0.25;
  a.score_norm().running_std = 2.0;
  Model b(small_config(0.4), 2);
  b.load_state(a.state());
  CHECK(b.params().values() == a.params().values());
  CHECK(b.score_norm().running_mean == 0.25);
  CHECK(b.score_norm().running_std == 2.0);
  TensorMap partial = a.state();
  partial.erase("theta.head.l1.w");
  CHECK_THROWS_AS(b.load_state(partial), Error);
}

TEST_CASE("running statistics use momentum 0.1") {
  ScoreNorm n;
  n.update(2.0, 3.0);
  CHECK(n.running_mean == doctest::Approx(0.2));
  CHECK(n.running_std == doctest::Approx(0.9 + 0.3));
}

TEST_CASE("unit and zero edge weights in message passing") {
  Tape t;
  Model model(small_config(0.4), 0);
  const Binding p = bind(model.params(), t);
  const Graph g(3, {{0, 1}, {1, 2}}, Matrix::Ones(3, 3));
  Rng rng(1);
  const Var h = t.constant(test::random_matrix(3, 3, rng));
  const Matrix plain = weighted_message_pass(p, "theta.gin0", g, h, Var{}).value();
  const Matrix ones = weighted_message_pass(p, "theta.gin0", g, h, t.constant(Matrix::Ones(2, 1))).value();
  CHECK(plain == ones);
  // With every edge switched off each node only sees itself.
  const Matrix zero = weighted_message_pass(p, "theta.gin0", g, h, t.constant(Matrix::Zero(2, 1))).value();
  CHECK(zero.isApprox(mlp2(p, "theta.gin0", h).value(), 1e-15));
}

TEST_CASE("edge scores ignore stored orientation") {
  Tape t;
  Model model(small_config(0.4), 5);
  const Binding p = bind(model.params(), t);
  Rng rng(2);
  const Var emb = t.constant(test::random_matrix(4, 8, rng));
  const Graph a(4, {{0, 1}, {2, 1}, {3, 0}}, Matrix::Ones(4, 3));
  const Graph b(4, {{1, 0}, {1, 2}, {0, 3}}, Matrix::Ones(4, 3));
  const Matrix sa = edge_scores(p, a, emb, true, model.score_norm(), nullptr).value();
  const Matrix sb = edge_scores(p, b, emb, true, model.score_norm(), nullptr).value();
  CHECK(sa == sb);
}

TEST_CASE("train-mode score normalization") {
  Tape t;
  Model model(small_config(0.4), 5);
  const Binding p = bind(model.params(), t);
  Rng rng(3);
  const Graph g = test::random_graph(8, 6, 3, rng);
  const Var emb = t.constant(test::random_matrix(8, 8, rng));
  ScoreNorm stats;
  const Matrix s = edge_scores(p, g, emb, true, model.score_norm(), &stats).value();
  CHECK(std::abs(s.mean()) < 1e-12);
  const double var = (s.array() - s.mean()).square().mean();
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(stats.running_mean != 0.0);

  // Identical embeddings give identical raw scores; the result is all zeros, not NaN.
  const Matrix flat = edge_scores(p, g, t.constant(Matrix::Ones(8, 8)), true, model.score_norm(), nullptr).value();
  CHECK(flat.cwiseAbs().maxCoeff() < 1e-9);

  const Graph one(2, {{0, 1}}, Matrix::Ones(2, 3));
  CHECK_THROWS_AS(edge_scores(p, one, t.constant(Matrix::Ones(2, 8)), true, model.score_norm(), nullptr), Error);
  CHECK_NOTHROW(edge_scores(p, one, t.constant(Matrix::Ones(2, 8)), false, model.score_norm(), nullptr));
}

TEST_CASE("eval mode uses the frozen statistics") {
  Tape t;
  Model model(small_config(0.4), 5);
  model.score_norm().running_mean = 0.5;
  model.score_norm().running_std = 2.0;
  const Binding p = bind(model.params(), t);
  Rng rng(4);
  const Graph g = test::random_graph(6, 4, 3, rng);
  const Var emb = t.constant(test::random_matrix(6, 8, rng));
  const Matrix s = edge_scores(p, g, emb, false, model.score_norm(), nullptr).value();
  ScoreNorm unit;
  unit.running_mean = 0.0;
  unit.running_std = 1.0 - 1e-5;
  const Matrix raw = edge_scores(p, g, emb, false, unit, nullptr).value();
  CHECK(s.isApprox(((raw.array() - 0.5) / (2.0 + 1e-5)).matrix(), 1e-14));
  CHECK(model.score_norm().running_mean == 0.5);
}

TEST_CASE("readout") {
  Tape t;
  const Var h = t.constant((Matrix(3, 2) << 1, 2, 3, 4, 5, 6).finished());
  const Var a = t.constant((Matrix(3, 1) << 1, 0.5, 0).finished());
  const Matrix s = readout(h, a, {0, 0, 1}, 2, Readout::Sum).value();
  CHECK(s == (Matrix(2, 2) << 2.5, 4, 0, 0).finished());
  const Matrix m = readout(h, a, {0, 0, 1}, 2, Readout::Mean).value();
  CHECK(m == (Matrix(2, 2) << 1.25, 2, 0, 0).finished());
  CHECK_THROWS_AS(readout(h, a, {0, 0, 0}, 2, Readout::Sum), Error);
}

TEST_CASE("r = 1 forward is bitwise the plain GIN, in train mode with dropout too") {
  Rng rng(6);
  for (Readout ro : {Readout::Sum, Readout::Mean}) {
    ModelConfig c = small_config(1.0, ro);
    c.dropout = 0.3;
    const Model model(c, 11);
    for (int t = 0; t < 5; ++t) {
      const GraphBatch b = batch(random_dataset(4, rng));
      for (bool train : {false, true}) {
        Tape t1, t2;
        ForwardOptions opt;
        opt.train_mode = train;
        opt.gumbel_rng = Rng(7);
        opt.dropout_rng = Rng(8 + static_cast<std::uint64_t>(t));
        const Matrix a = forward_graph(t1, bind(model.params(), t1), model, b, opt).logits.value();
        const Matrix p = forward_plain_gin(t2, bind(model.params(), t2), model, b, opt).value();
        CHECK(a == p);
      }
    }
  }
}

TEST_CASE("graph logits are invariant to node relabeling") {
  Rng rng(9);
  for (double r : {0.4, 1.0}) {
    Model model(small_config(r), 12);
    model.score_norm().running_std = 0.7;
    for (int t = 0; t < 10; ++t) {
      LabeledExample ex;
      ex.graph = test::random_graph(7, 5, 3, rng);
      ex.label = 0;
      LabeledExample px = ex;
      px.graph = permute_nodes(ex.graph, test::random_permutation(7, rng));
      const Matrix a = logits_of(model, batch(Dataset{ex}));
      const Matrix b = logits_of(model, batch(Dataset{px}));
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
      // Train mode without noise or dropout uses batch statistics and is invariant as well.
      const Matrix at = logits_of(model, batch(Dataset{ex}), true);
      const Matrix bt = logits_of(model, batch(Dataset{px}), true);
      CHECK((at - bt).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("node-level forward returns one row per node") {
  Rng rng(10);
  const Model model(small_config(0.5), 1);
  const GraphBatch b = batch(random_dataset(3, rng));
  Tape t;
  const NodeForward f = forward_node(t, bind(model.params(), t), model, b, ForwardOptions{});
  CHECK(f.logits.rows() == b.merged.num_nodes());
  CHECK(f.alpha_e.rows() == b.merged.num_edges());
}

TEST_CASE("negative log-likelihood") {
  Tape t;
  const Var z = t.constant(Matrix::Zero(4, 3));
  CHECK(loss_nll(z, {0, 1, 2, 0}).item() == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  const Var l = t.constant((Matrix(2, 2) << 0, std::log(3.0), 0, 0).finished());
  CHECK(loss_nll(l, {1, 0}).item() == doctest::Approx(0.5 * (-std::log(0.75) + std::log(2.0))).epsilon(1e-14));
  CHECK_THROWS_AS(loss_nll(z, {0, 1, 3, 0}), Error);
  CHECK_THROWS_AS(loss_nll(z, {0, 1}), Error);
}

TEST_CASE("end-to-end gradient through Gumbel, Sinkhorn, normalization and readout") {
  ModelConfig c = small_config(0.5);
  c.topr.sigma = 1.0;
  c.dropout = 0.2;
  const GradCheckReport rep = check_end_to_end_gradient(c, 1e-4, 3);
  CHECK(rep.pass);
  CHECK(rep.max_error <= 1e-4);
  c.topr.mode = SegmentMode::Macro;
  c.readout = Readout::Mean;
  CHECK(check_end_to_end_gradient(c, 1e-4, 4).pass);
}
