#include "gsina/synth.hpp"

#include "gsina/error.hpp"

#include <numeric>

namespace gsina {

std::string_view to_string(MotifKind kind) {
  switch (kind) {
    case MotifKind::Cycle: return "cycle";
    case MotifKind::House: return "house";
    case MotifKind::Crane: return "crane";
  }
  return "?";
}

std::string_view to_string(BaseKind kind) {
  switch (kind) {
    case BaseKind::Tree: return "tree";
    case BaseKind::Ladder: return "ladder";
    case BaseKind::Wheel: return "wheel";
  }
  return "?";
}

void SynthConfig::validate() const {
  if (!(bias_b >= 0.0 && bias_b <= 1.0)) throw Error(ErrorCode::InvalidConfig, "bias must lie in [0,1]");
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) throw Error(ErrorCode::InvalidConfig, "split sizes must be positive");
  if (base_min < 4 || base_min > base_max) throw Error(ErrorCode::InvalidConfig, "base size range needs 4 <= min <= max");
  if (feat_dim < 1 || (feat_mode == FeatureMode::DegreeOneHot && feat_dim < 2)) {
    throw Error(ErrorCode::InvalidConfig, "feat_dim too small");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"bias", c.bias_b},
          {"n_train", c.n_train},
          {"n_val", c.n_val},
          {"n_test", c.n_test},
          {"base_min", c.base_min},
          {"base_max", c.base_max},
          {"feat_mode", c.feat_mode == FeatureMode::DegreeOneHot ? "degree" : "uniform"},
          {"feat_dim", c.feat_dim},
          {"seed", c.seed}};
}

Fragment make_motif(MotifKind kind) {
  switch (kind) {
    case MotifKind::Cycle: return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}}};
    case MotifKind::House: return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}}};
    case MotifKind::Crane: return {6, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {3, 5}}};
  }
  throw Error(ErrorCode::InvalidConfig, "unknown motif");
}

Fragment make_base(BaseKind kind, Index size, Rng& rng) {
  if (size < 4) throw Error(ErrorCode::SizeTooSmall, "base size " + std::to_string(size));
  Fragment f;
  switch (kind) {
    case BaseKind::Tree:
      // Uniform random recursive tree.
      f.num_nodes = size;
      for (Index i = 1; i < size; ++i) f.edges.emplace_back(static_cast<Index>(rng.index(i)), i);
      break;
    case BaseKind::Ladder: {
      const Index rungs = size / 2;
      f.num_nodes = 2 * rungs;
      for (Index k = 0; k < rungs; ++k) {
        f.edges.emplace_back(k, rungs + k);
        if (k + 1 < rungs) {
          f.edges.emplace_back(k, k + 1);
          f.edges.emplace_back(rungs + k, rungs + k + 1);
        }
      }
      break;
    }
    case BaseKind::Wheel:
      f.num_nodes = size;
      for (Index i = 1; i < size; ++i) {
        f.edges.emplace_back(0, i);
        f.edges.emplace_back(i, i + 1 < size ? i + 1 : 1);
      }
      break;
  }
  return f;
}

AttachedGraph attach(const Fragment& base, const Fragment& motif, Rng& rng) {
  AttachedGraph out;
  const Index off = base.num_nodes;
  out.fragment.num_nodes = base.num_nodes + motif.num_nodes;
  out.fragment.edges = base.edges;
  out.gt_edge_mask.assign(base.edges.size(), false);
  for (const auto& [u, v] : motif.edges) {
    out.fragment.edges.emplace_back(u + off, v + off);
    out.gt_edge_mask.push_back(true);
  }
  const auto b = static_cast<Index>(rng.index(static_cast<std::uint64_t>(base.num_nodes)));
  const auto m = static_cast<Index>(rng.index(static_cast<std::uint64_t>(motif.num_nodes)));
  out.fragment.edges.emplace_back(b, m + off);
  out.gt_edge_mask.push_back(false);
  out.gt_node_mask.assign(static_cast<std::size_t>(base.num_nodes), false);
  out.gt_node_mask.resize(static_cast<std::size_t>(out.fragment.num_nodes), true);
  return out;
}

Matrix make_features(const Fragment& fragment, FeatureMode mode, Index feat_dim, Rng& rng) {
  Matrix x = Matrix::Zero(fragment.num_nodes, feat_dim);
  if (mode == FeatureMode::DegreeOneHot) {
    std::vector<Index> deg(static_cast<std::size_t>(fragment.num_nodes), 0);
    for (const auto& [u, v] : fragment.edges) {
      ++deg[u];
      ++deg[v];
    }
    for (Index i = 0; i < fragment.num_nodes; ++i) x(i, std::min(deg[i], feat_dim - 1)) = 1.0;
  } else {
    for (Index i = 0; i < x.rows(); ++i)
      for (Index k = 0; k < x.cols(); ++k) x(i, k) = rng.uniform();
  }
  return x;
}

namespace {

LabeledExample make_example(MotifKind motif, BaseKind base, const SynthConfig& config, Rng& rng) {
  const Index size = config.base_min + static_cast<Index>(rng.index(static_cast<std::uint64_t>(config.base_max - config.base_min + 1)));
  const Fragment base_frag = make_base(base, size, rng);
  AttachedGraph joined = attach(base_frag, make_motif(motif), rng);

  // Shuffle node ids so position carries no label information.
  const Index n = joined.fragment.num_nodes;
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(perm);
  Fragment shuffled{n, {}};
  for (const auto& [u, v] : joined.fragment.edges) shuffled.edges.emplace_back(perm[u], perm[v]);
  std::vector<bool> node_mask(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) node_mask[perm[i]] = joined.gt_node_mask[i];

  Matrix x = make_features(shuffled, config.feat_mode, config.feat_dim, rng);
  LabeledExample ex{Graph(n, shuffled.edges, std::move(x)), static_cast<Index>(motif), std::move(joined.gt_edge_mask),
                    node_mask, std::vector<Index>(static_cast<std::size_t>(n)), std::string(to_string(base))};
  for (Index i = 0; i < n; ++i) (*ex.node_labels)[i] = node_mask[i] ? 1 : 0;
  return ex;
}

Dataset make_split(Index count, double bias, const SynthConfig& config, Rng rng) {
  Dataset out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    const auto label = static_cast<Index>(rng.index(3));
    Index base = label;
    if (!rng.bernoulli(bias)) base = (label + 1 + static_cast<Index>(rng.index(2))) % 3;
    out.push_back(make_example(static_cast<MotifKind>(label), static_cast<BaseKind>(base), config, rng));
  }
  return out;
}

}  // namespace

SynthSplits generate_dataset(const SynthConfig& config) {
  config.validate();
  const Rng root(config.seed);
  const Rng data = root.stream("data");
  SynthSplits out;
  out.train = make_split(config.n_train, config.bias_b, config, data.stream("train"));
  out.val = make_split(config.n_val, config.bias_b, config, data.stream("val"));
  out.test = make_split(config.n_test, 1.0 / 3.0, config, data.stream("test"));
  return out;
}

BaseKind base_kind_of(const LabeledExample& example) {
  if (!example.env) throw Error(ErrorCode::InvalidConfig, "example has no environment tag");
  for (BaseKind k : {BaseKind::Tree, BaseKind::Ladder, BaseKind::Wheel}) {
    if (*example.env == to_string(k)) return k;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown environment tag " + *example.env);
}

}  // namespace gsina
