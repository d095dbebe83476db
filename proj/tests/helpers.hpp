#ifndef GSINA_TESTS_HELPERS_HPP
#define GSINA_TESTS_HELPERS_HPP

#include "gsina/graph.hpp"
#include "gsina/rng.hpp"

#include <filesystem>
#include <set>
#include <string>

namespace gsina::test {

// Random simple graph: a spanning path plus `extra` random chords.
inline Graph random_graph(Index n, Index extra, Index feat_dim, Rng& rng) {
  std::vector<std::pair<Index, Index>> edges;
  std::set<std::pair<Index, Index>> seen;
  for (Index i = 1; i < n; ++i) {
    edges.emplace_back(i - 1, i);
    seen.emplace(i - 1, i);
  }
  for (Index t = 0; t < extra; ++t) {
    Index u = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
    Index v = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (seen.emplace(u, v).second) edges.emplace_back(u, v);
  }
  Matrix x(n, feat_dim);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  return Graph(n, edges, x);
}

inline std::vector<Index> random_permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[i] = i;
  rng.shuffle(p);
  return p;
}

inline Matrix random_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gsina_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gsina::test

#endif  // GSINA_TESTS_HELPERS_HPP
