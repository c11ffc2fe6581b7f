#pragma once

#include <random>
#include <vector>

#include "ssnas/archspace/archspace.hpp"
#include "ssnas/common/rng.hpp"
#include "ssnas/diffcore/matrix.hpp"

namespace ssnas::testing {

inline diffcore::Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  diffcore::Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

// Entries with magnitude in [0.1, 1] and random sign, so kinks at 0 are avoided.
inline diffcore::Matrix away_from_zero(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  diffcore::Matrix m(rows, cols);
  for (double& v : m.data()) v = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * mag(rng);
  return m;
}

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

// Architecture from an explicit edge list and interior op indices.
inline archspace::Architecture make_arch(const archspace::SpacePtr& space, std::size_t nodes,
                                         const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                         const std::vector<int>& interior_ops) {
  std::vector<std::uint8_t> adj(nodes * nodes, 0);
  for (auto [a, b] : edges) adj[a * nodes + b] = 1;
  std::vector<int> ops{archspace::kInputOp};
  ops.insert(ops.end(), interior_ops.begin(), interior_ops.end());
  ops.push_back(archspace::kOutputOp);
  return archspace::Architecture(space, std::move(adj), std::move(ops));
}

// Every valid, fully pruned architecture with exactly `nodes` nodes.
inline std::vector<archspace::Architecture> all_architectures(const archspace::SpacePtr& space, std::size_t nodes) {
  std::vector<archspace::Architecture> out;
  const std::size_t pairs = nodes * (nodes - 1) / 2;
  const std::size_t interior = nodes - 2;
  std::size_t label_combos = 1;
  for (std::size_t i = 0; i < interior; ++i) label_combos *= space->vocab.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << pairs); ++mask) {
    std::vector<std::uint8_t> adj(nodes * nodes, 0);
    std::size_t bit = 0;
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = i + 1; j < nodes; ++j, ++bit)
        if (mask >> bit & 1) adj[i * nodes + j] = 1;
    for (std::size_t code = 0; code < label_combos; ++code) {
      std::vector<int> ops{archspace::kInputOp};
      std::size_t c = code;
      for (std::size_t i = 0; i < interior; ++i) {
        ops.push_back(static_cast<int>(c % space->vocab.size()));
        c /= space->vocab.size();
      }
      ops.push_back(archspace::kOutputOp);
      archspace::Architecture a(space, adj, ops);
      const auto report = archspace::validate(a);
      if (report && !report.has_dangling) out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace ssnas::testing
