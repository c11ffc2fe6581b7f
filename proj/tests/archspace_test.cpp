#include <gtest/gtest.h>

#include <set>

#include "ssnas/archspace/archspace.hpp"
#include "ssnas/common/error.hpp"
#include "test_support.hpp"

namespace {

using namespace ssnas;
using archspace::Architecture;
using ssnas::testing::all_architectures;
using ssnas::testing::make_arch;

constexpr int kConv1 = 0;
constexpr int kConv3 = 1;
constexpr int kPool = 2;

// Number of INPUT -> OUTPUT walks via powers of the adjacency matrix.
std::size_t walk_count(const Architecture& a) {
  const std::size_t n = a.node_count();
  std::vector<std::size_t> reach(n, 0);
  reach[0] = 1;
  std::size_t total = 0;
  for (std::size_t step = 0; step < n; ++step) {
    std::vector<std::size_t> next(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (a.edge(i, j)) next[j] += reach[i];
    total += next[n - 1];
    reach = next;
  }
  return total;
}

TEST(Validate, MinimalChainIsValid) {
  auto space = archspace::nasbench101_space();
  const auto a = make_arch(space, 3, {{0, 1}, {1, 2}}, {kConv3});
  const auto report = archspace::validate(a);
  EXPECT_TRUE(report.valid);
  EXPECT_TRUE(report.reason.empty());
  EXPECT_FALSE(report.has_dangling);
}

TEST(Validate, BelowDiagonalEntryIsRejected) {
  auto space = archspace::nasbench101_space();
  const auto a = make_arch(space, 3, {{0, 1}, {1, 2}, {2, 1}}, {kConv3});
  const auto report = archspace::validate(a);
  EXPECT_FALSE(report.valid);
  EXPECT_EQ(report.reason, "not upper-triangular");
}

TEST(Validate, TenEdgesExceedNasBench101Budget) {
  auto space = archspace::nasbench101_space();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t j = 1; j < 7; ++j) edges.push_back({j - 1, j});
  edges.insert(edges.end(), {{0, 2}, {0, 3}, {0, 4}, {0, 6}});
  const auto a = make_arch(space, 7, edges, {kConv1, kConv3, kPool, kConv1, kConv3});
  ASSERT_EQ(a.edge_count(), 10u);
  const auto report = archspace::validate(a);
  EXPECT_FALSE(report.valid);
  EXPECT_EQ(report.reason, "edge budget exceeded");
}

TEST(Validate, OtherRules) {
  auto space = archspace::nasbench101_space();
  EXPECT_EQ(archspace::validate(make_arch(space, 3, {{0, 1}}, {kConv3})).reason, "no input-to-output path");
  EXPECT_EQ(archspace::validate(make_arch(space, 3, {{0, 1}, {1, 2}}, {7})).reason,
            "interior label outside vocabulary");
  EXPECT_EQ(archspace::validate(Architecture(space, std::vector<std::uint8_t>(64, 0), std::vector<int>(8, 0))).reason,
            "too many nodes");
  const auto dangling = make_arch(space, 4, {{0, 1}, {1, 3}, {0, 2}}, {kConv3, kPool});
  const auto report = archspace::validate(dangling);
  EXPECT_TRUE(report.valid);
  EXPECT_TRUE(report.has_dangling);
  const auto pruned = archspace::prune(dangling);
  EXPECT_EQ(pruned, make_arch(space, 3, {{0, 1}, {1, 2}}, {kConv3}));
}

TEST(Architecture, ConstructionChecksShapes) {
  auto space = archspace::nasbench101_space();
  EXPECT_THROW(Architecture(space, std::vector<std::uint8_t>(5, 0), {archspace::kInputOp, archspace::kOutputOp}),
               Error);
  EXPECT_THROW(Architecture(space, std::vector<std::uint8_t>{0, 2, 0, 0}, {archspace::kInputOp, archspace::kOutputOp}),
               Error);
}

TEST(RandomArchitecture, DeterministicPerSeed) {
  auto space = archspace::surrogate_space();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a = make_rng(seed);
    Rng b = make_rng(seed);
    EXPECT_EQ(archspace::random_architecture(space, a), archspace::random_architecture(space, b));
  }
}

TEST(RandomArchitecture, SamplesAreValidAndCoverEdgeCounts) {
  auto space = archspace::surrogate_space();
  Rng rng = make_rng(11);
  std::vector<std::size_t> hist(space->max_edges + 1, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto a = archspace::random_architecture(space, rng);
    const auto report = archspace::validate(a);
    ASSERT_TRUE(report.valid) << report.reason;
    EXPECT_FALSE(report.has_dangling);
    ++hist[a.edge_count()];
  }
  for (std::size_t e = 1; e <= space->max_edges; ++e) EXPECT_GT(hist[e], 0u) << "edge count " << e;
}

TEST(RandomArchitecture, ImpossibleSpaceThrows) {
  // With one edge allowed only the direct INPUT -> OUTPUT graph is valid, so a single attempt often fails.
  auto space = archspace::make_space("tight", 3, 1, {"a"});
  bool threw = false;
  for (std::uint64_t seed = 0; seed < 64 && !threw; ++seed) {
    Rng rng = make_rng(seed);
    try {
      archspace::random_architecture(space, rng, 1);
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("space too constrained"), std::string::npos);
      threw = true;
    }
  }
  EXPECT_TRUE(threw);
}

TEST(Mutate, ZeroRateIsIdentity) {
  auto space = archspace::surrogate_space();
  Rng rng = make_rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto a = archspace::random_architecture(space, rng);
    EXPECT_EQ(archspace::mutate(a, 0.0, rng), a);
  }
}

TEST(Mutate, UnitRateUsuallyChangesAndStaysValid) {
  for (auto space : {archspace::surrogate_space(), archspace::nasbench101_space()}) {
    Rng rng = make_rng(5);
    std::size_t changed = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto a = archspace::random_architecture(space, rng);
      const auto child = archspace::mutate(a, 1.0, rng);
      const auto report = archspace::validate(child);
      ASSERT_TRUE(report.valid) << report.reason;
      if (!(child == a)) ++changed;
    }
    EXPECT_GT(changed, 500u) << space->name;
  }
}

TEST(Mutate, RejectsInvalidInput) {
  auto space = archspace::surrogate_space();
  Rng rng = make_rng(0);
  EXPECT_THROW(archspace::mutate(make_arch(space, 3, {{0, 1}}, {kConv3}), 1.0, rng), Error);
  EXPECT_THROW(archspace::mutate(make_arch(space, 3, {{0, 1}, {1, 2}}, {kConv3}), -1.0, rng), Error);
}

TEST(EnumeratePaths, SimpleShapes) {
  auto space = archspace::nasbench101_space();
  const auto chain = archspace::enumerate_paths(make_arch(space, 3, {{0, 1}, {1, 2}}, {kConv3}));
  ASSERT_EQ(chain.size(), 1u);
  EXPECT_EQ(chain[0].ops, std::vector<int>{kConv3});
  EXPECT_EQ(chain[0].node_indices, std::vector<std::size_t>{1});

  const auto skip = archspace::enumerate_paths(make_arch(space, 3, {{0, 1}, {1, 2}, {0, 2}}, {kPool}));
  ASSERT_EQ(skip.size(), 2u);
  std::size_t empty = 0;
  for (const auto& p : skip) empty += p.ops.empty() ? 1 : 0;
  EXPECT_EQ(empty, 1u);
}

TEST(EnumeratePaths, MatchesMatrixPowerOracleExhaustively) {
  for (std::size_t nodes = 3; nodes <= 6; ++nodes) {
    // Labels do not change paths; one label keeps the enumeration small.
    auto single = archspace::make_space("single", nodes, 15, {"op"});
    for (const auto& a : all_architectures(single, nodes)) {
      const auto paths = archspace::enumerate_paths(a);
      ASSERT_EQ(paths.size(), walk_count(a));
      std::set<std::vector<std::size_t>> distinct;
      for (const auto& p : paths) {
        std::size_t prev = 0;
        for (std::size_t v : p.node_indices) {
          ASSERT_GT(v, prev);
          ASSERT_TRUE(a.edge(prev, v));
          prev = v;
        }
        ASSERT_TRUE(a.edge(prev, nodes - 1));
        ASSERT_EQ(p.ops.size(), p.node_indices.size());
        distinct.insert(p.node_indices);
      }
      EXPECT_EQ(distinct.size(), paths.size());
    }
  }
}

TEST(EnumeratePaths, CapRaisesPathExplosion) {
  auto space = archspace::make_space("dense", 7, 21, {"op"});
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = i + 1; j < 7; ++j) edges.push_back({i, j});
  const auto a = make_arch(space, 7, edges, {0, 0, 0, 0, 0});
  EXPECT_EQ(archspace::enumerate_paths(a).size(), 32u);
  try {
    archspace::enumerate_paths(a, 10);
    FAIL() << "expected path explosion";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("path explosion"), std::string::npos);
  }
}

TEST(Json, RoundTrip) {
  auto space = archspace::nasbench101_space();
  Rng rng = make_rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto a = archspace::random_architecture(space, rng);
    const auto j = archspace::to_json(a);
    EXPECT_EQ(j["ops"].front(), "input");
    EXPECT_EQ(j["ops"].back(), "output");
    EXPECT_EQ(archspace::architecture_from_json(j, space), a);
  }
  const auto sj = archspace::space_to_json(*space);
  EXPECT_EQ(*archspace::space_from_json(sj), *space);
}

TEST(Json, RejectsUnknownOperation) {
  auto space = archspace::nasbench101_space();
  nlohmann::json j = {{"matrix", {{0, 1, 0}, {0, 0, 1}, {0, 0, 0}}}, {"ops", {"input", "conv5x5", "output"}}};
  EXPECT_THROW(archspace::architecture_from_json(j, space), Error);
}

TEST(Spaces, Presets) {
  auto nb101 = archspace::preset_space("nasbench101");
  EXPECT_EQ(nb101->max_nodes, 7u);
  EXPECT_EQ(nb101->max_edges, 9u);
  EXPECT_EQ(nb101->node_feature_dim, 6u);
  auto nb201 = archspace::preset_space("nasbench201");
  EXPECT_EQ(nb201->max_nodes, 8u);
  EXPECT_EQ(nb201->node_feature_dim, 8u);
  EXPECT_THROW(archspace::preset_space("nope"), Error);
  EXPECT_THROW(archspace::make_space("bad", 2, 1, {"a"}), Error);
  EXPECT_THROW(archspace::OpVocabulary({"a", "a"}), Error);
}

}  // namespace
