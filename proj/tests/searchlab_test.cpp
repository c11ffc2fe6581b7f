#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include "ssnas/benchstore/benchstore.hpp"
#include "ssnas/common/error.hpp"
#include "ssnas/encoding/encoding.hpp"
#include "ssnas/searchlab/searchlab.hpp"
#include "ssnas/ssl/ssl.hpp"
#include "test_support.hpp"

namespace {

using namespace ssnas;
using archspace::Architecture;
using benchstore::BenchmarkRecord;
using benchstore::BenchmarkTable;
using searchlab::SearchTrace;

double brute_force_tau(const std::vector<double>& x, const std::vector<double>& y) {
  long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0) ++ties_x;
      if (dy == 0.0) ++ties_y;
      if (dx * dy > 0.0) ++concordant;
      if (dx * dy < 0.0) ++discordant;
    }
  }
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
}

std::vector<double> vals_of(const BenchmarkTable& table) {
  std::vector<double> v;
  for (const BenchmarkRecord& r : table.records()) v.push_back(r.val_mean());
  return v;
}

// Every valid architecture of a 4-node surrogate space with distinct random errors.
BenchmarkTable exhaustive_small_table(std::uint64_t seed) {
  auto space = archspace::surrogate_space(4, 6);
  BenchmarkTable table(space);
  Rng rng = make_rng(seed);
  for (std::size_t n = 2; n <= 4; ++n) {
    for (Architecture& a : ssnas::testing::all_architectures(space, n)) {
      const double v = 0.05 + 0.4 * uniform01(rng);
      table.insert({std::move(a), {v}, {v + 0.01}});
    }
  }
  return table;
}

const BenchmarkTable& surrogate_table() {
  static const BenchmarkTable table = benchstore::synth_benchmark(archspace::surrogate_space(), 600, 0.01, 5);
  return table;
}

// Predicts from a fixed lookup; records how it was used.
class LookupPredictor : public searchlab::SearchPredictor {
 public:
  explicit LookupPredictor(const BenchmarkTable& table) : table_(table) {}
  void fit(std::span<const Architecture> archs, std::span<const double>, Rng&) override {
    fit_sizes.push_back(archs.size());
    events.push_back('f');
  }
  std::vector<double> predict(std::span<const Architecture> archs) override {
    events.push_back('p');
    std::vector<double> out;
    for (const Architecture& a : archs) out.push_back(table_.record(static_cast<std::size_t>(table_.find(a))).val_mean());
    return out;
  }
  std::vector<std::size_t> fit_sizes;
  std::string events;

 private:
  const BenchmarkTable& table_;
};

// Predicts uniformly random scores; fits nothing.
class NoisePredictor : public searchlab::SearchPredictor {
 public:
  void fit(std::span<const Architecture>, std::span<const double>, Rng& rng) override { state_ = rng(); }
  std::vector<double> predict(std::span<const Architecture> archs) override {
    Rng rng(state_++);
    std::vector<double> out;
    for (std::size_t i = 0; i < archs.size(); ++i) out.push_back(uniform01(rng));
    return out;
  }

 private:
  std::uint64_t state_ = 0;
};

void expect_trace_invariants(const SearchTrace& trace, std::size_t length) {
  ASSERT_EQ(trace.evaluations.size(), length);
  ASSERT_EQ(trace.best_val.size(), length);
  ASSERT_EQ(trace.best_test.size(), length);
  EXPECT_EQ(trace.queries, length);
  std::set<std::string> keys;
  double best = 2.0;
  double best_test = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const auto& e = trace.evaluations[i];
    EXPECT_EQ(e.step, i + 1);
    EXPECT_TRUE(keys.insert(encoding::encoding_key(e.arch)).second) << "duplicate at step " << e.step;
    if (e.val_err < best) {
      best = e.val_err;
      best_test = e.test_err;
    }
    EXPECT_EQ(trace.best_val[i], best);
    EXPECT_EQ(trace.best_test[i], best_test);
    if (i > 0) {
      EXPECT_LE(trace.best_val[i], trace.best_val[i - 1]);
    }
  }
}

std::string trace_csv(const SearchTrace& trace) {
  std::ostringstream out;
  searchlab::write_trace_csv(trace, out);
  return out.str();
}

std::uint64_t store_checksum(const diffcore::ParameterStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, p] : store.params())
    for (double v : p.value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 0x100000001b3ULL;
    }
  return h;
}

TEST(KendallTau, MatchesBruteForceWithAndWithoutTies) {
  Rng rng = make_rng(21);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = ssnas::testing::dim(rng, 2, 60);
    const bool ties = t % 2 == 0;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? static_cast<double>(uniform_index(rng, 5)) : uniform01(rng);
      y[i] = ties ? static_cast<double>(uniform_index(rng, 4)) : uniform01(rng);
    }
    const auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
    };
    if (constant(x) || constant(y)) continue;
    EXPECT_EQ(searchlab::kendall_tau(x, y), brute_force_tau(x, y)) << "vector " << t;
    ++checked;
  }
  EXPECT_GE(checked, 95);
}

TEST(KendallTau, WorkedExamples) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(searchlab::kendall_tau(a, std::vector<double>{1, 3, 2, 4}), 4.0 / 6.0);
  EXPECT_EQ(searchlab::kendall_tau(a, a), 1.0);
  EXPECT_EQ(searchlab::kendall_tau(a, std::vector<double>{4, 3, 2, 1}), -1.0);
}

TEST(KendallTau, Errors) {
  const std::vector<double> a{1, 2, 3};
  try {
    searchlab::kendall_tau(a, std::vector<double>{2, 2, 2});
    FAIL() << "constant input accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined correlation"), std::string::npos);
  }
  EXPECT_THROW(searchlab::kendall_tau(std::vector<double>{5, 5, 5}, a), Error);
  EXPECT_THROW(searchlab::kendall_tau(a, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(searchlab::kendall_tau(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST(FineTune, SingleSampleIsMemorized) {
  auto space = archspace::surrogate_space();
  Rng rng = make_rng(3);
  const std::vector<Architecture> archs{archspace::random_architecture(space, rng)};
  const std::vector<double> target{0.23};
  auto predictor = searchlab::fresh_predictor(gnnmodels::embedding_config_for(*space), nullptr, rng);
  const auto history = searchlab::fine_tune(predictor, archs, target, searchlab::default_fine_tune_config(), rng);
  ASSERT_EQ(history.size(), 300u);
  EXPECT_LT(history.back(), 1e-4);
}

TEST(FineTune, DeterministicForSeed) {
  const auto& table = surrogate_table();
  const auto embedding = gnnmodels::embedding_config_for(*table.space());
  std::vector<Architecture> archs;
  std::vector<double> targets;
  for (std::size_t i = 0; i < 100; ++i) {
    archs.push_back(table.record(i).arch);
    targets.push_back(table.record(i).val_mean());
  }
  auto config = searchlab::default_fine_tune_config();
  config.epochs = 20;
  auto run = [&] {
    Rng rng = make_rng(8);
    auto p = searchlab::fresh_predictor(embedding, nullptr, rng);
    searchlab::fine_tune(p, archs, targets, config, rng);
    return store_checksum(p.store);
  };
  EXPECT_EQ(run(), run());
}

TEST(FineTune, RejectsBadInput) {
  auto space = archspace::surrogate_space();
  Rng rng = make_rng(4);
  auto p = searchlab::fresh_predictor(gnnmodels::embedding_config_for(*space), nullptr, rng);
  const std::vector<Architecture> archs{archspace::random_architecture(space, rng)};
  EXPECT_THROW(searchlab::fine_tune(p, {}, {}, searchlab::default_fine_tune_config(), rng), Error);
  EXPECT_THROW(searchlab::fine_tune(p, archs, std::vector<double>{0.1, 0.2}, searchlab::default_fine_tune_config(), rng),
               Error);
  auto other = gnnmodels::embedding_config_for(*space);
  other.hidden += 1;
  const searchlab::PretrainedEmbedding wrong{&p.store, "embed.", other};
  EXPECT_THROW(searchlab::fresh_predictor(gnnmodels::embedding_config_for(*space), &wrong, rng), Error);
}

TEST(FineTune, PretrainedEmbeddingLowersHeldOutError) {
  auto space = archspace::surrogate_space();
  const BenchmarkTable table = benchstore::synth_benchmark(space, 2000, 0.01, 1);
  const auto embedding = gnnmodels::embedding_config_for(*space);
  std::vector<Architecture> unlabeled;
  for (std::size_t i = 0; i < 1000; ++i) unlabeled.push_back(table.record(i).arch);
  Rng rng = make_rng(7);
  auto frl = gnnmodels::make_frl(embedding, rng);
  diffcore::TrainConfig pretrain;
  pretrain.epochs = 100;
  ssl::pretrain_regression(unlabeled, frl, pretrain, rng);
  const searchlab::PretrainedEmbedding weights{&frl.store, "branch0.", embedding};

  auto config = searchlab::default_fine_tune_config();
  config.learning_rate = 1e-3;
  double random_mse = 0.0, pretrained_mse = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng split = make_rng(100, seed);
    const auto idx = searchlab::sample_indices(table.size(), 220, split);
    std::vector<Architecture> train, held;
    std::vector<double> train_y, held_y;
    for (std::size_t i = 0; i < 220; ++i) {
      auto& archs = i < 20 ? train : held;
      auto& ys = i < 20 ? train_y : held_y;
      archs.push_back(table.record(idx[i]).arch);
      ys.push_back(table.record(idx[i]).val_mean());
    }
    for (const bool use_pretrained : {false, true}) {
      Rng r = make_rng(200, seed);
      auto p = searchlab::fresh_predictor(embedding, use_pretrained ? &weights : nullptr, r);
      searchlab::fine_tune(p, train, train_y, config, r);
      const auto pred = gnnmodels::predict(p, held);
      double mse = 0.0;
      for (std::size_t i = 0; i < held.size(); ++i) mse += (pred[i] - held_y[i]) * (pred[i] - held_y[i]);
      (use_pretrained ? pretrained_mse : random_mse) += mse / static_cast<double>(held.size()) / 20.0;
    }
  }
  EXPECT_LT(pretrained_mse, random_mse);
}

TEST(SearchConfig, Validation) {
  searchlab::SearchConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ft_num = 5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.ft_num = 200;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.k = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Npenas, BudgetEqualToInitialPopulation) {
  const auto& table = surrogate_table();
  LookupPredictor predictor(table);
  searchlab::SearchConfig config;
  config.total_num = config.ft_num = config.n0 = 10;
  Rng rng = make_rng(1);
  const SearchTrace trace = searchlab::npenas_fixed(table, predictor, config, rng);
  expect_trace_invariants(trace, 10);
  double best = 1.0;
  for (const auto& e : trace.evaluations) best = std::min(best, e.val_err);
  EXPECT_EQ(trace.best_val.back(), best);
  EXPECT_EQ(trace.predictor_fits, 0u);
  EXPECT_TRUE(predictor.events.empty());
}

TEST(Npenas, OraclePredictorFindsOptimumOfExhaustiveSpace) {
  int found = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const BenchmarkTable table = exhaustive_small_table(seed);
    const double optimum = searchlab::oracle_baseline(table).val_err;
    LookupPredictor predictor(table);
    searchlab::SearchConfig config;
    config.total_num = config.ft_num = 40;
    Rng rng = make_rng(50, seed);
    const SearchTrace trace = searchlab::npenas_fixed(table, predictor, config, rng);
    found += trace.best_val.back() == optimum;
  }
  EXPECT_GE(found, 95);
}

TEST(Npenas, TraceInvariantsWithGnnPredictor) {
  const auto& table = surrogate_table();
  auto ft = searchlab::default_fine_tune_config();
  ft.epochs = 5;
  searchlab::GnnSearchPredictor predictor(gnnmodels::embedding_config_for(*table.space()), ft);
  searchlab::SearchConfig config;
  config.total_num = 60;
  config.ft_num = 30;
  Rng rng = make_rng(2);
  const SearchTrace trace = searchlab::npenas_fixed(table, predictor, config, rng);
  expect_trace_invariants(trace, 60);
  EXPECT_EQ(trace.predictor_fits, 3u);
  EXPECT_EQ(predictor.fit_count(), 3u);
}

TEST(Npenas, FineTunesOnAllOfDUntilCutoffThenFreezes) {
  const auto& table = surrogate_table();
  searchlab::SearchConfig config;
  config.total_num = 150;
  {
    config.ft_num = 150;
    LookupPredictor predictor(table);
    Rng rng = make_rng(3);
    searchlab::npenas_fixed(table, predictor, config, rng);
    EXPECT_EQ(predictor.fit_sizes, (std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140}));
    std::string expected;
    for (int i = 0; i < 14; ++i) expected += "fp";
    EXPECT_EQ(predictor.events, expected);
  }
  {
    config.ft_num = 90;
    LookupPredictor predictor(table);
    Rng rng = make_rng(3);
    searchlab::npenas_fixed(table, predictor, config, rng);
    EXPECT_EQ(predictor.fit_sizes, (std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90}));
    EXPECT_EQ(predictor.events, "fpfpfpfpfpfpfpfpfpppppp");
  }
}

TEST(Npenas, FullCutoffMatchesAlwaysFineTuneReference) {
  // Reference loop refitting before every round, written against the public helpers.
  const auto& table = surrogate_table();
  auto ft = searchlab::default_fine_tune_config();
  ft.epochs = 3;
  const auto embedding = gnnmodels::embedding_config_for(*table.space());
  searchlab::SearchConfig config;
  config.total_num = config.ft_num = 50;

  searchlab::GnnSearchPredictor predictor(embedding, ft);
  Rng rng = make_rng(4);
  const SearchTrace trace = searchlab::npenas_fixed(table, predictor, config, rng);

  Rng ref_rng = make_rng(4);
  searchlab::Evaluator ev(table, false, Rng(ref_rng()));
  std::vector<Architecture> archs;
  std::vector<double> vals;
  for (std::size_t i : searchlab::sample_indices(table.size(), config.n0, ref_rng)) {
    archs.push_back(table.record(i).arch);
    vals.push_back(ev.evaluate(archs.back()));
  }
  searchlab::GnnSearchPredictor ref(embedding, ft);
  while (ev.count() < config.total_num) {
    ref.fit(archs, vals, ref_rng);
    auto cands = searchlab::generate_candidates(table, archs, vals, ev.evaluated_keys(), config, ref_rng);
    const auto preds = ref.predict(cands);
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a] < preds[b]; });
    for (std::size_t i = 0; i < config.k && ev.count() < config.total_num; ++i) {
      archs.push_back(cands[order[i]]);
      vals.push_back(ev.evaluate(archs.back()));
    }
  }
  EXPECT_EQ(trace_csv(trace), trace_csv(ev.finish("npenas")));
}

TEST(Npenas, TestErrorNeverInfluencesSearch) {
  const auto& table = surrogate_table();
  BenchmarkTable shuffled(table.space());
  Rng perm_rng = make_rng(77);
  std::vector<std::size_t> perm(table.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), perm_rng);
  for (std::size_t i = 0; i < table.size(); ++i) {
    BenchmarkRecord r = table.record(i);
    r.test_err = table.record(perm[i]).test_err;
    shuffled.insert(std::move(r));
  }
  auto ft = searchlab::default_fine_tune_config();
  ft.epochs = 3;
  auto run = [&](const BenchmarkTable& t) {
    searchlab::GnnSearchPredictor predictor(gnnmodels::embedding_config_for(*t.space()), ft);
    searchlab::SearchConfig config;
    config.total_num = 40;
    config.ft_num = 30;
    Rng rng = make_rng(9);
    return searchlab::npenas_fixed(t, predictor, config, rng);
  };
  const SearchTrace a = run(table), b = run(shuffled);
  ASSERT_EQ(a.evaluations.size(), b.evaluations.size());
  bool test_differs = false;
  for (std::size_t i = 0; i < a.evaluations.size(); ++i) {
    EXPECT_EQ(encoding::encoding_key(a.evaluations[i].arch), encoding::encoding_key(b.evaluations[i].arch));
    EXPECT_EQ(a.evaluations[i].val_err, b.evaluations[i].val_err);
    test_differs |= a.evaluations[i].test_err != b.evaluations[i].test_err;
  }
  EXPECT_EQ(a.best_val, b.best_val);
  EXPECT_TRUE(test_differs);
}

TEST(Npenas, DeterministicForSeed) {
  const auto& table = surrogate_table();
  auto run = [&] {
    NoisePredictor predictor;
    searchlab::SearchConfig config;
    config.total_num = 100;
    config.ft_num = 60;
    Rng rng = make_rng(12);
    return trace_csv(searchlab::npenas_fixed(table, predictor, config, rng));
  };
  EXPECT_EQ(run(), run());
}

TEST(GenerateCandidates, DistinctUnevaluatedTableMembers) {
  const auto& table = surrogate_table();
  Rng rng = make_rng(13);
  std::vector<Architecture> pop;
  std::vector<double> vals;
  std::unordered_set<std::string> exclude;
  for (std::size_t i : searchlab::sample_indices(table.size(), 20, rng)) {
    pop.push_back(table.record(i).arch);
    vals.push_back(table.record(i).val_mean());
    exclude.insert(table.key(i));
  }
  searchlab::SearchConfig config;
  const auto cands = searchlab::generate_candidates(table, pop, vals, exclude, config, rng);
  EXPECT_GT(cands.size(), 0u);
  EXPECT_LE(cands.size(), config.candidate_pool);
  std::set<std::string> keys;
  for (const Architecture& c : cands) {
    const std::string key = encoding::encoding_key(c);
    EXPECT_TRUE(table.find(key) >= 0);
    EXPECT_FALSE(exclude.contains(key));
    EXPECT_TRUE(keys.insert(key).second);
  }
}

TEST(GenerateCandidates, ExhaustionThrows) {
  auto space = archspace::surrogate_space(3, 3);
  BenchmarkTable table(space);
  std::vector<Architecture> pop;
  std::vector<double> vals;
  std::unordered_set<std::string> exclude;
  for (std::size_t n = 2; n <= 3; ++n)
    for (Architecture& a : ssnas::testing::all_architectures(space, n)) {
      exclude.insert(encoding::encoding_key(a));
      pop.push_back(a);
      vals.push_back(0.1);
      table.insert({std::move(a), {0.1}, {0.1}});
    }
  Rng rng = make_rng(14);
  try {
    searchlab::generate_candidates(table, pop, vals, exclude, {}, rng);
    FAIL() << "expected exhaustion";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("candidate generation exhausted"), std::string::npos);
  }
}

TEST(RandomSearch, BudgetOneKeepsThatSample) {
  const auto& table = surrogate_table();
  Rng rng = make_rng(15);
  const SearchTrace trace = searchlab::random_search(table, 1, rng);
  expect_trace_invariants(trace, 1);
  EXPECT_EQ(trace.best_val[0], trace.evaluations[0].val_err);
}

TEST(RandomSearch, BestOfBudgetQuantileMatchesOrderStatistics) {
  const BenchmarkTable table = benchstore::synth_benchmark(archspace::surrogate_space(), 2000, 0.01, 1);
  std::vector<double> sorted = vals_of(table);
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(table.size());
  std::vector<double> quantiles;
  for (std::uint64_t t = 0; t < 500; ++t) {
    Rng rng = make_rng(16, t);
    const double best = searchlab::random_search(table, 150, rng).best_val.back();
    const auto rank = std::lower_bound(sorted.begin(), sorted.end(), best) - sorted.begin() + 1;
    quantiles.push_back(static_cast<double>(rank) / n);
  }
  // Minimum rank of k draws without replacement from N has mean (N + 1) / (k + 1).
  const double expected = (n + 1.0) / 151.0 / n;
  const double se = searchlab::stddev(quantiles) / std::sqrt(500.0);
  EXPECT_NEAR(searchlab::mean(quantiles), expected, 4.0 * se);
}

TEST(RandomSearch, DeterministicAndBounded) {
  const auto& table = surrogate_table();
  Rng a = make_rng(17), b = make_rng(17);
  EXPECT_EQ(trace_csv(searchlab::random_search(table, 150, a)), trace_csv(searchlab::random_search(table, 150, b)));
  Rng c = make_rng(17);
  expect_trace_invariants(searchlab::random_search(table, 150, c), 150);
  try {
    searchlab::random_search(table, table.size() + 1, c);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("not enough distinct architectures"), std::string::npos);
  }
}

TEST(RegularizedEvolution, FullTournamentPicksPopulationBest) {
  const auto& table = surrogate_table();
  searchlab::EvolutionConfig config;
  config.budget = 120;
  config.population = config.tournament = 20;
  std::vector<std::size_t> parents;
  std::vector<std::vector<std::size_t>> populations;
  config.observer = [&](std::size_t, std::size_t parent, std::span<const std::size_t> population) {
    parents.push_back(parent);
    populations.emplace_back(population.begin(), population.end());
  };
  Rng rng = make_rng(18);
  const SearchTrace trace = searchlab::regularized_evolution(table, config, rng);
  expect_trace_invariants(trace, 120);
  ASSERT_EQ(parents.size(), 110u);
  // The parent of each child is the lowest val_err in the population just before it.
  std::vector<std::size_t> before(10);
  std::iota(before.begin(), before.end(), 1);
  for (std::size_t i = 0; i < parents.size(); ++i) {
    std::size_t best = before.front();
    for (std::size_t s : before)
      if (trace.evaluations[s - 1].val_err < trace.evaluations[best - 1].val_err) best = s;
    EXPECT_EQ(parents[i], best) << "child " << i;
    before = populations[i];
  }
}

TEST(RegularizedEvolution, PopulationAgesOutOldestAtConstantSize) {
  const auto& table = surrogate_table();
  searchlab::EvolutionConfig config;
  config.budget = 100;
  std::size_t calls = 0;
  config.observer = [&](std::size_t step, std::size_t parent, std::span<const std::size_t> population) {
    ++calls;
    const std::size_t expected = std::min(step, config.population);
    ASSERT_EQ(population.size(), expected);
    for (std::size_t i = 0; i < population.size(); ++i) EXPECT_EQ(population[i], step - expected + 1 + i);
    EXPECT_LT(parent, step);
    EXPECT_GE(parent + config.population, step);
  };
  Rng rng = make_rng(19);
  expect_trace_invariants(searchlab::regularized_evolution(table, config, rng), 100);
  EXPECT_EQ(calls, 90u);
}

TEST(RegularizedEvolution, BeatsRandomSearchOnSurrogate) {
  const BenchmarkTable table = benchstore::synth_benchmark(archspace::surrogate_space(), 2000, 0.01, 1);
  searchlab::EvolutionConfig config;
  config.budget = 100;
  std::vector<double> rea, rs;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng a = make_rng(20, seed), b = make_rng(20, seed);
    rea.push_back(searchlab::regularized_evolution(table, config, a).best_val.back());
    rs.push_back(searchlab::random_search(table, 100, b).best_val.back());
  }
  EXPECT_LT(searchlab::mean(rea), searchlab::mean(rs));
}

TEST(RegularizedEvolution, ConfigValidation) {
  searchlab::EvolutionConfig c;
  EXPECT_NO_THROW(c.validate());
  c.population = 200;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.tournament = 40;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.initial = 31;
  EXPECT_THROW(c.validate(), Error);
}

TEST(PredictionStudy, GridShapeAndPairedStreams) {
  const auto& table = surrogate_table();
  searchlab::StudyConfig config;
  config.budgets = {10, 20};
  config.epochs = {2, 4, 6};
  config.trials = 3;
  config.eval_size = 100;
  const auto report = searchlab::prediction_study(table, "supervised", nullptr, config);
  ASSERT_EQ(report.cells.size(), 6u);
  for (const auto& c : report.cells) {
    EXPECT_EQ(c.taus.size(), 3u);
    EXPECT_DOUBLE_EQ(c.mean, searchlab::mean(c.taus));
  }
  EXPECT_EQ(report.cell(20, 4).budget, 20u);
  EXPECT_THROW(report.cell(30, 4), Error);
  config.jobs = 3;
  EXPECT_EQ(searchlab::prediction_study(table, "supervised", nullptr, config).to_json().dump(),
            report.to_json().dump());
  EXPECT_THROW(searchlab::prediction_study(table, "ss-rl", nullptr, config), Error);
  config.eval_size = 590;
  EXPECT_THROW(searchlab::prediction_study(table, "supervised", nullptr, config), Error);
}

TEST(PredictionStudy, SupervisedTauRisesWithBudget) {
  const BenchmarkTable table = benchstore::synth_benchmark(archspace::surrogate_space(), 2000, 0.01, 1);
  searchlab::StudyConfig config;
  config.budgets = {20, 100, 200};
  config.epochs = {100};
  config.trials = 10;
  config.eval_size = 500;
  config.fine_tune.learning_rate = 1e-3;
  const auto report = searchlab::prediction_study(table, "supervised", nullptr, config);
  EXPECT_LT(report.cell(20, 100).mean, report.cell(100, 100).mean);
  EXPECT_LT(report.cell(100, 100).mean, report.cell(200, 100).mean);
}

std::vector<searchlab::Strategy> cheap_strategies(std::size_t budget) {
  return {{"random", [budget](const BenchmarkTable& t, Rng& r) { return searchlab::random_search(t, budget, r); }},
          {"rea", [budget](const BenchmarkTable& t, Rng& r) {
             searchlab::EvolutionConfig c;
             c.budget = budget;
             return searchlab::regularized_evolution(t, c, r);
           }}};
}

TEST(RunExperiment, RowsAndAggregates) {
  const auto& table = surrogate_table();
  const auto strategies = cheap_strategies(50);
  searchlab::ExperimentConfig config;
  config.trials = 7;
  config.budget = 50;
  const auto report = searchlab::run_experiment(strategies, table, config);
  EXPECT_EQ(report.rows.size(), 7u * 2u * 5u);
  ASSERT_EQ(report.aggregate.size(), 2u * 5u);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& agg = report.aggregate[s * 5 + 4];
    EXPECT_EQ(agg.step, 50u);
    double sum = 0.0;
    for (const auto& tr : report.traces[s]) sum += tr.best_test.back();
    EXPECT_NEAR(agg.mean_best_test, sum / 7.0, 1e-12);
  }
  std::ostringstream csv;
  searchlab::write_rows_csv(report, csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 71);
}

TEST(RunExperiment, SingleTrialEqualsTrace) {
  const auto& table = surrogate_table();
  const auto strategies = cheap_strategies(30);
  searchlab::ExperimentConfig config;
  config.trials = 1;
  config.budget = 30;
  config.seed = 5;
  const auto report = searchlab::run_experiment(std::span(strategies).first(1), table, config);
  Rng rng = make_rng(5, 0);
  const SearchTrace trace = searchlab::random_search(table, 30, rng);
  ASSERT_EQ(report.rows.size(), 3u);
  for (std::size_t p = 0; p < 3; ++p) {
    EXPECT_EQ(report.rows[p].best_val, trace.best_val[(p + 1) * 10 - 1]);
    EXPECT_EQ(report.rows[p].best_test, trace.best_test[(p + 1) * 10 - 1]);
  }
}

TEST(RunExperiment, ThreadCountDoesNotChangeResults) {
  const auto& table = surrogate_table();
  const auto strategies = cheap_strategies(40);
  searchlab::ExperimentConfig config;
  config.trials = 6;
  config.budget = 40;
  auto csv = [&](std::size_t jobs) {
    config.jobs = jobs;
    std::ostringstream out;
    searchlab::write_rows_csv(searchlab::run_experiment(strategies, table, config), out);
    return out.str();
  };
  EXPECT_EQ(csv(1), csv(4));
}

TEST(RunExperiment, RejectsBadConfig) {
  const auto& table = surrogate_table();
  const auto strategies = cheap_strategies(40);
  searchlab::ExperimentConfig config;
  config.budget = 45;
  EXPECT_THROW(searchlab::run_experiment(strategies, table, config), Error);
  config.budget = 50;
  config.trials = 1;
  EXPECT_THROW(searchlab::run_experiment(strategies, table, config), Error);
}

TEST(ParallelFor, RethrowsWorkerError) {
  EXPECT_THROW(searchlab::parallel_for(10, 3,
                                       [](std::size_t i) {
                                         if (i == 7) throw Error("boom");
                                       }),
               Error);
}

}  // namespace
