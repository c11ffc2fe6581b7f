#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "ssnas/archspace/archspace.hpp"
#include "ssnas/benchstore/benchstore.hpp"
#include "ssnas/common/rng.hpp"
#include "ssnas/diffcore/checkpoint.hpp"
#include "ssnas/diffcore/optim.hpp"
#include "ssnas/gnnmodels/gnnmodels.hpp"

namespace ssnas::searchlab {

using archspace::Architecture;
using benchstore::BenchmarkTable;

// Tie-corrected Kendall tau-b in O(n log n). Throws on length mismatch,
// fewer than 2 items, or "undefined correlation" when either side is
// constant.
double kendall_tau(std::span<const double> pred, std::span<const double> actual);

// Embedding weights of a pretrained model, shared read-only.
struct PretrainedEmbedding {
  const diffcore::ParameterStore* store = nullptr;
  std::string prefix;
  gnnmodels::EmbeddingConfig embedding;
};

// Embedding prefix and widths come from the checkpoint metadata.
PretrainedEmbedding pretrained_from_checkpoint(const diffcore::Checkpoint& checkpoint);

// Fine-tuning defaults: Adam, lr 5e-5, weight decay 1e-4, cosine, 300 epochs.
diffcore::TrainConfig default_fine_tune_config();

// Freshly initialised predictor; with `pretrained` the embedding is
// overwritten by the pretrained weights and only the head stays random.
gnnmodels::Predictor fresh_predictor(const gnnmodels::EmbeddingConfig& embedding,
                                     const PretrainedEmbedding* pretrained, Rng& rng);

// Minimises the mean squared error between predictions and targets over
// shuffled mini-batches. Returns the mean training loss of every epoch.
std::vector<double> fine_tune(gnnmodels::Predictor& predictor, std::span<const Architecture> archs,
                              std::span<const double> targets, const diffcore::TrainConfig& config, Rng& rng);

// What a search needs from a performance predictor.
class SearchPredictor {
 public:
  virtual ~SearchPredictor() = default;
  // Re-initialises and trains on the labelled set.
  virtual void fit(std::span<const Architecture> archs, std::span<const double> val_err, Rng& rng) = 0;
  // Lower is better.
  virtual std::vector<double> predict(std::span<const Architecture> archs) = 0;
};

class GnnSearchPredictor : public SearchPredictor {
 public:
  // pretrained == nullopt gives the supervised (randomly initialised) variant.
  GnnSearchPredictor(gnnmodels::EmbeddingConfig embedding, diffcore::TrainConfig config,
                     std::optional<PretrainedEmbedding> pretrained = std::nullopt);

  void fit(std::span<const Architecture> archs, std::span<const double> val_err, Rng& rng) override;
  std::vector<double> predict(std::span<const Architecture> archs) override;

  std::size_t fit_count() const { return fits_; }
  const gnnmodels::Predictor& predictor() const;

 private:
  gnnmodels::EmbeddingConfig embedding_;
  diffcore::TrainConfig config_;
  std::optional<PretrainedEmbedding> pretrained_;
  std::optional<gnnmodels::Predictor> predictor_;
  std::size_t fits_ = 0;
};

struct Evaluation {
  std::size_t step = 0;
  Architecture arch;
  double val_err = 0.0;
  double test_err = 0.0;
};

struct SearchTrace {
  std::string strategy;
  std::vector<Evaluation> evaluations;
  // Best observed val_err after every evaluation and the test_err of that
  // same architecture.
  std::vector<double> best_val;
  std::vector<double> best_test;
  std::size_t queries = 0;
  std::size_t predictor_fits = 0;
  double wall_seconds = 0.0;
};

// The only path from a search strategy to the benchmark. It hands back the
// validation value and records test_err in the trace without exposing it.
class Evaluator {
 public:
  Evaluator(const BenchmarkTable& table, bool sample_repeat, Rng rng);

  // Queries the benchmark, appends to the trace and returns the observed
  // val_err. Throws when the architecture was already evaluated.
  double evaluate(const Architecture& arch);

  bool evaluated(const std::string& key) const { return keys_.contains(key); }
  const std::unordered_set<std::string>& evaluated_keys() const { return keys_; }
  std::size_t count() const { return trace_.evaluations.size(); }
  const BenchmarkTable& table() const { return table_; }

  SearchTrace finish(std::string strategy);

 private:
  const BenchmarkTable& table_;
  bool sample_repeat_;
  Rng rng_;
  SearchTrace trace_;
  std::unordered_set<std::string> keys_;
};

struct SearchConfig {
  std::size_t n0 = 10;
  std::size_t total_num = 150;
  // Fine-tune while the number of evaluated architectures is <= ft_num.
  std::size_t ft_num = 150;
  std::size_t k = 10;
  std::size_t candidate_pool = 100;
  // Parents are the best `parents` members of D by val_err.
  std::size_t parents = 10;
  double mutation_rate = 1.0;
  int mutation_attempts = 50;
  bool sample_repeat = false;

  void validate() const;
};

// Children of the best members of `population`, restricted to the
// benchmark, excluding evaluated encodings and each other. Widens the
// mutation rate once when nothing is found, then throws.
std::vector<Architecture> generate_candidates(const BenchmarkTable& table, std::span<const Architecture> population,
                                              std::span<const double> val_err,
                                              const std::unordered_set<std::string>& exclude,
                                              const SearchConfig& config, Rng& rng);

// `count` distinct table indices drawn uniformly.
std::vector<std::size_t> sample_indices(std::size_t table_size, std::size_t count, Rng& rng);

// Fixed-budget predictor-guided evolution. The predictor is refitted on all
// of D while |D| <= ft_num and frozen afterwards.
SearchTrace npenas_fixed(const BenchmarkTable& table, SearchPredictor& predictor, const SearchConfig& config,
                         Rng& rng, const std::string& name = "npenas");

SearchTrace random_search(const BenchmarkTable& table, std::size_t budget, Rng& rng, bool sample_repeat = false);

struct EvolutionConfig {
  std::size_t budget = 150;
  std::size_t initial = 10;
  std::size_t population = 30;
  std::size_t tournament = 10;
  double mutation_rate = 1.0;
  int mutation_attempts = 100;
  bool sample_repeat = false;
  // Called after every child evaluation with the child's step, its parent's
  // step and the evaluation steps of the population, oldest first.
  std::function<void(std::size_t step, std::size_t parent_step, std::span<const std::size_t> population)> observer;

  void validate() const;
};

// Aging evolution: tournament parent, one mutated child per step, oldest
// member removed once the population is full.
SearchTrace regularized_evolution(const BenchmarkTable& table, const EvolutionConfig& config, Rng& rng);

// Architecture with the lowest mean val_err in the table.
struct OracleBaseline {
  std::size_t index = 0;
  double val_err = 0.0;
  double test_err = 0.0;
};
OracleBaseline oracle_baseline(const BenchmarkTable& table);

// Writes "step,val_err,test_err,best_val,best_test".
void write_trace_csv(const SearchTrace& trace, std::ostream& out);

struct StudyConfig {
  std::vector<std::size_t> budgets = {20, 50, 100, 150, 200};
  std::vector<int> epochs = {50, 100, 150, 200, 250, 300};
  std::size_t trials = 40;
  std::size_t eval_size = 1000;
  diffcore::TrainConfig fine_tune = default_fine_tune_config();
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct StudyCell {
  std::size_t budget = 0;
  int epochs = 0;
  std::vector<double> taus;
  double mean = 0.0;
  double std = 0.0;
  // Trials whose predictions were constant (tau recorded as 0).
  std::size_t degenerate = 0;
};

struct StudyReport {
  std::string method;
  // Row-major over budgets x epochs.
  std::vector<StudyCell> cells;

  const StudyCell& cell(std::size_t budget, int epochs) const;
  nlohmann::json to_json() const;
};

// Per trial: one evaluation set of eval_size architectures and disjoint
// labelled sets of every budget drawn from the table; the predictor is
// fine-tuned on each labelled set and scored by Kendall tau on the
// evaluation set. Streams depend on (seed, trial, budget, epochs) only, so
// methods run with the same seed are paired.
StudyReport prediction_study(const BenchmarkTable& table, const std::string& method,
                             const PretrainedEmbedding* pretrained, const StudyConfig& config);

struct Strategy {
  std::string name;
  std::function<SearchTrace(const BenchmarkTable&, Rng&)> run;
};

struct ExperimentConfig {
  std::size_t trials = 50;
  std::size_t budget = 150;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct ExperimentRow {
  std::string strategy;
  std::size_t trial = 0;
  std::size_t step = 0;
  double best_val = 0.0;
  double best_test = 0.0;
};

struct AggregateRow {
  std::string strategy;
  std::size_t step = 0;
  double mean_best_val = 0.0;
  double std_best_val = 0.0;
  double mean_best_test = 0.0;
  double std_best_test = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> strategies;
  // strategy x trial x (budget / k), in that nesting order.
  std::vector<ExperimentRow> rows;
  std::vector<AggregateRow> aggregate;
  // traces[s][t]
  std::vector<std::vector<SearchTrace>> traces;

  nlohmann::json to_json() const;
};

// Trial t of every strategy receives make_rng(seed, t); trials run on
// `jobs` threads and results do not depend on scheduling.
ExperimentReport run_experiment(std::span<const Strategy> strategies, const BenchmarkTable& table,
                                const ExperimentConfig& config);

// Long format "strategy,trial,step,best_val,best_test".
void write_rows_csv(const ExperimentReport& report, std::ostream& out);

// Runs fn(i) for i in [0, count) on `jobs` threads; rethrows the first error.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace ssnas::searchlab
