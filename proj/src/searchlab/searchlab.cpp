#include "ssnas/searchlab/searchlab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <thread>

#include "ssnas/common/error.hpp"
#include "ssnas/encoding/encoding.hpp"

namespace ssnas::searchlab {

using diffcore::Matrix;
using diffcore::Mode;
using diffcore::Tape;
using diffcore::Var;

namespace {

// Inversions of v (strictly greater pairs) via merge sort; sorts v.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

// Sum over runs of equal values of t(t-1)/2; `v` must be sorted.
std::uint64_t tied_pairs(const std::vector<double>& v) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const std::uint64_t t = j - i;
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

}  // namespace

double kendall_tau(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size()) throw Error("kendall_tau: length mismatch");
  const std::size_t n = pred.size();
  if (n < 2) throw Error("kendall_tau: need at least 2 items");
  for (std::size_t i = 0; i < n; ++i)
    if (std::isnan(pred[i]) || std::isnan(actual[i])) throw Error("kendall_tau: NaN input");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pred[a] != pred[b] ? pred[a] < pred[b] : actual[a] < actual[b];
  });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::uint64_t n1 = 0;
  std::uint64_t n3 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pred[order[j]] == pred[order[i]]) ++j;
    const std::uint64_t t = j - i;
    n1 += t * (t - 1) / 2;
    for (std::size_t a = i; a < j;) {
      std::size_t b = a;
      while (b < j && actual[order[b]] == actual[order[a]]) ++b;
      const std::uint64_t u = b - a;
      n3 += u * (u - 1) / 2;
      a = b;
    }
    i = j;
  }

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = actual[order[i]];
  std::vector<double> buf(n);
  const std::uint64_t swaps = count_inversions(ys, buf, 0, n);
  const std::uint64_t n2 = tied_pairs(ys);

  if (n1 == n0 || n2 == n0) throw Error("kendall_tau: undefined correlation (constant input)");
  const double numerator = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                           static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
  return numerator / std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

PretrainedEmbedding pretrained_from_checkpoint(const diffcore::Checkpoint& checkpoint) {
  return {&checkpoint.store, gnnmodels::embedding_prefix_for(checkpoint.metadata),
          gnnmodels::embedding_config_from_metadata(checkpoint.metadata)};
}

diffcore::TrainConfig default_fine_tune_config() {
  diffcore::TrainConfig c;
  c.learning_rate = 5e-5;
  c.weight_decay = 1e-4;
  c.epochs = 300;
  c.batch_size = 64;
  return c;
}

gnnmodels::Predictor fresh_predictor(const gnnmodels::EmbeddingConfig& embedding,
                                     const PretrainedEmbedding* pretrained, Rng& rng) {
  if (pretrained && !(pretrained->embedding == embedding))
    throw Error("fresh_predictor: pretrained embedding widths differ from the predictor's");
  gnnmodels::Predictor p = gnnmodels::make_predictor(embedding, rng);
  if (pretrained) {
    if (!pretrained->store) throw Error("fresh_predictor: pretrained store is null");
    gnnmodels::load_pretrained_embedding(p, *pretrained->store, pretrained->prefix);
  }
  return p;
}

std::vector<double> fine_tune(gnnmodels::Predictor& predictor, std::span<const Architecture> archs,
                              std::span<const double> targets, const diffcore::TrainConfig& config, Rng& rng) {
  if (archs.empty()) throw Error("fine_tune: no labelled architectures");
  if (archs.size() != targets.size()) throw Error("fine_tune: architectures and targets differ in length");
  config.validate();
  const std::size_t n = archs.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * config.epochs;
  const bool bidir = predictor.embedding.bidirectional;

  // A single full batch is the same every epoch, so it is built once.
  std::optional<gnnmodels::GraphBatch> whole;
  Matrix whole_target;
  if (steps_per_epoch == 1) {
    whole = gnnmodels::to_graph_batch(archs, bidir);
    whole_target = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) whole_target[i] = targets[i];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.epochs));
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (steps_per_epoch > 1) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      gnnmodels::GraphBatch local;
      Matrix local_target;
      if (!whole) {
        std::vector<const Architecture*> members;
        local_target = Matrix(count, 1);
        for (std::size_t k = 0; k < count; ++k) {
          members.push_back(&archs[order[start + k]]);
          local_target[k] = targets[order[start + k]];
        }
        local = gnnmodels::to_graph_batch(std::span<const Architecture* const>(members), bidir);
      }
      const gnnmodels::GraphBatch& graphs = whole ? *whole : local;
      const Matrix& target = whole ? whole_target : local_target;

      const double lr = diffcore::scheduled_lr(config, epoch, step, total_steps);
      predictor.store.zero_grad();
      Tape tape;
      Var loss = diffcore::mse(gnnmodels::predictor_forward(tape, predictor, graphs, Mode::train), target);
      tape.backward(loss);
      diffcore::AdamConfig adam;
      adam.learning_rate = lr;
      adam.weight_decay = config.weight_decay;
      adam.decoupled = config.decoupled_weight_decay;
      diffcore::adam_step(predictor.store, adam);
      loss_sum += loss.scalar() * static_cast<double>(count);
      ++step;
    }
    history.push_back(loss_sum / static_cast<double>(n));
  }
  return history;
}

GnnSearchPredictor::GnnSearchPredictor(gnnmodels::EmbeddingConfig embedding, diffcore::TrainConfig config,
                                       std::optional<PretrainedEmbedding> pretrained)
    : embedding_(embedding), config_(config), pretrained_(std::move(pretrained)) {
  config_.validate();
}

void GnnSearchPredictor::fit(std::span<const Architecture> archs, std::span<const double> val_err, Rng& rng) {
  predictor_.emplace(fresh_predictor(embedding_, pretrained_ ? &*pretrained_ : nullptr, rng));
  fine_tune(*predictor_, archs, val_err, config_, rng);
  ++fits_;
}

std::vector<double> GnnSearchPredictor::predict(std::span<const Architecture> archs) {
  if (!predictor_) throw Error("GnnSearchPredictor: predict before fit");
  return gnnmodels::predict(*predictor_, archs);
}

const gnnmodels::Predictor& GnnSearchPredictor::predictor() const {
  if (!predictor_) throw Error("GnnSearchPredictor: no fitted predictor");
  return *predictor_;
}

Evaluator::Evaluator(const BenchmarkTable& table, bool sample_repeat, Rng rng)
    : table_(table), sample_repeat_(sample_repeat), rng_(std::move(rng)) {}

double Evaluator::evaluate(const Architecture& arch) {
  std::string key = encoding::encoding_key(arch);
  const std::ptrdiff_t idx = table_.find(key);
  if (idx < 0) throw Error("architecture not in benchmark");
  if (!keys_.insert(std::move(key)).second) throw Error("Evaluator: architecture evaluated twice");
  const benchstore::BenchmarkRecord& rec = table_.record(static_cast<std::size_t>(idx));
  const double val = benchstore::observed_val(rec, sample_repeat_, rng_);
  const double test = rec.test_mean();
  ++trace_.queries;
  trace_.evaluations.push_back({trace_.evaluations.size() + 1, rec.arch, val, test});
  if (trace_.best_val.empty() || val < trace_.best_val.back()) {
    trace_.best_val.push_back(val);
    trace_.best_test.push_back(test);
  } else {
    trace_.best_val.push_back(trace_.best_val.back());
    trace_.best_test.push_back(trace_.best_test.back());
  }
  return val;
}

SearchTrace Evaluator::finish(std::string strategy) {
  trace_.strategy = std::move(strategy);
  return std::move(trace_);
}

void SearchConfig::validate() const {
  if (n0 == 0) throw Error("SearchConfig: n0 must be >= 1");
  if (!(n0 <= ft_num && ft_num <= total_num)) throw Error("SearchConfig: need n0 <= ft_num <= total_num");
  if (k == 0) throw Error("SearchConfig: k must be >= 1");
  if (candidate_pool == 0 || parents == 0) throw Error("SearchConfig: candidate_pool and parents must be >= 1");
  if (mutation_rate <= 0.0) throw Error("SearchConfig: mutation_rate must be > 0");
  if (mutation_attempts < 1) throw Error("SearchConfig: mutation_attempts must be >= 1");
}

std::vector<std::size_t> sample_indices(std::size_t table_size, std::size_t count, Rng& rng) {
  if (count > table_size)
    throw Error("not enough distinct architectures: need " + std::to_string(count) + ", table has " +
                std::to_string(table_size));
  std::vector<std::size_t> idx(table_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + uniform_index(rng, table_size - i)]);
  idx.resize(count);
  return idx;
}

namespace {

// Mutated child of `parent` that is in the table and not excluded, or
// nullopt after `attempts` tries.
std::optional<Architecture> table_child(const BenchmarkTable& table, const Architecture& parent, double rate,
                                        int attempts, const std::unordered_set<std::string>& exclude,
                                        const std::unordered_set<std::string>& taken, std::string& key_out,
                                        Rng& rng) {
  for (int a = 0; a < attempts; ++a) {
    std::optional<Architecture> child;
    try {
      child = archspace::mutate(parent, rate, rng);
    } catch (const Error&) {
      continue;
    }
    std::string key = encoding::encoding_key(*child);
    if (exclude.contains(key) || taken.contains(key) || table.find(key) < 0) continue;
    key_out = std::move(key);
    return table.record(static_cast<std::size_t>(table.find(key_out))).arch;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Architecture> generate_candidates(const BenchmarkTable& table, std::span<const Architecture> population,
                                              std::span<const double> val_err,
                                              const std::unordered_set<std::string>& exclude,
                                              const SearchConfig& config, Rng& rng) {
  if (population.empty() || population.size() != val_err.size())
    throw Error("generate_candidates: population and metrics must be non-empty and equal length");
  std::vector<std::size_t> order(population.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val_err[a] < val_err[b]; });
  const std::size_t parents = std::min(config.parents, population.size());
  const std::size_t per_parent = (config.candidate_pool + parents - 1) / parents;

  double rate = config.mutation_rate;
  for (int widen = 0; widen < 2; ++widen, rate *= 2.0) {
    std::vector<Architecture> out;
    std::unordered_set<std::string> taken;
    for (std::size_t p = 0; p < parents && out.size() < config.candidate_pool; ++p) {
      for (std::size_t c = 0; c < per_parent && out.size() < config.candidate_pool; ++c) {
        std::string key;
        auto child = table_child(table, population[order[p]], rate, config.mutation_attempts, exclude, taken, key, rng);
        if (!child) continue;
        taken.insert(std::move(key));
        out.push_back(std::move(*child));
      }
    }
    if (!out.empty()) return out;
  }
  throw Error("candidate generation exhausted: no unevaluated benchmark architecture among mutated children");
}

SearchTrace npenas_fixed(const BenchmarkTable& table, SearchPredictor& predictor, const SearchConfig& config,
                         Rng& rng, const std::string& name) {
  config.validate();
  if (config.total_num > table.size()) throw Error("npenas_fixed: budget exceeds benchmark size");
  const auto start = std::chrono::steady_clock::now();
  Evaluator ev(table, config.sample_repeat, Rng(rng()));
  std::vector<Architecture> archs;
  std::vector<double> vals;
  for (std::size_t i : sample_indices(table.size(), config.n0, rng)) {
    const Architecture& a = table.record(i).arch;
    vals.push_back(ev.evaluate(a));
    archs.push_back(a);
  }
  std::size_t fits = 0;
  while (ev.count() < config.total_num) {
    if (ev.count() <= config.ft_num) {
      predictor.fit(archs, vals, rng);
      ++fits;
    }
    std::vector<Architecture> cands = generate_candidates(table, archs, vals, ev.evaluated_keys(), config, rng);
    const std::vector<double> preds = predictor.predict(cands);
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a] < preds[b]; });
    const std::size_t take = std::min({config.k, config.total_num - ev.count(), cands.size()});
    for (std::size_t i = 0; i < take; ++i) {
      const Architecture& a = cands[order[i]];
      vals.push_back(ev.evaluate(a));
      archs.push_back(a);
    }
  }
  SearchTrace trace = ev.finish(name);
  trace.predictor_fits = fits;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

SearchTrace random_search(const BenchmarkTable& table, std::size_t budget, Rng& rng, bool sample_repeat) {
  if (budget == 0) throw Error("random_search: budget must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  Evaluator ev(table, sample_repeat, Rng(rng()));
  for (std::size_t i : sample_indices(table.size(), budget, rng)) ev.evaluate(table.record(i).arch);
  SearchTrace trace = ev.finish("random");
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

void EvolutionConfig::validate() const {
  if (initial == 0 || population == 0 || tournament == 0) throw Error("EvolutionConfig: sizes must be >= 1");
  if (initial > population) throw Error("EvolutionConfig: initial population larger than population size");
  if (population > budget) throw Error("EvolutionConfig: population size exceeds budget");
  if (tournament > population) throw Error("EvolutionConfig: tournament larger than population");
  if (mutation_rate <= 0.0 || mutation_attempts < 1) throw Error("EvolutionConfig: bad mutation settings");
}

SearchTrace regularized_evolution(const BenchmarkTable& table, const EvolutionConfig& config, Rng& rng) {
  config.validate();
  if (config.budget > table.size()) throw Error("regularized_evolution: budget exceeds benchmark size");
  const auto start = std::chrono::steady_clock::now();
  Evaluator ev(table, config.sample_repeat, Rng(rng()));
  struct Member {
    Architecture arch;
    double val;
    std::size_t step;
  };
  std::deque<Member> population;
  for (std::size_t i : sample_indices(table.size(), config.initial, rng)) {
    const Architecture& a = table.record(i).arch;
    population.push_back({a, ev.evaluate(a), ev.count()});
  }
  const std::unordered_set<std::string> none;
  while (ev.count() < config.budget) {
    const std::size_t t = std::min(config.tournament, population.size());
    std::vector<std::size_t> picks = sample_indices(population.size(), t, rng);
    std::size_t parent = picks.front();
    for (std::size_t p : picks)
      if (population[p].val < population[parent].val) parent = p;

    std::optional<Architecture> child;
    std::string key;
    for (double rate = config.mutation_rate; !child && rate <= 2.0 * config.mutation_rate; rate *= 2.0)
      child = table_child(table, population[parent].arch, rate, config.mutation_attempts, ev.evaluated_keys(), none,
                          key, rng);
    if (!child) {
      // Stuck parent: fall back to an unevaluated benchmark architecture.
      std::vector<std::size_t> fresh;
      for (std::size_t i = 0; i < table.size(); ++i)
        if (!ev.evaluated(table.key(i))) fresh.push_back(i);
      if (fresh.empty()) throw Error("regularized_evolution: benchmark exhausted");
      child = table.record(fresh[uniform_index(rng, fresh.size())]).arch;
    }
    const std::size_t parent_step = population[parent].step;
    population.push_back({*child, ev.evaluate(*child), ev.count()});
    if (population.size() > config.population) population.pop_front();
    if (config.observer) {
      std::vector<std::size_t> steps;
      for (const Member& m : population) steps.push_back(m.step);
      config.observer(ev.count(), parent_step, steps);
    }
  }
  SearchTrace trace = ev.finish("rea");
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

OracleBaseline oracle_baseline(const BenchmarkTable& table) {
  if (table.size() == 0) throw Error("oracle_baseline: empty benchmark");
  OracleBaseline best{0, table.record(0).val_mean(), table.record(0).test_mean()};
  for (std::size_t i = 1; i < table.size(); ++i) {
    const double v = table.record(i).val_mean();
    if (v < best.val_err) best = {i, v, table.record(i).test_mean()};
  }
  return best;
}

void write_trace_csv(const SearchTrace& trace, std::ostream& out) {
  out << "step,val_err,test_err,best_val,best_test\n";
  out << std::setprecision(12);
  for (std::size_t i = 0; i < trace.evaluations.size(); ++i) {
    const Evaluation& e = trace.evaluations[i];
    out << e.step << ',' << e.val_err << ',' << e.test_err << ',' << trace.best_val[i] << ',' << trace.best_test[i]
        << '\n';
  }
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(jobs, count); ++t) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

const StudyCell& StudyReport::cell(std::size_t budget, int epochs) const {
  for (const StudyCell& c : cells)
    if (c.budget == budget && c.epochs == epochs) return c;
  throw Error("StudyReport: no cell for budget " + std::to_string(budget) + ", epochs " + std::to_string(epochs));
}

nlohmann::json StudyReport::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (const StudyCell& c : cells)
    cells_json.push_back({{"budget", c.budget},
                          {"epochs", c.epochs},
                          {"mean_tau", c.mean},
                          {"std_tau", c.std},
                          {"degenerate", c.degenerate},
                          {"taus", c.taus}});
  return {{"method", method}, {"cells", cells_json}};
}

StudyReport prediction_study(const BenchmarkTable& table, const std::string& method,
                             const PretrainedEmbedding* pretrained, const StudyConfig& config) {
  if (method != "supervised" && !pretrained) throw Error("prediction_study: method '" + method + "' needs weights");
  if (config.budgets.empty() || config.epochs.empty() || config.trials == 0)
    throw Error("prediction_study: empty grid");
  const std::size_t max_budget = *std::max_element(config.budgets.begin(), config.budgets.end());
  if (config.eval_size + max_budget > table.size())
    throw Error("prediction_study: table too small for evaluation set plus largest budget");
  const auto embedding = gnnmodels::embedding_config_for(*table.space());
  const PretrainedEmbedding* init = method == "supervised" ? nullptr : pretrained;

  StudyReport report;
  report.method = method;
  for (std::size_t b : config.budgets)
    for (int e : config.epochs) report.cells.push_back({b, e, std::vector<double>(config.trials, 0.0), 0, 0, 0});
  std::vector<std::vector<char>> degenerate(report.cells.size(), std::vector<char>(config.trials, 0));

  parallel_for(config.trials, config.jobs, [&](std::size_t trial) {
    Rng split = make_rng(config.seed, trial, 0);
    const std::vector<std::size_t> idx = sample_indices(table.size(), config.eval_size + max_budget, split);
    std::vector<Architecture> eval_archs;
    std::vector<double> eval_vals;
    for (std::size_t i = 0; i < config.eval_size; ++i) {
      eval_archs.push_back(table.record(idx[i]).arch);
      eval_vals.push_back(table.record(idx[i]).val_mean());
    }
    for (std::size_t c = 0; c < report.cells.size(); ++c) {
      StudyCell& cell = report.cells[c];
      std::vector<Architecture> train;
      std::vector<double> targets;
      for (std::size_t i = 0; i < cell.budget; ++i) {
        train.push_back(table.record(idx[config.eval_size + i]).arch);
        targets.push_back(table.record(idx[config.eval_size + i]).val_mean());
      }
      Rng rng = make_rng(config.seed, trial, 1 + cell.budget * 100003 + static_cast<std::uint64_t>(cell.epochs));
      gnnmodels::Predictor p = fresh_predictor(embedding, init, rng);
      diffcore::TrainConfig tc = config.fine_tune;
      tc.epochs = cell.epochs;
      fine_tune(p, train, targets, tc, rng);
      const std::vector<double> preds = gnnmodels::predict(p, eval_archs);
      const bool constant = std::all_of(preds.begin(), preds.end(), [&](double v) { return v == preds.front(); });
      if (constant) {
        degenerate[c][trial] = 1;
      } else {
        cell.taus[trial] = kendall_tau(preds, eval_vals);
      }
    }
  });

  for (std::size_t c = 0; c < report.cells.size(); ++c) {
    StudyCell& cell = report.cells[c];
    cell.degenerate = static_cast<std::size_t>(std::count(degenerate[c].begin(), degenerate[c].end(), 1));
    cell.mean = mean(cell.taus);
    cell.std = stddev(cell.taus);
  }
  return report;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json agg = nlohmann::json::array();
  for (const AggregateRow& a : aggregate)
    agg.push_back({{"strategy", a.strategy},
                   {"step", a.step},
                   {"mean_best_val", a.mean_best_val},
                   {"std_best_val", a.std_best_val},
                   {"mean_best_test", a.mean_best_test},
                   {"std_best_test", a.std_best_test}});
  return {{"trials", config.trials}, {"budget", config.budget}, {"k", config.k},
          {"seed", config.seed},     {"strategies", strategies},  {"aggregate", agg}};
}

ExperimentReport run_experiment(std::span<const Strategy> strategies, const BenchmarkTable& table,
                                const ExperimentConfig& config) {
  if (strategies.empty() || config.trials == 0) throw Error("run_experiment: nothing to run");
  if (config.k == 0 || config.budget % config.k != 0) throw Error("run_experiment: budget must be a multiple of k");
  ExperimentReport report;
  report.config = config;
  const std::size_t ns = strategies.size();
  report.traces.assign(ns, std::vector<SearchTrace>(config.trials));
  for (const Strategy& s : strategies) report.strategies.push_back(s.name);

  parallel_for(ns * config.trials, config.jobs, [&](std::size_t item) {
    const std::size_t s = item / config.trials;
    const std::size_t t = item % config.trials;
    Rng rng = make_rng(config.seed, t);
    SearchTrace trace = strategies[s].run(table, rng);
    if (trace.best_val.size() != config.budget)
      throw Error("run_experiment: strategy '" + strategies[s].name + "' returned " +
                  std::to_string(trace.best_val.size()) + " evaluations, expected " + std::to_string(config.budget));
    trace.strategy = strategies[s].name;
    report.traces[s][t] = std::move(trace);
  });

  const std::size_t points = config.budget / config.k;
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t t = 0; t < config.trials; ++t) {
      const SearchTrace& tr = report.traces[s][t];
      for (std::size_t p = 1; p <= points; ++p) {
        const std::size_t step = p * config.k;
        report.rows.push_back({strategies[s].name, t, step, tr.best_val[step - 1], tr.best_test[step - 1]});
      }
    }
    for (std::size_t p = 1; p <= points; ++p) {
      const std::size_t step = p * config.k;
      std::vector<double> bv, bt;
      for (std::size_t t = 0; t < config.trials; ++t) {
        bv.push_back(report.traces[s][t].best_val[step - 1]);
        bt.push_back(report.traces[s][t].best_test[step - 1]);
      }
      report.aggregate.push_back({strategies[s].name, step, mean(bv), stddev(bv), mean(bt), stddev(bt)});
    }
  }
  return report;
}

void write_rows_csv(const ExperimentReport& report, std::ostream& out) {
  out << "strategy,trial,step,best_val,best_test\n";
  out << std::setprecision(12);
  for (const ExperimentRow& r : report.rows)
    out << r.strategy << ',' << r.trial << ',' << r.step << ',' << r.best_val << ',' << r.best_test << '\n';
}

}  // namespace ssnas::searchlab
