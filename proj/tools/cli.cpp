#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssnas/archspace/archspace.hpp"
#include "ssnas/benchstore/benchstore.hpp"
#include "ssnas/common/error.hpp"
#include "ssnas/diffcore/checkpoint.hpp"
#include "ssnas/encoding/encoding.hpp"
#include "ssnas/gnnmodels/gnnmodels.hpp"
#include "ssnas/searchlab/searchlab.hpp"
#include "ssnas/ssl/ssl.hpp"

namespace ssnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
}

std::string format_double(double v) { return json(v).dump(); }

// Every file a run creates goes through here, so nothing lands outside root.
class OutputDir {
 public:
  explicit OutputDir(const std::string& root) : root_(fs::path(root).lexically_normal()) {
    if (root.empty()) throw Error("--out is required");
    fs::create_directories(root_);
  }

  void write(const std::string& name, const std::string& contents) {
    const fs::path rel = fs::path(name).lexically_normal();
    if (rel.is_absolute() || rel.empty() || *rel.begin() == "..") throw Error("refusing to write outside --out: " + name);
    const fs::path target = root_ / rel;
    fs::create_directories(target.parent_path());
    std::ofstream f(target, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + target.string());
    f << contents;
    if (!f) throw Error("write failed: " + target.string());
    hashes_[rel.generic_string()] = hex(fnv1a(contents));
  }

  const fs::path& root() const { return root_; }
  json hashes() const { return hashes_; }

 private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
};

struct RunContext {
  std::string command;
  std::vector<std::string> args;
  std::string resolved_config;
  std::string explicit_config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;

  void input(const std::string& path) { inputs[path] = hex(fnv1a(read_file(path))); }

  void write_manifest(OutputDir& dir) const {
    json m;
    m["command"] = command;
    m["argv"] = args;
    m["config"] = resolved_config;
    m["explicit_config"] = explicit_config;
    m["seed"] = seed;
    m["format_versions"] = {{"benchmark", benchstore::kFormatVersion},
                            {"checkpoint", diffcore::kCheckpointFormatVersion}};
    m["inputs"] = inputs;
    m["outputs"] = dir.hashes();
    dir.write("manifest.json", m.dump(2) + "\n");
  }
};

std::vector<archspace::Architecture> sample_distinct(const archspace::SpacePtr& space, std::size_t count, Rng& rng) {
  std::vector<archspace::Architecture> out;
  std::unordered_set<std::string> seen;
  for (std::size_t tries = 0; out.size() < count; ++tries) {
    if (tries >= 100 * count + 1000)
      throw Error("could only find " + std::to_string(out.size()) + " distinct architectures, need " +
                  std::to_string(count));
    archspace::Architecture a = archspace::random_architecture(space, rng);
    if (seen.insert(encoding::encoding_key(a)).second) out.push_back(std::move(a));
  }
  return out;
}

std::string kind_of(const diffcore::Checkpoint& ckpt) { return ckpt.metadata.value("kind", std::string()); }

std::string bits_json(const encoding::Bits& bits) {
  std::vector<int> v(bits.begin(), bits.end());
  return json(v).dump();
}

// encode ---------------------------------------------------------------------

struct EncodeOptions {
  std::string arch;
  std::string space = "nasbench101";
  std::string out;
};

void run_encode(const EncodeOptions& o, RunContext& ctx, std::ostream& out) {
  const auto space = archspace::preset_space(o.space);
  const auto arch = archspace::architecture_from_json(read_json(o.arch), space);
  const auto papbe = encoding::encode_position_aware(arch);
  const std::string text = "{\"papbe\":" + bits_json(papbe.concat) +
                           ",\"path_based\":" + bits_json(encoding::encode_path_based(arch).bits) +
                           ",\"adjacency\":" + bits_json(encoding::encode_adjacency(arch).bits) + "}\n";
  out << text;
  if (!o.out.empty()) {
    ctx.input(o.arch);
    OutputDir dir(o.out);
    dir.write("encoding.json", text);
    ctx.write_manifest(dir);
  }
}

// ged ------------------------------------------------------------------------

struct GedOptions {
  std::string a, b;
  std::string space = "nasbench101";
  std::string out;
};

void run_ged(const GedOptions& o, RunContext& ctx, std::ostream& out) {
  const auto space = archspace::preset_space(o.space);
  const auto a = archspace::architecture_from_json(read_json(o.a), space);
  const auto b = archspace::architecture_from_json(read_json(o.b), space);
  const std::size_t g = encoding::ged(a, b);
  const std::string text = std::to_string(g) + "\n" + format_double(encoding::nged(a, b)) + "\n";
  out << text;
  if (!o.out.empty()) {
    ctx.input(o.a);
    ctx.input(o.b);
    OutputDir dir(o.out);
    dir.write("ged.txt", text);
    ctx.write_manifest(dir);
  }
}

// pretrain -------------------------------------------------------------------

struct PretrainOptions {
  std::string method;
  std::string space = "surrogate5";
  std::string benchmark;
  std::size_t size = 2000;
  int epochs = 300;
  std::size_t batch = 0;
  std::size_t draws = 256;
  double tau = 0.07;
  double lambda = 0.5;
  bool squared_reg = false;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  std::string out;
};

void run_pretrain(const PretrainOptions& o, RunContext& ctx, std::ostream& out) {
  OutputDir dir(o.out);
  Rng rng = make_rng(ctx.seed);
  archspace::SpacePtr space;
  std::vector<archspace::Architecture> archs;
  if (!o.benchmark.empty()) {
    ctx.input(o.benchmark);
    const auto table = benchstore::load_benchmark(o.benchmark);
    space = table.space();
    for (const auto& r : table.records()) archs.push_back(r.arch);
  } else {
    space = archspace::preset_space(o.space);
    archs = sample_distinct(space, o.size, rng);
  }
  const auto embedding = gnnmodels::embedding_config_for(*space);
  diffcore::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.learning_rate = o.lr;
  tc.weight_decay = o.weight_decay;
  tc.seed = ctx.seed;
  ssl::TrainHistory history;
  std::string checkpoint;
  if (o.method == "regression") {
    if (o.batch != 0) tc.batch_size = static_cast<int>(o.batch);
    auto model = gnnmodels::make_frl(embedding, rng);
    history = ssl::pretrain_regression(archs, model, tc, rng);
    checkpoint = diffcore::checkpoint_to_json(model.store, gnnmodels::metadata(model)).dump();
  } else if (o.method == "contrastive") {
    ssl::ContrastiveConfig cc;
    if (o.batch != 0) cc.batch_size = o.batch;
    cc.draws = o.draws;
    cc.temperature = o.tau;
    cc.lambda = o.lambda;
    cc.squared_reg = o.squared_reg;
    auto model = gnnmodels::make_fccl(embedding, rng);
    history = ssl::pretrain_central_contrastive(archs, model, cc, tc, rng);
    checkpoint = diffcore::checkpoint_to_json(model.store, gnnmodels::metadata(model)).dump();
  } else {
    throw Error("unknown pretraining method '" + o.method + "'");
  }
  dir.write("checkpoint.json", checkpoint + "\n");
  std::ostringstream csv;
  csv << "epoch,loss\n" << std::setprecision(12);
  for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) csv << e + 1 << ',' << history.epoch_loss[e] << '\n';
  dir.write("history.csv", csv.str());
  ctx.write_manifest(dir);
  out << "pretrained " << o.method << " on " << archs.size() << " architectures, final loss "
      << (history.epoch_loss.empty() ? 0.0 : history.epoch_loss.back()) << "\n";
}

// search ---------------------------------------------------------------------

struct SearchOptions {
  std::string benchmark;
  std::vector<std::string> strategies;
  std::size_t budget = 150;
  std::size_t ft_budget = 0;
  std::size_t trials = 1;
  std::string pretrained;
  std::size_t k = 10;
  std::size_t n0 = 10;
  std::size_t candidates = 100;
  int ft_epochs = 300;
  double ft_lr = 5e-5;
  double ft_weight_decay = 1e-4;
  int ft_batch = 64;
  std::size_t population = 30;
  std::size_t tournament = 10;
  bool sample_repeat = false;
  std::size_t jobs = 1;
  std::string out;
};

const std::vector<std::string> kStrategies = {"random", "rea", "npenas-np", "npenas-ssrl", "npenas-ssccl"};

void run_search(const SearchOptions& o, RunContext& ctx, std::ostream& out) {
  OutputDir dir(o.out);
  ctx.input(o.benchmark);
  const auto table = benchstore::load_benchmark(o.benchmark);
  const auto embedding = gnnmodels::embedding_config_for(*table.space());
  std::optional<diffcore::Checkpoint> ckpt;
  if (!o.pretrained.empty()) {
    ctx.input(o.pretrained);
    ckpt = diffcore::load_checkpoint(o.pretrained);
  }

  auto ft = searchlab::default_fine_tune_config();
  ft.epochs = o.ft_epochs;
  ft.learning_rate = o.ft_lr;
  ft.weight_decay = o.ft_weight_decay;
  ft.batch_size = o.ft_batch;
  searchlab::SearchConfig sc;
  sc.n0 = o.n0;
  sc.total_num = o.budget;
  sc.ft_num = o.ft_budget == 0 ? o.budget : o.ft_budget;
  sc.k = o.k;
  sc.candidate_pool = o.candidates;
  sc.sample_repeat = o.sample_repeat;
  searchlab::EvolutionConfig ec;
  ec.budget = o.budget;
  ec.population = o.population;
  ec.tournament = o.tournament;
  ec.initial = std::min(ec.initial, o.population);
  ec.sample_repeat = o.sample_repeat;

  std::vector<searchlab::Strategy> strategies;
  for (const std::string& name : o.strategies) {
    if (name == "random") {
      strategies.push_back({name, [&o](const benchstore::BenchmarkTable& t, Rng& r) {
                              return searchlab::random_search(t, o.budget, r, o.sample_repeat);
                            }});
    } else if (name == "rea") {
      ec.validate();
      strategies.push_back(
          {name, [ec](const benchstore::BenchmarkTable& t, Rng& r) { return searchlab::regularized_evolution(t, ec, r); }});
    } else if (name.starts_with("npenas-")) {
      sc.validate();
      std::optional<searchlab::PretrainedEmbedding> weights;
      if (name != "npenas-np") {
        if (!ckpt) throw Error("strategy " + name + " needs --pretrained");
        const std::string want = name == "npenas-ssrl" ? "frl" : "fccl";
        if (kind_of(*ckpt) != want)
          throw Error("strategy " + name + " needs a " + want + " checkpoint, got '" + kind_of(*ckpt) + "'");
        weights = searchlab::pretrained_from_checkpoint(*ckpt);
      }
      strategies.push_back({name, [=](const benchstore::BenchmarkTable& t, Rng& r) {
                              searchlab::GnnSearchPredictor predictor(embedding, ft, weights);
                              return searchlab::npenas_fixed(t, predictor, sc, r, name);
                            }});
    } else {
      throw Error("unknown strategy '" + name + "'");
    }
  }

  searchlab::ExperimentConfig xc;
  xc.trials = o.trials;
  xc.budget = o.budget;
  xc.k = o.k;
  xc.seed = ctx.seed;
  xc.jobs = o.jobs;
  const auto report = searchlab::run_experiment(strategies, table, xc);
  for (std::size_t s = 0; s < strategies.size(); ++s)
    for (std::size_t t = 0; t < o.trials; ++t) {
      std::ostringstream csv;
      searchlab::write_trace_csv(report.traces[s][t], csv);
      dir.write("traces/" + strategies[s].name + "-" + std::to_string(t) + ".csv", csv.str());
    }
  std::ostringstream rows;
  searchlab::write_rows_csv(report, rows);
  dir.write("curves.csv", rows.str());
  json agg = report.to_json();
  agg["oracle_val_err"] = searchlab::oracle_baseline(table).val_err;
  dir.write("aggregate.json", agg.dump(2) + "\n");
  ctx.write_manifest(dir);
  for (const auto& a : report.aggregate)
    if (a.step == o.budget)
      out << a.strategy << " best_val " << format_double(a.mean_best_val) << " +- " << format_double(a.std_best_val)
          << " best_test " << format_double(a.mean_best_test) << " +- " << format_double(a.std_best_test) << "\n";
}

// study ----------------------------------------------------------------------

struct StudyOptions {
  std::string benchmark;
  std::string method = "supervised";
  std::string pretrained;
  std::vector<std::size_t> budgets = {20, 50, 100, 150, 200};
  std::vector<int> epochs = {50, 100, 150, 200, 250, 300};
  std::size_t trials = 40;
  std::size_t eval_size = 1000;
  double ft_lr = 5e-5;
  double ft_weight_decay = 1e-4;
  int ft_batch = 64;
  std::size_t jobs = 1;
  std::string out;
};

void run_study(const StudyOptions& o, RunContext& ctx, std::ostream& out) {
  OutputDir dir(o.out);
  ctx.input(o.benchmark);
  const auto table = benchstore::load_benchmark(o.benchmark);
  std::optional<diffcore::Checkpoint> ckpt;
  std::optional<searchlab::PretrainedEmbedding> weights;
  if (o.method != "supervised") {
    if (o.method != "ss-rl" && o.method != "ss-ccl") throw Error("unknown study method '" + o.method + "'");
    if (o.pretrained.empty()) throw Error("method " + o.method + " needs --pretrained");
    ctx.input(o.pretrained);
    ckpt = diffcore::load_checkpoint(o.pretrained);
    const std::string want = o.method == "ss-rl" ? "frl" : "fccl";
    if (kind_of(*ckpt) != want)
      throw Error("method " + o.method + " needs a " + want + " checkpoint, got '" + kind_of(*ckpt) + "'");
    weights = searchlab::pretrained_from_checkpoint(*ckpt);
  }
  searchlab::StudyConfig sc;
  sc.budgets = o.budgets;
  sc.epochs = o.epochs;
  sc.trials = o.trials;
  sc.eval_size = o.eval_size;
  sc.fine_tune.learning_rate = o.ft_lr;
  sc.fine_tune.weight_decay = o.ft_weight_decay;
  sc.fine_tune.batch_size = o.ft_batch;
  sc.seed = ctx.seed;
  sc.jobs = o.jobs;
  const auto report = searchlab::prediction_study(table, o.method, weights ? &*weights : nullptr, sc);
  dir.write("study.json", report.to_json().dump(2) + "\n");
  std::ostringstream csv;
  csv << "method,budget,epochs,mean_tau,std_tau,degenerate\n" << std::setprecision(12);
  for (const auto& c : report.cells)
    csv << o.method << ',' << c.budget << ',' << c.epochs << ',' << c.mean << ',' << c.std << ',' << c.degenerate
        << '\n';
  dir.write("study.csv", csv.str());
  ctx.write_manifest(dir);
  out << csv.str();
}

// bench-synth ----------------------------------------------------------------

struct SynthOptions {
  std::string space = "surrogate5";
  std::size_t size = 2000;
  double noise = 0.01;
  std::size_t repeats = 3;
  std::string out;
};

void run_synth(const SynthOptions& o, RunContext& ctx, std::ostream& out) {
  OutputDir dir(o.out);
  const auto table = benchstore::synth_benchmark(archspace::preset_space(o.space), o.size, o.noise, ctx.seed, o.repeats);
  const fs::path path = dir.root() / "benchmark.jsonl";
  benchstore::save_benchmark(table, path.string());
  dir.write("benchmark.jsonl", read_file(path.string()));
  ctx.write_manifest(dir);
  out << "wrote " << table.size() << " records\n";
}

// convert --------------------------------------------------------------------

struct ConvertOptions {
  std::string input;
  std::string out;
};

std::vector<double> error_list(const json& line, const std::string& err_key, const std::string& acc_key) {
  std::vector<double> out;
  if (line.contains(err_key)) {
    for (const json& v : line.at(err_key)) out.push_back(v.get<double>());
  } else if (line.contains(acc_key)) {
    for (const json& v : line.at(acc_key)) out.push_back(1.0 - v.get<double>() / 100.0);
  } else {
    throw Error("missing " + err_key + " or " + acc_key);
  }
  return out;
}

void run_convert(const ConvertOptions& o, RunContext& ctx, std::ostream& out) {
  OutputDir dir(o.out);
  ctx.input(o.input);
  const auto space = archspace::nasbench201_space();
  benchstore::BenchmarkTable table(space);
  std::istringstream in(read_file(o.input));
  std::string text;
  std::size_t line_no = 0, lines = 0, duplicates = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json line = json::parse(text);
      archspace::Architecture arch = [&] {
        if (line.contains("arch")) return benchstore::convert_nb201_cell(benchstore::parse_nb201_string(line.at("arch")), space);
        if (line.contains("cell")) return benchstore::convert_nb201_cell(line.at("cell").get<std::array<std::string, 6>>(), space);
        if (line.contains("op_matrix"))
          return benchstore::convert_nb201_cell(line.at("op_matrix").get<std::vector<std::vector<std::string>>>(), space);
        throw Error("expected one of arch, cell, op_matrix");
      }();
      benchstore::BenchmarkRecord rec{std::move(arch), error_list(line, "val_err", "val_acc"),
                                      error_list(line, "test_err", "test_acc")};
      ++lines;
      if (!table.insert(std::move(rec))) ++duplicates;
    } catch (const std::exception& e) {
      throw Error(o.input + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const fs::path path = dir.root() / "benchmark.jsonl";
  benchstore::save_benchmark(table, path.string());
  dir.write("benchmark.jsonl", read_file(path.string()));
  ctx.write_manifest(dir);
  out << "converted " << lines << " cells into " << table.size() << " records (" << duplicates << " duplicates)\n";
}

// model-info -----------------------------------------------------------------

void run_model_info(const std::string& path, std::ostream& out) {
  const auto ckpt = diffcore::load_checkpoint(path);
  out << "kind " << (kind_of(ckpt).empty() ? "unknown" : kind_of(ckpt)) << "\n";
  out << "metadata " << ckpt.metadata.dump() << "\n";
  for (const auto& [name, p] : ckpt.store.params())
    out << "param " << name << ' ' << p.value.rows() << 'x' << p.value.cols() << ' ' << p.value.size() << "\n";
  for (const auto& [name, b] : ckpt.store.buffers())
    out << "buffer " << name << ' ' << b.rows() << 'x' << b.cols() << "\n";
  out << "parameters " << ckpt.store.parameter_count() << "\n";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// The recorded options are replayed as a config file inside the new output
// directory; --out is the only override.
int rerun(const std::string& manifest_path, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const json m = read_json(manifest_path);
  const std::string command = m.at("command").get<std::string>();
  if (command == "rerun" || command == "model-info") throw Error("manifest command '" + command + "' cannot be rerun");
  OutputDir dir(out_dir);
  const std::string config = "[" + command + "]\n" + m.at("explicit_config").get<std::string>();
  dir.write("rerun.toml", config);
  return run_impl({"--config", (dir.root() / "rerun.toml").string(), command, "--out", out_dir}, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) { return run_impl(args, out, err); }

namespace {

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised predictor pretraining and predictor-guided architecture search", "ssnas"};
  app.set_config("--config", "", "TOML config file; [subcommand] sections, command-line flags take precedence");
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  EncodeOptions enc;
  auto* c_enc = app.add_subcommand("encode", "Print the position-aware, path-based and adjacency encodings");
  c_enc->add_option("arch", enc.arch, "Architecture JSON file")->required()->check(CLI::ExistingFile);
  c_enc->add_option("--space", enc.space, "Search space preset")->capture_default_str();
  c_enc->add_option("--out", enc.out, "Also write encoding.json and a manifest here");

  GedOptions gd;
  auto* c_ged = app.add_subcommand("ged", "Print the encoding distance and its normalized similarity");
  c_ged->add_option("a", gd.a, "First architecture JSON")->required()->check(CLI::ExistingFile);
  c_ged->add_option("b", gd.b, "Second architecture JSON")->required()->check(CLI::ExistingFile);
  c_ged->add_option("--space", gd.space, "Search space preset")->capture_default_str();
  c_ged->add_option("--out", gd.out, "Also write ged.txt and a manifest here");

  PretrainOptions pt;
  auto* c_pt = app.add_subcommand("pretrain", "Pretrain a graph embedding without labels");
  c_pt->add_option("--method", pt.method, "regression (distance regression) or contrastive (central contrastive)")
      ->required()
      ->check(CLI::IsMember({"regression", "contrastive"}));
  c_pt->add_option("--space", pt.space, "Search space preset to sample from")->capture_default_str();
  c_pt->add_option("--benchmark", pt.benchmark, "Use the architectures of this benchmark file instead")
      ->check(CLI::ExistingFile);
  c_pt->add_option("--size", pt.size, "Architectures sampled from --space")->capture_default_str();
  c_pt->add_option("--epochs", pt.epochs, "Training epochs")->capture_default_str();
  c_pt->add_option("--batch", pt.batch, "Batch size (0: 64 for regression, N=512 for contrastive)")
      ->capture_default_str();
  c_pt->add_option("--draws", pt.draws, "Contrastive anchors per batch (M)")->capture_default_str();
  c_pt->add_option("--tau", pt.tau, "Contrastive temperature")->capture_default_str();
  c_pt->add_option("--lambda", pt.lambda, "Center regularization weight")->capture_default_str();
  c_pt->add_flag("--squared-reg", pt.squared_reg, "Penalize squared center similarities");
  c_pt->add_option("--lr", pt.lr, "Adam learning rate")->capture_default_str();
  c_pt->add_option("--weight-decay", pt.weight_decay, "Weight decay")->capture_default_str();
  c_pt->add_option("--out", pt.out, "Output directory")->required();

  SearchOptions so;
  auto* c_search = app.add_subcommand("search", "Run search strategies over a benchmark table");
  c_search->add_option("--benchmark", so.benchmark, "Benchmark JSON-lines file")->required()->check(CLI::ExistingFile);
  c_search->add_option("--strategy", so.strategies, "One or more strategies")
      ->required()
      ->delimiter(',')
      ->check(CLI::IsMember(kStrategies));
  c_search->add_option("--budget", so.budget, "Evaluated architectures per trial (total_num)")->capture_default_str();
  c_search->add_option("--ft-budget", so.ft_budget, "Fine-tune while at most this many are evaluated (0: budget)")
      ->capture_default_str();
  c_search->add_option("--trials", so.trials, "Independent trials")->capture_default_str();
  c_search->add_option("--pretrained", so.pretrained, "Checkpoint for npenas-ssrl / npenas-ssccl")
      ->check(CLI::ExistingFile);
  c_search->add_option("--k", so.k, "Evaluations per iteration")->capture_default_str();
  c_search->add_option("--n0", so.n0, "Initial random population")->capture_default_str();
  c_search->add_option("--candidates", so.candidates, "Mutated candidates per iteration")->capture_default_str();
  c_search->add_option("--ft-epochs", so.ft_epochs, "Fine-tune epochs per fit")->capture_default_str();
  c_search->add_option("--ft-lr", so.ft_lr, "Fine-tune learning rate")->capture_default_str();
  c_search->add_option("--ft-weight-decay", so.ft_weight_decay, "Fine-tune weight decay")->capture_default_str();
  c_search->add_option("--ft-batch", so.ft_batch, "Fine-tune batch size")->capture_default_str();
  c_search->add_option("--rea-population", so.population, "Evolution population size")->capture_default_str();
  c_search->add_option("--rea-tournament", so.tournament, "Evolution tournament size")->capture_default_str();
  c_search->add_flag("--sample-repeat", so.sample_repeat, "Expose one random training repeat per query");
  c_search->add_option("--jobs", so.jobs, "Parallel trials")->capture_default_str();
  c_search->add_option("--out", so.out, "Output directory")->required();

  StudyOptions st;
  auto* c_study = app.add_subcommand("study", "Kendall tau of fine-tuned predictors over budget and epoch grids");
  c_study->add_option("--benchmark", st.benchmark, "Benchmark JSON-lines file")->required()->check(CLI::ExistingFile);
  c_study->add_option("--method", st.method, "supervised, ss-rl or ss-ccl")
      ->check(CLI::IsMember({"supervised", "ss-rl", "ss-ccl"}))
      ->capture_default_str();
  c_study->add_option("--pretrained", st.pretrained, "Checkpoint for ss-rl / ss-ccl")->check(CLI::ExistingFile);
  c_study->add_option("--budgets", st.budgets, "Labelled set sizes")->delimiter(',')->capture_default_str();
  c_study->add_option("--epochs", st.epochs, "Fine-tune epochs")->delimiter(',')->capture_default_str();
  c_study->add_option("--trials", st.trials, "Trials per cell")->capture_default_str();
  c_study->add_option("--eval-size", st.eval_size, "Held-out architectures for tau")->capture_default_str();
  c_study->add_option("--ft-lr", st.ft_lr, "Fine-tune learning rate")->capture_default_str();
  c_study->add_option("--ft-weight-decay", st.ft_weight_decay, "Fine-tune weight decay")->capture_default_str();
  c_study->add_option("--ft-batch", st.ft_batch, "Fine-tune batch size")->capture_default_str();
  c_study->add_option("--jobs", st.jobs, "Parallel trials")->capture_default_str();
  c_study->add_option("--out", st.out, "Output directory")->required();

  SynthOptions sy;
  auto* c_synth = app.add_subcommand("bench-synth", "Generate a synthetic surrogate benchmark");
  c_synth->add_option("--space", sy.space, "Search space preset")->capture_default_str();
  c_synth->add_option("--size", sy.size, "Distinct architectures")->capture_default_str();
  c_synth->add_option("--noise", sy.noise, "Per-repeat Gaussian noise")->capture_default_str();
  c_synth->add_option("--repeats", sy.repeats, "Training repeats per record")->capture_default_str();
  c_synth->add_option("--out", sy.out, "Output directory")->required();

  ConvertOptions cv;
  auto* c_conv = app.add_subcommand("convert", "Convert NB-201 cell records into a benchmark file");
  c_conv->add_option("--input", cv.input, "JSON lines with arch|cell|op_matrix and val/test err or acc lists")
      ->required()
      ->check(CLI::ExistingFile);
  c_conv->add_option("--out", cv.out, "Output directory")->required();

  std::string rerun_manifest, rerun_out;
  auto* c_rerun = app.add_subcommand("rerun", "Repeat the run recorded in a manifest into a new directory");
  c_rerun->add_option("manifest", rerun_manifest, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
  c_rerun->add_option("--out", rerun_out, "Output directory for the repeat")->required();

  std::string info_path;
  auto* c_info = app.add_subcommand("model-info", "Print parameter shapes and counts of a checkpoint");
  c_info->add_option("checkpoint", info_path, "Checkpoint file")->required()->check(CLI::ExistingFile);

  for (auto* sub : {c_pt, c_search, c_study, c_synth})
    sub->add_option("--seed", seed, "Seed for every random choice in the run")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunContext ctx;
  ctx.command = sub->get_name();
  ctx.args = args;
  ctx.resolved_config = sub->config_to_str(true, false);
  ctx.explicit_config = sub->config_to_str(false, false);
  ctx.seed = seed;
  try {
    if (sub == c_rerun) return rerun(rerun_manifest, rerun_out, out, err);
    if (sub == c_enc) run_encode(enc, ctx, out);
    else if (sub == c_ged) run_ged(gd, ctx, out);
    else if (sub == c_pt) run_pretrain(pt, ctx, out);
    else if (sub == c_search) run_search(so, ctx, out);
    else if (sub == c_study) run_study(st, ctx, out);
    else if (sub == c_synth) run_synth(sy, ctx, out);
    else if (sub == c_conv) run_convert(cv, ctx, out);
    else if (sub == c_info) run_model_info(info_path, out);
  } catch (const std::exception& e) {
    err << "error: " << ctx.command << ": " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

}  // namespace ssnas::cli
