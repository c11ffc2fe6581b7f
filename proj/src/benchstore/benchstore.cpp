#include "ssnas/benchstore/benchstore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "ssnas/common/error.hpp"
#include "ssnas/encoding/encoding.hpp"

namespace ssnas::benchstore {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw Error("benchmark record: empty metric list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void check_metric(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw Error(std::string("benchmark record: empty ") + name);
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0)) throw Error(std::string("benchmark record: ") + name + " outside [0, 1]");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double BenchmarkRecord::val_mean() const { return mean_of(val_err); }
double BenchmarkRecord::test_mean() const { return mean_of(test_err); }

BenchmarkTable::BenchmarkTable(SpacePtr space) : space_(std::move(space)) {
  if (!space_) throw Error("BenchmarkTable: null space");
}

bool BenchmarkTable::insert(BenchmarkRecord record) {
  if (record.arch.space() != space_ && !(*record.arch.space() == *space_))
    throw Error("benchmark record: architecture belongs to a different space");
  const auto report = archspace::validate(record.arch);
  if (!report) throw Error("benchmark record: invalid architecture (" + report.reason + ")");
  check_metric(record.val_err, "val_err");
  check_metric(record.test_err, "test_err");
  std::string key = encoding::encoding_key(record.arch);
  if (index_.count(key)) return false;
  index_.emplace(key, records_.size());
  keys_.push_back(std::move(key));
  records_.push_back(std::move(record));
  return true;
}

std::ptrdiff_t BenchmarkTable::find(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::ptrdiff_t BenchmarkTable::find(const Architecture& arch) const { return find(encoding::encoding_key(arch)); }

nlohmann::json record_to_json(const BenchmarkRecord& record) {
  nlohmann::json j = archspace::to_json(record.arch);
  j["val_err"] = record.val_err;
  j["test_err"] = record.test_err;
  return j;
}

BenchmarkRecord record_from_json(const nlohmann::json& j, const SpacePtr& space) {
  try {
    return {archspace::architecture_from_json(j, space), j.at("val_err").get<std::vector<double>>(),
            j.at("test_err").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("benchmark record: ") + e.what());
  }
}

BenchmarkTable load_benchmark(const std::string& path, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open benchmark file '" + path + "'");
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = LoadReport{};

  std::optional<BenchmarkTable> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++rep.lines;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      if (!table) {
        if (!j.contains("format_version") || !j.contains("space"))
          throw Error("expected header with \"space\" and \"format_version\"");
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion)
          throw Error("unsupported format_version " + std::to_string(version) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
        table.emplace(archspace::space_from_json(j.at("space")));
        if (j.contains("provenance")) table->provenance = j.at("provenance");
        continue;
      }
      BenchmarkRecord rec = record_from_json(j, table->space());
      const std::ptrdiff_t existing = table->find(rec.arch);
      if (existing >= 0) {
        ++rep.duplicates;
        const BenchmarkRecord& kept = table->record(static_cast<std::size_t>(existing));
        if (kept.val_err != rec.val_err || kept.test_err != rec.test_err) {
          ++rep.conflicts;
          rep.warnings.push_back(where + "duplicate architecture with conflicting metrics; keeping the first");
        }
        continue;
      }
      table->insert(std::move(rec));
      ++rep.records;
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + e.what());
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  if (!table) throw Error(path + ": missing header line");
  return std::move(*table);
}

void save_benchmark(const BenchmarkTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write benchmark file '" + path + "'");
  nlohmann::json header = {{"space", archspace::space_to_json(*table.space())}, {"format_version", kFormatVersion}};
  if (!table.provenance.empty()) header["provenance"] = table.provenance;
  out << header.dump() << '\n';
  for (const BenchmarkRecord& r : table.records()) out << record_to_json(r).dump() << '\n';
  if (!out) throw Error("failed writing benchmark file '" + path + "'");
}

double SurrogateScorer::raw_score(const Architecture& arch) const {
  const auto enc = encoding::encode_position_aware(arch);
  if (enc.slot_width != slot_weights.size()) throw Error("SurrogateScorer: weight count does not match space");
  double s = 0.0;
  std::size_t longest = 0;
  for (const auto& path : enc.per_path) {
    std::size_t len = 0;
    for (std::size_t i = 0; i < path.size(); ++i)
      if (path[i]) {
        s += slot_weights[i];
        ++len;
      }
    longest = std::max(longest, len);
  }
  const std::size_t interior = arch.space()->max_nodes - 2;
  const double max_paths = std::ldexp(1.0, static_cast<int>(interior));
  s += depth_weight * static_cast<double>(longest) / static_cast<double>(interior);
  s += width_weight * static_cast<double>(enc.path_count) / max_paths;
  return s;
}

double SurrogateScorer::error(const Architecture& arch) const {
  const double z = sigmoid((raw_score(arch) - raw_mean) / raw_std);
  const double span = high - low;
  const double t = span > 1e-12 ? std::clamp((z - low) / span, 0.0, 1.0) : 0.0;
  return err_min + (err_max - err_min) * t;
}

nlohmann::json SurrogateScorer::to_json() const {
  return {{"slot_weights", slot_weights}, {"depth_weight", depth_weight}, {"width_weight", width_weight},
          {"raw_mean", raw_mean},         {"raw_std", raw_std},           {"low", low},
          {"high", high},                 {"err_min", err_min},           {"err_max", err_max}};
}

SurrogateScorer SurrogateScorer::from_json(const nlohmann::json& j) {
  try {
    SurrogateScorer s;
    s.slot_weights = j.at("slot_weights").get<std::vector<double>>();
    s.depth_weight = j.at("depth_weight").get<double>();
    s.width_weight = j.at("width_weight").get<double>();
    s.raw_mean = j.at("raw_mean").get<double>();
    s.raw_std = j.at("raw_std").get<double>();
    s.low = j.at("low").get<double>();
    s.high = j.at("high").get<double>();
    s.err_min = j.at("err_min").get<double>();
    s.err_max = j.at("err_max").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("surrogate scorer: ") + e.what());
  }
}

BenchmarkTable synth_benchmark(const SpacePtr& space, std::size_t size, double noise, std::uint64_t seed,
                               std::size_t repeats) {
  if (size == 0) throw Error("synth_benchmark: size must be >= 1");
  if (repeats == 0) throw Error("synth_benchmark: repeats must be >= 1");
  if (noise < 0.0) throw Error("synth_benchmark: noise must be >= 0");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SurrogateScorer scorer;
  scorer.slot_weights.resize(encoding::slot_width(*space));
  for (double& w : scorer.slot_weights) w = gauss(rng);
  scorer.depth_weight = gauss(rng);
  scorer.width_weight = gauss(rng);

  std::vector<Architecture> archs;
  std::unordered_map<std::string, std::size_t> seen;
  const std::size_t max_attempts = std::max<std::size_t>(1000, 100 * size);
  for (std::size_t attempt = 0; archs.size() < size; ++attempt) {
    if (attempt >= max_attempts)
      throw Error("synth_benchmark: cannot reach " + std::to_string(size) + " distinct encodings (found " +
                  std::to_string(archs.size()) + ")");
    Architecture a = archspace::random_architecture(space, rng);
    if (seen.emplace(encoding::encoding_key(a), archs.size()).second) archs.push_back(std::move(a));
  }

  std::vector<double> raw(size);
  for (std::size_t i = 0; i < size; ++i) raw[i] = scorer.raw_score(archs[i]);
  scorer.raw_mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(size);
  double var = 0.0;
  for (double r : raw) var += (r - scorer.raw_mean) * (r - scorer.raw_mean);
  const double sd = std::sqrt(var / static_cast<double>(size));
  scorer.raw_std = sd > 1e-12 ? sd : 1.0;
  scorer.low = 1.0;
  scorer.high = 0.0;
  for (double r : raw) {
    const double z = sigmoid((r - scorer.raw_mean) / scorer.raw_std);
    scorer.low = std::min(scorer.low, z);
    scorer.high = std::max(scorer.high, z);
  }

  BenchmarkTable table(space);
  std::normal_distribution<double> jitter(0.0, noise);
  for (std::size_t i = 0; i < size; ++i) {
    const double base = scorer.error(archs[i]);
    BenchmarkRecord rec{archs[i], {}, {}};
    for (std::size_t r = 0; r < repeats; ++r)
      rec.val_err.push_back(std::clamp(base + (noise > 0.0 ? jitter(rng) : 0.0), 0.0, 1.0));
    for (std::size_t r = 0; r < repeats; ++r)
      rec.test_err.push_back(std::clamp(base + (noise > 0.0 ? jitter(rng) : 0.0), 0.0, 1.0));
    table.insert(std::move(rec));
  }
  table.provenance = {{"generator", "synth_benchmark"}, {"size", size},       {"noise", noise},
                      {"seed", seed},                   {"repeats", repeats}, {"scorer", scorer.to_json()}};
  return table;
}

const BenchmarkRecord& query(const BenchmarkTable& table, const Architecture& arch) {
  const std::ptrdiff_t i = table.find(arch);
  if (i < 0) throw Error("architecture not in benchmark");
  return table.record(static_cast<std::size_t>(i));
}

double observed_val(const BenchmarkRecord& record, bool sample_repeat, Rng& rng) {
  if (!sample_repeat) return record.val_mean();
  return record.val_err.at(uniform_index(rng, record.val_err.size()));
}

namespace {

constexpr std::array<std::pair<int, int>, 6> kCellEdges = {{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

// Vocabulary index, or -1 for a removed edge.
int nb201_label(const archspace::SpaceDescriptor& space, const std::string& label) {
  static const std::unordered_map<std::string, std::string> aliases = {{"nor_conv_1x1", "conv1x1"},
                                                                       {"nor_conv_3x3", "conv3x3"},
                                                                       {"avg_pool_3x3", "avgpool3x3"},
                                                                       {"skip_connect", "skip"}};
  if (label == "none" || label == "zeroize") return -1;
  auto it = aliases.find(label);
  const auto idx = space.vocab.index_of(it == aliases.end() ? label : it->second);
  if (!idx) throw Error("NB-201 cell: unknown operation '" + label + "'");
  return *idx;
}

}  // namespace

Architecture convert_nb201_cell(const std::array<std::string, 6>& edge_ops, const SpacePtr& space_in) {
  const SpacePtr space = space_in ? space_in : archspace::nasbench201_space();
  if (space->max_nodes < 8) throw Error("NB-201 cell: space needs at least 8 nodes");
  constexpr std::size_t n = 8;
  std::array<int, 6> labels{};
  for (std::size_t k = 0; k < 6; ++k) labels[k] = nb201_label(*space, edge_ops[k]);

  std::vector<std::uint8_t> adj(n * n, 0);
  std::vector<int> ops(n, 0);
  ops[0] = archspace::kInputOp;
  ops[n - 1] = archspace::kOutputOp;
  for (std::size_t k = 0; k < 6; ++k) {
    if (labels[k] < 0) continue;
    const std::size_t node = k + 1;
    ops[node] = labels[k];
    const auto [a, b] = kCellEdges[k];
    if (a == 0) adj[node] = 1;
    if (b == 3) adj[node * n + n - 1] = 1;
    for (std::size_t m = 0; m < 6; ++m) {
      if (labels[m] < 0) continue;
      if (kCellEdges[m].first == b) adj[node * n + m + 1] = 1;
    }
  }
  Architecture full(space, std::move(adj), std::move(ops));
  const auto report = archspace::validate(full);
  if (!report) throw Error("NB-201 cell: " + report.reason);
  Architecture pruned = archspace::prune(full);
  if (!space->prune_dangling && pruned.node_count() != full.node_count())
    throw Error("NB-201 cell: removed or dangling edges need a space that prunes dangling nodes");
  return pruned;
}

Architecture convert_nb201_cell(const std::vector<std::vector<std::string>>& op_matrix, const SpacePtr& space) {
  if (op_matrix.size() != 4) throw Error("NB-201 cell: op matrix must be 4 x 4");
  for (const auto& row : op_matrix)
    if (row.size() != 4) throw Error("NB-201 cell: op matrix must be 4 x 4");
  std::array<std::string, 6> edge_ops;
  for (std::size_t k = 0; k < 6; ++k) edge_ops[k] = op_matrix[kCellEdges[k].first][kCellEdges[k].second];
  return convert_nb201_cell(edge_ops, space);
}

std::array<std::string, 6> parse_nb201_string(const std::string& arch_str) {
  std::array<std::string, 6> out;
  std::size_t k = 0;
  std::stringstream groups(arch_str);
  std::string group;
  int target = 0;
  while (std::getline(groups, group, '+')) {
    ++target;
    std::stringstream tokens(group);
    std::string token;
    int source = 0;
    while (std::getline(tokens, token, '|')) {
      if (token.empty()) continue;
      const auto tilde = token.find('~');
      if (tilde == std::string::npos) throw Error("NB-201 string: token '" + token + "' lacks '~'");
      int from = -1;
      try {
        from = std::stoi(token.substr(tilde + 1));
      } catch (const std::exception&) {
        throw Error("NB-201 string: bad source index in '" + token + "'");
      }
      if (k >= 6 || from != source || kCellEdges[k] != std::pair<int, int>{from, target})
        throw Error("NB-201 string: unexpected edge order near '" + token + "'");
      out[k++] = token.substr(0, tilde);
      ++source;
    }
  }
  if (k != 6) throw Error("NB-201 string: expected 6 edges, found " + std::to_string(k));
  return out;
}

}  // namespace ssnas::benchstore
