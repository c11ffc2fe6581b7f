#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "ssnas/archspace/archspace.hpp"
#include "ssnas/common/rng.hpp"

namespace ssnas::benchstore {

using archspace::Architecture;
using archspace::SpacePtr;

inline constexpr int kFormatVersion = 1;

struct BenchmarkRecord {
  Architecture arch;
  // One entry per training repeat; every value in [0, 1].
  std::vector<double> val_err;
  std::vector<double> test_err;

  double val_mean() const;
  double test_mean() const;
};

// Records keyed by position-aware encoding. Immutable once built, so
// concurrent readers are safe.
class BenchmarkTable {
 public:
  explicit BenchmarkTable(SpacePtr space);

  const SpacePtr& space() const { return space_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<BenchmarkRecord>& records() const { return records_; }
  const BenchmarkRecord& record(std::size_t i) const { return records_.at(i); }
  const std::string& key(std::size_t i) const { return keys_.at(i); }

  // Validates the record. Returns false (and keeps the stored record) when
  // the encoding is already present.
  bool insert(BenchmarkRecord record);

  // Index of the record with this encoding key, or -1.
  std::ptrdiff_t find(const std::string& key) const;
  std::ptrdiff_t find(const Architecture& arch) const;
  bool contains(const Architecture& arch) const { return find(arch) >= 0; }

  // Free-form metadata (generator parameters, source file, ...).
  nlohmann::json provenance = nlohmann::json::object();

 private:
  SpacePtr space_;
  std::vector<BenchmarkRecord> records_;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t duplicates = 0;
  // Duplicates whose metrics disagree with the kept record.
  std::size_t conflicts = 0;
  std::vector<std::string> warnings;
};

// JSON-lines: a header {"space": {...}, "format_version": 1} followed by
// one {"matrix", "ops", "val_err", "test_err"} object per line. Errors name
// the offending line.
BenchmarkTable load_benchmark(const std::string& path, LoadReport* report = nullptr);
void save_benchmark(const BenchmarkTable& table, const std::string& path);

nlohmann::json record_to_json(const BenchmarkRecord& record);
BenchmarkRecord record_from_json(const nlohmann::json& j, const SpacePtr& space);

// Parameters of the synthetic scoring function, stored in the table's
// provenance so the noise-free errors can be recomputed.
struct SurrogateScorer {
  // One weight per (interior slot, op) entry of a position-aware path vector.
  std::vector<double> slot_weights;
  double depth_weight = 0.0;
  double width_weight = 0.0;
  // Standardisation of the raw score over the sampled table.
  double raw_mean = 0.0;
  double raw_std = 1.0;
  // Min/max of sigmoid(standardised score) over the sampled table.
  double low = 0.0;
  double high = 1.0;
  double err_min = 0.05;
  double err_max = 0.5;

  // w . sum_p path_p + depth_weight * longest_path / (H - 2)
  //   + width_weight * paths / max_paths
  double raw_score(const Architecture& arch) const;
  // Noise-free error in [err_min, err_max] for architectures in the sample.
  double error(const Architecture& arch) const;

  nlohmann::json to_json() const;
  static SurrogateScorer from_json(const nlohmann::json& j);
};

// Samples `size` architectures with distinct encodings and scores them with
// a random SurrogateScorer drawn from `seed`. Each of `repeats` val and test
// entries is the noise-free error plus independent N(0, noise^2), clamped
// to [0, 1]. Pure function of its arguments.
BenchmarkTable synth_benchmark(const SpacePtr& space, std::size_t size, double noise, std::uint64_t seed,
                               std::size_t repeats = 3);

// Throws "architecture not in benchmark" for unknown encodings.
const BenchmarkRecord& query(const BenchmarkTable& table, const Architecture& arch);

// Validation value exposed to a search: the mean by default, or one
// uniformly chosen repeat when sample_repeat is set.
double observed_val(const BenchmarkRecord& record, bool sample_repeat, Rng& rng);

// Accepts both the short labels of nasbench201_space() and the original
// benchmark names (nor_conv_1x1, nor_conv_3x3, avg_pool_3x3, skip_connect);
// "none"/"zeroize" mark a removed edge.
//
// Cell edges in the order (0,1), (0,2), (1,2), (0,3), (1,3), (2,3) become
// op nodes 1..6 between INPUT (0) and OUTPUT (7). The node for edge (a, b)
// reads from INPUT when a = 0, else from every node of an edge ending at a;
// it feeds OUTPUT when b = 3, else every node of an edge starting at b.
// Removed edges delete their node; the result is then pruned.
Architecture convert_nb201_cell(const std::array<std::string, 6>& edge_ops, const SpacePtr& space = nullptr);
// 4 x 4 matrix whose entry (a, b), a < b, holds the label of cell edge a -> b.
Architecture convert_nb201_cell(const std::vector<std::vector<std::string>>& op_matrix,
                                const SpacePtr& space = nullptr);
// "|op~0|+|op~0|op~1|+|op~0|op~1|op~2|"
std::array<std::string, 6> parse_nb201_string(const std::string& arch_str);

}  // namespace ssnas::benchstore
