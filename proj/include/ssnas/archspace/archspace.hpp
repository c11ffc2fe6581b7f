#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ssnas/common/rng.hpp"

namespace ssnas::archspace {

// Sentinel operation labels for the two endpoint nodes. Interior nodes carry
// a vocabulary index in [0, vocab size).
inline constexpr int kInputOp = -1;
inline constexpr int kOutputOp = -2;

class OpVocabulary {
 public:
  explicit OpVocabulary(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& labels() const { return labels_; }
  // Vocabulary index, or nullopt for unknown labels.
  std::optional<int> index_of(std::string_view label) const;

  bool operator==(const OpVocabulary&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct SpaceDescriptor {
  std::string name;
  std::size_t max_nodes = 0;
  std::size_t max_edges = 0;
  OpVocabulary vocab{{"op"}};
  // One-hot width for GNN node features: input, vocab..., output, then any
  // extra (unused) slots a benchmark reserves.
  std::size_t node_feature_dim = 0;
  // Drop interior nodes that are not on any input-to-output path.
  bool prune_dangling = true;
  std::size_t path_cap = 256;

  // Feature column of a node label.
  std::size_t feature_index(int op) const;

  bool operator==(const SpaceDescriptor&) const = default;
};

using SpacePtr = std::shared_ptr<const SpaceDescriptor>;

// Checks invariants (max_nodes >= 3, feature width large enough).
// node_feature_dim == 0 selects vocab size + 2.
SpacePtr make_space(std::string name, std::size_t max_nodes, std::size_t max_edges,
                    std::vector<std::string> labels, std::size_t node_feature_dim = 0);

// 7 nodes, at most 9 edges, {conv1x1, conv3x3, maxpool3x3}, 6-wide features.
SpacePtr nasbench101_space();
// Node-op form of the 4-node edge-labelled cell: 8 nodes, 8-wide features.
SpacePtr nasbench201_space();
// Small NASBench-101-like space used for exhaustively scored surrogates.
SpacePtr surrogate_space(std::size_t nodes = 5, std::size_t max_edges = 9);
// "nasbench101", "nasbench201", "surrogate5", "surrogate6".
SpacePtr preset_space(const std::string& name);

nlohmann::json space_to_json(const SpaceDescriptor& space);
SpacePtr space_from_json(const nlohmann::json& j);

// Node-operation DAG stored as an H x H adjacency matrix (edge i -> j at
// (i, j)) and one label per node. Construction only checks shapes;
// structural rules are checked by validate().
class Architecture {
 public:
  Architecture(SpacePtr space, std::vector<std::uint8_t> adjacency, std::vector<int> ops);
  Architecture(SpacePtr space, const std::vector<std::vector<int>>& matrix, std::vector<int> ops);

  std::size_t node_count() const { return ops_.size(); }
  bool edge(std::size_t from, std::size_t to) const { return adjacency_[from * ops_.size() + to] != 0; }
  const std::vector<std::uint8_t>& adjacency() const { return adjacency_; }
  const std::vector<int>& ops() const { return ops_; }
  int op(std::size_t node) const { return ops_[node]; }
  std::size_t edge_count() const;
  const SpacePtr& space() const { return space_; }

  // Same space contents, matrix and labels.
  bool operator==(const Architecture& other) const;

 private:
  SpacePtr space_;
  std::vector<std::uint8_t> adjacency_;
  std::vector<int> ops_;
};

struct ValidityReport {
  bool valid = true;
  // First violated rule; empty when valid.
  std::string reason;
  // Some interior node is unreachable from INPUT or cannot reach OUTPUT.
  // Reported separately; does not make the architecture invalid.
  bool has_dangling = false;

  explicit operator bool() const { return valid; }
};

ValidityReport validate(const Architecture& arch);

// Removes interior nodes that are not on any INPUT -> OUTPUT path and
// renumbers the survivors in their original order.
Architecture prune(const Architecture& arch);

// Edges drawn independently with probability 1/2, labels uniformly; pruned
// per space.prune_dangling and resampled until valid.
Architecture random_architecture(const SpacePtr& space, Rng& rng, int max_attempts = 1000);

// Flips each potential edge with probability rate / |potential edges| and
// relabels each interior node (to a different label) with probability
// rate / |interior nodes|. When the space prunes dangling nodes the graph is
// first padded to max_nodes with isolated nodes so mutation can grow it.
Architecture mutate(const Architecture& arch, double rate, Rng& rng, int max_attempts = 100);

struct Path {
  // Interior nodes from INPUT to OUTPUT, endpoints excluded.
  std::vector<std::size_t> node_indices;
  std::vector<int> ops;

  bool operator==(const Path&) const = default;
};

// Every INPUT -> OUTPUT path, depth first with successors in ascending
// index order. Throws "path explosion" past the cap (0 = space.path_cap).
std::vector<Path> enumerate_paths(const Architecture& arch, std::size_t cap = 0);

// {"matrix": [[...]], "ops": ["input", ..., "output"]}
nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j, const SpacePtr& space);
std::string op_name(const SpaceDescriptor& space, int op);
int op_from_name(const SpaceDescriptor& space, std::string_view name);

}  // namespace ssnas::archspace
