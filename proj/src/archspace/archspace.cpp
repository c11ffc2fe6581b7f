#include "ssnas/archspace/archspace.hpp"

#include <algorithm>
#include <set>

#include "ssnas/common/error.hpp"

namespace ssnas::archspace {

OpVocabulary::OpVocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw Error("OpVocabulary: empty vocabulary");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l == "input" || l == "output") throw Error("OpVocabulary: '" + l + "' is reserved");
    if (!seen.insert(l).second) throw Error("OpVocabulary: duplicate label '" + l + "'");
  }
}

std::optional<int> OpVocabulary::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return static_cast<int>(i);
  return std::nullopt;
}

std::size_t SpaceDescriptor::feature_index(int op) const {
  if (op == kInputOp) return 0;
  if (op == kOutputOp) return vocab.size() + 1;
  return static_cast<std::size_t>(op) + 1;
}

SpacePtr make_space(std::string name, std::size_t max_nodes, std::size_t max_edges, std::vector<std::string> labels,
                    std::size_t node_feature_dim) {
  auto space = std::make_shared<SpaceDescriptor>();
  space->name = std::move(name);
  space->max_nodes = max_nodes;
  space->max_edges = max_edges;
  space->vocab = OpVocabulary(std::move(labels));
  space->node_feature_dim = node_feature_dim == 0 ? space->vocab.size() + 2 : node_feature_dim;
  if (max_nodes < 3) throw Error("SpaceDescriptor: max_nodes must be >= 3");
  if (max_edges < 1) throw Error("SpaceDescriptor: max_edges must be >= 1");
  if (space->node_feature_dim < space->vocab.size() + 2)
    throw Error("SpaceDescriptor: node_feature_dim smaller than vocabulary + 2");
  return space;
}

SpacePtr nasbench101_space() { return make_space("nasbench101", 7, 9, {"conv1x1", "conv3x3", "maxpool3x3"}, 6); }

SpacePtr nasbench201_space() {
  return make_space("nasbench201", 8, 10, {"conv1x1", "conv3x3", "avgpool3x3", "skip"}, 8);
}

SpacePtr surrogate_space(std::size_t nodes, std::size_t max_edges) {
  return make_space("surrogate" + std::to_string(nodes), nodes, max_edges, {"conv1x1", "conv3x3", "maxpool3x3"});
}

SpacePtr preset_space(const std::string& name) {
  if (name == "nasbench101") return nasbench101_space();
  if (name == "nasbench201") return nasbench201_space();
  if (name == "surrogate5") return surrogate_space(5, 9);
  if (name == "surrogate6") return surrogate_space(6, 9);
  throw Error("unknown space preset '" + name + "'");
}

nlohmann::json space_to_json(const SpaceDescriptor& space) {
  return {{"name", space.name},
          {"max_nodes", space.max_nodes},
          {"max_edges", space.max_edges},
          {"ops", space.vocab.labels()},
          {"node_feature_dim", space.node_feature_dim},
          {"prune_dangling", space.prune_dangling},
          {"path_cap", space.path_cap}};
}

SpacePtr space_from_json(const nlohmann::json& j) {
  try {
    auto base = make_space(j.at("name").get<std::string>(), j.at("max_nodes").get<std::size_t>(),
                           j.at("max_edges").get<std::size_t>(), j.at("ops").get<std::vector<std::string>>(),
                           j.value("node_feature_dim", std::size_t{0}));
    auto space = std::make_shared<SpaceDescriptor>(*base);
    space->prune_dangling = j.value("prune_dangling", true);
    space->path_cap = j.value("path_cap", std::size_t{256});
    return space;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("space descriptor: ") + e.what());
  }
}

Architecture::Architecture(SpacePtr space, std::vector<std::uint8_t> adjacency, std::vector<int> ops)
    : space_(std::move(space)), adjacency_(std::move(adjacency)), ops_(std::move(ops)) {
  if (!space_) throw Error("Architecture: null space");
  if (ops_.size() < 2) throw Error("Architecture: needs at least INPUT and OUTPUT nodes");
  if (adjacency_.size() != ops_.size() * ops_.size()) throw Error("Architecture: adjacency is not H x H");
  for (auto& a : adjacency_)
    if (a > 1) throw Error("Architecture: adjacency entries must be 0 or 1");
}

namespace {

std::vector<std::uint8_t> flatten(const std::vector<std::vector<int>>& matrix) {
  std::vector<std::uint8_t> flat;
  for (const auto& row : matrix) {
    if (row.size() != matrix.size()) throw Error("Architecture: adjacency is not square");
    for (int v : row) {
      if (v != 0 && v != 1) throw Error("Architecture: adjacency entries must be 0 or 1");
      flat.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return flat;
}

}  // namespace

Architecture::Architecture(SpacePtr space, const std::vector<std::vector<int>>& matrix, std::vector<int> ops)
    : Architecture(std::move(space), flatten(matrix), std::move(ops)) {}

std::size_t Architecture::edge_count() const {
  return static_cast<std::size_t>(std::count(adjacency_.begin(), adjacency_.end(), std::uint8_t{1}));
}

bool Architecture::operator==(const Architecture& other) const {
  return (space_ == other.space_ || *space_ == *other.space_) && ops_ == other.ops_ && adjacency_ == other.adjacency_;
}

namespace {

// on_path[v]: v reachable from INPUT and OUTPUT reachable from v.
std::vector<bool> nodes_on_paths(const Architecture& arch) {
  const std::size_t n = arch.node_count();
  std::vector<bool> fwd(n, false);
  std::vector<bool> bwd(n, false);
  fwd[0] = true;
  for (std::size_t i = 0; i < n; ++i)
    if (fwd[i])
      for (std::size_t j = i + 1; j < n; ++j)
        if (arch.edge(i, j)) fwd[j] = true;
  bwd[n - 1] = true;
  for (std::size_t j = n; j-- > 0;)
    if (bwd[j])
      for (std::size_t i = 0; i < j; ++i)
        if (arch.edge(i, j)) bwd[i] = true;
  std::vector<bool> on(n);
  for (std::size_t i = 0; i < n; ++i) on[i] = fwd[i] && bwd[i];
  return on;
}

}  // namespace

ValidityReport validate(const Architecture& arch) {
  const SpaceDescriptor& space = *arch.space();
  const std::size_t n = arch.node_count();
  auto fail = [](std::string reason) { return ValidityReport{false, std::move(reason), false}; };
  if (n > space.max_nodes) return fail("too many nodes");
  if (arch.op(0) != kInputOp) return fail("first node is not INPUT");
  if (arch.op(n - 1) != kOutputOp) return fail("last node is not OUTPUT");
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (arch.op(i) < 0 || static_cast<std::size_t>(arch.op(i)) >= space.vocab.size())
      return fail("interior label outside vocabulary");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (arch.edge(i, j)) return fail("not upper-triangular");
  if (arch.edge_count() > space.max_edges) return fail("edge budget exceeded");
  const auto on = nodes_on_paths(arch);
  if (!on[0]) return fail("no input-to-output path");
  ValidityReport report;
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (!on[i]) report.has_dangling = true;
  return report;
}

Architecture prune(const Architecture& arch) {
  const std::size_t n = arch.node_count();
  const auto on = nodes_on_paths(arch);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (i == 0 || i == n - 1 || on[i]) keep.push_back(i);
  if (keep.size() == n) return arch;
  const std::size_t m = keep.size();
  std::vector<std::uint8_t> adj(m * m, 0);
  std::vector<int> ops(m);
  for (std::size_t a = 0; a < m; ++a) {
    ops[a] = arch.op(keep[a]);
    for (std::size_t b = 0; b < m; ++b) adj[a * m + b] = arch.edge(keep[a], keep[b]) ? 1 : 0;
  }
  return Architecture(arch.space(), std::move(adj), std::move(ops));
}

Architecture random_architecture(const SpacePtr& space, Rng& rng, int max_attempts) {
  const std::size_t n = space->max_nodes;
  std::bernoulli_distribution coin(0.5);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::uint8_t> adj(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) adj[i * n + j] = coin(rng) ? 1 : 0;
    std::vector<int> ops(n);
    ops[0] = kInputOp;
    ops[n - 1] = kOutputOp;
    for (std::size_t i = 1; i + 1 < n; ++i) ops[i] = static_cast<int>(uniform_index(rng, space->vocab.size()));
    Architecture arch(space, std::move(adj), std::move(ops));
    if (space->prune_dangling) arch = prune(arch);
    if (validate(arch)) return arch;
  }
  throw Error("random_architecture: space too constrained");
}

namespace {

// Pads to max_nodes by inserting isolated interior nodes before OUTPUT.
Architecture expand(const Architecture& arch, Rng& rng) {
  const SpaceDescriptor& space = *arch.space();
  const std::size_t n = arch.node_count();
  const std::size_t m = space.max_nodes;
  if (n >= m) return arch;
  std::vector<std::uint8_t> adj(m * m, 0);
  std::vector<int> ops(m);
  auto map = [&](std::size_t i) { return i == n - 1 ? m - 1 : i; };
  for (std::size_t i = 0; i < n; ++i) {
    ops[map(i)] = arch.op(i);
    for (std::size_t j = 0; j < n; ++j)
      if (arch.edge(i, j)) adj[map(i) * m + map(j)] = 1;
  }
  for (std::size_t i = n - 1; i + 1 < m; ++i) ops[i] = static_cast<int>(uniform_index(rng, space.vocab.size()));
  return Architecture(arch.space(), std::move(adj), std::move(ops));
}

}  // namespace

Architecture mutate(const Architecture& arch, double rate, Rng& rng, int max_attempts) {
  const SpaceDescriptor& space = *arch.space();
  if (!validate(arch)) throw Error("mutate: input architecture is invalid");
  if (rate < 0.0) throw Error("mutate: negative rate");
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Architecture base = space.prune_dangling ? expand(arch, rng) : arch;
    const std::size_t n = base.node_count();
    std::vector<std::uint8_t> adj = base.adjacency();
    std::vector<int> ops = base.ops();
    const double potential = static_cast<double>(n * (n - 1) / 2);
    const double edge_p = std::min(1.0, rate / potential);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (uniform01(rng) < edge_p) adj[i * n + j] ^= 1;
    if (n > 2 && space.vocab.size() > 1) {
      const double op_p = std::min(1.0, rate / static_cast<double>(n - 2));
      for (std::size_t i = 1; i + 1 < n; ++i) {
        if (uniform01(rng) >= op_p) continue;
        // Uniform over the other labels.
        int pick = static_cast<int>(uniform_index(rng, space.vocab.size() - 1));
        if (pick >= ops[i]) ++pick;
        ops[i] = pick;
      }
    }
    Architecture child(arch.space(), std::move(adj), std::move(ops));
    if (space.prune_dangling) child = prune(child);
    if (validate(child)) return child;
  }
  throw Error("mutate: no valid child within attempt budget");
}

std::vector<Path> enumerate_paths(const Architecture& arch, std::size_t cap) {
  const std::size_t limit = cap == 0 ? arch.space()->path_cap : cap;
  const std::size_t n = arch.node_count();
  std::vector<Path> paths;
  std::vector<std::size_t> stack;
  auto dfs = [&](auto&& self, std::size_t v) -> void {
    for (std::size_t w = v + 1; w < n; ++w) {
      if (!arch.edge(v, w)) continue;
      if (w == n - 1) {
        if (paths.size() >= limit) throw Error("path explosion: more than " + std::to_string(limit) + " paths");
        Path p;
        p.node_indices = stack;
        for (std::size_t idx : stack) p.ops.push_back(arch.op(idx));
        paths.push_back(std::move(p));
      } else {
        stack.push_back(w);
        self(self, w);
        stack.pop_back();
      }
    }
  };
  dfs(dfs, 0);
  return paths;
}

std::string op_name(const SpaceDescriptor& space, int op) {
  if (op == kInputOp) return "input";
  if (op == kOutputOp) return "output";
  return space.vocab.label(op);
}

int op_from_name(const SpaceDescriptor& space, std::string_view name) {
  if (name == "input") return kInputOp;
  if (name == "output") return kOutputOp;
  if (auto idx = space.vocab.index_of(name)) return *idx;
  throw Error("unknown operation '" + std::string(name) + "' for space " + space.name);
}

nlohmann::json to_json(const Architecture& arch) {
  const std::size_t n = arch.node_count();
  nlohmann::json matrix = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < n; ++j) row.push_back(arch.edge(i, j) ? 1 : 0);
    matrix.push_back(std::move(row));
  }
  nlohmann::json ops = nlohmann::json::array();
  for (int op : arch.ops()) ops.push_back(op_name(*arch.space(), op));
  return {{"matrix", std::move(matrix)}, {"ops", std::move(ops)}};
}

Architecture architecture_from_json(const nlohmann::json& j, const SpacePtr& space) {
  try {
    auto matrix = j.at("matrix").get<std::vector<std::vector<int>>>();
    std::vector<int> ops;
    for (const auto& name : j.at("ops")) ops.push_back(op_from_name(*space, name.get<std::string>()));
    if (ops.size() != matrix.size()) throw Error("architecture: matrix and ops sizes differ");
    return Architecture(space, matrix, std::move(ops));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("architecture: ") + e.what());
  }
}

}  // namespace ssnas::archspace
