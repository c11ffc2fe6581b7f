#include "ssnas/encoding/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ssnas/common/error.hpp"

namespace ssnas::encoding {

using archspace::Architecture;
using archspace::Path;
using archspace::SpaceDescriptor;

std::size_t slot_width(const SpaceDescriptor& space) { return (space.max_nodes - 2) * space.vocab.size(); }

std::size_t path_based_length(const SpaceDescriptor& space) {
  std::size_t total = 0;
  std::size_t block = 1;
  for (std::size_t len = 0; len + 2 <= space.max_nodes; ++len) {
    total += block;
    block *= space.vocab.size();
  }
  return total;
}

std::size_t adjacency_length(const SpaceDescriptor& space) {
  return space.max_nodes * (space.max_nodes - 1) / 2 + space.max_nodes * space.node_feature_dim;
}

PositionAwareEncoding encode_position_aware(const Architecture& arch) {
  const SpaceDescriptor& space = *arch.space();
  std::vector<Path> paths = archspace::enumerate_paths(arch);
  std::sort(paths.begin(), paths.end(), [](const Path& a, const Path& b) {
    if (a.node_indices.size() != b.node_indices.size()) return a.node_indices.size() < b.node_indices.size();
    return a.node_indices < b.node_indices;
  });
  PositionAwareEncoding enc;
  enc.slot_width = slot_width(space);
  enc.path_count = paths.size();
  const std::size_t v = space.vocab.size();
  enc.concat.reserve(paths.size() * enc.slot_width);
  for (const Path& p : paths) {
    Bits bits(enc.slot_width, 0);
    for (std::size_t k = 0; k < p.node_indices.size(); ++k)
      bits[(p.node_indices[k] - 1) * v + static_cast<std::size_t>(p.ops[k])] = 1;
    enc.concat.insert(enc.concat.end(), bits.begin(), bits.end());
    enc.per_path.push_back(std::move(bits));
  }
  return enc;
}

PathBasedEncoding encode_path_based(const Architecture& arch) {
  const SpaceDescriptor& space = *arch.space();
  const std::size_t v = space.vocab.size();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  std::size_t block = 1;
  for (std::size_t len = 0; len + 2 <= space.max_nodes; ++len) {
    offsets.push_back(total);
    total += block;
    block *= v;
  }
  PathBasedEncoding enc;
  enc.bits.assign(total, 0);
  for (const Path& p : archspace::enumerate_paths(arch)) {
    std::size_t idx = 0;
    for (int op : p.ops) idx = idx * v + static_cast<std::size_t>(op);
    enc.bits[offsets[p.ops.size()] + idx] = 1;
  }
  return enc;
}

AdjacencyEncoding encode_adjacency(const Architecture& arch) {
  const SpaceDescriptor& space = *arch.space();
  const std::size_t m = space.max_nodes;
  const std::size_t n = arch.node_count();
  auto slot = [&](std::size_t i) { return i == n - 1 ? m - 1 : i; };
  std::vector<std::uint8_t> padded(m * m, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (arch.edge(i, j)) padded[slot(i) * m + slot(j)] = 1;
  AdjacencyEncoding enc;
  enc.bits.reserve(adjacency_length(space));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) enc.bits.push_back(padded[i * m + j]);
  const std::size_t features_at = enc.bits.size();
  enc.bits.resize(adjacency_length(space), 0);
  for (std::size_t i = 0; i < n; ++i)
    enc.bits[features_at + slot(i) * space.node_feature_dim + space.feature_index(arch.op(i))] = 1;
  return enc;
}

std::size_t padded_l1(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::size_t d = 0;
  for (std::size_t k = 0; k < b.size(); ++k) d += a[k] != b[k] ? 1 : 0;
  for (std::size_t k = b.size(); k < a.size(); ++k) d += a[k];
  return d;
}

namespace {

void require_same_space(const Architecture& a, const Architecture& b) {
  if (a.space() != b.space() && !(*a.space() == *b.space()))
    throw Error("ged: architectures come from different spaces");
}

}  // namespace

std::size_t ged(const Architecture& a, const Architecture& b) {
  require_same_space(a, b);
  return padded_l1(encode_position_aware(a).concat, encode_position_aware(b).concat);
}

double nged(std::size_t ged_value, std::size_t node_count) {
  if (node_count == 0) throw Error("nged: zero node count");
  return std::exp(-static_cast<double>(ged_value) / static_cast<double>(node_count));
}

double nged(const Architecture& a, const Architecture& b) {
  return nged(ged(a, b), std::max(a.node_count(), b.node_count()));
}

std::string encoding_key(const PositionAwareEncoding& enc) {
  std::string key;
  key.reserve(enc.concat.size());
  for (std::uint8_t bit : enc.concat) key.push_back(bit ? '1' : '0');
  return key;
}

std::string encoding_key(const Architecture& arch) { return encoding_key(encode_position_aware(arch)); }

std::vector<Architecture> dedupe(std::span<const Architecture> archs) {
  std::vector<Architecture> out;
  std::unordered_set<std::string> seen;
  for (const Architecture& a : archs) {
    if (!out.empty()) require_same_space(out.front(), a);
    if (seen.insert(encoding_key(a)).second) out.push_back(a);
  }
  return out;
}

}  // namespace ssnas::encoding
