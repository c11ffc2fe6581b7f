#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssnas/archspace/archspace.hpp"

namespace ssnas::encoding {

using Bits = std::vector<std::uint8_t>;

// One (max_nodes - 2) x |vocab| block per input-to-output path: the slot of
// interior node v holds the one-hot of v's operation when v is on the path.
// Paths are ordered by length, then by their node-index sequence.
struct PositionAwareEncoding {
  std::vector<Bits> per_path;
  Bits concat;
  std::size_t path_count = 0;
  std::size_t slot_width = 0;
};

// One bit per operation sequence of length 0..max_nodes-2.
struct PathBasedEncoding {
  Bits bits;
  bool operator==(const PathBasedEncoding&) const = default;
};

// Row-major strict upper triangle of the max_nodes x max_nodes adjacency
// followed by per-node one-hot features. Smaller graphs keep OUTPUT in the
// last slot; unused slots are zero.
struct AdjacencyEncoding {
  Bits bits;
  bool operator==(const AdjacencyEncoding&) const = default;
};

std::size_t slot_width(const archspace::SpaceDescriptor& space);
std::size_t path_based_length(const archspace::SpaceDescriptor& space);
std::size_t adjacency_length(const archspace::SpaceDescriptor& space);

PositionAwareEncoding encode_position_aware(const archspace::Architecture& arch);
PathBasedEncoding encode_path_based(const archspace::Architecture& arch);
AdjacencyEncoding encode_adjacency(const archspace::Architecture& arch);

// L1 distance after zero-padding the shorter vector at the end.
std::size_t padded_l1(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// Graph edit distance proxy: padded L1 between position-aware encodings.
// Throws when the architectures come from different spaces.
std::size_t ged(const archspace::Architecture& a, const archspace::Architecture& b);

// exp(-ged / node_count)
double nged(std::size_t ged_value, std::size_t node_count);
// Uses max(|V_a|, |V_b|) for the node count.
double nged(const archspace::Architecture& a, const archspace::Architecture& b);

// Hashable identity of an architecture: its concat encoding as a string.
// The concat length fixes the path count, so equal keys mean equal
// (path_count, concat).
std::string encoding_key(const PositionAwareEncoding& enc);
std::string encoding_key(const archspace::Architecture& arch);

// Keeps the first architecture per distinct position-aware encoding, in order.
std::vector<archspace::Architecture> dedupe(std::span<const archspace::Architecture> archs);

}  // namespace ssnas::encoding
