#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ssnas/archspace/archspace.hpp"
#include "ssnas/common/rng.hpp"
#include "ssnas/diffcore/checkpoint.hpp"
#include "ssnas/diffcore/ops.hpp"
#include "ssnas/diffcore/params.hpp"

namespace ssnas::gnnmodels {

using diffcore::Matrix;
using diffcore::Mode;
using diffcore::ParameterStore;
using diffcore::Tape;
using diffcore::Var;

// Block-diagonal batch of architectures. Node rows of graph g occupy
// [offsets[g], offsets[g + 1]).
struct GraphBatch {
  Matrix node_features;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> membership;
  std::vector<std::size_t> offsets;
  std::size_t graph_count = 0;
};

// Edges follow the stored INPUT -> OUTPUT direction; `bidirectional` adds
// the reversed edges as well. Throws on an empty list or mixed spaces.
GraphBatch to_graph_batch(std::span<const archspace::Architecture> archs, bool bidirectional = false);
GraphBatch to_graph_batch(std::span<const archspace::Architecture* const> archs, bool bidirectional = false);

struct EmbeddingConfig {
  std::size_t input_dim = 0;
  std::size_t hidden = 32;
  std::size_t layers = 3;
  bool bidirectional = false;

  bool operator==(const EmbeddingConfig&) const = default;
};

EmbeddingConfig embedding_config_for(const archspace::SpaceDescriptor& space);

// Dense layer parameters "<prefix>weight" (in x out) and "<prefix>bias"
// (1 x out), both U(-1/sqrt(in), 1/sqrt(in)).
void init_dense(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
Var dense(Tape& tape, ParameterStore& store, const std::string& prefix, Var x);

// Registers gin{i}.weight/bias and bn{i}.gamma/beta/running_mean/running_var.
void init_embedding(ParameterStore& store, const std::string& prefix, const EmbeddingConfig& config, Rng& rng);

// ReLU(BN(Dense(h_v + sum_{u -> v} h_u))) with GIN epsilon fixed at 0.
Var gin_layer_forward(Tape& tape, Var h, const GraphBatch& batch, ParameterStore& store,
                      const std::string& prefix, std::size_t layer, Mode mode);

// Stacked GIN layers then per-graph mean of the final node features.
Var embed(Tape& tape, ParameterStore& store, const std::string& prefix, const EmbeddingConfig& config,
          const GraphBatch& batch, Mode mode);

// Two independent embedding branches, concatenated, FC(16) + ReLU + FC(1).
struct ModelFrl {
  EmbeddingConfig embedding;
  std::size_t head_hidden = 16;
  ParameterStore store;
};

// Embedding, FC(8) + ReLU + FC(8) projection.
struct ModelFccl {
  EmbeddingConfig embedding;
  std::size_t projection = 8;
  ParameterStore store;
};

// Embedding, FC(8) + ReLU + FC(1) regression head.
struct Predictor {
  EmbeddingConfig embedding;
  std::size_t head_hidden = 8;
  ParameterStore store;
};

inline const std::string kFrlBranchPrefix[2] = {"branch0.", "branch1."};
inline const std::string kEmbedPrefix = "embed.";

ModelFrl make_frl(const EmbeddingConfig& embedding, Rng& rng, std::size_t head_hidden = 16);
ModelFccl make_fccl(const EmbeddingConfig& embedding, Rng& rng, std::size_t projection = 8);
Predictor make_predictor(const EmbeddingConfig& embedding, Rng& rng, std::size_t head_hidden = 8);

// Predicted nGED per pair (pairs x 1). left and right must hold the same
// number of graphs.
Var frl_forward(Tape& tape, ModelFrl& model, const GraphBatch& left, const GraphBatch& right, Mode mode);
// Projection per graph (graphs x projection), not normalised.
Var fccl_forward(Tape& tape, ModelFccl& model, const GraphBatch& batch, Mode mode);
// Predicted metric per graph (graphs x 1).
Var predictor_forward(Tape& tape, Predictor& predictor, const GraphBatch& batch, Mode mode);

// Eval-mode predictions in chunks of `chunk` graphs.
std::vector<double> predict(Predictor& predictor, std::span<const archspace::Architecture> archs,
                            std::size_t chunk = 256);

// Copies the embedding module of a pretrained store (ModelFrl branch 0 or
// ModelFccl) into the predictor. Verifies the transferred arrays by checksum
// and returns it.
std::uint64_t load_pretrained_embedding(Predictor& predictor, const ParameterStore& source,
                                        const std::string& source_prefix);

// Checkpoint metadata {"kind": "frl"|"fccl"|"predictor", embedding widths}.
nlohmann::json metadata(const ModelFrl& model);
nlohmann::json metadata(const ModelFccl& model);
nlohmann::json metadata(const Predictor& predictor);
EmbeddingConfig embedding_config_from_metadata(const nlohmann::json& meta);
// "branch0." for frl checkpoints, "embed." otherwise.
std::string embedding_prefix_for(const nlohmann::json& meta);

}  // namespace ssnas::gnnmodels
