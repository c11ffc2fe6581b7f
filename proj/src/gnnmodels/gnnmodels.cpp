#include "ssnas/gnnmodels/gnnmodels.hpp"

#include <algorithm>
#include <cmath>

#include "ssnas/common/error.hpp"

namespace ssnas::gnnmodels {

using archspace::Architecture;

GraphBatch to_graph_batch(std::span<const Architecture* const> archs, bool bidirectional) {
  if (archs.empty()) throw Error("to_graph_batch: empty architecture list");
  const archspace::SpaceDescriptor& space = *archs.front()->space();
  std::size_t total = 0;
  for (const Architecture* a : archs) {
    if (a->space() != archs.front()->space() && !(*a->space() == space))
      throw Error("to_graph_batch: architectures come from different spaces");
    total += a->node_count();
  }
  GraphBatch batch;
  batch.graph_count = archs.size();
  batch.node_features = Matrix(total, space.node_feature_dim);
  batch.membership.reserve(total);
  batch.offsets.reserve(archs.size() + 1);
  std::size_t base = 0;
  for (std::size_t g = 0; g < archs.size(); ++g) {
    const Architecture& a = *archs[g];
    const std::size_t n = a.node_count();
    batch.offsets.push_back(base);
    for (std::size_t v = 0; v < n; ++v) {
      batch.node_features(base + v, space.feature_index(a.op(v))) = 1.0;
      batch.membership.push_back(g);
      for (std::size_t w = v + 1; w < n; ++w) {
        if (!a.edge(v, w)) continue;
        batch.edges.emplace_back(base + v, base + w);
        if (bidirectional) batch.edges.emplace_back(base + w, base + v);
      }
    }
    base += n;
  }
  batch.offsets.push_back(base);
  return batch;
}

GraphBatch to_graph_batch(std::span<const Architecture> archs, bool bidirectional) {
  std::vector<const Architecture*> ptrs;
  ptrs.reserve(archs.size());
  for (const Architecture& a : archs) ptrs.push_back(&a);
  return to_graph_batch(std::span<const Architecture* const>(ptrs), bidirectional);
}

EmbeddingConfig embedding_config_for(const archspace::SpaceDescriptor& space) {
  EmbeddingConfig c;
  c.input_dim = space.node_feature_dim;
  return c;
}

void init_dense(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(in, out);
  for (double& v : w.data()) v = dist(rng);
  Matrix b(1, out);
  for (double& v : b.data()) v = dist(rng);
  store.add(prefix + "weight", std::move(w));
  store.add(prefix + "bias", std::move(b));
}

Var dense(Tape& tape, ParameterStore& store, const std::string& prefix, Var x) {
  Var w = tape.parameter(store, prefix + "weight");
  Var b = tape.parameter(store, prefix + "bias");
  return diffcore::add_row(diffcore::matmul(x, w), b);
}

void init_embedding(ParameterStore& store, const std::string& prefix, const EmbeddingConfig& config, Rng& rng) {
  if (config.input_dim == 0 || config.hidden == 0 || config.layers == 0)
    throw Error("init_embedding: zero-sized configuration");
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string layer = std::to_string(l);
    init_dense(store, prefix + "gin" + layer + ".", l == 0 ? config.input_dim : config.hidden, config.hidden, rng);
    store.add(prefix + "bn" + layer + ".gamma", Matrix(1, config.hidden, 1.0));
    store.add(prefix + "bn" + layer + ".beta", Matrix(1, config.hidden, 0.0));
    store.add_buffer(prefix + "bn" + layer + ".running_mean", Matrix(1, config.hidden, 0.0));
    store.add_buffer(prefix + "bn" + layer + ".running_var", Matrix(1, config.hidden, 1.0));
  }
}

Var gin_layer_forward(Tape& tape, Var h, const GraphBatch& batch, ParameterStore& store, const std::string& prefix,
                      std::size_t layer, Mode mode) {
  const std::string l = std::to_string(layer);
  Var aggregated = diffcore::neighbor_sum(h, batch.edges);
  Var z = dense(tape, store, prefix + "gin" + l + ".", aggregated);
  diffcore::BatchNormState bn{&store.buffer(prefix + "bn" + l + ".running_mean"),
                              &store.buffer(prefix + "bn" + l + ".running_var")};
  Var normed = diffcore::batch_norm(z, tape.parameter(store, prefix + "bn" + l + ".gamma"),
                                    tape.parameter(store, prefix + "bn" + l + ".beta"), bn, mode);
  return diffcore::relu(normed);
}

Var embed(Tape& tape, ParameterStore& store, const std::string& prefix, const EmbeddingConfig& config,
          const GraphBatch& batch, Mode mode) {
  if (batch.node_features.cols() != config.input_dim) throw Error("embed: node feature width mismatch");
  Var h = tape.constant(batch.node_features);
  for (std::size_t l = 0; l < config.layers; ++l) h = gin_layer_forward(tape, h, batch, store, prefix, l, mode);
  return diffcore::segment_mean(h, batch.membership, batch.graph_count);
}

ModelFrl make_frl(const EmbeddingConfig& embedding, Rng& rng, std::size_t head_hidden) {
  ModelFrl m;
  m.embedding = embedding;
  m.head_hidden = head_hidden;
  init_embedding(m.store, kFrlBranchPrefix[0], embedding, rng);
  init_embedding(m.store, kFrlBranchPrefix[1], embedding, rng);
  init_dense(m.store, "head.fc0.", 2 * embedding.hidden, head_hidden, rng);
  init_dense(m.store, "head.fc1.", head_hidden, 1, rng);
  return m;
}

ModelFccl make_fccl(const EmbeddingConfig& embedding, Rng& rng, std::size_t projection) {
  ModelFccl m;
  m.embedding = embedding;
  m.projection = projection;
  init_embedding(m.store, kEmbedPrefix, embedding, rng);
  init_dense(m.store, "proj.fc0.", embedding.hidden, projection, rng);
  init_dense(m.store, "proj.fc1.", projection, projection, rng);
  return m;
}

Predictor make_predictor(const EmbeddingConfig& embedding, Rng& rng, std::size_t head_hidden) {
  Predictor p;
  p.embedding = embedding;
  p.head_hidden = head_hidden;
  init_embedding(p.store, kEmbedPrefix, embedding, rng);
  init_dense(p.store, "head.fc0.", embedding.hidden, head_hidden, rng);
  init_dense(p.store, "head.fc1.", head_hidden, 1, rng);
  return p;
}

Var frl_forward(Tape& tape, ModelFrl& model, const GraphBatch& left, const GraphBatch& right, Mode mode) {
  if (left.graph_count != right.graph_count) throw Error("frl_forward: pair sides differ in size");
  Var a = embed(tape, model.store, kFrlBranchPrefix[0], model.embedding, left, mode);
  Var b = embed(tape, model.store, kFrlBranchPrefix[1], model.embedding, right, mode);
  Var h = diffcore::relu(dense(tape, model.store, "head.fc0.", diffcore::concat_cols(a, b)));
  return dense(tape, model.store, "head.fc1.", h);
}

Var fccl_forward(Tape& tape, ModelFccl& model, const GraphBatch& batch, Mode mode) {
  Var e = embed(tape, model.store, kEmbedPrefix, model.embedding, batch, mode);
  Var h = diffcore::relu(dense(tape, model.store, "proj.fc0.", e));
  return dense(tape, model.store, "proj.fc1.", h);
}

Var predictor_forward(Tape& tape, Predictor& predictor, const GraphBatch& batch, Mode mode) {
  Var e = embed(tape, predictor.store, kEmbedPrefix, predictor.embedding, batch, mode);
  Var h = diffcore::relu(dense(tape, predictor.store, "head.fc0.", e));
  return dense(tape, predictor.store, "head.fc1.", h);
}

std::vector<double> predict(Predictor& predictor, std::span<const Architecture> archs, std::size_t chunk) {
  std::vector<double> out;
  out.reserve(archs.size());
  for (std::size_t start = 0; start < archs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, archs.size() - start);
    GraphBatch batch = to_graph_batch(archs.subspan(start, n), predictor.embedding.bidirectional);
    Tape tape;
    Var y = predictor_forward(tape, predictor, batch, Mode::eval);
    for (std::size_t i = 0; i < n; ++i) out.push_back(y.value()[i]);
  }
  return out;
}

std::uint64_t load_pretrained_embedding(Predictor& predictor, const ParameterStore& source,
                                        const std::string& source_prefix) {
  const std::size_t expected =
      predictor.store.names_with_prefix(kEmbedPrefix).size() +
      static_cast<std::size_t>(std::count_if(predictor.store.buffers().begin(), predictor.store.buffers().end(),
                                             [](const auto& kv) { return kv.first.starts_with(kEmbedPrefix); }));
  const std::size_t copied = diffcore::copy_prefixed(source, source_prefix, predictor.store, kEmbedPrefix);
  if (copied != expected)
    throw Error("load_pretrained_embedding: source provides " + std::to_string(copied) + " of " +
                std::to_string(expected) + " embedding arrays");
  const std::uint64_t src_sum = diffcore::checksum(source, source_prefix);
  const std::uint64_t dst_sum = diffcore::checksum(predictor.store, kEmbedPrefix);
  if (src_sum != dst_sum) throw Error("load_pretrained_embedding: checksum mismatch after transfer");
  return dst_sum;
}

namespace {

nlohmann::json embedding_json(const EmbeddingConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"layers", c.layers}, {"bidirectional", c.bidirectional}};
}

}  // namespace

nlohmann::json metadata(const ModelFrl& model) {
  return {{"kind", "frl"}, {"embedding", embedding_json(model.embedding)}, {"head_hidden", model.head_hidden}};
}

nlohmann::json metadata(const ModelFccl& model) {
  return {{"kind", "fccl"}, {"embedding", embedding_json(model.embedding)}, {"projection", model.projection}};
}

nlohmann::json metadata(const Predictor& predictor) {
  return {{"kind", "predictor"},
          {"embedding", embedding_json(predictor.embedding)},
          {"head_hidden", predictor.head_hidden}};
}

EmbeddingConfig embedding_config_from_metadata(const nlohmann::json& meta) {
  try {
    const auto& e = meta.at("embedding");
    EmbeddingConfig c;
    c.input_dim = e.at("input_dim").get<std::size_t>();
    c.hidden = e.at("hidden").get<std::size_t>();
    c.layers = e.at("layers").get<std::size_t>();
    c.bidirectional = e.value("bidirectional", false);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint metadata: ") + e.what());
  }
}

std::string embedding_prefix_for(const nlohmann::json& meta) {
  const std::string kind = meta.value("kind", "");
  if (kind == "frl") return kFrlBranchPrefix[0];
  if (kind == "fccl" || kind == "predictor") return kEmbedPrefix;
  throw Error("checkpoint metadata: unknown model kind '" + kind + "'");
}

}  // namespace ssnas::gnnmodels
