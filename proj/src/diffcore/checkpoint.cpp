#include "ssnas/diffcore/checkpoint.hpp"

#include <fstream>

#include "ssnas/common/error.hpp"

namespace ssnas::diffcore {

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto& data = j.at("data");
  if (data.size() != m.size()) throw Error("checkpoint: array size does not match shape");
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = data[i].get<double>();
  return m;
}

}  // namespace

nlohmann::json checkpoint_to_json(const ParameterStore& store, const nlohmann::json& metadata) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["metadata"] = metadata;
  doc["params"] = nlohmann::json::object();
  doc["buffers"] = nlohmann::json::object();
  for (const auto& [name, p] : store.params()) doc["params"][name] = matrix_to_json(p.value);
  for (const auto& [name, b] : store.buffers()) doc["buffers"][name] = matrix_to_json(b);
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.contains("format_version") || doc.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw Error("checkpoint: unsupported format_version");
  Checkpoint ck;
  ck.metadata = doc.value("metadata", nlohmann::json::object());
  for (const auto& [name, j] : doc.at("params").items()) ck.store.add(name, matrix_from_json(j));
  for (const auto& [name, j] : doc.at("buffers").items()) ck.store.add_buffer(name, matrix_from_json(j));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const nlohmann::json& metadata) {
  std::ofstream out(path);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out << checkpoint_to_json(store, metadata).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint: cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint: malformed JSON in " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace ssnas::diffcore
