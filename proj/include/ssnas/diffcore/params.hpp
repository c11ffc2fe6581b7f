#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssnas/diffcore/matrix.hpp"

namespace ssnas::diffcore {

struct Parameter {
  Matrix value;
  Matrix grad;
  // Adam first and second moments.
  Matrix m;
  Matrix v;
};

// Named trainable arrays, batch-norm running statistics and optimizer state
// for one model. Names are hierarchical ("embed.gin0.weight").
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Matrix& add_buffer(const std::string& name, Matrix init);

  bool has(const std::string& name) const { return params_.contains(name); }
  bool has_buffer(const std::string& name) const { return buffers_.contains(name); }

  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  Matrix& buffer(const std::string& name);
  const Matrix& buffer(const std::string& name) const;

  const std::map<std::string, Parameter>& params() const { return params_; }
  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Matrix>& buffers() const { return buffers_; }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  void zero_grad();
  std::size_t parameter_count() const;

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

 private:
  std::map<std::string, Parameter> params_;
  std::map<std::string, Matrix> buffers_;
  std::int64_t step_ = 0;
};

// FNV-1a over names, shapes and the raw bytes of values and buffers whose
// name starts with `prefix` (prefix itself excluded from the hash).
std::uint64_t checksum(const ParameterStore& store, const std::string& prefix = "");

// Copies every parameter and buffer under `from_prefix` in `src` to the same
// suffix under `to_prefix` in `dst`. Shapes must match existing entries in
// dst. Returns the number of arrays copied.
std::size_t copy_prefixed(const ParameterStore& src, const std::string& from_prefix,
                          ParameterStore& dst, const std::string& to_prefix);

}  // namespace ssnas::diffcore
