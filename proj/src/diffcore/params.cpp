#include "ssnas/diffcore/params.hpp"

#include <bit>
#include <cstring>

#include "ssnas/common/error.hpp"

namespace ssnas::diffcore {

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (params_.contains(name)) throw Error("ParameterStore: duplicate parameter '" + name + "'");
  Parameter p;
  p.grad = Matrix(init.rows(), init.cols());
  p.m = Matrix(init.rows(), init.cols());
  p.v = Matrix(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Matrix& ParameterStore::add_buffer(const std::string& name, Matrix init) {
  if (buffers_.contains(name)) throw Error("ParameterStore: duplicate buffer '" + name + "'");
  return buffers_.emplace(name, std::move(init)).first->second;
}

Parameter& ParameterStore::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("ParameterStore: unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("ParameterStore: unknown parameter '" + name + "'");
  return it->second;
}

Matrix& ParameterStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw Error("ParameterStore: unknown buffer '" + name + "'");
  return it->second;
}

const Matrix& ParameterStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw Error("ParameterStore: unknown buffer '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_)
    if (name.starts_with(prefix)) out.push_back(name);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad.empty()) p.grad = Matrix(p.value.rows(), p.value.cols());
    else p.grad.fill(0.0);
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_array(std::uint64_t& h, const std::string& suffix, const Matrix& m) {
  fnv(h, suffix.data(), suffix.size());
  const std::uint64_t shape[2] = {m.rows(), m.cols()};
  fnv(h, shape, sizeof(shape));
  fnv(h, m.data().data(), m.size() * sizeof(double));
}

}  // namespace

std::uint64_t checksum(const ParameterStore& store, const std::string& prefix) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, p] : store.params())
    if (name.starts_with(prefix)) fnv_array(h, name.substr(prefix.size()), p.value);
  for (const auto& [name, b] : store.buffers())
    if (name.starts_with(prefix)) fnv_array(h, name.substr(prefix.size()), b);
  return h;
}

std::size_t copy_prefixed(const ParameterStore& src, const std::string& from_prefix, ParameterStore& dst,
                          const std::string& to_prefix) {
  std::size_t copied = 0;
  for (const auto& [name, p] : src.params()) {
    if (!name.starts_with(from_prefix)) continue;
    Parameter& target = dst.param(to_prefix + name.substr(from_prefix.size()));
    if (!target.value.same_shape(p.value)) throw Error("copy_prefixed: shape mismatch for '" + name + "'");
    target.value = p.value;
    ++copied;
  }
  for (const auto& [name, b] : src.buffers()) {
    if (!name.starts_with(from_prefix)) continue;
    Matrix& target = dst.buffer(to_prefix + name.substr(from_prefix.size()));
    if (!target.same_shape(b)) throw Error("copy_prefixed: shape mismatch for '" + name + "'");
    target = b;
    ++copied;
  }
  return copied;
}

}  // namespace ssnas::diffcore
