#include "ssnas/diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>

#include "ssnas/common/error.hpp"

namespace ssnas::diffcore {

namespace {

Matrix reduction_weights(std::size_t rows, std::size_t cols) {
  Matrix w(rows, cols);
  // Deterministic weights in [0.5, 1.5); avoids accidental cancellation.
  std::uint64_t x = 0x9E3779B97F4A7C15ULL;
  for (double& v : w.data()) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    v = 0.5 + static_cast<double>(x % 1000003) / 1000003.0;
  }
  return w;
}

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const Fragment& fragment, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(tape.constant(m));
  Var out = fragment(tape, leaves);
  const Matrix& v = out.value();
  if (v.size() == 1) return {v[0], tape.branch_signature()};
  const Matrix w = reduction_weights(v.rows(), v.cols());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
  return {s, tape.branch_signature()};
}

constexpr int kMaxShrinks = 8;

// Richardson-extrapolated central difference of f at `orig`. The step is cut
// by 4 whenever a probe leaves the smooth piece containing `orig`; returns
// nullopt when no step down to step / 4^kMaxShrinks stays inside it.
std::optional<double> numeric_derivative(const std::function<Probe(double)>& f, double orig, double step) {
  const std::uint64_t base = f(orig).signature;
  double h = step;
  for (int attempt = 0; attempt <= kMaxShrinks; ++attempt, h /= 4.0) {
    const Probe p1 = f(orig + h), m1 = f(orig - h), p2 = f(orig + h / 2), m2 = f(orig - h / 2);
    if (p1.signature != base || m1.signature != base || p2.signature != base || m2.signature != base) continue;
    const double coarse = (p1.value - m1.value) / (2.0 * h);
    const double fine = (p2.value - m2.value) / h;
    return (4.0 * fine - coarse) / 3.0;
  }
  return std::nullopt;
}

void compare(GradCheckReport& report, double analytic, std::optional<double> numeric, double floor) {
  if (!numeric) {
    ++report.skipped;
    return;
  }
  if (!std::isfinite(*numeric) || !std::isfinite(analytic)) throw Error("grad_check: non-finite gradient");
  const double abs_err = std::abs(analytic - *numeric);
  report.max_abs_error = std::max(report.max_abs_error, abs_err);
  report.max_rel_error = std::max(report.max_rel_error, abs_err / std::max({std::abs(analytic), std::abs(*numeric), floor}));
  ++report.coordinates;
}

}  // namespace

GradCheckReport grad_check(const Fragment& fragment, const std::vector<Matrix>& inputs, double step, double floor) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(tape.variable(m));
  Var out = fragment(tape, leaves);
  for (double v : out.value().data())
    if (!std::isfinite(v)) throw Error("grad_check: non-finite forward value");
  Var root = out;
  if (out.value().size() != 1) {
    Var w = tape.constant(reduction_weights(out.rows(), out.cols()));
    root = sum(hadamard(out, w));
  }
  tape.backward(root);

  GradCheckReport report;
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = tape.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = probe[k][i];
      auto f = [&](double x) {
        probe[k][i] = x;
        const Probe p = evaluate(fragment, probe);
        probe[k][i] = orig;
        return p;
      };
      compare(report, analytic[i], numeric_derivative(f, orig, step), floor);
    }
  }
  return report;
}

GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss, ParameterStore& store, double step,
                                  double floor) {
  std::map<std::string, Matrix> saved_buffers;
  for (const auto& [name, b] : store.buffers()) saved_buffers.emplace(name, b);
  auto restore = [&] {
    for (auto& [name, b] : saved_buffers) store.buffer(name) = b;
  };
  auto eval = [&] {
    Tape t;
    const double v = loss(t).scalar();
    restore();
    return Probe{v, t.branch_signature()};
  };

  store.zero_grad();
  {
    Tape tape;
    Var root = loss(tape);
    if (!std::isfinite(root.scalar())) throw Error("grad_check_params: non-finite loss");
    tape.backward(root);
  }
  restore();

  GradCheckReport report;
  for (auto& [name, p] : store.params()) {
    const Matrix analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      auto f = [&](double x) {
        p.value[i] = x;
        const Probe r = eval();
        p.value[i] = orig;
        return r;
      };
      compare(report, analytic[i], numeric_derivative(f, orig, step), floor);
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace ssnas::diffcore
