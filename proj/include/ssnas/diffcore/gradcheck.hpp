#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ssnas/diffcore/ops.hpp"

namespace ssnas::diffcore {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  // Coordinates within step / 4^8 of a branch point of a piecewise op.
  std::size_t skipped = 0;
};

// Builds the function under test on a fresh tape from the given leaves.
// Non-scalar outputs are reduced with a fixed pseudo-random weighting so
// every output coordinate contributes to the checked gradient.
using Fragment = std::function<Var(Tape&, std::span<const Var>)>;

// Compares reverse-mode gradients w.r.t. every input coordinate with
// Richardson-extrapolated central differences. The step shrinks until the
// probes stay on the same side of every ReLU branch as the base point.
// Relative error is |a - n| / max(|a|, |n|, floor). Throws on non-finite values.
GradCheckReport grad_check(const Fragment& fragment, const std::vector<Matrix>& inputs, double step = 1e-3,
                           double floor = 1e-6);

// Same comparison for every parameter in `store`, with `loss` building a
// scalar from tape.parameter(store, ...) leaves. Buffers are restored after
// each evaluation so training-mode statistics do not drift during probing.
GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss, ParameterStore& store,
                                  double step = 1e-3, double floor = 1e-6);

}  // namespace ssnas::diffcore
