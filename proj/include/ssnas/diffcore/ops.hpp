#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ssnas/diffcore/tape.hpp"

namespace ssnas::diffcore {

enum class Mode { train, eval };

// Elementwise and linear algebra.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
// a (r x c) + row (1 x c) broadcast over rows
Var add_row(Var a, Var row);
Var relu(Var a);

// Reductions, all returning 1x1 unless noted.
Var sum(Var a);
Var mean(Var a);
// 1 x c column means
Var mean_rows(Var a);
// r x 1 row-wise log-sum-exp (numerically stabilised)
Var logsumexp_rows(Var a);

// Shape plumbing.
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);
// Repeats a 1 x c row n times.
Var broadcast_rows(Var row, std::size_t n);

// Rows divided by max(||row||_2, eps).
Var l2_normalize_rows(Var a, double eps = 1e-12);

// out_v = h_v + sum over edges (u -> v) of h_u
Var neighbor_sum(Var h, std::span<const std::pair<std::size_t, std::size_t>> edges);
// graph_count x c matrix of per-segment row means; every segment must be non-empty.
Var segment_mean(Var h, std::span<const std::size_t> segment, std::size_t segment_count);

struct BatchNormState {
  Matrix* running_mean;
  Matrix* running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-column normalisation. Training mode uses batch statistics (biased
// variance) and updates running statistics with unbiased variance; a single
// row in training mode normalises with the running statistics but still
// updates them. Eval mode uses running statistics only.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState state, Mode mode);

// mean((pred - target)^2), target treated as a constant.
Var mse(Var pred, const Matrix& target);

// Sum of off-diagonal entries of a square matrix, or of their squares.
Var offdiag_sum(Var a, bool squared);

}  // namespace ssnas::diffcore
