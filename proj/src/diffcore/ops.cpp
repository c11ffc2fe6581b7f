#include "ssnas/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssnas/common/error.hpp"

namespace ssnas::diffcore {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("diffcore: operation on an empty Var");
  return *a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw Error(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  out.add_in_place(b.value());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (Matrix* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (Matrix* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.data()) v *= s;
  return tape_of(a).record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.data()) v += s;
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var matmul(Var a, Var b) {
  Matrix out = matmul(a.value(), b.value());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, matmul(g, transpose(b.value())));
    if (t.requires_grad(b)) t.accumulate(b, matmul(transpose(a.value()), g));
  });
}

Var transpose(Var a) {
  return tape_of(a).record(transpose(a.value()), {a},
                           [a](Tape& t, const Matrix& g) { t.accumulate(a, transpose(g)); });
}

Var add_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw Error("add_row: row shape mismatch");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  return tape_of(a).record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (Matrix* gr = t.grad_buffer(row))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gr)[c] += g(r, c);
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  Tape& tape = tape_of(a);
  for (double& v : out.data()) {
    tape.note_branch(v > 0.0);
    v = v > 0.0 ? v : 0.0;
  }
  return tape.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& av = a.value();
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (av[i] > 0.0) (*ga)[i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape_of(a).record(Matrix::scalar(s), {a}, [a](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a))
      for (double& v : ga->data()) v += g[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw Error("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var a) {
  const Matrix& av = a.value();
  if (av.rows() == 0) throw Error("mean_rows: empty input");
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (double& v : out.data()) v *= inv;
  return tape_of(a).record(std::move(out), {a}, [a, inv](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t r = 0; r < ga->rows(); ++r)
        for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g[c] * inv;
  });
}

Var logsumexp_rows(Var a) {
  const Matrix& av = a.value();
  if (av.cols() == 0) throw Error("logsumexp_rows: no columns");
  Matrix out(av.rows(), 1);
  Matrix soft(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : av.row(r)) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      soft(r, c) = std::exp(av(r, c) - mx);
      s += soft(r, c);
    }
    for (std::size_t c = 0; c < av.cols(); ++c) soft(r, c) /= s;
    out[r] = mx + std::log(s);
  }
  return tape_of(a).record(std::move(out), {a}, [a, soft = std::move(soft)](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t r = 0; r < soft.rows(); ++r)
        for (std::size_t c = 0; c < soft.cols(); ++c) (*ga)(r, c) += g[r] * soft(r, c);
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw Error("concat_cols: row counts differ");
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c);
    for (std::size_t c = 0; c < bv.cols(); ++c) out(r, av.cols() + c) = bv(r, c);
  }
  const std::size_t split = av.cols();
  return tape_of(a).record(std::move(out), {a, b}, [a, b, split](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < split; ++c) (*ga)(r, c) += g(r, c);
    if (Matrix* gb = t.grad_buffer(b))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = split; c < g.cols(); ++c) (*gb)(r, c - split) += g(r, c);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + at * cols);
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs, cols](Tape& tt, const Matrix& g) {
    std::size_t row = 0;
    for (const Var& p : inputs) {
      if (Matrix* gp = tt.grad_buffer(p))
        for (std::size_t i = 0; i < p.rows() * cols; ++i) (*gp)[i] += g[row * cols + i];
      row += p.rows();
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& av = a.value();
  Matrix out(rows.size(), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw Error("gather_rows: index out of range");
    for (std::size_t c = 0; c < av.cols(); ++c) out(i, c) = av(rows[i], c);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape_of(a).record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(idx[i], c) += g(i, c);
  });
}

Var broadcast_rows(Var row, std::size_t n) {
  const Matrix& rv = row.value();
  if (rv.rows() != 1) throw Error("broadcast_rows: expected a single row");
  Matrix out(n, rv.cols());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < rv.cols(); ++c) out(r, c) = rv[c];
  return tape_of(row).record(std::move(out), {row}, [row](Tape& t, const Matrix& g) {
    if (Matrix* gr = t.grad_buffer(row))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gr)[c] += g(r, c);
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const Matrix& av = a.value();
  Matrix out = av;
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v * v;
    norms[r] = std::max(std::sqrt(s), eps);
    tape_of(a).note_branch(norms[r] <= eps);
    for (double& v : out.row(r)) v /= norms[r];
  }
  return tape_of(a).record(std::move(out), {a}, [a, norms = std::move(norms), eps](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_buffer(a);
    if (ga == nullptr) return;
    const Matrix& av = a.value();
    for (std::size_t r = 0; r < av.rows(); ++r) {
      const double n = norms[r];
      if (n <= eps) {
        for (std::size_t c = 0; c < av.cols(); ++c) (*ga)(r, c) += g(r, c) / n;
        continue;
      }
      // d(x/|x|) = (g - y (y.g)) / |x|
      double dot = 0.0;
      for (std::size_t c = 0; c < av.cols(); ++c) dot += g(r, c) * av(r, c) / n;
      for (std::size_t c = 0; c < av.cols(); ++c) (*ga)(r, c) += (g(r, c) - (av(r, c) / n) * dot) / n;
    }
  });
}

Var neighbor_sum(Var h, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  const Matrix& hv = h.value();
  Matrix out = hv;
  const std::size_t cols = hv.cols();
  for (const auto& [u, v] : edges) {
    if (u >= hv.rows() || v >= hv.rows()) throw Error("neighbor_sum: edge endpoint out of range");
    for (std::size_t c = 0; c < cols; ++c) out(v, c) += hv(u, c);
  }
  std::vector<std::pair<std::size_t, std::size_t>> e(edges.begin(), edges.end());
  return tape_of(h).record(std::move(out), {h}, [h, e = std::move(e), cols](Tape& t, const Matrix& g) {
    Matrix* gh = t.grad_buffer(h);
    if (gh == nullptr) return;
    gh->add_in_place(g);
    for (const auto& [u, v] : e)
      for (std::size_t c = 0; c < cols; ++c) (*gh)(u, c) += g(v, c);
  });
}

Var segment_mean(Var h, std::span<const std::size_t> segment, std::size_t segment_count) {
  const Matrix& hv = h.value();
  if (segment.size() != hv.rows()) throw Error("segment_mean: membership length mismatch");
  std::vector<double> counts(segment_count, 0.0);
  Matrix out(segment_count, hv.cols());
  for (std::size_t r = 0; r < hv.rows(); ++r) {
    const std::size_t s = segment[r];
    if (s >= segment_count) throw Error("segment_mean: segment index out of range");
    counts[s] += 1.0;
    for (std::size_t c = 0; c < hv.cols(); ++c) out(s, c) += hv(r, c);
  }
  for (std::size_t s = 0; s < segment_count; ++s) {
    if (counts[s] == 0.0) throw Error("segment_mean: empty segment");
    for (double& v : out.row(s)) v /= counts[s];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return tape_of(h).record(std::move(out), {h},
                           [h, seg = std::move(seg), counts = std::move(counts)](Tape& t, const Matrix& g) {
                             Matrix* gh = t.grad_buffer(h);
                             if (gh == nullptr) return;
                             for (std::size_t r = 0; r < seg.size(); ++r)
                               for (std::size_t c = 0; c < gh->cols(); ++c)
                                 (*gh)(r, c) += g(seg[r], c) / counts[seg[r]];
                           });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState state, Mode mode) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (n == 0) throw Error("batch_norm: empty batch");
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw Error("batch_norm: scale/shift shape mismatch");
  Matrix& rmean = *state.running_mean;
  Matrix& rvar = *state.running_var;
  if (rmean.size() != d || rvar.size() != d) throw Error("batch_norm: running stats shape mismatch");

  const bool batch_stats = mode == Mode::train && n > 1;
  std::vector<double> mu(d, 0.0);
  std::vector<double> var(d, 0.0);
  std::vector<double> use_mean(d);
  std::vector<double> inv_std(d);
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mu[c] += xv(r, c);
    for (double& m : mu) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) var[c] += (xv(r, c) - mu[c]) * (xv(r, c) - mu[c]);
    for (std::size_t c = 0; c < d; ++c) {
      const double biased = var[c] / static_cast<double>(n);
      const double unbiased = n > 1 ? var[c] / static_cast<double>(n - 1) : biased;
      // Normalization uses the running stats as they were before this batch.
      use_mean[c] = batch_stats ? mu[c] : rmean[c];
      inv_std[c] = 1.0 / std::sqrt((batch_stats ? biased : rvar[c]) + state.eps);
      rmean[c] = (1.0 - state.momentum) * rmean[c] + state.momentum * mu[c];
      rvar[c] = (1.0 - state.momentum) * rvar[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      use_mean[c] = rmean[c];
      inv_std[c] = 1.0 / std::sqrt(rvar[c] + state.eps);
    }
  }
  Matrix xhat(n, d);
  Matrix out(n, d);
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (xv(r, c) - use_mean[c]) * inv_std[c];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  return tape_of(x).record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), batch_stats](Tape& t,
                                                                                          const Matrix& g) {
        const std::size_t n = g.rows();
        const std::size_t d = g.cols();
        const Matrix& gv = gamma.value();
        if (Matrix* gg = t.grad_buffer(gamma))
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
        if (Matrix* gb = t.grad_buffer(beta))
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) (*gb)[c] += g(r, c);
        Matrix* gx = t.grad_buffer(x);
        if (gx == nullptr) return;
        if (!batch_stats) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) (*gx)(r, c) += g(r, c) * gv[c] * inv_std[c];
          return;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t c = 0; c < d; ++c) {
          double sum_dxhat = 0.0;
          double sum_dxhat_xhat = 0.0;
          for (std::size_t r = 0; r < n; ++r) {
            const double dxhat = g(r, c) * gv[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat(r, c);
          }
          for (std::size_t r = 0; r < n; ++r) {
            const double dxhat = g(r, c) * gv[c];
            (*gx)(r, c) += inv_std[c] * inv_n *
                           (static_cast<double>(n) * dxhat - sum_dxhat - xhat(r, c) * sum_dxhat_xhat);
          }
        }
      });
}

Var mse(Var pred, const Matrix& target) {
  const Matrix& pv = pred.value();
  require_same_shape(pv, target, "mse");
  if (pv.size() == 0) throw Error("mse: empty input");
  const double inv = 1.0 / static_cast<double>(pv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += (pv[i] - target[i]) * (pv[i] - target[i]);
  return tape_of(pred).record(Matrix::scalar(s * inv), {pred}, [pred, target, inv](Tape& t, const Matrix& g) {
    const Matrix& pv = pred.value();
    if (Matrix* gp = t.grad_buffer(pred))
      for (std::size_t i = 0; i < pv.size(); ++i) (*gp)[i] += g[0] * 2.0 * (pv[i] - target[i]) * inv;
  });
}

Var offdiag_sum(Var a, bool squared) {
  const Matrix& av = a.value();
  if (av.rows() != av.cols()) throw Error("offdiag_sum: matrix is not square");
  double s = 0.0;
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c)
      if (r != c) s += squared ? av(r, c) * av(r, c) : av(r, c);
  return tape_of(a).record(Matrix::scalar(s), {a}, [a, squared](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_buffer(a);
    if (ga == nullptr) return;
    const Matrix& av = a.value();
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < av.cols(); ++c)
        if (r != c) (*ga)(r, c) += g[0] * (squared ? 2.0 * av(r, c) : 1.0);
  });
}

}  // namespace ssnas::diffcore
