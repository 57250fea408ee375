#include "ctsel/ad/ops.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ctsel/common/error.hpp"

namespace ctsel::ad {

namespace {

enum class Broadcast { same, row, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.size() == 1) return Broadcast::scalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw Error("operands recorded on different tapes");
  return *a.tape;
}

std::size_t b_index(Broadcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Broadcast::same:
      return i;
    case Broadcast::row:
      return i % cols;
    case Broadcast::scalar:
      return 0;
  }
  return 0;
}

// Reduce a full-shape gradient onto b's (possibly broadcast) shape.
Tensor reduce_to(const Tensor& g, const Tensor& b_shape, Broadcast k) {
  if (k == Broadcast::same) return g;
  Tensor out(b_shape.shape(), 0.0);
  const std::size_t cols = g.cols();
  for (std::size_t i = 0; i < g.size(); ++i) out[b_index(k, i, cols)] += g[i];
  return out;
}

Tensor shaped_like(const Tensor& a) { return Tensor(a.shape(), 0.0); }

template <class F, class DF>
Var elementwise(Var a, F f, DF df_from_xy) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor y = shaped_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::uint32_t ia = a.id;
  return t.record(std::move(y), {ia}, [ia, df_from_xy](Tape& tp, std::uint32_t self, const Tensor& g) {
    const Tensor& xv = tp.value(ia);
    const Tensor& yv = tp.value(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df_from_xy(xv[i], yv[i]);
  });
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast k = broadcast_kind(av, bv, "add");
  Tensor out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[b_index(k, i, cols)];
  const std::uint32_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::uint32_t, const Tensor& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(g, tp.value(ib), k));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast k = broadcast_kind(av, bv, "sub");
  Tensor out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[b_index(k, i, cols)];
  const std::uint32_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::uint32_t, const Tensor& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) {
      Tensor r = reduce_to(g, tp.value(ib), k);
      for (double& v : r.values()) v = -v;
      tp.accumulate(ib, r);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast k = broadcast_kind(av, bv, "mul");
  Tensor out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[b_index(k, i, cols)];
  const std::uint32_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::uint32_t, const Tensor& g) {
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(ib);
    const std::size_t c = x.cols();
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[b_index(k, i, c)];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[b_index(k, i, c)] += g[i] * x[i];
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: incompatible shapes " + av.shape_string() + " and " + bv.shape_string());
  Tensor out = Tensor::matrix(n, m);
  const double* A = av.data();
  const double* B = bv.data();
  double* C = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = B + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  const std::uint32_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::uint32_t, const Tensor& g) {
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(ib);
    const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
    const double* G = g.data();
    if (tp.requires_grad(ia)) {
      double* GA = tp.grad_buffer(ia).data();
      const double* Y = y.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* gi = G + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double* yp = Y + p * m;
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += gi[j] * yp[j];
          GA[i * k + p] += acc;
        }
      }
    }
    if (tp.requires_grad(ib)) {
      double* GB = tp.grad_buffer(ib).data();
      const double* X = x.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* gi = G + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double xip = X[i * k + p];
          if (xip == 0.0) continue;
          double* gbp = GB + p * m;
          for (std::size_t j = 0; j < m; ++j) gbp[j] += xip * gi[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = x(i, j);
  const std::uint32_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, r, c](Tape& tp, std::uint32_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g(j, i);
  });
}

Var scale(Var a, double factor) {
  return elementwise(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return elementwise(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return elementwise(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var square(Var a) {
  return elementwise(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
  return elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var unary(Var a, const std::function<double(double)>& f, const std::function<double(double)>& df) {
  return elementwise(a, f, [df](double x, double) { return df(x); });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.tape != &t) throw Error("concat_cols: operands recorded on different tapes");
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + parts.front().value().shape_string() + " vs " +
                       p.value().shape_string());
    cols += p.cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) out(r, off + j) = v(r, j);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += c;
  }
  return t.record(std::move(out), ids, [ids, offsets, rows](Tape& tp, std::uint32_t, const Tensor& g) {
    const std::size_t total = g.cols();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Tensor& gp = tp.grad_buffer(ids[k]);
      const std::size_t c = gp.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * total + offsets[k] + j];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  if (begin >= end || end > x.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + x.shape_string());
  const std::size_t rows = x.rows(), c = end - begin, total = x.cols();
  Tensor out = Tensor::matrix(rows, c);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) out(r, j) = x(r, begin + j);
  const std::uint32_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, begin, rows, c, total](Tape& tp, std::uint32_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) ga[r * total + begin + j] += g[r * c + j];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.tape != &t) throw Error("concat_rows: operands recorded on different tapes");
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + parts.front().value().shape_string() + " vs " +
                       p.value().shape_string());
    rows += p.rows();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + off);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.size();
  }
  return t.record(std::move(out), ids, [ids, offsets](Tape& tp, std::uint32_t, const Tensor& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Tensor& gp = tp.grad_buffer(ids[k]);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  if (begin >= end || end > x.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + x.shape_string());
  const std::size_t c = x.cols();
  Tensor out = Tensor::matrix(end - begin, c);
  std::copy(x.data() + begin * c, x.data() + end * c, out.data());
  const std::uint32_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, begin, c](Tape& tp, std::uint32_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
  });
}

Var repeat_rows(Var a, std::size_t n) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  if (x.rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + x.shape_string());
  const std::size_t c = x.cols();
  Tensor out = Tensor::matrix(n, c);
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data(), x.data() + c, out.data() + r * c);
  const std::uint32_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, c](Tape& tp, std::uint32_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i % c] += g[i];
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::uint32_t ia = a.id;
  return t.record(Tensor::scalar(s), {ia}, [ia](Tape& tp, std::uint32_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const double gv = g[0];
    for (double& v : ga.values()) v += gv;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x(i, j);
  for (double& v : out.values()) v /= static_cast<double>(r);
  const std::uint32_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, r, c](Tape& tp, std::uint32_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j] * inv;
  });
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  Tensor m = Tensor::matrix(rows, cols, 1.0);
  if (p == 0.0) return m;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (double& v : m.values()) v = keep(rng) ? s : 0.0;
  return m;
}

Tensor dropout_mask(std::size_t cols, double p, std::span<Rng> rngs) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  Tensor m = Tensor::matrix(rngs.size(), cols, 1.0);
  if (p == 0.0) return m;
  const double s = 1.0 / (1.0 - p);
  for (std::size_t r = 0; r < rngs.size(); ++r) {
    std::bernoulli_distribution keep(1.0 - p);
    for (std::size_t j = 0; j < cols; ++j) m(r, j) = keep(rngs[r]) ? s : 0.0;
  }
  return m;
}

Var dropout_mask_apply(Var a, const Tensor& mask) {
  Tape& t = *a.tape;
  if (!a.value().same_shape(mask))
    throw ShapeError("dropout: mask shape " + mask.shape_string() + " does not match input " +
                     a.value().shape_string());
  return mul(a, t.constant(mask));
}

Var pairwise_sq_dists(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      out(i, j) = s;
      out(j, i) = s;
    }
  const std::uint32_t ia = a.id;
  return t.record(std::move(out), {ia}, [ia, n, d](Tape& tp, std::uint32_t, const Tensor& g) {
    const Tensor& xv = tp.value(ia);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = 2.0 * (g(i, j) + g(j, i));
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) ga[i * d + k] += w * (xv(i, k) - xv(j, k));
      }
  });
}

Var double_center(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  const std::size_t n = x.rows();
  if (x.cols() != n) throw ShapeError("double_center: expected a square matrix, got " + x.shape_string());
  auto center = [n](const Tensor& m) {
    std::vector<double> row(n, 0.0), col(n, 0.0);
    double all = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        row[i] += m(i, j);
        col[j] += m(i, j);
        all += m(i, j);
      }
    const double inv = 1.0 / static_cast<double>(n);
    Tensor out = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) = m(i, j) - row[i] * inv - col[j] * inv + all * inv * inv;
    return out;
  };
  const std::uint32_t ia = a.id;
  // H is symmetric, so the adjoint of K -> HKH is G -> HGH.
  return t.record(center(x), {ia}, [ia, center](Tape& tp, std::uint32_t, const Tensor& g) {
    tp.accumulate(ia, center(g));
  });
}

Var mse(Var prediction, Var target) { return mean(square(sub(prediction, target))); }

}  // namespace ctsel::ad
