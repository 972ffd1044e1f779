#include "univid/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "univid/error.hpp"
#include "univid/kernels.hpp"
#include "univid/parallel.hpp"

namespace univid::ag {
namespace {

using kernels::gemm_nn;
using kernels::gemm_nt;
using kernels::gemm_tn;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Var& x, int rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError(std::string(op) + ": axis out of range");
  return a;
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  float* d = dst->data();
  const float* s = src.data();
  for (int64_t i = 0, n = src.numel(); i < n; ++i) d[i] += s[i];
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisView {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<size_t>(i)];
  v.extent = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

int default_groups_check(int64_t channels, int groups) {
  if (groups <= 0 || channels % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(channels) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  return groups;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const float* pb = b.value().data();
  float* po = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] += pb[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self.input_grad(0), self.grad);
    accumulate(self.input_grad(1), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const float* pb = b.value().data();
  float* po = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] -= pb[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self.input_grad(0), self.grad);
    if (Tensor* gb = self.input_grad(1)) {
      for (int64_t i = 0, n = gb->numel(); i < n; ++i) (*gb)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const float* pb = b.value().data();
  float* po = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] *= pb[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& va = self.inputs[0]->value;
    const Tensor& vb = self.inputs[1]->value;
    if (Tensor* ga = self.input_grad(0)) {
      for (int64_t i = 0, n = ga->numel(); i < n; ++i) (*ga)[i] += self.grad[i] * vb[i];
    }
    if (Tensor* gb = self.input_grad(1)) {
      for (int64_t i = 0, n = gb->numel(); i < n; ++i) (*gb)[i] += self.grad[i] * va[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out = a.value();
  for (float& v : out.values()) v *= s;
  return Var::from_op(std::move(out), {a}, [s](Node& self) {
    if (Tensor* ga = self.input_grad(0)) {
      for (int64_t i = 0, n = ga->numel(); i < n; ++i) (*ga)[i] += s * self.grad[i];
    }
  });
}

Var add_broadcast(const Var& x, const Var& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw ShapeError("add_broadcast: " + shape_str(ys) + " is not a suffix of " + shape_str(xs));
  }
  const int64_t m = y.numel();
  Tensor out = x.value();
  const float* py = y.value().data();
  float* po = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] += py[i % m];
  return Var::from_op(std::move(out), {x, y}, [m](Node& self) {
    accumulate(self.input_grad(0), self.grad);
    if (Tensor* gy = self.input_grad(1)) {
      for (int64_t i = 0, n = self.grad.numel(); i < n; ++i) (*gy)[i % m] += self.grad[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshape(std::move(shape));
  return Var::from_op(std::move(out), {x}, [](Node& self) {
    if (Tensor* gx = self.input_grad(0)) {
      for (int64_t i = 0, n = gx->numel(); i < n; ++i) (*gx)[i] += self.grad[i];
    }
  });
}

namespace {

// For each input element in row-major order, the matching output offset.
template <typename Fn>
void for_each_permuted(const Shape& in_shape, std::span<const int> perm, Fn&& fn) {
  const size_t r = in_shape.size();
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) out_shape[i] = in_shape[static_cast<size_t>(perm[i])];
  std::vector<int64_t> out_stride(r, 1);
  for (size_t i = r; i-- > 1;) out_stride[i - 1] = out_stride[i] * out_shape[i];
  // Output stride seen by each input axis.
  std::vector<int64_t> stride_of_in(r);
  for (size_t i = 0; i < r; ++i) stride_of_in[static_cast<size_t>(perm[i])] = out_stride[i];

  const int64_t n = numel_of(in_shape);
  if (n == 0) return;
  std::vector<int64_t> idx(r, 0);
  int64_t out_off = 0;
  const int64_t last = r ? in_shape[r - 1] : 1;
  const int64_t last_stride = r ? stride_of_in[r - 1] : 0;
  for (int64_t i = 0; i < n; i += last) {
    for (int64_t j = 0; j < last; ++j) fn(i + j, out_off + j * last_stride);
    // Advance the odometer over all but the last axis.
    for (size_t a = r - 1; a-- > 0;) {
      if (++idx[a] < in_shape[a]) {
        out_off += stride_of_in[a];
        break;
      }
      out_off -= stride_of_in[a] * (in_shape[a] - 1);
      idx[a] = 0;
    }
  }
}

}  // namespace

Var permute(const Var& x, std::span<const int> perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> used(perm.size(), false);
  Shape out_shape(in.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    const int p = perm[i];
    if (p < 0 || p >= static_cast<int>(perm.size()) || used[static_cast<size_t>(p)]) {
      throw ShapeError("permute: invalid permutation");
    }
    used[static_cast<size_t>(p)] = true;
    out_shape[i] = in[static_cast<size_t>(p)];
  }
  Tensor out(out_shape);
  const float* src = x.value().data();
  float* dst = out.data();
  for_each_permuted(in, perm, [&](int64_t i, int64_t o) { dst[o] = src[i]; });
  std::vector<int> p(perm.begin(), perm.end());
  return Var::from_op(std::move(out), {x}, [p](Node& self) {
    if (Tensor* gx = self.input_grad(0)) {
      float* g = gx->data();
      const float* gy = self.grad.data();
      for_each_permuted(self.inputs[0]->value.shape(), p, [&](int64_t i, int64_t o) { g[i] += gy[o]; });
    }
  });
}

Var permute(const Var& x, std::initializer_list<int> perm) {
  return permute(x, std::span<const int>(perm.begin(), perm.size()));
}

Var gather(const Var& x, int axis, std::span<const int64_t> index) {
  const int a = normalize_axis(axis, x.value().rank(), "gather");
  const AxisView v = axis_view(x.shape(), a);
  for (int64_t i : index) {
    if (i < 0 || i >= v.extent) throw ShapeError("gather: index " + std::to_string(i) + " out of range");
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(a)] = static_cast<int64_t>(index.size());
  Tensor out(out_shape);
  const int64_t m = static_cast<int64_t>(index.size());
  const float* src = x.value().data();
  float* dst = out.data();
  for (int64_t o = 0; o < v.outer; ++o)
    for (int64_t j = 0; j < m; ++j)
      std::copy_n(src + (o * v.extent + index[static_cast<size_t>(j)]) * v.inner, v.inner,
                  dst + (o * m + j) * v.inner);
  std::vector<int64_t> idx(index.begin(), index.end());
  return Var::from_op(std::move(out), {x}, [v, idx](Node& self) {
    if (Tensor* gx = self.input_grad(0)) {
      const int64_t m = static_cast<int64_t>(idx.size());
      for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t j = 0; j < m; ++j) {
          float* g = gx->data() + (o * v.extent + idx[static_cast<size_t>(j)]) * v.inner;
          const float* gy = self.grad.data() + (o * m + j) * v.inner;
          for (int64_t k = 0; k < v.inner; ++k) g[k] += gy[k];
        }
    }
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const int a = normalize_axis(axis, xs[0].value().rank(), "concat");
  Shape out_shape = xs[0].shape();
  int64_t total = 0;
  for (const Var& x : xs) {
    Shape s = x.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    total += s[static_cast<size_t>(a)];
    s[static_cast<size_t>(a)] = out_shape[static_cast<size_t>(a)];
    if (s != out_shape) throw ShapeError("concat: shape mismatch " + shape_str(x.shape()));
  }
  out_shape[static_cast<size_t>(a)] = total;
  const AxisView ov = axis_view(out_shape, a);
  Tensor out(out_shape);
  std::vector<int64_t> starts;
  int64_t start = 0;
  for (const Var& x : xs) {
    const AxisView v = axis_view(x.shape(), a);
    starts.push_back(start);
    for (int64_t o = 0; o < v.outer; ++o)
      std::copy_n(x.value().data() + o * v.extent * v.inner, v.extent * v.inner,
                  out.data() + (o * ov.extent + start) * ov.inner);
    start += v.extent;
  }
  return Var::from_op(std::move(out), xs, [a, ov, starts](Node& self) {
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      Tensor* gx = self.input_grad(i);
      if (!gx) continue;
      const AxisView v = axis_view(self.inputs[i]->value.shape(), a);
      for (int64_t o = 0; o < v.outer; ++o) {
        const float* gy = self.grad.data() + (o * ov.extent + starts[i]) * ov.inner;
        float* g = gx->data() + o * v.extent * v.inner;
        for (int64_t k = 0; k < v.extent * v.inner; ++k) g[k] += gy[k];
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(w, 2, "linear");
  const int64_t din = w.dim(0);
  const int64_t dout = w.dim(1);
  if (x.value().rank() < 1 || x.dim(-1) != din) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  if (b.defined() && (b.value().rank() != 1 || b.dim(0) != dout)) throw ShapeError("linear: bad bias shape");
  const int64_t rows = x.numel() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  if (b.defined()) {
    for (int64_t r = 0; r < rows; ++r) std::copy_n(b.value().data(), dout, out.data() + r * dout);
  }
  gemm_nn(rows, dout, din, x.value().data(), din, w.value().data(), dout, out.data(), dout);
  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return Var::from_op(std::move(out), std::move(inputs), [rows, din, dout](Node& self) {
    const float* gy = self.grad.data();
    if (Tensor* gx = self.input_grad(0)) {
      gemm_nt(rows, din, dout, gy, dout, self.inputs[1]->value.data(), dout, gx->data(), din);
    }
    if (Tensor* gw = self.input_grad(1)) {
      gemm_tn(din, dout, rows, self.inputs[0]->value.data(), din, gy, dout, gw->data(), dout);
    }
    if (self.inputs.size() > 2) {
      if (Tensor* gb = self.input_grad(2)) {
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t o = 0; o < dout; ++o) (*gb)[o] += gy[r * dout + o];
      }
    }
  });
}

namespace {

struct ConvGeom {
  int64_t n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  int64_t cols_rows() const { return cin * kh * kw; }
  int64_t cols_cols() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeom& g, const float* x, float* cols) {
  for (int64_t c = 0; c < g.cin; ++c)
    for (int64_t ky = 0; ky < g.kh; ++ky)
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        float* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.ho * g.wo;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            row[oy * g.wo + ox] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? x[(c * g.h + iy) * g.w + ix] : 0.0f;
          }
        }
      }
}

void col2im(const ConvGeom& g, const float* cols, float* x) {
  for (int64_t c = 0; c < g.cin; ++c)
    for (int64_t ky = 0; ky < g.kh; ++ky)
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const float* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.ho * g.wo;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) x[(c * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/padding");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");
  if (b.defined() && (b.value().rank() != 1 || b.dim(0) != g.cout)) throw ShapeError("conv2d: bad bias shape");

  Tensor out({g.n, g.cout, g.ho, g.wo});
  const int64_t K = g.cols_rows(), P = g.cols_cols();
  parallel_for(g.n, [&](int64_t n) {
    float* o = out.data() + n * g.cout * P;
    if (b.defined())
      for (int64_t c = 0; c < g.cout; ++c) std::fill_n(o + c * P, P, b.value()[c]);
    const float* xn = x.value().data() + n * g.cin * g.h * g.w;
    if (g.pointwise()) {
      gemm_nn(g.cout, P, K, w.value().data(), K, xn, P, o, P);
    } else {
      std::vector<float> cols(static_cast<size_t>(K * P));
      im2col(g, xn, cols.data());
      gemm_nn(g.cout, P, K, w.value().data(), K, cols.data(), P, o, P);
    }
  });

  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return Var::from_op(std::move(out), std::move(inputs), [g](Node& self) {
    const int64_t K = g.cols_rows(), P = g.cols_cols();
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& wv = self.inputs[1]->value;
    Tensor* gx = self.input_grad(0);
    Tensor* gw = self.input_grad(1);
    Tensor* gb = self.inputs.size() > 2 ? self.input_grad(2) : nullptr;
    std::vector<float> cols(static_cast<size_t>(K * P));
    for (int64_t n = 0; n < g.n; ++n) {
      const float* gy = self.grad.data() + n * g.cout * P;
      const float* xn = xv.data() + n * g.cin * g.h * g.w;
      if (gw) {
        const float* src = xn;
        if (!g.pointwise()) {
          im2col(g, xn, cols.data());
          src = cols.data();
        }
        gemm_nt(g.cout, K, P, gy, P, src, P, gw->data(), K);
      }
      if (gx) {
        float* gxn = gx->data() + n * g.cin * g.h * g.w;
        if (g.pointwise()) {
          gemm_tn(K, P, g.cout, wv.data(), K, gy, P, gxn, P);
        } else {
          std::fill(cols.begin(), cols.end(), 0.0f);
          gemm_tn(K, P, g.cout, wv.data(), K, gy, P, cols.data(), P);
          col2im(g, cols.data(), gxn);
        }
      }
      if (gb)
        for (int64_t c = 0; c < g.cout; ++c)
          for (int64_t p = 0; p < P; ++p) (*gb)[c] += gy[c * P + p];
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x, 4, "upsample_nearest2x");
  const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  const float* src = x.value().data();
  float* dst = out.data();
  for (int64_t p = 0; p < nc; ++p)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx) dst[(p * 2 * h + y) * 2 * w + xx] = src[(p * h + y / 2) * w + xx / 2];
  return Var::from_op(std::move(out), {x}, [nc, h, w](Node& self) {
    if (Tensor* gx = self.input_grad(0)) {
      const float* gy = self.grad.data();
      for (int64_t p = 0; p < nc; ++p)
        for (int64_t y = 0; y < 2 * h; ++y)
          for (int64_t xx = 0; xx < 2 * w; ++xx) (*gx)[(p * h + y / 2) * w + xx / 2] += gy[(p * 2 * h + y) * 2 * w + xx];
    }
  });
}

Var temporal_conv(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 5, "temporal_conv");
  require_rank(w, 3, "temporal_conv");
  const int64_t B = x.dim(0), F = x.dim(1), cin = x.dim(2), S = x.dim(3) * x.dim(4);
  const int64_t k = w.dim(0), cout = w.dim(1);
  if (k % 2 == 0) throw ShapeError("temporal_conv: kernel size must be odd, got " + std::to_string(k));
  if (w.dim(2) != cin) {
    throw ShapeError("temporal_conv: input " + shape_str(x.shape()) + " incompatible with taps " +
                     shape_str(w.shape()));
  }
  if (b.defined() && (b.value().rank() != 1 || b.dim(0) != cout)) throw ShapeError("temporal_conv: bad bias shape");
  const int64_t half = k / 2;
  Tensor out({B, F, cout, x.dim(3), x.dim(4)});
  parallel_for(B * F, [&](int64_t bf) {
    const int64_t bi = bf / F, f = bf % F;
    float* o = out.data() + bf * cout * S;
    if (b.defined())
      for (int64_t c = 0; c < cout; ++c) std::fill_n(o + c * S, S, b.value()[c]);
    for (int64_t j = 0; j < k; ++j) {
      const int64_t src = f + j - half;
      if (src < 0 || src >= F) continue;
      gemm_nn(cout, S, cin, w.value().data() + j * cout * cin, cin, x.value().data() + (bi * F + src) * cin * S, S,
              o, S);
    }
  });
  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return Var::from_op(std::move(out), std::move(inputs), [B, F, cin, cout, S, k, half](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& wv = self.inputs[1]->value;
    Tensor* gx = self.input_grad(0);
    Tensor* gw = self.input_grad(1);
    Tensor* gb = self.inputs.size() > 2 ? self.input_grad(2) : nullptr;
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t f = 0; f < F; ++f) {
        const float* gy = self.grad.data() + (bi * F + f) * cout * S;
        for (int64_t j = 0; j < k; ++j) {
          const int64_t src = f + j - half;
          if (src < 0 || src >= F) continue;
          if (gx)
            gemm_tn(cin, S, cout, wv.data() + j * cout * cin, cin, gy, S, gx->data() + (bi * F + src) * cin * S, S);
          if (gw) gemm_nt(cout, cin, S, gy, S, xv.data() + (bi * F + src) * cin * S, S, gw->data() + j * cout * cin, cin);
        }
        if (gb)
          for (int64_t c = 0; c < cout; ++c)
            for (int64_t p = 0; p < S; ++p) (*gb)[c] += gy[c * S + p];
      }
  });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps) {
  if (x.value().rank() < 2) throw ShapeError("group_norm: rank must be >= 2");
  const int64_t N = x.dim(0), C = x.dim(1);
  default_groups_check(C, groups);
  if (gamma.numel() != C || beta.numel() != C) throw ShapeError("group_norm: affine parameters must have C entries");
  const int64_t S = x.numel() / (N * C);
  const int64_t cg = C / groups;
  const int64_t count = cg * S;
  std::vector<float> mean(static_cast<size_t>(N * groups)), rstd(static_cast<size_t>(N * groups));
  Tensor out(x.shape());
  const float* xv = x.value().data();
  const float* gm = gamma.value().data();
  const float* bt = beta.value().data();
  parallel_for(N * groups, [&](int64_t ng) {
    const int64_t n = ng / groups, g = ng % groups;
    const float* base = xv + (n * C + g * cg) * S;
    double s = 0.0, ss = 0.0;
    for (int64_t i = 0; i < count; ++i) s += base[i];
    const double mu = s / static_cast<double>(count);
    for (int64_t i = 0; i < count; ++i) {
      const double d = base[i] - mu;
      ss += d * d;
    }
    const double var = ss / static_cast<double>(count);
    const float m = static_cast<float>(mu);
    const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
    mean[static_cast<size_t>(ng)] = m;
    rstd[static_cast<size_t>(ng)] = r;
    float* o = out.data() + (n * C + g * cg) * S;
    for (int64_t c = 0; c < cg; ++c) {
      const float ga = gm[g * cg + c], be = bt[g * cg + c];
      for (int64_t p = 0; p < S; ++p) o[c * S + p] = (base[c * S + p] - m) * r * ga + be;
    }
  });
  return Var::from_op(std::move(out), {x, gamma, beta}, [N, C, S, groups, cg, count, mean, rstd](Node& self) {
    const float* xv = self.inputs[0]->value.data();
    const float* gm = self.inputs[1]->value.data();
    Tensor* gx = self.input_grad(0);
    Tensor* ggamma = self.input_grad(1);
    Tensor* gbeta = self.input_grad(2);
    const float* gy = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t g = 0; g < groups; ++g) {
        const size_t ng = static_cast<size_t>(n * groups + g);
        const float m = mean[ng], r = rstd[ng];
        const int64_t off = (n * C + g * cg) * S;
        double sum_d = 0.0, sum_dx = 0.0;
        for (int64_t c = 0; c < cg; ++c) {
          const int64_t ch = g * cg + c;
          for (int64_t p = 0; p < S; ++p) {
            const int64_t i = off + c * S + p;
            const float xhat = (xv[i] - m) * r;
            const float d = gy[i] * gm[ch];
            sum_d += d;
            sum_dx += static_cast<double>(d) * xhat;
            if (ggamma) (*ggamma)[ch] += gy[i] * xhat;
            if (gbeta) (*gbeta)[ch] += gy[i];
          }
        }
        if (!gx) continue;
        const float mean_d = static_cast<float>(sum_d / static_cast<double>(count));
        const float mean_dx = static_cast<float>(sum_dx / static_cast<double>(count));
        for (int64_t c = 0; c < cg; ++c) {
          const int64_t ch = g * cg + c;
          for (int64_t p = 0; p < S; ++p) {
            const int64_t i = off + c * S + p;
            const float xhat = (xv[i] - m) * r;
            (*gx)[i] += r * (gy[i] * gm[ch] - mean_d - xhat * mean_dx);
          }
        }
      }
  });
}

Var silu(const Var& x) {
  Tensor out = x.value();
  for (float& v : out.values()) v = v / (1.0f + std::exp(-v));
  return Var::from_op(std::move(out), {x}, [](Node& self) {
    if (Tensor* gx = self.input_grad(0)) {
      const Tensor& xv = self.inputs[0]->value;
      for (int64_t i = 0, n = gx->numel(); i < n; ++i) {
        const float s = 1.0f / (1.0f + std::exp(-xv[i]));
        (*gx)[i] += self.grad[i] * s * (1.0f + xv[i] * (1.0f - s));
      }
    }
  });
}

Var modulate(const Var& x, const Var& scale_v, const Var& shift) {
  require_rank(scale_v, 2, "modulate");
  require_same_shape(scale_v, shift, "modulate");
  const int64_t N = x.dim(0), C = x.dim(1), B = scale_v.dim(0);
  if (scale_v.dim(1) != C || B == 0 || N % B != 0) {
    throw ShapeError("modulate: " + shape_str(x.shape()) + " incompatible with " + shape_str(scale_v.shape()));
  }
  const int64_t F = N / B, S = x.numel() / (N * C);
  Tensor out = x.value();
  const float* sc = scale_v.value().data();
  const float* sh = shift.value().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t bc = (n / F) * C + c;
      const float a = 1.0f + sc[bc], s = sh[bc];
      float* o = out.data() + (n * C + c) * S;
      for (int64_t p = 0; p < S; ++p) o[p] = o[p] * a + s;
    }
  return Var::from_op(std::move(out), {x, scale_v, shift}, [N, C, F, S](Node& self) {
    const float* xv = self.inputs[0]->value.data();
    const float* sc = self.inputs[1]->value.data();
    Tensor* gx = self.input_grad(0);
    Tensor* gs = self.input_grad(1);
    Tensor* gh = self.input_grad(2);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const int64_t bc = (n / F) * C + c;
        const int64_t off = (n * C + c) * S;
        const float a = 1.0f + sc[bc];
        double ds = 0.0, dh = 0.0;
        for (int64_t p = 0; p < S; ++p) {
          const float gy = self.grad[off + p];
          if (gx) (*gx)[off + p] += gy * a;
          ds += static_cast<double>(gy) * xv[off + p];
          dh += gy;
        }
        if (gs) (*gs)[bc] += static_cast<float>(ds);
        if (gh) (*gh)[bc] += static_cast<float>(dh);
      }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads) {
  require_rank(q, 3, "attention");
  require_rank(k, 3, "attention");
  require_rank(v, 3, "attention");
  const int64_t B = q.dim(0), Lq = q.dim(1), Dq = q.dim(2), Lk = k.dim(1), Dv = v.dim(2);
  if (k.dim(0) != B || v.dim(0) != B || k.dim(2) != Dq || v.dim(1) != Lk) {
    throw ShapeError("attention: incompatible q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                     shape_str(v.shape()));
  }
  if (Lk == 0) throw ShapeError("attention: empty key sequence");
  if (heads <= 0 || Dq % heads != 0 || Dv % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const int64_t H = heads, d = Dq / H, dv = Dv / H;
  const float sc = 1.0f / std::sqrt(static_cast<float>(d));

  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(B * H * Lq * Lk));
  Tensor out({B, Lq, Dv});
  parallel_for(B * H, [&](int64_t bh) {
    const int64_t b = bh / H, h = bh % H;
    float* P = probs->data() + bh * Lq * Lk;
    gemm_nt(Lq, Lk, d, q.value().data() + b * Lq * Dq + h * d, Dq, k.value().data() + b * Lk * Dq + h * d, Dq, P,
            Lk);
    for (int64_t i = 0; i < Lq; ++i) {
      float* row = P + i * Lk;
      float mx = row[0] * sc;
      for (int64_t j = 0; j < Lk; ++j) {
        row[j] *= sc;
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (int64_t j = 0; j < Lk; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      const float inv = static_cast<float>(1.0 / sum);
      for (int64_t j = 0; j < Lk; ++j) row[j] *= inv;
    }
    gemm_nn(Lq, dv, Lk, P, Lk, v.value().data() + b * Lk * Dv + h * dv, Dv, out.data() + b * Lq * Dv + h * dv, Dv);
  });

  return Var::from_op(std::move(out), {q, k, v}, [B, H, Lq, Lk, Dq, Dv, d, dv, sc, probs](Node& self) {
    const float* qv = self.inputs[0]->value.data();
    const float* kv = self.inputs[1]->value.data();
    const float* vv = self.inputs[2]->value.data();
    Tensor* gq = self.input_grad(0);
    Tensor* gk = self.input_grad(1);
    Tensor* gv = self.input_grad(2);
    parallel_for(B * H, [&](int64_t bh) {
      const int64_t b = bh / H, h = bh % H;
      const float* P = probs->data() + bh * Lq * Lk;
      const float* gy = self.grad.data() + b * Lq * Dv + h * dv;
      if (gv) gemm_tn(Lk, dv, Lq, P, Lk, gy, Dv, gv->data() + b * Lk * Dv + h * dv, Dv);
      if (!gq && !gk) return;
      std::vector<float> dS(static_cast<size_t>(Lq * Lk), 0.0f);
      gemm_nt(Lq, Lk, dv, gy, Dv, vv + b * Lk * Dv + h * dv, Dv, dS.data(), Lk);
      for (int64_t i = 0; i < Lq; ++i) {
        const float* p = P + i * Lk;
        float* ds = dS.data() + i * Lk;
        double dot = 0.0;
        for (int64_t j = 0; j < Lk; ++j) dot += static_cast<double>(ds[j]) * p[j];
        const float fd = static_cast<float>(dot);
        for (int64_t j = 0; j < Lk; ++j) ds[j] = p[j] * (ds[j] - fd) * sc;
      }
      if (gq) gemm_nn(Lq, d, Lk, dS.data(), Lk, kv + b * Lk * Dq + h * d, Dq, gq->data() + b * Lq * Dq + h * d, Dq);
      if (gk) gemm_tn(Lk, d, Lq, dS.data(), Lk, qv + b * Lq * Dq + h * d, Dq, gk->data() + b * Lk * Dq + h * d, Dq);
    });
  });
}

Var embedding(const Var& table, std::span<const int64_t> ids) {
  require_rank(table, 2, "embedding");
  const int64_t V = table.dim(0), D = table.dim(1);
  Tensor out({static_cast<int64_t>(ids.size()), D});
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V) throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(table.value().data() + ids[i] * D, D, out.data() + static_cast<int64_t>(i) * D);
  }
  std::vector<int64_t> idv(ids.begin(), ids.end());
  return Var::from_op(std::move(out), {table}, [idv, D](Node& self) {
    if (Tensor* gt = self.input_grad(0)) {
      for (size_t i = 0; i < idv.size(); ++i)
        for (int64_t j = 0; j < D; ++j) (*gt)[idv[i] * D + j] += self.grad[static_cast<int64_t>(i) * D + j];
    }
  });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const int64_t n = a.numel();
  if (n == 0) throw ShapeError("mse: empty input");
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    s += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
  return Var::from_op(std::move(out), {a, b}, [n](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const float k = 2.0f * self.grad[0] / static_cast<float>(n);
    Tensor* ga = self.input_grad(0);
    Tensor* gb = self.input_grad(1);
    for (int64_t i = 0; i < n; ++i) {
      const float d = k * (av[i] - bv[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Var weighted_sum(const Var& x, const Tensor& w) {
  if (x.numel() != w.numel()) throw ShapeError("weighted_sum: weight count mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) s += static_cast<double>(x.value()[i]) * w[i];
  return Var::from_op(Tensor::scalar(static_cast<float>(s)), {x}, [w](Node& self) {
    if (Tensor* gx = self.input_grad(0)) {
      const float g = self.grad[0];
      for (int64_t i = 0; i < w.numel(); ++i) (*gx)[i] += g * w[i];
    }
  });
}

}  // namespace univid::ag
