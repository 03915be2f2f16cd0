#include "metaccent/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "metaccent/error.hpp"

namespace metaccent::numerics {

namespace {

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  int ax = axis;
  if (ax < 0) ax += static_cast<int>(rank);
  if (ax < 0 || ax >= static_cast<int>(rank)) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(ax);
}

template <typename T>
bool wants_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) +
                       " with " + shape_str(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Per-output-axis step of an input aligned to `out` from the right; 0 on
// broadcast axes.
std::vector<std::size_t> broadcast_steps(const Shape& in, const Shape& out) {
  std::vector<std::size_t> steps(out.size(), 0);
  const auto in_strides = row_major_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != 1 || out[off + i] == 1) steps[off + i] = in_strides[i];
    if (in[i] == 1 && out[off + i] != 1) steps[off + i] = 0;
  }
  return steps;
}

// Calls fn(flat_out, flat_a, flat_b) for every output element.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t total = numel(out);
  const std::size_t rank = out.size();
  if (rank == 0) {
    fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t o = 0; o < total; ++o) {
    fn(o, oa, ob);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      oa += sa[ax];
      ob += sb[ax];
      if (idx[ax] < out[ax]) break;
      oa -= sa[ax] * out[ax];
      ob -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

// Slice walker for axis reductions: element (outer, j, inner) lives at
// (outer * n + j) * inner_size + inner.
struct AxisSpan {
  std::size_t outer, n, inner;
};

AxisSpan axis_span(const Shape& s, std::size_t axis) {
  AxisSpan a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("numerics.matmul: operands must have rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  const std::size_t k2 = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (k != k2) {
    throw ShapeError("numerics.matmul: inner extents mismatch " +
                     shape_str(sa) + " vs " + shape_str(sb));
  }
  Shape lead_a(sa.begin(), sa.end() - 2), lead_b(sb.begin(), sb.end() - 2);
  Shape lead;
  if (lead_a == lead_b) {
    lead = lead_a;
  } else if (lead_a.empty()) {
    lead = lead_b;
  } else if (lead_b.empty()) {
    lead = lead_a;
  } else {
    throw ShapeError("numerics.matmul: incompatible batch extents " +
                     shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t batch = numel(lead);
  const bool a_batched = !lead_a.empty() || lead.empty();
  const bool b_batched = !lead_b.empty() || lead.empty();

  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  {
    const T* A = a.data();
    const T* B = b.data();
    T* C = out.mutable_data();
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const T* Ab = A + (a_batched ? bi * m * k : 0);
      const T* Bb = B + (b_batched ? bi * k * n : 0);
      T* Cb = C + bi * m * n;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T av = Ab[i * k + kk];
          if (av == T{0}) continue;
          const T* Br = Bb + kk * n;
          T* Cr = Cb + i * n;
          for (std::size_t j = 0; j < n; ++j) Cr[j] += av * Br[j];
        }
      }
    }
  }
  out.set_requires_grad(a.requires_grad() || b.requires_grad());

  if (wants_grad(tape, {&a, &b})) {
    const int ia = a.requires_grad() ? tape->track(a) : -1;
    const int ib = b.requires_grad() ? tape->track(b) : -1;
    const int io = tape->track(out);
    auto av = a.buffer();
    auto bv = b.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const std::size_t ao = a_batched ? bi * m * k : 0;
        const std::size_t bo = b_batched ? bi * k * n : 0;
        const T* G = go.data() + bi * m * n;
        if (ia >= 0) {
          T* GA = tp.grad(ia).data() + ao;
          const T* B = bv->data() + bo;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const T g = G[i * n + j];
              if (g == T{0}) continue;
              for (std::size_t kk = 0; kk < k; ++kk)
                GA[i * k + kk] += g * B[kk * n + j];
            }
        }
        if (ib >= 0) {
          T* GB = tp.grad(ib).data() + bo;
          const T* A = av->data() + ao;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const T av_ik = A[i * k + kk];
              if (av_ik == T{0}) continue;
              for (std::size_t j = 0; j < n; ++j)
                GB[kk * n + j] += av_ik * G[i * n + j];
            }
        }
      }
    });
  }
  return out;
}

namespace {

enum class BinOp { kAdd, kMul };

template <typename T>
Tensor<T> broadcast_binary(Tape<T>* tape, const Tensor<T>& a,
                           const Tensor<T>& b, BinOp op, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const auto sa = broadcast_steps(a.shape(), out_shape);
  const auto sb = broadcast_steps(b.shape(), out_shape);
  Tensor<T> out(out_shape);
  T* O = out.mutable_data();
  const T* A = a.data();
  const T* B = b.data();
  if (op == BinOp::kAdd) {
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t oa, std::size_t ob) {
                         O[o] = A[oa] + B[ob];
                       });
  } else {
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t oa, std::size_t ob) {
                         O[o] = A[oa] * B[ob];
                       });
  }
  out.set_requires_grad(a.requires_grad() || b.requires_grad());

  if (wants_grad(tape, {&a, &b})) {
    const int ia = a.requires_grad() ? tape->track(a) : -1;
    const int ib = b.requires_grad() ? tape->track(b) : -1;
    const int io = tape->track(out);
    auto av = a.buffer();
    auto bv = b.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      T* ga = ia >= 0 ? tp.grad(ia).data() : nullptr;
      T* gb = ib >= 0 ? tp.grad(ib).data() : nullptr;
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::size_t o, std::size_t oa, std::size_t ob) {
                           if (op == BinOp::kAdd) {
                             if (ga) ga[oa] += go[o];
                             if (gb) gb[ob] += go[o];
                           } else {
                             if (ga) ga[oa] += go[o] * (*bv)[ob];
                             if (gb) gb[ob] += go[o] * (*av)[oa];
                           }
                         });
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary(tape, a, b, BinOp::kAdd, "numerics.add");
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary(tape, a, b, BinOp::kMul, "numerics.mul");
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, double c) {
  Tensor<T> out(x.shape());
  T* O = out.mutable_data();
  const T* X = x.data();
  const T cv = static_cast<T>(c);
  for (std::size_t i = 0; i < x.size(); ++i) O[i] = cv * X[i];
  out.set_requires_grad(x.requires_grad());
  if (wants_grad(tape, {&x})) {
    const int ix = tape->track(x);
    const int io = tape->track(out);
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gx = tp.grad(ix);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += cv * go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  T* O = out.mutable_data();
  const T* X = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) O[i] = X[i] > T{0} ? X[i] : T{0};
  out.set_requires_grad(x.requires_grad());
  if (wants_grad(tape, {&x})) {
    const int ix = tape->track(x);
    const int io = tape->track(out);
    auto xv = x.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gx = tp.grad(ix);
      for (std::size_t i = 0; i < go.size(); ++i)
        if ((*xv)[i] > T{0}) gx[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "numerics.softmax");
  const AxisSpan sp = axis_span(x.shape(), ax);
  Tensor<T> out(x.shape());
  T* O = out.mutable_data();
  const T* X = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < sp.n; ++j) {
        const T v = X[base + j * sp.inner];
        if (!std::isfinite(v))
          throw NumericError("numerics.softmax: non-finite input");
        mx = std::max(mx, v);
      }
      T denom = T{0};
      for (std::size_t j = 0; j < sp.n; ++j) {
        const T e = std::exp(X[base + j * sp.inner] - mx);
        O[base + j * sp.inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < sp.n; ++j) O[base + j * sp.inner] /= denom;
    }
  }
  out.set_requires_grad(x.requires_grad());
  if (wants_grad(tape, {&x})) {
    const int ix = tape->track(x);
    const int io = tape->track(out);
    auto yv = out.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gx = tp.grad(ix);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.n * sp.inner + in;
          T dot = T{0};
          for (std::size_t j = 0; j < sp.n; ++j) {
            const std::size_t p = base + j * sp.inner;
            dot += go[p] * (*yv)[p];
          }
          for (std::size_t j = 0; j < sp.n; ++j) {
            const std::size_t p = base + j * sp.inner;
            gx[p] += (*yv)[p] * (go[p] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax(Tape<T>* tape, const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "numerics.log_softmax");
  const AxisSpan sp = axis_span(x.shape(), ax);
  Tensor<T> out(x.shape());
  T* O = out.mutable_data();
  const T* X = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < sp.n; ++j) {
        const T v = X[base + j * sp.inner];
        if (!std::isfinite(v))
          throw NumericError("numerics.log_softmax: non-finite input");
        mx = std::max(mx, v);
      }
      T denom = T{0};
      for (std::size_t j = 0; j < sp.n; ++j)
        denom += std::exp(X[base + j * sp.inner] - mx);
      const T lse = mx + std::log(denom);
      for (std::size_t j = 0; j < sp.n; ++j)
        O[base + j * sp.inner] = X[base + j * sp.inner] - lse;
    }
  }
  out.set_requires_grad(x.requires_grad());
  if (wants_grad(tape, {&x})) {
    const int ix = tape->track(x);
    const int io = tape->track(out);
    auto yv = out.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gx = tp.grad(ix);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.n * sp.inner + in;
          T gsum = T{0};
          for (std::size_t j = 0; j < sp.n; ++j)
            gsum += go[base + j * sp.inner];
          for (std::size_t j = 0; j < sp.n; ++j) {
            const std::size_t p = base + j * sp.inner;
            gx[p] += go[p] - std::exp((*yv)[p]) * gsum;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, double eps) {
  if (x.rank() < 1)
    throw ShapeError("numerics.layer_norm: input must have rank >= 1");
  const std::size_t n = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.size() != n ||
      bias.size() != n) {
    throw ShapeError("numerics.layer_norm: gain/bias must be rank-1 of extent " +
                     std::to_string(n) + ", got " + shape_str(gain.shape()) +
                     " and " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape());
  T* O = out.mutable_data();
  const T* X = x.data();
  const T* G = gain.data();
  const T* B = bias.data();
  const T te = static_cast<T>(eps);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X + r * n;
    T* orow = O + r * n;
    T mu = T{0};
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<T>(n);
    T var = T{0};
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(n);
    const T inv = T{1} / std::sqrt(var + te);
    for (std::size_t j = 0; j < n; ++j)
      orow[j] = (xr[j] - mu) * inv * G[j] + B[j];
  }
  out.set_requires_grad(x.requires_grad() || gain.requires_grad() ||
                        bias.requires_grad());
  if (wants_grad(tape, {&x, &gain, &bias})) {
    const int ix = x.requires_grad() ? tape->track(x) : -1;
    const int ig = gain.requires_grad() ? tape->track(gain) : -1;
    const int ib = bias.requires_grad() ? tape->track(bias) : -1;
    const int io = tape->track(out);
    auto xv = x.buffer();
    auto gv = gain.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T> xhat(n);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv->data() + r * n;
        const T* gr = go.data() + r * n;
        T mu = T{0};
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<T>(n);
        T var = T{0};
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(n);
        const T inv = T{1} / std::sqrt(var + te);
        for (std::size_t j = 0; j < n; ++j) xhat[j] = (xr[j] - mu) * inv;
        if (ig >= 0) {
          std::vector<T>& gg = tp.grad(ig);
          for (std::size_t j = 0; j < n; ++j) gg[j] += gr[j] * xhat[j];
        }
        if (ib >= 0) {
          std::vector<T>& gb = tp.grad(ib);
          for (std::size_t j = 0; j < n; ++j) gb[j] += gr[j];
        }
        if (ix >= 0) {
          std::vector<T>& gx = tp.grad(ix);
          T mean_dxhat = T{0}, mean_dxhat_xhat = T{0};
          for (std::size_t j = 0; j < n; ++j) {
            const T dxhat = gr[j] * (*gv)[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[j];
          }
          mean_dxhat /= static_cast<T>(n);
          mean_dxhat_xhat /= static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T dxhat = gr[j] * (*gv)[j];
            gx[r * n + j] +=
                inv * (dxhat - mean_dxhat - xhat[j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> embedding_lookup(Tape<T>* tape, const Tensor<T>& table,
                           const std::vector<std::int32_t>& ids,
                           const Shape& id_shape) {
  if (table.rank() != 2)
    throw ShapeError("numerics.embedding_lookup: table must be [V, E], got " +
                     shape_str(table.shape()));
  if (ids.size() != numel(id_shape))
    throw ShapeError("numerics.embedding_lookup: id count " +
                     std::to_string(ids.size()) + " does not match " +
                     shape_str(id_shape));
  const std::size_t V = table.extent(0), E = table.extent(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw IndexError("numerics.embedding_lookup: id " + std::to_string(id) +
                       " out of vocabulary range [0," + std::to_string(V) + ")");
  }
  Shape out_shape = id_shape;
  out_shape.push_back(E);
  Tensor<T> out(out_shape);
  T* O = out.mutable_data();
  const T* Tb = table.data();
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const T* row = Tb + static_cast<std::size_t>(ids[p]) * E;
    std::copy(row, row + E, O + p * E);
  }
  out.set_requires_grad(table.requires_grad());
  if (wants_grad(tape, {&table})) {
    const int it = tape->track(table);
    const int io = tape->track(out);
    auto ids_copy = ids;
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gt = tp.grad(it);
      for (std::size_t p = 0; p < ids_copy.size(); ++p) {
        T* row = gt.data() + static_cast<std::size_t>(ids_copy[p]) * E;
        const T* g = go.data() + p * E;
        for (std::size_t j = 0; j < E; ++j) row[j] += g[j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_strided(Tape<T>* tape, const Tensor<T>& input,
                         const Tensor<T>& kernel, int stride_h, int stride_w,
                         int pad_h, int pad_w) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("numerics.conv2d: expected input [B,C,H,W] and kernel "
                     "[Co,Ci,kh,kw], got " +
                     shape_str(input.shape()) + " and " +
                     shape_str(kernel.shape()));
  if (stride_h < 1 || stride_w < 1 || pad_h < 0 || pad_w < 0)
    throw ConfigError("numerics.conv2d: invalid stride/padding");
  const std::size_t B = input.extent(0), Ci = input.extent(1),
                    H = input.extent(2), W = input.extent(3);
  const std::size_t Co = kernel.extent(0), Ci2 = kernel.extent(1),
                    kh = kernel.extent(2), kw = kernel.extent(3);
  if (Ci != Ci2)
    throw ShapeError("numerics.conv2d: channel mismatch " +
                     shape_str(input.shape()) + " vs " +
                     shape_str(kernel.shape()));
  if (H + 2 * static_cast<std::size_t>(pad_h) < kh ||
      W + 2 * static_cast<std::size_t>(pad_w) < kw)
    throw ShapeError("numerics.conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * pad_h - kh) / stride_h + 1;
  const std::size_t Wo = (W + 2 * pad_w - kw) / stride_w + 1;

  Tensor<T> out({B, Co, Ho, Wo});
  T* O = out.mutable_data();
  const T* X = input.data();
  const T* K = kernel.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Co; ++co) {
      for (std::size_t ho = 0; ho < Ho; ++ho) {
        for (std::size_t wo = 0; wo < Wo; ++wo) {
          T acc = T{0};
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            for (std::size_t r = 0; r < kh; ++r) {
              const long h = static_cast<long>(ho) * stride_h - pad_h +
                             static_cast<long>(r);
              if (h < 0 || h >= static_cast<long>(H)) continue;
              for (std::size_t c = 0; c < kw; ++c) {
                const long w = static_cast<long>(wo) * stride_w - pad_w +
                               static_cast<long>(c);
                if (w < 0 || w >= static_cast<long>(W)) continue;
                acc += X[((b * Ci + ci) * H + h) * W + w] *
                       K[((co * Ci + ci) * kh + r) * kw + c];
              }
            }
          }
          O[((b * Co + co) * Ho + ho) * Wo + wo] = acc;
        }
      }
    }
  }
  out.set_requires_grad(input.requires_grad() || kernel.requires_grad());
  if (wants_grad(tape, {&input, &kernel})) {
    const int ii = input.requires_grad() ? tape->track(input) : -1;
    const int ik = kernel.requires_grad() ? tape->track(kernel) : -1;
    const int io = tape->track(out);
    auto xv = input.buffer();
    auto kv = kernel.buffer();
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      T* gx = ii >= 0 ? tp.grad(ii).data() : nullptr;
      T* gk = ik >= 0 ? tp.grad(ik).data() : nullptr;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < Co; ++co) {
          for (std::size_t ho = 0; ho < Ho; ++ho) {
            for (std::size_t wo = 0; wo < Wo; ++wo) {
              const T g = go[((b * Co + co) * Ho + ho) * Wo + wo];
              if (g == T{0}) continue;
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                for (std::size_t r = 0; r < kh; ++r) {
                  const long h = static_cast<long>(ho) * stride_h - pad_h +
                                 static_cast<long>(r);
                  if (h < 0 || h >= static_cast<long>(H)) continue;
                  for (std::size_t c = 0; c < kw; ++c) {
                    const long w = static_cast<long>(wo) * stride_w - pad_w +
                                   static_cast<long>(c);
                    if (w < 0 || w >= static_cast<long>(W)) continue;
                    const std::size_t xi = ((b * Ci + ci) * H + h) * W + w;
                    const std::size_t ki = ((co * Ci + ci) * kh + r) * kw + c;
                    if (gx) gx[xi] += g * (*kv)[ki];
                    if (gk) gk[ki] += g * (*xv)[xi];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> max_pool2d(Tape<T>* tape, const Tensor<T>& input, int pool_h,
                     int pool_w) {
  if (input.rank() != 4)
    throw ShapeError("numerics.max_pool2d: expected [B,C,H,W], got " +
                     shape_str(input.shape()));
  if (pool_h < 1 || pool_w < 1)
    throw ConfigError("numerics.max_pool2d: pool extents must be positive");
  const std::size_t B = input.extent(0), C = input.extent(1),
                    H = input.extent(2), W = input.extent(3);
  const std::size_t Ho = (H + pool_h - 1) / pool_h;
  const std::size_t Wo = (W + pool_w - 1) / pool_w;
  Tensor<T> out({B, C, Ho, Wo});
  T* O = out.mutable_data();
  const T* X = input.data();
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t ho = 0; ho < Ho; ++ho) {
        for (std::size_t wo = 0; wo < Wo; ++wo) {
          const std::size_t h0 = ho * pool_h,
                            h1 = std::min(H, h0 + pool_h);
          const std::size_t w0 = wo * pool_w,
                            w1 = std::min(W, w0 + pool_w);
          std::size_t best = ((b * C + c) * H + h0) * W + w0;
          T bv = X[best];
          for (std::size_t h = h0; h < h1; ++h) {
            for (std::size_t w = w0; w < w1; ++w) {
              const std::size_t p = ((b * C + c) * H + h) * W + w;
              if (X[p] > bv) {
                bv = X[p];
                best = p;
              }
            }
          }
          const std::size_t op = ((b * C + c) * Ho + ho) * Wo + wo;
          O[op] = bv;
          argmax[op] = best;
        }
      }
    }
  }
  out.set_requires_grad(input.requires_grad());
  if (wants_grad(tape, {&input})) {
    const int ii = tape->track(input);
    const int io = tape->track(out);
    tape->record([=, am = std::move(argmax)](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gx = tp.grad(ii);
      for (std::size_t o = 0; o < go.size(); ++o) gx[am[o]] += go[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty())
    throw ShapeError("numerics.concat: needs at least one input");
  const std::size_t rank = parts[0].rank();
  const std::size_t ax = normalize_axis(axis, rank, "numerics.concat");
  Shape out_shape = parts[0].shape();
  std::size_t total_ax = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw ShapeError("numerics.concat: rank mismatch");
    for (std::size_t i = 0; i < rank; ++i) {
      if (i != ax && p.shape()[i] != out_shape[i])
        throw ShapeError("numerics.concat: extent mismatch at axis " +
                         std::to_string(i) + ": " + shape_str(p.shape()) +
                         " vs " + shape_str(out_shape));
    }
    total_ax += p.shape()[ax];
  }
  out_shape[ax] = total_ax;
  Tensor<T> out(out_shape);
  T* O = out.mutable_data();

  const AxisSpan osp = axis_span(out_shape, ax);
  bool any_grad = false;
  std::size_t ax_off = 0;
  for (const auto& p : parts) {
    const std::size_t pn = p.shape()[ax];
    const T* P = p.data();
    for (std::size_t o = 0; o < osp.outer; ++o) {
      const T* src = P + o * pn * osp.inner;
      T* dst = O + (o * osp.n + ax_off) * osp.inner;
      std::copy(src, src + pn * osp.inner, dst);
    }
    ax_off += pn;
    any_grad = any_grad || p.requires_grad();
  }
  out.set_requires_grad(any_grad);

  if (tape && any_grad) {
    const int io = tape->track(out);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t pn = p.shape()[ax];
      if (p.requires_grad()) {
        const int ip = tape->track(p);
        const std::size_t poff = off;
        tape->record([=](Tape<T>& tp) {
          const std::vector<T>& go = tp.grad(io);
          std::vector<T>& gp = tp.grad(ip);
          for (std::size_t o = 0; o < osp.outer; ++o) {
            const T* src = go.data() + (o * osp.n + poff) * osp.inner;
            T* dst = gp.data() + o * pn * osp.inner;
            for (std::size_t j = 0; j < pn * osp.inner; ++j) dst[j] += src[j];
          }
        });
      }
      off += pn;
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose(Tape<T>* tape, const Tensor<T>& x,
                    const std::vector<int>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank)
    throw ShapeError("numerics.transpose: permutation size " +
                     std::to_string(perm.size()) + " does not match rank " +
                     std::to_string(rank));
  std::vector<bool> seen(rank, false);
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const int p = perm[i];
    if (p < 0 || p >= static_cast<int>(rank) || seen[p])
      throw ShapeError("numerics.transpose: invalid permutation");
    seen[p] = true;
    out_shape[i] = x.shape()[static_cast<std::size_t>(p)];
  }
  const auto in_strides = row_major_strides(x.shape());
  std::vector<std::size_t> steps(rank);
  for (std::size_t i = 0; i < rank; ++i)
    steps[i] = in_strides[static_cast<std::size_t>(perm[i])];

  Tensor<T> out(out_shape);
  T* O = out.mutable_data();
  const T* X = x.data();
  const auto zero = std::vector<std::size_t>(rank, 0);
  for_each_broadcast(out_shape, steps, zero,
                     [&](std::size_t o, std::size_t oi, std::size_t) {
                       O[o] = X[oi];
                     });
  out.set_requires_grad(x.requires_grad());
  if (wants_grad(tape, {&x})) {
    const int ix = tape->track(x);
    const int io = tape->track(out);
    tape->record([=](Tape<T>& tp) {
      const std::vector<T>& go = tp.grad(io);
      std::vector<T>& gx = tp.grad(ix);
      for_each_broadcast(out_shape, steps, zero,
                         [&](std::size_t o, std::size_t oi, std::size_t) {
                           gx[oi] += go[o];
                         });
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  return x.reshaped(std::move(new_shape));
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  T acc = T{0};
  const T* X = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += X[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  out.set_requires_grad(x.requires_grad());
  if (wants_grad(tape, {&x})) {
    const int ix = tape->track(x);
    const int io = tape->track(out);
    tape->record([=](Tape<T>& tp) {
      const T g = tp.grad(io)[0];
      std::vector<T>& gx = tp.grad(ix);
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy_masked(Tape<T>* tape, const Tensor<T>& logits,
                               const std::vector<std::int32_t>& targets,
                               const std::vector<std::uint8_t>& pad_mask) {
  if (logits.rank() < 1)
    throw ShapeError("numerics.cross_entropy: logits must have rank >= 1");
  const std::size_t V = logits.shape().back();
  const std::size_t P = logits.size() / V;
  if (targets.size() != P || pad_mask.size() != P)
    throw ShapeError("numerics.cross_entropy: got " +
                     std::to_string(targets.size()) + " targets and " +
                     std::to_string(pad_mask.size()) + " mask entries for " +
                     std::to_string(P) + " positions");
  const T* X = logits.data();
  double loss = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < P; ++p) {
    if (pad_mask[p]) continue;
    const std::int32_t t = targets[p];
    if (t < 0 || static_cast<std::size_t>(t) >= V)
      throw IndexError("numerics.cross_entropy: target index " +
                       std::to_string(t) + " out of vocabulary range [0," +
                       std::to_string(V) + ")");
    const T* row = X + p * V;
    T mx = row[0];
    for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
    T denom = T{0};
    for (std::size_t v = 0; v < V; ++v) denom += std::exp(row[v] - mx);
    loss += static_cast<double>(mx + std::log(denom) - row[t]);
    ++count;
  }
  if (count == 0)
    throw DataError("numerics.cross_entropy: every position is masked");
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / count));
  out.set_requires_grad(logits.requires_grad());
  if (wants_grad(tape, {&logits})) {
    const int il = tape->track(logits);
    const int io = tape->track(out);
    auto xv = logits.buffer();
    auto tgt = targets;
    auto msk = pad_mask;
    tape->record([=](Tape<T>& tp) {
      const T g = tp.grad(io)[0] / static_cast<T>(count);
      std::vector<T>& gl = tp.grad(il);
      for (std::size_t p = 0; p < P; ++p) {
        if (msk[p]) continue;
        const T* row = xv->data() + p * V;
        T mx = row[0];
        for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
        T denom = T{0};
        for (std::size_t v = 0; v < V; ++v) denom += std::exp(row[v] - mx);
        T* grow = gl.data() + p * V;
        for (std::size_t v = 0; v < V; ++v) {
          const T soft = std::exp(row[v] - mx) / denom;
          grow[v] += g * (soft - (static_cast<std::int32_t>(v) == tgt[p]
                                      ? T{1}
                                      : T{0}));
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0)
    throw ConfigError("numerics.dropout: rate must be in [0, 1)");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() >= rate ? keep_scale : T{0};
  return mul(tape, x, Tensor<T>(x.shape(), std::move(mask)));
}

#define METACCENT_INSTANTIATE_OPS(T)                                          \
  template Tensor<T> matmul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> add(Tape<T>*, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> scale(Tape<T>*, const Tensor<T>&, double);              \
  template Tensor<T> relu(Tape<T>*, const Tensor<T>&);                       \
  template Tensor<T> softmax(Tape<T>*, const Tensor<T>&, int);               \
  template Tensor<T> log_softmax(Tape<T>*, const Tensor<T>&, int);           \
  template Tensor<T> layer_norm(Tape<T>*, const Tensor<T>&, const Tensor<T>&,\
                                const Tensor<T>&, double);                   \
  template Tensor<T> embedding_lookup(Tape<T>*, const Tensor<T>&,            \
                                      const std::vector<std::int32_t>&,      \
                                      const Shape&);                         \
  template Tensor<T> conv2d_strided(Tape<T>*, const Tensor<T>&,              \
                                    const Tensor<T>&, int, int, int, int);   \
  template Tensor<T> max_pool2d(Tape<T>*, const Tensor<T>&, int, int);       \
  template Tensor<T> concat(Tape<T>*, const std::vector<Tensor<T>>&, int);   \
  template Tensor<T> transpose(Tape<T>*, const Tensor<T>&,                   \
                               const std::vector<int>&);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                       \
  template Tensor<T> sum(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> cross_entropy_masked(Tape<T>*, const Tensor<T>&,        \
                                          const std::vector<std::int32_t>&,  \
                                          const std::vector<std::uint8_t>&); \
  template Tensor<T> dropout(Tape<T>*, const Tensor<T>&, double, Rng&);

METACCENT_INSTANTIATE_OPS(float)
METACCENT_INSTANTIATE_OPS(double)

#undef METACCENT_INSTANTIATE_OPS

}  // namespace metaccent::numerics
