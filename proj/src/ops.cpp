#include "mhanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mhanet {

namespace {

template <typename T>
using StoragePtr = std::shared_ptr<TensorStorage<T>>;

template <typename T>
bool tracking(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (Tape<T>::current() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
BasicTensor<T> finish(const char* op, Shape shape, std::vector<T> data) {
  for (const auto v : data) {
    if (!std::isfinite(v)) fail(ErrorKind::Numerical, "op '", op, "' produced a non-finite value");
  }
  return BasicTensor<T>(std::move(shape), std::move(data));
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) fail(ErrorKind::Dimension, "axis ", axis, " out of range for rank ", r);
  return static_cast<std::size_t>(a);
}

struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename T>
bool needs_grad(const StoragePtr<T>& s) {
  return s && s->requires_grad;
}

void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    fail(ErrorKind::Dimension, op, ": ", what, " must have rank ", rank, ", got ", shape_str(shape));
  }
}

// Valid output-column range [lo, hi) for which ow*stride + offset lands in [0, extent).
std::pair<std::size_t, std::size_t> valid_range(long offset, std::size_t stride, std::size_t extent,
                                                 std::size_t out_extent) {
  const long s = static_cast<long>(stride);
  long lo = 0;
  if (offset < 0) lo = (-offset + s - 1) / s;
  const long last = static_cast<long>(extent) - 1 - offset;
  long hi = last < 0 ? 0 : last / s + 1;
  hi = std::min<long>(hi, static_cast<long>(out_extent));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvGeometry {
  std::size_t batch, cin, h, w;
  std::size_t cout, cin_g, kh, kw;
  std::size_t groups, cout_g;
  std::size_t oh, ow;
  Conv2dOptions opts;
};

// Walks every (input tap, output cell) pair of the convolution and hands
// contiguous row segments to `body(weight_index, in_offset, out_offset, len)`
// where in_offset addresses the first input element at stride opts.stride[1].
template <typename Body>
void for_each_conv_row(const ConvGeometry& g, Body&& body) {
  const auto sh = g.opts.stride[0];
  const auto sw = g.opts.stride[1];
  const auto dh = g.opts.dilation[0];
  const auto dw = g.opts.dilation[1];
  const long top = static_cast<long>(g.opts.padding.top);
  const long left = static_cast<long>(g.opts.padding.left);
  std::vector<std::pair<std::size_t, std::size_t>> col_range(g.kw);
  for (std::size_t j = 0; j < g.kw; ++j) {
    col_range[j] = valid_range(static_cast<long>(j * dw) - left, sw, g.w, g.ow);
  }
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oc = 0; oc < g.cout; ++oc) {
      const std::size_t grp = oc / g.cout_g;
      const std::size_t out_plane = (b * g.cout + oc) * g.oh * g.ow;
      for (std::size_t icg = 0; icg < g.cin_g; ++icg) {
        const std::size_t ic = grp * g.cin_g + icg;
        const std::size_t in_plane = (b * g.cin + ic) * g.h * g.w;
        for (std::size_t i = 0; i < g.kh; ++i) {
          for (std::size_t oh = 0; oh < g.oh; ++oh) {
            const long ih = static_cast<long>(oh * sh + i * dh) - top;
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            for (std::size_t j = 0; j < g.kw; ++j) {
              const auto [lo, hi] = col_range[j];
              if (lo >= hi) continue;
              const long iw0 = static_cast<long>(lo * sw + j * dw) - left;
              const std::size_t widx = ((oc * g.cin_g + icg) * g.kh + i) * g.kw + j;
              body(widx, in_plane + static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw0),
                   out_plane + oh * g.ow + lo, hi - lo);
            }
          }
        }
      }
    }
  }
}

template <typename T, typename Fwd, typename GradA, typename GradB>
BasicTensor<T> broadcast_binary(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b,
                                Fwd fwd, GradA grad_a, GradB grad_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = sa == sb;
  Shape out_shape;
  std::vector<std::size_t> ia, ib;
  if (same) {
    out_shape = sa;
  } else {
    const std::size_t r = std::max(sa.size(), sb.size());
    out_shape.assign(r, 1);
    std::vector<std::size_t> stride_a(r, 0), stride_b(r, 0);
    std::size_t acc_a = 1, acc_b = 1;
    for (std::size_t k = 0; k < r; ++k) {
      const std::size_t axis = r - 1 - k;
      const std::size_t ea = k < sa.size() ? sa[sa.size() - 1 - k] : 1;
      const std::size_t eb = k < sb.size() ? sb[sb.size() - 1 - k] : 1;
      if (ea != eb && ea != 1 && eb != 1) {
        fail(ErrorKind::Dimension, op, ": shapes ", shape_str(sa), " and ", shape_str(sb),
             " do not broadcast (axis ", axis, ")");
      }
      out_shape[axis] = std::max(ea, eb);
      stride_a[axis] = ea == 1 ? 0 : acc_a;
      stride_b[axis] = eb == 1 ? 0 : acc_b;
      acc_a *= ea;
      acc_b *= eb;
    }
    const std::size_t n = numel(out_shape);
    ia.resize(n);
    ib.resize(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t pa = 0, pb = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
      ia[flat] = pa;
      ib[flat] = pb;
      for (std::size_t k = r; k-- > 0;) {
        ++idx[k];
        pa += stride_a[k];
        pb += stride_b[k];
        if (idx[k] < out_shape[k]) break;
        pa -= stride_a[k] * idx[k];
        pb -= stride_b[k] * idx[k];
        idx[k] = 0;
      }
    }
  }
  const std::size_t n = numel(out_shape);
  std::vector<T> out(n);
  const auto da = a.data();
  const auto db = b.data();
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[i], db[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[ia[i]], db[ib[i]]);
  }
  auto result = finish<T>(op, out_shape, std::move(out));
  if (tracking<T>({&a, &b})) {
    auto pa = a.storage_ptr();
    auto pb = b.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(
        result, {pa, pb},
        [pa, pb, po, ia = std::move(ia), ib = std::move(ib), same, grad_a, grad_b]() {
          const auto& g = po->grad;
          const std::size_t n = g.size();
          auto index_a = [&](std::size_t i) { return same ? i : ia[i]; };
          auto index_b = [&](std::size_t i) { return same ? i : ib[i]; };
          if (needs_grad<T>(pa)) {
            auto ga = pa->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
              ga[index_a(i)] += grad_a(g[i], pa->data[index_a(i)], pb->data[index_b(i)]);
            }
          }
          if (needs_grad<T>(pb)) {
            auto gb = pb->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
              gb[index_b(i)] += grad_b(g[i], pa->data[index_a(i)], pb->data[index_b(i)]);
            }
          }
        });
  }
  return result;
}

template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary(const char* op, const BasicTensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto dx = x.data();
  std::vector<T> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = fwd(dx[i]);
  auto result = finish<T>(op, x.shape(), std::move(out));
  if (tracking<T>({&x})) {
    auto px = x.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, {px}, [px, po, deriv]() {
      auto gx = px->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += po->grad[i] * deriv(px->data[i], po->data[i]);
      }
    });
  }
  return result;
}

}  // namespace

Padding same_padding(std::size_t kh, std::size_t kw, std::size_t dh, std::size_t dw) {
  const std::size_t span_h = dh * (kh - 1);
  const std::size_t span_w = dw * (kw - 1);
  return Padding{span_h / 2, span_h - span_h / 2, span_w / 2, span_w - span_w / 2};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const Conv2dOptions& opts) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(weight.shape(), 4, "conv2d", "weight");
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.cin_g = weight.dim(1);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.groups = opts.groups;
  g.opts = opts;
  if (g.groups == 0 || g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    fail(ErrorKind::Config, "conv2d: groups=", g.groups, " must divide Cin=", g.cin,
         " and Cout=", g.cout);
  }
  if (g.cin_g != g.cin / g.groups) {
    fail(ErrorKind::Dimension, "conv2d: weight axis 1 is ", g.cin_g, ", expected Cin/groups=",
         g.cin / g.groups);
  }
  if (opts.stride[0] == 0 || opts.stride[1] == 0 || opts.dilation[0] == 0 ||
      opts.dilation[1] == 0) {
    fail(ErrorKind::Config, "conv2d: stride and dilation must be >= 1");
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    fail(ErrorKind::Dimension, "conv2d: bias must be [", g.cout, "], got ",
         shape_str(bias->shape()));
  }
  g.cout_g = g.cout / g.groups;
  const std::size_t eff_h = opts.dilation[0] * (g.kh - 1) + 1;
  const std::size_t eff_w = opts.dilation[1] * (g.kw - 1) + 1;
  const std::size_t padded_h = g.h + opts.padding.top + opts.padding.bottom;
  const std::size_t padded_w = g.w + opts.padding.left + opts.padding.right;
  if (padded_h < eff_h) {
    fail(ErrorKind::Dimension, "conv2d: kernel extent ", eff_h, " exceeds padded input ",
         padded_h, " on axis 2");
  }
  if (padded_w < eff_w) {
    fail(ErrorKind::Dimension, "conv2d: kernel extent ", eff_w, " exceeds padded input ",
         padded_w, " on axis 3");
  }
  g.oh = (padded_h - eff_h) / opts.stride[0] + 1;
  g.ow = (padded_w - eff_w) / opts.stride[1] + 1;

  std::vector<T> out(g.batch * g.cout * g.oh * g.ow, T(0));
  if (bias) {
    const auto bd = bias->data();
    const std::size_t plane = g.oh * g.ow;
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t oc = 0; oc < g.cout; ++oc)
        std::fill_n(out.begin() + static_cast<long>((b * g.cout + oc) * plane), plane, bd[oc]);
  }
  {
    const T* in = input.data().data();
    const T* wt = weight.data().data();
    T* o = out.data();
    const std::size_t sw = opts.stride[1];
    for_each_conv_row(g, [&](std::size_t widx, std::size_t ioff, std::size_t ooff, std::size_t len) {
      const T wv = wt[widx];
      const T* src = in + ioff;
      T* dst = o + ooff;
      if (sw == 1) {
        for (std::size_t k = 0; k < len; ++k) dst[k] += wv * src[k];
      } else {
        for (std::size_t k = 0; k < len; ++k) dst[k] += wv * src[k * sw];
      }
    });
  }
  auto result = finish<T>("conv2d", Shape{g.batch, g.cout, g.oh, g.ow}, std::move(out));
  const BasicTensor<T>* bias_ptr = bias ? &*bias : nullptr;
  if (tracking<T>({&input, &weight, bias_ptr})) {
    auto pin = input.storage_ptr();
    auto pw = weight.storage_ptr();
    StoragePtr<T> pb = bias ? bias->storage_ptr() : nullptr;
    auto po = result.storage_ptr();
    std::vector<StoragePtr<T>> inputs{pin, pw};
    if (pb) inputs.push_back(pb);
    Tape<T>::current()->record(result, std::move(inputs), [pin, pw, pb, po, g]() {
      const T* gout = po->grad.data();
      const std::size_t sw = g.opts.stride[1];
      if (needs_grad<T>(pin)) {
        T* gin = pin->ensure_grad().data();
        const T* wt = pw->data.data();
        for_each_conv_row(g, [&](std::size_t widx, std::size_t ioff, std::size_t ooff,
                                 std::size_t len) {
          const T wv = wt[widx];
          for (std::size_t k = 0; k < len; ++k) gin[ioff + k * sw] += wv * gout[ooff + k];
        });
      }
      if (needs_grad<T>(pw)) {
        T* gw = pw->ensure_grad().data();
        const T* in = pin->data.data();
        for_each_conv_row(g, [&](std::size_t widx, std::size_t ioff, std::size_t ooff,
                                 std::size_t len) {
          T acc = 0;
          for (std::size_t k = 0; k < len; ++k) acc += gout[ooff + k] * in[ioff + k * sw];
          gw[widx] += acc;
        });
      }
      if (needs_grad<T>(pb)) {
        auto gb = pb->ensure_grad();
        const std::size_t plane = g.oh * g.ow;
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t oc = 0; oc < g.cout; ++oc) {
            const T* row = gout + (b * g.cout + oc) * plane;
            T acc = 0;
            for (std::size_t k = 0; k < plane; ++k) acc += row[k];
            gb[oc] += acc;
          }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 2 || a.rank() != b.rank()) {
    fail(ErrorKind::Dimension, "matmul: operands ", shape_str(a.shape()), " and ",
         shape_str(b.shape()), " must share a rank >= 2");
  }
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (a.shape()[i] != b.shape()[i]) {
      fail(ErrorKind::Dimension, "matmul: batch extent mismatch on axis ", i);
    }
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    fail(ErrorKind::Dimension, "matmul: inner extents ", k, " and ", b.dim(-2), " differ");
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape = a.shape();
  out_shape[r - 1] = n;
  std::vector<T> out(batch * m * n, T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    const T* A = pa + s * m * k;
    const T* Bm = pb + s * k * n;
    T* C = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T av = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += av * Bm[p * n + j];
      }
  }
  auto result = finish<T>("matmul", out_shape, std::move(out));
  if (tracking<T>({&a, &b})) {
    auto sa = a.storage_ptr();
    auto sb = b.storage_ptr();
    auto so = result.storage_ptr();
    Tape<T>::current()->record(result, {sa, sb}, [sa, sb, so, batch, m, k, n]() {
      for (std::size_t s = 0; s < batch; ++s) {
        const T* G = so->grad.data() + s * m * n;
        const T* A = sa->data.data() + s * m * k;
        const T* Bm = sb->data.data() + s * k * n;
        if (needs_grad<T>(sa)) {
          T* GA = sa->ensure_grad().data() + s * m * k;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T acc = 0;
              for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bm[p * n + j];
              GA[i * k + p] += acc;
            }
        }
        if (needs_grad<T>(sb)) {
          T* GB = sb->ensure_grad().data() + s * k * n;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const T av = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
            }
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& x) {
  if (x.rank() < 2) fail(ErrorKind::Dimension, "transpose_last2: rank must be >= 2");
  const std::size_t m = x.dim(-2), n = x.dim(-1);
  const std::size_t batch = x.numel() / (m * n);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<T> out(x.numel());
  const auto d = x.data();
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[s * m * n + j * m + i] = d[s * m * n + i * n + j];
  auto result = finish<T>("transpose", shape, std::move(out));
  if (tracking<T>({&x})) {
    auto px = x.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, {px}, [px, po, batch, m, n]() {
      auto gx = px->ensure_grad();
      for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            gx[s * m * n + i * n + j] += po->grad[s * m * n + j * m + i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), a);
  const auto d = x.data();
  std::vector<T> out(d.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      T mx = d[base];
      for (std::size_t k = 1; k < v.extent; ++k) mx = std::max(mx, d[base + k * v.inner]);
      T total = 0;
      for (std::size_t k = 0; k < v.extent; ++k) {
        const T e = std::exp(d[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] /= total;
    }
  auto result = finish<T>("softmax", x.shape(), std::move(out));
  if (tracking<T>({&x})) {
    auto px = x.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, {px}, [px, po, v]() {
      auto gx = px->ensure_grad();
      const auto& y = po->data;
      const auto& gy = po->grad;
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = o * v.extent * v.inner + in;
          T dot = 0;
          for (std::size_t k = 0; k < v.extent; ++k) {
            dot += gy[base + k * v.inner] * y[base + k * v.inner];
          }
          for (std::size_t k = 0; k < v.extent; ++k) {
            const std::size_t idx = base + k * v.inner;
            gx[idx] += y[idx] * (gy[idx] - dot);
          }
        }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, int axis, const BasicTensor<T>& gain,
                          const BasicTensor<T>& shift, T eps) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), a);
  if (gain.numel() != v.extent || shift.numel() != v.extent) {
    fail(ErrorKind::Dimension, "layer_norm: gain/shift must have ", v.extent,
         " elements to match axis ", a);
  }
  const auto d = x.data();
  const auto gn = gain.data();
  const auto sh = shift.data();
  std::vector<T> out(d.size());
  std::vector<T> xhat(d.size());
  std::vector<T> inv_std(v.outer * v.inner);
  const T n = static_cast<T>(v.extent);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      T mu = 0;
      for (std::size_t k = 0; k < v.extent; ++k) mu += d[base + k * v.inner];
      mu /= n;
      T var = 0;
      for (std::size_t k = 0; k < v.extent; ++k) {
        const T c = d[base + k * v.inner] - mu;
        var += c * c;
      }
      var /= n;
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[o * v.inner + in] = is;
      for (std::size_t k = 0; k < v.extent; ++k) {
        const std::size_t idx = base + k * v.inner;
        xhat[idx] = (d[idx] - mu) * is;
        out[idx] = gn[k] * xhat[idx] + sh[k];
      }
    }
  auto result = finish<T>("layer_norm", x.shape(), std::move(out));
  if (tracking<T>({&x, &gain, &shift})) {
    auto px = x.storage_ptr();
    auto pg = gain.storage_ptr();
    auto ps = shift.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(
        result, {px, pg, ps},
        [px, pg, ps, po, v, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
          const auto& gy = po->grad;
          const T n = static_cast<T>(v.extent);
          for (std::size_t o = 0; o < v.outer; ++o)
            for (std::size_t in = 0; in < v.inner; ++in) {
              const std::size_t base = o * v.extent * v.inner + in;
              if (needs_grad<T>(px)) {
                auto gx = px->ensure_grad();
                T sum_d = 0, sum_dx = 0;
                for (std::size_t k = 0; k < v.extent; ++k) {
                  const std::size_t idx = base + k * v.inner;
                  const T dxh = gy[idx] * pg->data[k];
                  sum_d += dxh;
                  sum_dx += dxh * xhat[idx];
                }
                const T is = inv_std[o * v.inner + in];
                for (std::size_t k = 0; k < v.extent; ++k) {
                  const std::size_t idx = base + k * v.inner;
                  const T dxh = gy[idx] * pg->data[k];
                  gx[idx] += is / n * (n * dxh - sum_d - xhat[idx] * sum_dx);
                }
              }
              if (needs_grad<T>(pg)) {
                auto gg = pg->ensure_grad();
                for (std::size_t k = 0; k < v.extent; ++k) {
                  gg[k] += gy[base + k * v.inner] * xhat[base + k * v.inner];
                }
              }
              if (needs_grad<T>(ps)) {
                auto gs = ps->ensure_grad();
                for (std::size_t k = 0; k < v.extent; ++k) gs[k] += gy[base + k * v.inner];
              }
            }
        });
  }
  return result;
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& shift, BatchNormStats<T>& stats, Mode mode,
                          T eps, T momentum) {
  require_rank(x.shape(), 4, "batch_norm", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gain.numel() != C || shift.numel() != C || stats.running_mean.size() != C ||
      stats.running_var.size() != C) {
    fail(ErrorKind::Dimension, "batch_norm: affine/statistics must have ", C, " channels");
  }
  const std::size_t count = B * plane;
  if (mode == Mode::Train && count < 2) {
    fail(ErrorKind::Config, "batch_norm: train mode needs at least 2 values per channel, got ",
         count);
  }
  const auto d = x.data();
  const auto gn = gain.data();
  const auto sh = shift.data();
  std::vector<T> out(d.size());
  std::vector<T> xhat(d.size());
  std::vector<T> inv_std(C);
  const T n = static_cast<T>(count);
  for (std::size_t c = 0; c < C; ++c) {
    T mu, var;
    if (mode == Mode::Train) {
      mu = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < plane; ++k) mu += d[(b * C + c) * plane + k];
      mu /= n;
      var = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < plane; ++k) {
          const T dv = d[(b * C + c) * plane + k] - mu;
          var += dv * dv;
        }
      var /= n;
      stats.running_mean[c] = (T(1) - momentum) * stats.running_mean[c] + momentum * mu;
      stats.running_var[c] =
          (T(1) - momentum) * stats.running_var[c] + momentum * var * n / (n - T(1));
    } else {
      mu = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[c] = is;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t idx = (b * C + c) * plane + k;
        xhat[idx] = (d[idx] - mu) * is;
        out[idx] = gn[c] * xhat[idx] + sh[c];
      }
  }
  auto result = finish<T>("batch_norm", x.shape(), std::move(out));
  if (tracking<T>({&x, &gain, &shift})) {
    auto px = x.storage_ptr();
    auto pg = gain.storage_ptr();
    auto ps = shift.storage_ptr();
    auto po = result.storage_ptr();
    const bool batch_stats = mode == Mode::Train;
    Tape<T>::current()->record(
        result, {px, pg, ps},
        [px, pg, ps, po, B, C, plane, n, batch_stats, xhat = std::move(xhat),
         inv_std = std::move(inv_std)]() {
          const auto& gy = po->grad;
          for (std::size_t c = 0; c < C; ++c) {
            T sum_d = 0, sum_dx = 0, sum_g = 0, sum_gx = 0;
            for (std::size_t b = 0; b < B; ++b)
              for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t idx = (b * C + c) * plane + k;
                const T dxh = gy[idx] * pg->data[c];
                sum_d += dxh;
                sum_dx += dxh * xhat[idx];
                sum_g += gy[idx];
                sum_gx += gy[idx] * xhat[idx];
              }
            if (needs_grad<T>(px)) {
              auto gx = px->ensure_grad();
              const T is = inv_std[c];
              for (std::size_t b = 0; b < B; ++b)
                for (std::size_t k = 0; k < plane; ++k) {
                  const std::size_t idx = (b * C + c) * plane + k;
                  const T dxh = gy[idx] * pg->data[c];
                  gx[idx] += batch_stats ? is / n * (n * dxh - sum_d - xhat[idx] * sum_dx)
                                         : dxh * is;
                }
            }
            if (needs_grad<T>(pg)) pg->ensure_grad()[c] += sum_gx;
            if (needs_grad<T>(ps)) ps->ensure_grad()[c] += sum_g;
          }
        });
  }
  return result;
}

template <typename T>
BasicTensor<T> elu(const BasicTensor<T>& x) {
  return unary<T>(
      "elu", x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T in, T) { return in > T(0) ? T(1) : std::exp(in); });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T out) { return out; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& x, std::size_t out_h,
                                   std::size_t out_w) {
  require_rank(x.shape(), 4, "adaptive_avg_pool2d", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == 0 || out_w == 0) fail(ErrorKind::Dimension, "adaptive_avg_pool2d: output extent 0");
  if (out_h > H) fail(ErrorKind::Dimension, "adaptive_avg_pool2d: output height ", out_h, " exceeds input ", H, " on axis 2");
  if (out_w > W) fail(ErrorKind::Dimension, "adaptive_avg_pool2d: output width ", out_w, " exceeds input ", W, " on axis 3");
  auto bins = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, std::size_t>> r(out);
    for (std::size_t i = 0; i < out; ++i) {
      r[i] = {i * in / out, ((i + 1) * in + out - 1) / out};
    }
    return r;
  };
  auto rows = bins(H, out_h);
  auto cols = bins(W, out_w);
  const auto d = x.data();
  std::vector<T> out(B * C * out_h * out_w);
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        T acc = 0;
        for (std::size_t r = rows[i].first; r < rows[i].second; ++r)
          for (std::size_t c = cols[j].first; c < cols[j].second; ++c) acc += d[(bc * H + r) * W + c];
        const T cnt = static_cast<T>((rows[i].second - rows[i].first) * (cols[j].second - cols[j].first));
        out[(bc * out_h + i) * out_w + j] = acc / cnt;
      }
  auto result = finish<T>("adaptive_avg_pool2d", Shape{B, C, out_h, out_w}, std::move(out));
  if (tracking<T>({&x})) {
    auto px = x.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, {px}, [px, po, rows, cols, B, C, H, W, out_h, out_w]() {
      auto gx = px->ensure_grad();
      for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t i = 0; i < out_h; ++i)
          for (std::size_t j = 0; j < out_w; ++j) {
            const T cnt = static_cast<T>((rows[i].second - rows[i].first) *
                                         (cols[j].second - cols[j].first));
            const T g = po->grad[(bc * out_h + i) * out_w + j] / cnt;
            for (std::size_t r = rows[i].first; r < rows[i].second; ++r)
              for (std::size_t c = cols[j].first; c < cols[j].second; ++c) gx[(bc * H + r) * W + c] += g;
          }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
std::vector<BasicTensor<T>> split(const BasicTensor<T>& x, int axis, std::size_t parts) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), a);
  if (parts == 0 || v.extent % parts != 0) {
    fail(ErrorKind::Dimension, "split: extent ", v.extent, " on axis ", a,
         " is not divisible into ", parts, " parts");
  }
  const std::size_t chunk = v.extent / parts;
  Shape part_shape = x.shape();
  part_shape[a] = chunk;
  const auto d = x.data();
  const bool track = tracking<T>({&x});
  std::vector<BasicTensor<T>> result;
  result.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    std::vector<T> out(v.outer * chunk * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(d.begin() + static_cast<long>((o * v.extent + p * chunk) * v.inner),
                  chunk * v.inner, out.begin() + static_cast<long>(o * chunk * v.inner));
    }
    auto part = BasicTensor<T>(part_shape, std::move(out));
    if (track) {
      auto px = x.storage_ptr();
      auto po = part.storage_ptr();
      Tape<T>::current()->record(part, {px}, [px, po, v, chunk, p]() {
        auto gx = px->ensure_grad();
        for (std::size_t o = 0; o < v.outer; ++o) {
          const std::size_t dst = (o * v.extent + p * chunk) * v.inner;
          const std::size_t src = o * chunk * v.inner;
          for (std::size_t k = 0; k < chunk * v.inner; ++k) gx[dst + k] += po->grad[src + k];
        }
      });
    }
    result.push_back(std::move(part));
  }
  return result;
}

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, int axis) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat: no inputs");
  const std::size_t a = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size()) fail(ErrorKind::Dimension, "concat: rank mismatch");
    for (std::size_t i = 0; i < out_shape.size(); ++i) {
      if (i != a && p.shape()[i] != out_shape[i]) {
        fail(ErrorKind::Dimension, "concat: extent mismatch on axis ", i);
      }
    }
    total += p.shape()[a];
  }
  out_shape[a] = total;
  const AxisView v = axis_view(out_shape, a);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.shape()[a];
    const auto d = p.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(d.begin() + static_cast<long>(o * ext * v.inner), ext * v.inner,
                  out.begin() + static_cast<long>((o * total + off) * v.inner));
    }
    off += ext;
  }
  auto result = finish<T>("concat", out_shape, std::move(out));
  bool track = false;
  for (const auto& p : parts) track = track || tracking<T>({&p});
  if (track) {
    std::vector<StoragePtr<T>> inputs;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
      inputs.push_back(p.storage_ptr());
      extents.push_back(p.shape()[a]);
    }
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, inputs, [inputs, extents, offsets, po, v, total]() {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!needs_grad<T>(inputs[i])) continue;
        auto g = inputs[i]->ensure_grad();
        const std::size_t ext = extents[i];
        for (std::size_t o = 0; o < v.outer; ++o) {
          const std::size_t src = (o * total + offsets[i]) * v.inner;
          const std::size_t dst = o * ext * v.inner;
          for (std::size_t k = 0; k < ext * v.inner; ++k) g[dst + k] += po->grad[src + k];
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    fail(ErrorKind::Dimension, "reshape: cannot view ", shape_str(x.shape()), " as ",
         shape_str(shape));
  }
  auto result = BasicTensor<T>(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tracking<T>({&x})) {
    auto px = x.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, {px}, [px, po]() {
      auto gx = px->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += po->grad[i];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (const auto v : x.data()) acc += v;
  auto result = finish<T>("sum", Shape{1}, std::vector<T>{acc});
  if (tracking<T>({&x})) {
    auto px = x.storage_ptr();
    auto po = result.storage_ptr();
    Tape<T>::current()->record(result, {px}, [px, po]() {
      auto gx = px->ensure_grad();
      for (auto& g : gx) g += po->grad[0];
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy", "logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) {
    fail(ErrorKind::Dimension, "cross_entropy: ", labels.size(), " labels for batch of ", B);
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      fail(ErrorKind::Data, "cross_entropy: label ", labels[b], " at index ", b,
           " outside [0,", K, ")");
    }
  }
  const auto d = logits.data();
  std::vector<T> probs(B * K);
  T loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = d.data() + b * K;
    const T mx = *std::max_element(row, row + K);
    T total = 0;
    for (std::size_t k = 0; k < K; ++k) total += std::exp(row[k] - mx);
    const T lse = mx + std::log(total);
    loss += lse - row[labels[b]];
    for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = std::exp(row[k] - lse);
  }
  loss /= static_cast<T>(B);
  auto result = finish<T>("cross_entropy", Shape{1}, std::vector<T>{loss});
  if (tracking<T>({&logits})) {
    auto px = logits.storage_ptr();
    auto po = result.storage_ptr();
    std::vector<int> lab(labels.begin(), labels.end());
    Tape<T>::current()->record(result, {px}, [px, po, probs = std::move(probs),
                                              lab = std::move(lab), B, K]() {
      auto gx = px->ensure_grad();
      const T g = po->grad[0] / static_cast<T>(B);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
          const T onehot = static_cast<std::size_t>(lab[b]) == k ? T(1) : T(0);
          gx[b * K + k] += g * (probs[b * K + k] - onehot);
        }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  return add(matmul(x, transpose_last2(weight)), bias);
}

#define MHANET_INSTANTIATE_OPS(T)                                                              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const std::optional<BasicTensor<T>>&, const Conv2dOptions&);  \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> transpose_last2(const BasicTensor<T>&);                              \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                                 \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, int, const BasicTensor<T>&,        \
                                     const BasicTensor<T>&, T);                                \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                     const BasicTensor<T>&, BatchNormStats<T>&, Mode, T, T);   \
  template BasicTensor<T> elu(const BasicTensor<T>&);                                          \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                          \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>&, std::size_t, std::size_t); \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template std::vector<BasicTensor<T>> split(const BasicTensor<T>&, int, std::size_t);         \
  template BasicTensor<T> concat(std::span<const BasicTensor<T>>, int);                        \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                          \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                         \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const int>);          \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&);

MHANET_INSTANTIATE_OPS(float)
MHANET_INSTANTIATE_OPS(double)

}  // namespace mhanet
