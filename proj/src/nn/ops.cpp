#include "lshrom/nn/ops.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "lshrom/simd/kernels.hpp"

namespace lshrom::nn {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename T>
bool any_grad(const Graph<T>& g, std::initializer_list<Var> vars) {
  for (auto v : vars) {
    if (v.valid() && g.requires_grad(v)) return true;
  }
  return false;
}

template <typename T>
T* grad_or_null(Graph<T>& g, Var v) {
  return (v.valid() && g.requires_grad(v)) ? g.grad(v).data() : nullptr;
}

template <typename T>
std::vector<T> transpose(const std::vector<T>& m, std::size_t rows, std::size_t cols) {
  std::vector<T> t(m.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = m[r * cols + c];
  }
  return t;
}

// out (rows x n_out) = a (rows x n_in) * w (n_in x n_out) + b
template <typename T>
void matmul_bias(const T* a, std::size_t rows, std::size_t n_in, const T* w, std::size_t n_out,
                 const T* b, T* out) {
  simd::GemmArgs<T> args;
  args.m = rows;
  args.n = n_out;
  args.k = n_in;
  args.a = a;
  args.a_row = static_cast<std::ptrdiff_t>(n_in);
  args.a_col = 1;
  args.b = w;
  args.ldb = static_cast<std::ptrdiff_t>(n_out);
  args.c = out;
  args.ldc = static_cast<std::ptrdiff_t>(n_out);
  args.accumulate = false;
  simd::gemm(args);
  if (b != nullptr) {
    for (std::size_t r = 0; r < rows; ++r) {
      T* o = out + r * n_out;
      for (std::size_t j = 0; j < n_out; ++j) o[j] += b[j];
    }
  }
}

// Accumulates the gradients of out = a w + b given dout. Null targets are skipped.
template <typename T>
void matmul_bias_backward(const T* a, std::size_t rows, std::size_t n_in, const std::vector<T>& w,
                          std::size_t n_out, const T* dout, T* da, T* dw, T* db) {
  if (db != nullptr) {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* d = dout + r * n_out;
      for (std::size_t j = 0; j < n_out; ++j) db[j] += d[j];
    }
  }
  if (dw != nullptr) {
    simd::GemmArgs<T> args;
    args.m = n_in;
    args.n = n_out;
    args.k = rows;
    args.a = a;
    args.a_row = 1;
    args.a_col = static_cast<std::ptrdiff_t>(n_in);
    args.b = dout;
    args.ldb = static_cast<std::ptrdiff_t>(n_out);
    args.c = dw;
    args.ldc = static_cast<std::ptrdiff_t>(n_out);
    args.accumulate = true;
    simd::gemm(args);
  }
  if (da != nullptr) {
    const std::vector<T> wt = transpose(w, n_in, n_out);
    simd::GemmArgs<T> args;
    args.m = rows;
    args.n = n_in;
    args.k = n_out;
    args.a = dout;
    args.a_row = static_cast<std::ptrdiff_t>(n_out);
    args.a_col = 1;
    args.b = wt.data();
    args.ldb = static_cast<std::ptrdiff_t>(n_in);
    args.c = da;
    args.ldc = static_cast<std::ptrdiff_t>(n_in);
    args.accumulate = true;
    simd::gemm(args);
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T, typename F, typename D>
Var unary(Graph<T>& g, Var x, F f, D df) {
  const auto& xv = g.value(x);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return g.emit(g.shape(x), std::move(out), g.requires_grad(x), [x, df](Graph<T>& gr, Var self) {
    const auto& dy = gr.grad(self);
    const auto& xv = gr.value(x);
    auto& dx = gr.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * df(xv[i]);
  });
}

}  // namespace

std::size_t conv_output_length(std::size_t length, const ConvSpec& spec) {
  if (length + 2 * spec.pad < spec.kernel) return 0;
  return (length + 2 * spec.pad - spec.kernel) / spec.stride + 1;
}

template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
  const Shape& xs = g.shape(x);
  const Shape& ws = g.shape(w);
  require(ws.size() == 2 && !xs.empty() && xs.back() == ws[0], "linear: weight/input shape mismatch");
  const std::size_t n_in = ws[0];
  const std::size_t n_out = ws[1];
  const std::size_t rows = numel(xs) / n_in;
  if (b.valid()) require(numel(g.shape(b)) == n_out, "linear: bias shape mismatch");

  Shape out_shape = xs;
  out_shape.back() = n_out;
  std::vector<T> out(rows * n_out);
  matmul_bias(g.value(x).data(), rows, n_in, g.value(w).data(), n_out,
              b.valid() ? g.value(b).data() : nullptr, out.data());
  return g.emit(std::move(out_shape), std::move(out), any_grad(g, {x, w, b}),
                [x, w, b, rows, n_in, n_out](Graph<T>& gr, Var self) {
                  const T* dout = gr.grad(self).data();
                  T* da = grad_or_null(gr, x);
                  T* dw = grad_or_null(gr, w);
                  T* db = grad_or_null(gr, b);
                  matmul_bias_backward(gr.value(x).data(), rows, n_in, gr.value(w), n_out, dout,
                                       da, dw, db);
                });
}

template <typename T>
Var conv1d(Graph<T>& g, Var x, Var w, Var b, const ConvSpec& spec) {
  const Shape xs = g.shape(x);
  const Shape& ws = g.shape(w);
  require(xs.size() == 3, "conv1d: input must be (batch, time, channel)");
  require(spec.kernel >= 1 && spec.stride >= 1, "conv1d: invalid kernel/stride");
  const std::size_t batch = xs[0], t_in = xs[1], c_in = xs[2];
  const std::size_t width = spec.kernel * c_in;
  require(ws.size() == 2 && ws[0] == width, "conv1d: weight shape mismatch");
  if (spec.kernel == 1 && spec.stride == 1 && spec.pad == 0) return linear(g, x, w, b);

  const std::size_t c_out = ws[1];
  const std::size_t t_out = conv_output_length(t_in, spec);
  require(t_out > 0, "conv1d: input shorter than kernel");
  const std::size_t rows = batch * t_out;

  // Row r = (b, t) holds input samples t*stride - pad + k for k = 0..K-1.
  auto cols = std::make_shared<std::vector<T>>(rows * width, T(0));
  const auto& xv = g.value(x);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t t = 0; t < t_out; ++t) {
      T* row = cols->data() + (bi * t_out + t) * width;
      for (std::size_t k = 0; k < spec.kernel; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * spec.stride + k) -
                                   static_cast<std::ptrdiff_t>(spec.pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
        const T* in = xv.data() + (bi * t_in + static_cast<std::size_t>(src)) * c_in;
        std::copy(in, in + c_in, row + k * c_in);
      }
    }
  }
  std::vector<T> out(rows * c_out);
  matmul_bias(cols->data(), rows, width, g.value(w).data(), c_out,
              b.valid() ? g.value(b).data() : nullptr, out.data());

  return g.emit(Shape{batch, t_out, c_out}, std::move(out), any_grad(g, {x, w, b}),
                [x, w, b, cols, spec, batch, t_in, c_in, t_out, c_out, rows, width](Graph<T>& gr,
                                                                                   Var self) {
                  const T* dout = gr.grad(self).data();
                  T* dw = grad_or_null(gr, w);
                  T* db = grad_or_null(gr, b);
                  std::vector<T> dcols;
                  T* dc = nullptr;
                  if (gr.requires_grad(x)) {
                    dcols.assign(rows * width, T(0));
                    dc = dcols.data();
                  }
                  matmul_bias_backward(cols->data(), rows, width, gr.value(w), c_out, dout, dc, dw, db);
                  if (dc == nullptr) return;
                  auto& dx = gr.grad(x);
                  for (std::size_t bi = 0; bi < batch; ++bi) {
                    for (std::size_t t = 0; t < t_out; ++t) {
                      const T* row = dc + (bi * t_out + t) * width;
                      for (std::size_t k = 0; k < spec.kernel; ++k) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * spec.stride + k) -
                                                   static_cast<std::ptrdiff_t>(spec.pad);
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
                        T* d = dx.data() + (bi * t_in + static_cast<std::size_t>(src)) * c_in;
                        const T* r = row + k * c_in;
                        for (std::size_t ci = 0; ci < c_in; ++ci) d[ci] += r[ci];
                      }
                    }
                  }
                });
}

template <typename T>
Var spectral_norm(Graph<T>& g, Var w, std::span<const T> u, std::span<const T> v) {
  const Shape& ws = g.shape(w);
  require(ws.size() == 2 && u.size() == ws[0] && v.size() == ws[1],
          "spectral_norm: power-iteration vectors do not match weight shape");
  const std::size_t rows = ws[0], cols = ws[1];
  const auto& wv = g.value(w);
  // sigma = u^T W v
  T sigma = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    sigma += u[r] * simd::dot(wv.data() + r * cols, v.data(), cols);
  }
  std::vector<T> out(wv);
  if (!(sigma > T(0))) {
    return g.emit(ws, std::move(out), g.requires_grad(w), [w](Graph<T>& gr, Var self) {
      const auto& dy = gr.grad(self);
      auto& dw = gr.grad(w);
      for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += dy[i];
    });
  }
  for (auto& e : out) e /= sigma;
  std::vector<T> uu(u.begin(), u.end());
  std::vector<T> vv(v.begin(), v.end());
  return g.emit(ws, std::move(out), g.requires_grad(w),
                [w, sigma, rows, cols, uu = std::move(uu), vv = std::move(vv)](Graph<T>& gr, Var self) {
                  const auto& dy = gr.grad(self);
                  const auto& y = gr.value(self);
                  const T inner = simd::dot(dy.data(), y.data(), dy.size());
                  auto& dw = gr.grad(w);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      const std::size_t i = r * cols + c;
                      dw[i] += (dy[i] - inner * uu[r] * vv[c]) / sigma;
                    }
                  }
                });
}

template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, Param<T>& running_mean,
               Param<T>& running_var, const BatchNormSpec& spec) {
  const Shape& xs = g.shape(x);
  require(!xs.empty(), "batch_norm: empty input");
  const std::size_t ch = xs.back();
  const std::size_t rows = numel(xs) / ch;
  require(numel(g.shape(gamma)) == ch && numel(g.shape(beta)) == ch &&
              running_mean.value.size() == ch && running_var.value.size() == ch,
          "batch_norm: channel count mismatch");
  const auto& xv = g.value(x);
  const auto& gv = g.value(gamma);
  const auto& bv = g.value(beta);

  std::vector<T> mean(ch), inv_std(ch);
  if (spec.training) {
    require(rows >= 2, "batch_norm: training mode needs at least two rows per channel");
    std::vector<double> s(ch, 0.0), s2(ch, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = xv.data() + r * ch;
      for (std::size_t c = 0; c < ch; ++c) s[c] += row[c];
    }
    for (std::size_t c = 0; c < ch; ++c) s[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = xv.data() + r * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = row[c] - s[c];
        s2[c] += d * d;
      }
    }
    const double m = spec.momentum;
    for (std::size_t c = 0; c < ch; ++c) {
      const double var = s2[c] / static_cast<double>(rows);
      mean[c] = static_cast<T>(s[c]);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + spec.eps));
      const double unbiased = s2[c] / static_cast<double>(rows - 1);
      running_mean.value[c] = static_cast<T>((1.0 - m) * running_mean.value[c] + m * s[c]);
      running_var.value[c] = static_cast<T>((1.0 - m) * running_var.value[c] + m * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running_mean.value[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.value[c]) + spec.eps));
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * ch;
    for (std::size_t c = 0; c < ch; ++c) {
      const T h = (xv[o + c] - mean[c]) * inv_std[c];
      (*xhat)[o + c] = h;
      out[o + c] = gv[c] * h + bv[c];
    }
  }
  const bool training = spec.training;
  return g.emit(xs, std::move(out), any_grad(g, {x, gamma, beta}),
                [x, gamma, beta, xhat, inv_std, rows, ch, training](Graph<T>& gr, Var self) {
                  const auto& dy = gr.grad(self);
                  const auto& gv = gr.value(gamma);
                  std::vector<double> sum_dy(ch, 0.0), sum_dy_h(ch, 0.0);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t o = r * ch;
                    for (std::size_t c = 0; c < ch; ++c) {
                      sum_dy[c] += dy[o + c];
                      sum_dy_h[c] += dy[o + c] * (*xhat)[o + c];
                    }
                  }
                  if (T* dg = grad_or_null(gr, gamma)) {
                    for (std::size_t c = 0; c < ch; ++c) dg[c] += static_cast<T>(sum_dy_h[c]);
                  }
                  if (T* db = grad_or_null(gr, beta)) {
                    for (std::size_t c = 0; c < ch; ++c) db[c] += static_cast<T>(sum_dy[c]);
                  }
                  if (!gr.requires_grad(x)) return;
                  auto& dx = gr.grad(x);
                  if (!training) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t o = r * ch;
                      for (std::size_t c = 0; c < ch; ++c) dx[o + c] += dy[o + c] * gv[c] * inv_std[c];
                    }
                    return;
                  }
                  // dxhat = dy * gamma; dx = inv_std / N * (N dxhat - sum dxhat - xhat sum(dxhat xhat))
                  const T n = static_cast<T>(rows);
                  std::vector<T> a(ch), bcoef(ch);
                  for (std::size_t c = 0; c < ch; ++c) {
                    a[c] = static_cast<T>(gv[c] * sum_dy[c]);
                    bcoef[c] = static_cast<T>(gv[c] * sum_dy_h[c]);
                  }
                  for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t o = r * ch;
                    for (std::size_t c = 0; c < ch; ++c) {
                      const T dh = dy[o + c] * gv[c];
                      dx[o + c] += inv_std[c] / n * (n * dh - a[c] - (*xhat)[o + c] * bcoef[c]);
                    }
                  }
                });
}

template <typename T>
Var swish(Graph<T>& g, Var x) {
  return unary(
      g, x, [](T v) { return v * sigmoid(v); },
      [](T v) {
        const T s = sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Var elu(Graph<T>& g, Var x) {
  return unary(
      g, x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v) { return v > T(0) ? T(1) : std::exp(v); });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T factor) {
  return unary(
      g, x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  require(g.value(a).size() == g.value(b).size(), "add: size mismatch");
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return g.emit(g.shape(a), std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, Var self) {
    const auto& dy = gr.grad(self);
    if (T* da = grad_or_null(gr, a)) {
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (T* db = grad_or_null(gr, b)) {
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
    }
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  require(g.value(a).size() == g.value(b).size(), "mul: size mismatch");
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return g.emit(g.shape(a), std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, Var self) {
    const auto& dy = gr.grad(self);
    const auto& av = gr.value(a);
    const auto& bv = gr.value(b);
    if (T* da = grad_or_null(gr, a)) {
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (T* db = grad_or_null(gr, b)) {
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var upsample_nearest(Graph<T>& g, Var x, std::size_t out_length, std::size_t factor) {
  const Shape& xs = g.shape(x);
  require(xs.size() == 3 && factor >= 1, "upsample_nearest: input must be (batch, time, channel)");
  const std::size_t batch = xs[0], t_in = xs[1], ch = xs[2];
  auto source = [t_in, factor](std::size_t t) { return std::min(t / factor, t_in - 1); };
  const auto& xv = g.value(x);
  std::vector<T> out(batch * out_length * ch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_length; ++t) {
      const T* src = xv.data() + (b * t_in + source(t)) * ch;
      std::copy(src, src + ch, out.data() + (b * out_length + t) * ch);
    }
  }
  return g.emit(Shape{batch, out_length, ch}, std::move(out), g.requires_grad(x),
                [x, batch, t_in, ch, out_length, source](Graph<T>& gr, Var self) {
                  const auto& dy = gr.grad(self);
                  auto& dx = gr.grad(x);
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t t = 0; t < out_length; ++t) {
                      const T* src = dy.data() + (b * out_length + t) * ch;
                      T* dst = dx.data() + (b * t_in + source(t)) * ch;
                      for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
                    }
                  }
                });
}

template <typename T>
Var mean_time(Graph<T>& g, Var x) {
  const Shape& xs = g.shape(x);
  require(xs.size() == 3, "mean_time: input must be (batch, time, channel)");
  const std::size_t batch = xs[0], len = xs[1], ch = xs[2];
  const auto& xv = g.value(x);
  std::vector<T> out(batch * ch, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    T* o = out.data() + b * ch;
    for (std::size_t t = 0; t < len; ++t) {
      const T* row = xv.data() + (b * len + t) * ch;
      for (std::size_t c = 0; c < ch; ++c) o[c] += row[c];
    }
    for (std::size_t c = 0; c < ch; ++c) o[c] /= static_cast<T>(len);
  }
  return g.emit(Shape{batch, ch}, std::move(out), g.requires_grad(x),
                [x, batch, len, ch](Graph<T>& gr, Var self) {
                  const auto& dy = gr.grad(self);
                  auto& dx = gr.grad(x);
                  const T inv = T(1) / static_cast<T>(len);
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t t = 0; t < len; ++t) {
                      T* row = dx.data() + (b * len + t) * ch;
                      for (std::size_t c = 0; c < ch; ++c) row[c] += dy[b * ch + c] * inv;
                    }
                  }
                });
}

template <typename T>
Var reshape(Graph<T>& g, Var x, Shape shape) {
  require(numel(shape) == g.value(x).size(), "reshape: element count mismatch");
  return g.emit(std::move(shape), g.value(x), g.requires_grad(x), [x](Graph<T>& gr, Var self) {
    const auto& dy = gr.grad(self);
    auto& dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

template <typename T>
Var slice_last(Graph<T>& g, Var x, std::size_t begin, std::size_t count) {
  const Shape& xs = g.shape(x);
  require(!xs.empty() && begin + count <= xs.back(), "slice_last: range out of bounds");
  const std::size_t width = xs.back();
  const std::size_t rows = numel(xs) / width;
  const auto& xv = g.value(x);
  std::vector<T> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(r * width + begin),
              xv.begin() + static_cast<std::ptrdiff_t>(r * width + begin + count),
              out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  Shape os = xs;
  os.back() = count;
  return g.emit(std::move(os), std::move(out), g.requires_grad(x),
                [x, rows, width, begin, count](Graph<T>& gr, Var self) {
                  const auto& dy = gr.grad(self);
                  auto& dx = gr.grad(x);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < count; ++c) dx[r * width + begin + c] += dy[r * count + c];
                  }
                });
}

template <typename T>
Var reparameterize(Graph<T>& g, Var mu, Var logvar, std::span<const T> eps) {
  const auto& mv = g.value(mu);
  const auto& lv = g.value(logvar);
  require(mv.size() == lv.size() && mv.size() == eps.size(), "reparameterize: size mismatch");
  std::vector<T> out(mv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] + std::exp(T(0.5) * lv[i]) * eps[i];
  std::vector<T> e(eps.begin(), eps.end());
  return g.emit(g.shape(mu), std::move(out), any_grad(g, {mu, logvar}),
                [mu, logvar, e = std::move(e)](Graph<T>& gr, Var self) {
                  const auto& dy = gr.grad(self);
                  if (T* dm = grad_or_null(gr, mu)) {
                    for (std::size_t i = 0; i < dy.size(); ++i) dm[i] += dy[i];
                  }
                  if (gr.requires_grad(logvar)) {
                    const auto& lv = gr.value(logvar);
                    auto& dl = gr.grad(logvar);
                    for (std::size_t i = 0; i < dy.size(); ++i) {
                      dl[i] += dy[i] * e[i] * T(0.5) * std::exp(T(0.5) * lv[i]);
                    }
                  }
                });
}

template <typename T>
Var mse(Graph<T>& g, Var prediction, Var target) {
  const auto& p = g.value(prediction);
  const auto& t = g.value(target);
  require(p.size() == t.size() && !p.empty(), "mse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  const std::size_t n = p.size();
  return g.emit(Shape{1}, std::vector<T>{static_cast<T>(acc / static_cast<double>(n))},
                any_grad(g, {prediction, target}), [prediction, target, n](Graph<T>& gr, Var self) {
                  const T scale = T(2) * gr.grad(self)[0] / static_cast<T>(n);
                  const auto& p = gr.value(prediction);
                  const auto& t = gr.value(target);
                  if (T* dp = grad_or_null(gr, prediction)) {
                    for (std::size_t i = 0; i < n; ++i) dp[i] += scale * (p[i] - t[i]);
                  }
                  if (T* dt = grad_or_null(gr, target)) {
                    for (std::size_t i = 0; i < n; ++i) dt[i] -= scale * (p[i] - t[i]);
                  }
                });
}

template <typename T>
Var kl_standard_normal(Graph<T>& g, Var mu, Var logvar) {
  const auto& m = g.value(mu);
  const auto& l = g.value(logvar);
  require(m.size() == l.size() && !g.shape(mu).empty(), "kl_standard_normal: size mismatch");
  const std::size_t batch = g.shape(mu)[0];
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    acc += 0.5 * (std::exp(static_cast<double>(l[i])) + static_cast<double>(m[i]) * m[i] - l[i] - 1.0);
  }
  return g.emit(Shape{1}, std::vector<T>{static_cast<T>(acc / static_cast<double>(batch))},
                any_grad(g, {mu, logvar}), [mu, logvar, batch](Graph<T>& gr, Var self) {
                  const T s = gr.grad(self)[0] / static_cast<T>(batch);
                  const auto& m = gr.value(mu);
                  const auto& l = gr.value(logvar);
                  if (T* dm = grad_or_null(gr, mu)) {
                    for (std::size_t i = 0; i < m.size(); ++i) dm[i] += s * m[i];
                  }
                  if (T* dl = grad_or_null(gr, logvar)) {
                    for (std::size_t i = 0; i < l.size(); ++i) dl[i] += s * T(0.5) * (std::exp(l[i]) - T(1));
                  }
                });
}

template <typename T>
Var kl_gaussian_pair(Graph<T>& g, Var mu_q, Var logvar_q, Var mu_p, Var logvar_p) {
  const auto& mq = g.value(mu_q);
  const auto& lq = g.value(logvar_q);
  const auto& mp = g.value(mu_p);
  const auto& lp = g.value(logvar_p);
  require(mq.size() == lq.size() && mq.size() == mp.size() && mq.size() == lp.size(),
          "kl_gaussian_pair: size mismatch");
  const std::size_t batch = g.shape(mu_q)[0];
  double acc = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double d = static_cast<double>(mq[i]) - mp[i];
    acc += 0.5 * (static_cast<double>(lp[i]) - lq[i]) +
           (std::exp(static_cast<double>(lq[i])) + d * d) / (2.0 * std::exp(static_cast<double>(lp[i]))) - 0.5;
  }
  return g.emit(Shape{1}, std::vector<T>{static_cast<T>(acc / static_cast<double>(batch))},
                any_grad(g, {mu_q, logvar_q, mu_p, logvar_p}),
                [mu_q, logvar_q, mu_p, logvar_p, batch](Graph<T>& gr, Var self) {
                  const T s = gr.grad(self)[0] / static_cast<T>(batch);
                  const auto& mq = gr.value(mu_q);
                  const auto& lq = gr.value(logvar_q);
                  const auto& mp = gr.value(mu_p);
                  const auto& lp = gr.value(logvar_p);
                  T* dmq = grad_or_null(gr, mu_q);
                  T* dlq = grad_or_null(gr, logvar_q);
                  T* dmp = grad_or_null(gr, mu_p);
                  T* dlp = grad_or_null(gr, logvar_p);
                  for (std::size_t i = 0; i < mq.size(); ++i) {
                    const T inv_vp = std::exp(-lp[i]);
                    const T d = mq[i] - mp[i];
                    const T vq = std::exp(lq[i]);
                    if (dmq) dmq[i] += s * d * inv_vp;
                    if (dmp) dmp[i] -= s * d * inv_vp;
                    if (dlq) dlq[i] += s * T(0.5) * (vq * inv_vp - T(1));
                    if (dlp) dlp[i] += s * T(0.5) * (T(1) - (vq + d * d) * inv_vp);
                  }
                });
}

template <typename T>
Var weighted_sum(Graph<T>& g, std::span<const Var> terms, std::span<const T> weights) {
  require(terms.size() == weights.size(), "weighted_sum: size mismatch");
  T total = T(0);
  bool rg = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(g.value(terms[i]).size() == 1, "weighted_sum: terms must be scalars");
    total += weights[i] * g.scalar(terms[i]);
    rg = rg || g.requires_grad(terms[i]);
  }
  std::vector<Var> tv(terms.begin(), terms.end());
  std::vector<T> wv(weights.begin(), weights.end());
  return g.emit(Shape{1}, std::vector<T>{total}, rg,
                [tv = std::move(tv), wv = std::move(wv)](Graph<T>& gr, Var self) {
                  const T dy = gr.grad(self)[0];
                  for (std::size_t i = 0; i < tv.size(); ++i) {
                    if (gr.requires_grad(tv[i])) gr.grad(tv[i])[0] += wv[i] * dy;
                  }
                });
}

template <typename T>
T power_iterate(std::span<const T> w, std::size_t rows, std::size_t cols, std::span<T> u,
                std::span<T> v, int iterations) {
  if (w.size() != rows * cols || u.size() != rows || v.size() != cols) {
    throw std::invalid_argument("power_iterate: shape mismatch");
  }
  auto normalize = [](std::span<T> x) {
    double n = 0.0;
    for (auto e : x) n += static_cast<double>(e) * e;
    n = std::sqrt(n);
    if (n > 0.0) {
      for (auto& e : x) e = static_cast<T>(e / n);
    }
  };
  for (int it = 0; it < iterations; ++it) {
    // v = W^T u
    std::fill(v.begin(), v.end(), T(0));
    for (std::size_t r = 0; r < rows; ++r) simd::axpy(u[r], w.data() + r * cols, v.data(), cols);
    normalize(v);
    for (std::size_t r = 0; r < rows; ++r) u[r] = simd::dot(w.data() + r * cols, v.data(), cols);
    normalize(u);
  }
  T sigma = T(0);
  for (std::size_t r = 0; r < rows; ++r) sigma += u[r] * simd::dot(w.data() + r * cols, v.data(), cols);
  return sigma;
}

#define LSHROM_INSTANTIATE_OPS(T)                                                                  \
  template Var linear<T>(Graph<T>&, Var, Var, Var);                                                \
  template Var conv1d<T>(Graph<T>&, Var, Var, Var, const ConvSpec&);                               \
  template Var spectral_norm<T>(Graph<T>&, Var, std::span<const T>, std::span<const T>);           \
  template Var batch_norm<T>(Graph<T>&, Var, Var, Var, Param<T>&, Param<T>&, const BatchNormSpec&); \
  template Var swish<T>(Graph<T>&, Var);                                                           \
  template Var elu<T>(Graph<T>&, Var);                                                             \
  template Var add<T>(Graph<T>&, Var, Var);                                                        \
  template Var mul<T>(Graph<T>&, Var, Var);                                                        \
  template Var scale<T>(Graph<T>&, Var, T);                                                        \
  template Var upsample_nearest<T>(Graph<T>&, Var, std::size_t, std::size_t);                      \
  template Var mean_time<T>(Graph<T>&, Var);                                                       \
  template Var reshape<T>(Graph<T>&, Var, Shape);                                                  \
  template Var slice_last<T>(Graph<T>&, Var, std::size_t, std::size_t);                            \
  template Var reparameterize<T>(Graph<T>&, Var, Var, std::span<const T>);                         \
  template Var mse<T>(Graph<T>&, Var, Var);                                                        \
  template Var kl_standard_normal<T>(Graph<T>&, Var, Var);                                         \
  template Var kl_gaussian_pair<T>(Graph<T>&, Var, Var, Var, Var);                                 \
  template Var weighted_sum<T>(Graph<T>&, std::span<const Var>, std::span<const T>);               \
  template T power_iterate<T>(std::span<const T>, std::size_t, std::size_t, std::span<T>,          \
                              std::span<T>, int);

LSHROM_INSTANTIATE_OPS(float)
LSHROM_INSTANTIATE_OPS(double)

#undef LSHROM_INSTANTIATE_OPS

}  // namespace lshrom::nn
