#ifndef PPMATTE_AUTOGRAD_HPP_
#define PPMATTE_AUTOGRAD_HPP_

// Reverse-mode differentiation over NCHW tensors. A Graph records every
// operation of one forward pass; backward() replays the tape in reverse.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ppmatte/tensor.hpp"

namespace ppmatte {

/// A trainable tensor with its accumulated gradient and optimizer state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> velocity;

  void zero_grad() { grad.fill(T(0)); }
};

/// A non-trainable persistent tensor (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T> value;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  explicit Graph(bool training = false) : training_(training) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }

  Var input(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {});
  }

  /// Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Var param(Parameter<T>& p) {
    Var v = push(p.value, true, {});
    nodes_[v.id]->parameter = &p;
    return v;
  }

  Var emplace(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn fn) {
    return emplace(std::move(value), std::vector<Var>(parents), std::move(fn));
  }

  Var emplace(Tensor<T> value, const std::vector<Var>& parents, BackwardFn fn) {
    bool req = false;
    for (Var p : parents) req = req || nodes_.at(p.id)->requires_grad;
    Var v = push(std::move(value), req, {});
    if (req) nodes_[v.id]->backward = std::move(fn);
    return v;
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id)->value; }
  const Tensor<T>& value(int id) const { return nodes_.at(id)->value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id)->requires_grad; }

  /// Gradient buffer of a node, allocated lazily.
  Tensor<T>& grad(Var v) { return grad(v.id); }
  Tensor<T>& grad(int id) {
    Node& n = *nodes_.at(id);
    if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(Var v) const { return !nodes_.at(v.id)->grad.empty(); }

  /// Back-propagates from a scalar node and accumulates parameter gradients.
  void backward(Var root) {
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!requires_grad(root)) return;
    grad(root)[0] = T(1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = *nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, id);
      } else if (n.parameter != nullptr) {
        Tensor<T>& pg = n.parameter->grad;
        if (pg.size() != n.grad.size()) pg = Tensor<T>(n.value.shape());
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* parameter = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  bool training_;
};

namespace ops {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  int cin, h, w, k, stride, pad, hout, wout;
  int rows() const { return cin * k * k; }
  int cols() const { return hout * wout; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* xp = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* out = row + static_cast<std::size_t>(oy) * g.wout;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wout, T(0));
            continue;
          }
          const T* in = xp + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  for (int ci = 0; ci < g.cin; ++ci) {
    T* xp = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* in = row + static_cast<std::size_t>(oy) * g.wout;
          T* out = xp + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

/// Bilinear sampling taps along one axis, half-pixel centers, edge clamped.
struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> frac;
};

inline Taps bilinear_taps(int in, int out) {
  Taps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    t.i0[o] = lo;
    t.i1[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - lo;
  }
  return t;
}

}  // namespace detail

/// 2-D convolution, zero padding. Weight layout (Cout, Cin, k, k); bias (1, Cout, 1, 1) optional.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, int stride, int pad) {
  using namespace detail;
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(weight).shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw std::invalid_argument("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  const ConvGeometry geo{xs.c, xs.h, xs.w, ws.h, stride, pad, (xs.h + 2 * pad - ws.h) / stride + 1,
                         (xs.w + 2 * pad - ws.w) / stride + 1};
  if (geo.hout <= 0 || geo.wout <= 0) throw std::invalid_argument("conv2d: empty output");
  const int cout = ws.n;
  Tensor<T> out(xs.n, cout, geo.hout, geo.wout);
  const bool direct = geo.k == 1 && stride == 1 && pad == 0;
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(geo.rows()) * geo.cols());
  ConstMatMap<T> wm(g.value(weight).data(), cout, geo.rows());
  for (int n = 0; n < xs.n; ++n) {
    const T* src = g.value(x).sample(n);
    if (!direct) {
      im2col(src, geo, col.data());
      src = col.data();
    }
    MatMap<T> om(out.sample(n), cout, geo.cols());
    om.noalias() = wm * ConstMatMap<T>(src, geo.rows(), geo.cols());
    if (bias.valid()) {
      const T* b = g.value(bias).data();
      for (int co = 0; co < cout; ++co) om.row(co).array() += b[co];
    }
  }
  std::vector<Var> parents{x, weight};
  if (bias.valid()) parents.push_back(bias);
  return g.emplace(std::move(out), parents, [=](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    std::vector<T> buf(direct ? 0 : static_cast<std::size_t>(geo.rows()) * geo.cols());
    ConstMatMap<T> wmat(gr.value(weight).data(), cout, geo.rows());
    const bool need_dx = gr.requires_grad(x);
    const bool need_dw = gr.requires_grad(weight);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap<T> dym(dy.sample(n), cout, geo.cols());
      if (need_dw) {
        const T* src = gr.value(x).sample(n);
        if (!direct) {
          im2col(src, geo, buf.data());
          src = buf.data();
        }
        MatMap<T> dw(gr.grad(weight).data(), cout, geo.rows());
        dw.noalias() += dym * ConstMatMap<T>(src, geo.rows(), geo.cols()).transpose();
      }
      if (need_dx) {
        if (direct) {
          MatMap<T> dx(gr.grad(x).sample(n), geo.rows(), geo.cols());
          dx.noalias() += wmat.transpose() * dym;
        } else {
          MatMap<T> dcol(buf.data(), geo.rows(), geo.cols());
          dcol.noalias() = wmat.transpose() * dym;
          col2im(buf.data(), geo, gr.grad(x).sample(n));
        }
      }
      if (bias.valid() && gr.requires_grad(bias)) {
        T* db = gr.grad(bias).data();
        // Plain loop: Eigen's vectorized reduction order depends on the
        // buffer's alignment, which would break run-to-run determinism.
        const T* d = dy.sample(n);
        for (int co = 0; co < cout; ++co) {
          T acc = 0;
          for (int i = 0; i < geo.cols(); ++i) acc += d[static_cast<std::size_t>(co) * geo.cols() + i];
          db[co] += acc;
        }
      }
    }
  });
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, int stride, int pad) {
  return conv2d(g, x, weight, Var{}, stride, pad);
}

/// Per-channel batch normalization. Training mode normalizes with batch
/// statistics and updates the running averages; eval mode uses the running
/// averages. Running update: r = momentum * r + (1 - momentum) * batch.
template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, Buffer<T>& running_mean, Buffer<T>& running_var,
               T momentum = T(0.9), T eps = T(1e-5)) {
  const Shape s = g.value(x).shape();
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  const Tensor<T>& xv = g.value(x);
  const T* gm = g.value(gamma).data();
  const T* bt = g.value(beta).data();
  std::vector<T> mean(s.c), inv_std(s.c);
  for (int c = 0; c < s.c; ++c) {
    if (g.training()) {
      double sum = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xv.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / count;
      double sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xv.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      running_mean.value[c] = momentum * running_mean.value[c] + (T(1) - momentum) * static_cast<T>(mu);
      running_var.value[c] = momentum * running_var.value[c] + (T(1) - momentum) * static_cast<T>(var);
    } else {
      mean[c] = running_mean.value[c];
      inv_std[c] = T(1) / std::sqrt(running_var.value[c] + eps);
    }
  }
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = xv.plane(n, c);
      T* o = out.plane(n, c);
      const T scale = gm[c] * inv_std[c];
      const T shift = bt[c] - mean[c] * scale;
      for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * scale + shift;
    }
  }
  const bool training = g.training();
  return g.emplace(std::move(out), {x, gamma, beta}, [=](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xin = gr.value(x);
    const T* gmv = gr.value(gamma).data();
    const bool need_dx = gr.requires_grad(x);
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* d = dy.plane(n, c);
        const T* p = xin.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * (p[i] - mean[c]) * inv_std[c];
        }
      }
      if (gr.requires_grad(gamma)) gr.grad(gamma)[c] += static_cast<T>(sum_dy_xhat);
      if (gr.requires_grad(beta)) gr.grad(beta)[c] += static_cast<T>(sum_dy);
      if (!need_dx) continue;
      const T k = gmv[c] * inv_std[c];
      const T mdy = static_cast<T>(sum_dy / count);
      const T mdx = static_cast<T>(sum_dy_xhat / count);
      for (int n = 0; n < s.n; ++n) {
        const T* d = dy.plane(n, c);
        const T* p = xin.plane(n, c);
        T* dx = gr.grad(x).plane(n, c);
        if (training) {
          for (std::size_t i = 0; i < plane; ++i) {
            const T xhat = (p[i] - mean[c]) * inv_std[c];
            dx[i] += k * (d[i] - mdy - xhat * mdx);
          }
        } else {
          for (std::size_t i = 0; i < plane; ++i) dx[i] += k * d[i];
        }
      }
    }
  });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
  return g.emplace(std::move(out), {x}, [x](Graph<T>& gr, int self) {
    const Tensor<T>& y = gr.value(self);
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] > T(0)) dx[i] += dy[i];
  });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.vec()) v = T(1) / (T(1) + std::exp(-v));
  return g.emplace(std::move(out), {x}, [x](Graph<T>& gr, int self) {
    const Tensor<T>& y = gr.value(self);
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
  });
}

/// Softmax across channels independently at every pixel.
template <typename T>
Var softmax_channels(Graph<T>& g, Var x) {
  const Shape s = g.value(x).shape();
  const std::size_t plane = s.plane();
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = xv.plane(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, xv.plane(n, c)[i]);
      T sum = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(xv.plane(n, c)[i] - mx);
        out.plane(n, c)[i] = e;
        sum += e;
      }
      for (int c = 0; c < s.c; ++c) out.plane(n, c)[i] /= sum;
    }
  }
  return g.emplace(std::move(out), {x}, [=](Graph<T>& gr, int self) {
    const Tensor<T>& y = gr.value(self);
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        T dot = 0;
        for (int c = 0; c < s.c; ++c) dot += y.plane(n, c)[i] * dy.plane(n, c)[i];
        for (int c = 0; c < s.c; ++c) dx.plane(n, c)[i] += y.plane(n, c)[i] * (dy.plane(n, c)[i] - dot);
      }
    }
  });
}

/// Bilinear resampling to (out_h, out_w) with half-pixel centers. Equal
/// sizes reproduce the input exactly.
template <typename T>
Var resize_bilinear(Graph<T>& g, Var x, int out_h, int out_w) {
  const Shape s = g.value(x).shape();
  if (s.h == out_h && s.w == out_w) return x;
  const auto ty = std::make_shared<detail::Taps>(detail::bilinear_taps(s.h, out_h));
  const auto tx = std::make_shared<detail::Taps>(detail::bilinear_taps(s.w, out_w));
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(s.n, s.c, out_h, out_w);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = xv.plane(n, c);
      T* o = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const T fy = static_cast<T>(ty->frac[y]);
        const T* r0 = p + static_cast<std::size_t>(ty->i0[y]) * s.w;
        const T* r1 = p + static_cast<std::size_t>(ty->i1[y]) * s.w;
        for (int xo = 0; xo < out_w; ++xo) {
          const T fx = static_cast<T>(tx->frac[xo]);
          const int x0 = tx->i0[xo], x1 = tx->i1[xo];
          const T top = r0[x0] + (r0[x1] - r0[x0]) * fx;
          const T bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
          o[static_cast<std::size_t>(y) * out_w + xo] = top + (bot - top) * fy;
        }
      }
    }
  }
  return g.emplace(std::move(out), {x}, [=](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* d = dy.plane(n, c);
        T* p = dx.plane(n, c);
        for (int y = 0; y < out_h; ++y) {
          const T fy = static_cast<T>(ty->frac[y]);
          T* r0 = p + static_cast<std::size_t>(ty->i0[y]) * s.w;
          T* r1 = p + static_cast<std::size_t>(ty->i1[y]) * s.w;
          for (int xo = 0; xo < out_w; ++xo) {
            const T fx = static_cast<T>(tx->frac[xo]);
            const int x0 = tx->i0[xo], x1 = tx->i1[xo];
            const T v = d[static_cast<std::size_t>(y) * out_w + xo];
            r0[x0] += v * (1 - fy) * (1 - fx);
            r0[x1] += v * (1 - fy) * fx;
            r1[x0] += v * fy * (1 - fx);
            r1[x1] += v * fy * fx;
          }
        }
      }
    }
  });
}

/// Adaptive average pooling to bins x bins; cell i spans
/// [floor(i*H/bins), ceil((i+1)*H/bins)).
template <typename T>
Var adaptive_avg_pool(Graph<T>& g, Var x, int bins) {
  const Shape s = g.value(x).shape();
  auto span_of = [](int i, int in, int out) {
    const int lo = (i * in) / out;
    const int hi = ((i + 1) * in + out - 1) / out;
    return std::pair<int, int>{lo, hi};
  };
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(s.n, s.c, bins, bins);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = xv.plane(n, c);
      for (int by = 0; by < bins; ++by) {
        const auto [y0, y1] = span_of(by, s.h, bins);
        for (int bx = 0; bx < bins; ++bx) {
          const auto [x0, x1] = span_of(bx, s.w, bins);
          T sum = 0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) sum += p[static_cast<std::size_t>(y) * s.w + xx];
          out.at(n, c, by, bx) = sum / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return g.emplace(std::move(out), {x}, [=](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        T* p = dx.plane(n, c);
        for (int by = 0; by < bins; ++by) {
          const auto [y0, y1] = span_of(by, s.h, bins);
          for (int bx = 0; bx < bins; ++bx) {
            const auto [x0, x1] = span_of(bx, s.w, bins);
            const T v = dy.at(n, c, by, bx) / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) p[static_cast<std::size_t>(y) * s.w + xx] += v;
          }
        }
      }
    }
  });
}

template <typename T>
Var concat_channels(Graph<T>& g, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape s0 = g.value(xs[0]).shape();
  int total = 0;
  for (Var v : xs) {
    const Shape s = g.value(v).shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw std::invalid_argument("concat_channels: spatial mismatch " + s.str() + " vs " + s0.str());
    total += s.c;
  }
  Tensor<T> out(s0.n, total, s0.h, s0.w);
  const std::size_t plane = s0.plane();
  for (int n = 0; n < s0.n; ++n) {
    T* dst = out.sample(n);
    for (Var v : xs) {
      const Tensor<T>& t = g.value(v);
      std::copy(t.sample(n), t.sample(n) + t.shape().sample(), dst);
      dst += t.shape().sample();
    }
  }
  return g.emplace(std::move(out), xs, [xs, s0, plane](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    for (int n = 0; n < s0.n; ++n) {
      const T* src = dy.sample(n);
      for (Var v : xs) {
        const std::size_t len = gr.value(v).shape().sample();
        if (gr.requires_grad(v)) {
          T* d = gr.grad(v).sample(n);
          for (std::size_t i = 0; i < len; ++i) d[i] += src[i];
        }
        src += len;
      }
    }
    (void)plane;
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  if (g.value(a).shape() != g.value(b).shape()) throw std::invalid_argument("add: shape mismatch");
  Tensor<T> out = g.value(a);
  const Tensor<T>& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.emplace(std::move(out), {a, b}, [a, b](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    for (Var v : {a, b}) {
      if (!gr.requires_grad(v)) continue;
      Tensor<T>& d = gr.grad(v);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

/// d * gate + d, with a single-channel gate broadcast across d's channels.
template <typename T>
Var gated_residual(Graph<T>& g, Var d, Var gate) {
  const Shape ds = g.value(d).shape();
  const Shape gs = g.value(gate).shape();
  if (gs.c != 1 || gs.n != ds.n || gs.h != ds.h || gs.w != ds.w)
    throw std::invalid_argument("gated_residual: gate " + gs.str() + " does not match " + ds.str());
  const std::size_t plane = ds.plane();
  Tensor<T> out(ds);
  for (int n = 0; n < ds.n; ++n) {
    const T* gp = g.value(gate).plane(n, 0);
    for (int c = 0; c < ds.c; ++c) {
      const T* dp = g.value(d).plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = dp[i] * gp[i] + dp[i];
    }
  }
  return g.emplace(std::move(out), {d, gate}, [=](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad(self);
    for (int n = 0; n < ds.n; ++n) {
      const T* gp = gr.value(gate).plane(n, 0);
      for (int c = 0; c < ds.c; ++c) {
        const T* dyp = dy.plane(n, c);
        if (gr.requires_grad(d)) {
          T* dd = gr.grad(d).plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) dd[i] += dyp[i] * (gp[i] + T(1));
        }
        if (gr.requires_grad(gate)) {
          const T* dp = gr.value(d).plane(n, c);
          T* dg = gr.grad(gate).plane(n, 0);
          for (std::size_t i = 0; i < plane; ++i) dg[i] += dyp[i] * dp[i];
        }
      }
    }
  });
}

/// Index of the largest of three class scores; ties go to the lowest index.
template <typename T>
inline int argmax3(T a, T b, T c) {
  int best = 0;
  T v = a;
  if (b > v) {
    best = 1;
    v = b;
  }
  if (c > v) best = 2;
  return best;
}

/// Replacement fusion: class 0 (foreground) -> 1, class 1 (background) -> 0,
/// class 2 (transition) -> the detail value. Gradient flows to detail only.
template <typename T>
Var fuse_replace(Graph<T>& g, Var probs, Var detail) {
  const Shape ps = g.value(probs).shape();
  const Shape ds = g.value(detail).shape();
  if (ps.c != 3 || ds.c != 1 || ps.n != ds.n || ps.h != ds.h || ps.w != ds.w)
    throw std::invalid_argument("fuse_replace: shapes " + ps.str() + " / " + ds.str());
  const std::size_t plane = ps.plane();
  auto transition = std::make_shared<std::vector<std::uint8_t>>(ds.numel());
  Tensor<T> out(ds);
  for (int n = 0; n < ps.n; ++n) {
    const Tensor<T>& p = g.value(probs);
    const T* dp = g.value(detail).plane(n, 0);
    T* o = out.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const int k = argmax3(p.plane(n, 0)[i], p.plane(n, 1)[i], p.plane(n, 2)[i]);
      (*transition)[n * plane + i] = k == 2;
      o[i] = k == 0 ? T(1) : (k == 1 ? T(0) : dp[i]);
    }
  }
  return g.emplace(std::move(out), {probs, detail}, [detail, transition](Graph<T>& gr, int self) {
    if (!gr.requires_grad(detail)) return;
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dd = gr.grad(detail);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if ((*transition)[i]) dd[i] += dy[i];
  });
}

/// Attaches an externally differentiated scalar: value with d(value)/d(x).
template <typename T>
Var external_scalar(Graph<T>& g, Var x, T value, Tensor<T> dvalue_dx) {
  if (dvalue_dx.shape() != g.value(x).shape()) throw std::invalid_argument("external_scalar: gradient shape");
  Tensor<T> out(1, 1, 1, 1, value);
  auto jac = std::make_shared<Tensor<T>>(std::move(dvalue_dx));
  return g.emplace(std::move(out), {x}, [x, jac](Graph<T>& gr, int self) {
    const T s = gr.grad(self)[0];
    Tensor<T>& dx = gr.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += s * (*jac)[i];
  });
}

/// Weighted sum of scalar nodes.
template <typename T>
Var weighted_sum(Graph<T>& g, const std::vector<Var>& xs, const std::vector<T>& weights) {
  if (xs.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  T total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (g.value(xs[i]).size() != 1) throw std::invalid_argument("weighted_sum: inputs must be scalar");
    total += weights[i] * g.value(xs[i])[0];
  }
  return g.emplace(Tensor<T>(1, 1, 1, 1, total), xs, [xs, weights](Graph<T>& gr, int self) {
    const T s = gr.grad(self)[0];
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (gr.requires_grad(xs[i])) gr.grad(xs[i])[0] += s * weights[i];
  });
}

}  // namespace ops
}  // namespace ppmatte

#endif  // PPMATTE_AUTOGRAD_HPP_
