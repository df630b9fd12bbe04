#include "macn/diff/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "macn/kern/kernels.hpp"

namespace macn::diff {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

int Tape::push(Shape shape, std::vector<double> values, bool requires_grad,
               std::function<void(Tape&)> back) {
  const int n = numel(shape);
  if (static_cast<int>(values.size()) != n)
    throw std::invalid_argument("tape: value size does not match shape");
  Node node;
  node.shape = std::move(shape);
  node.val = std::move(values);
  node.grad.assign(n, 0.0);
  node.requires_grad = requires_grad;
  if (requires_grad) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::at(TensorRef t) {
  if (!t.valid() || t.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: invalid tensor ref");
  return nodes_[t.id];
}

const Tape::Node& Tape::at(TensorRef t) const {
  if (!t.valid() || t.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: invalid tensor ref");
  return nodes_[t.id];
}

double* Tape::g(TensorRef t) {
  Node& n = at(t);
  n.has_grad = true;
  return n.grad.data();
}

// ---------------------------------------------------------------------------
// Leaves

TensorRef Tape::constant(Shape shape, std::vector<double> values) {
  return {push(std::move(shape), std::move(values), false, nullptr)};
}

TensorRef Tape::constant_scalar(double v) { return constant({1}, {v}); }

TensorRef Tape::zeros(Shape shape) {
  const int n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

TensorRef Tape::onehot(int n, int index) {
  require(index >= 0 && index < n, "onehot: index out of range");
  std::vector<double> v(n, 0.0);
  v[index] = 1.0;
  return constant({n}, std::move(v));
}

TensorRef Tape::leaf(Shape shape, std::vector<double> values,
                     bool requires_grad) {
  return {push(std::move(shape), std::move(values), requires_grad, nullptr)};
}

TensorRef Tape::param(Param& p) {
  TensorRef t{push(p.shape, p.value, true, nullptr)};
  at(t).bound_param = &p;
  return t;
}

// ---------------------------------------------------------------------------
// Network primitives

TensorRef Tape::conv2d(TensorRef input, TensorRef kernel, TensorRef bias) {
  const Shape& is = shape(input);
  const Shape& ks = shape(kernel);
  const Shape& bs = shape(bias);
  require(is.size() == 3 && ks.size() == 4 && bs.size() == 1,
          "conv2d: expects input[C,H,W], kernel[F,C,k,k], bias[F]");
  const int C = is[0], H = is[1], W = is[2];
  const int F = ks[0], k = ks[2];
  require(ks[1] == C, "conv2d: kernel input channels mismatch");
  require(ks[3] == k && k % 2 == 1, "conv2d: kernel must be square with odd k");
  require(bs[0] == F, "conv2d: bias size mismatch");
  const int r = k / 2;

  std::vector<double> out(static_cast<size_t>(F) * H * W);
  const double* in = v(input);
  const double* kw = v(kernel);
  const double* bv = v(bias);
  for (int f = 0; f < F; ++f) {
    double* of = out.data() + static_cast<size_t>(f) * H * W;
    std::fill(of, of + H * W, bv[f]);
    for (int c = 0; c < C; ++c) {
      const double* ic = in + static_cast<size_t>(c) * H * W;
      for (int dy = -r; dy <= r; ++dy) {
        const int y0 = std::max(0, -dy), y1 = std::min(H - 1, H - 1 - dy);
        for (int dx = -r; dx <= r; ++dx) {
          const double alpha =
              kw[((f * C + c) * k + (dy + r)) * k + (dx + r)];
          if (alpha == 0.0) continue;
          const int x0 = std::max(0, -dx), x1 = std::min(W - 1, W - 1 - dx);
          if (x1 < x0) continue;
          for (int y = y0; y <= y1; ++y) {
            kern::axpy(alpha, ic + (y + dy) * W + (x0 + dx), of + y * W + x0,
                       x1 - x0 + 1);
          }
        }
      }
    }
  }

  const bool needs = rg(input) || rg(kernel) || rg(bias);
  const int ii = input.id, ki = kernel.id, bi = bias.id;
  TensorRef result{push({F, H, W}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = result.id;
    at(result).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* in2 = t.v({ii});
      const double* kw2 = t.v({ki});
      const bool need_in = t.rg({ii});
      const bool need_k = t.rg({ki});
      const bool need_b = t.rg({bi});
      double* gin = need_in ? t.g({ii}) : nullptr;
      double* gk = need_k ? t.g({ki}) : nullptr;
      double* gb = need_b ? t.g({bi}) : nullptr;
      for (int f = 0; f < F; ++f) {
        const double* gof = go + static_cast<size_t>(f) * H * W;
        if (need_b) gb[f] += kern::vsum(gof, static_cast<size_t>(H) * W);
        for (int c = 0; c < C; ++c) {
          for (int dy = -r; dy <= r; ++dy) {
            const int y0 = std::max(0, -dy), y1 = std::min(H - 1, H - 1 - dy);
            for (int dx = -r; dx <= r; ++dx) {
              const int x0 = std::max(0, -dx), x1 = std::min(W - 1, W - 1 - dx);
              if (x1 < x0 || y1 < y0) continue;
              const int widx = ((f * C + c) * k + (dy + r)) * k + (dx + r);
              const double alpha = kw2[widx];
              double acc = 0.0;
              for (int y = y0; y <= y1; ++y) {
                const double* grow = gof + y * W + x0;
                const int ioff = (y + dy) * W + (x0 + dx);
                const int len = x1 - x0 + 1;
                if (need_in && alpha != 0.0)
                  kern::axpy(alpha, grow,
                             gin + static_cast<size_t>(c) * H * W + ioff, len);
                if (need_k)
                  acc += kern::dot(grow,
                                   in2 + static_cast<size_t>(c) * H * W + ioff,
                                   len);
              }
              if (need_k) gk[widx] += acc;
            }
          }
        }
      }
    };
  }
  return result;
}

TensorRef Tape::maxpool2d(TensorRef input, int window) {
  const Shape& is = shape(input);
  require(is.size() == 3, "maxpool2d: expects [C,H,W]");
  const int C = is[0], H = is[1], W = is[2];
  require(window > 0 && H % window == 0 && W % window == 0,
          "maxpool2d: extents must divide the window");
  const int Ho = H / window, Wo = W / window;
  const double* in = v(input);
  std::vector<double> out(static_cast<size_t>(C) * Ho * Wo);
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  for (int c = 0; c < C; ++c) {
    for (int yo = 0; yo < Ho; ++yo) {
      for (int xo = 0; xo < Wo; ++xo) {
        int best = -1;
        double bv = 0.0;
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            const int idx =
                (c * H + yo * window + dy) * W + xo * window + dx;
            if (best < 0 || in[idx] > bv) {  // ties: first index wins
              best = idx;
              bv = in[idx];
            }
          }
        }
        const int o = (c * Ho + yo) * Wo + xo;
        out[o] = bv;
        (*argmax)[o] = best;
      }
    }
  }
  const bool needs = rg(input);
  const int ii = input.id;
  TensorRef result{push({C, Ho, Wo}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = result.id;
    const int n_out = C * Ho * Wo;
    at(result).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      double* gin = t.g({ii});
      for (int o = 0; o < n_out; ++o) gin[(*argmax)[o]] += go[o];
    };
  }
  return result;
}

TensorRef Tape::channel_max(TensorRef input) {
  const Shape& is = shape(input);
  require(is.size() == 3, "channel_max: expects [A,H,W]");
  const int A = is[0], H = is[1], W = is[2];
  const int HW = H * W;
  const double* in = v(input);
  std::vector<double> out(HW);
  auto argmax = std::make_shared<std::vector<int>>(HW);
  for (int p = 0; p < HW; ++p) {
    int best = 0;
    double bv = in[p];
    for (int a = 1; a < A; ++a) {
      const double cand = in[a * HW + p];
      if (cand > bv) {  // first channel wins ties
        bv = cand;
        best = a;
      }
    }
    out[p] = bv;
    (*argmax)[p] = best;
  }
  const bool needs = rg(input);
  const int ii = input.id;
  TensorRef result{push({1, H, W}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = result.id;
    at(result).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      double* gin = t.g({ii});
      for (int p = 0; p < HW; ++p) gin[(*argmax)[p] * HW + p] += go[p];
    };
  }
  return result;
}

TensorRef Tape::dense(TensorRef x, TensorRef W, TensorRef b, Activation act) {
  const Shape& xs = shape(x);
  const Shape& ws = shape(W);
  const Shape& bs = shape(b);
  require(ws.size() == 2, "dense: weight must be [m,n]");
  const int m = ws[0], n = ws[1];
  require(numel(xs) == n, "dense: input size mismatch");
  require(bs.size() == 1 && bs[0] == m, "dense: bias size mismatch");

  std::vector<double> out(m);
  kern::matvec(v(W), v(x), out.data(), m, n);
  for (int i = 0; i < m; ++i) out[i] += v(b)[i];
  switch (act) {
    case Activation::None:
      break;
    case Activation::Relu:
      for (double& o : out) o = o > 0.0 ? o : 0.0;
      break;
    case Activation::Tanh:
      for (double& o : out) o = std::tanh(o);
      break;
  }

  const bool needs = rg(x) || rg(W) || rg(b);
  const int xi = x.id, wi = W.id, bi = b.id;
  TensorRef result{push({m}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = result.id;
    at(result).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* ov = t.v({oi});
      std::vector<double> dpre(m);
      switch (act) {
        case Activation::None:
          std::copy(go, go + m, dpre.begin());
          break;
        case Activation::Relu:
          for (int i = 0; i < m; ++i) dpre[i] = ov[i] > 0.0 ? go[i] : 0.0;
          break;
        case Activation::Tanh:
          for (int i = 0; i < m; ++i) dpre[i] = go[i] * (1.0 - ov[i] * ov[i]);
          break;
      }
      if (t.rg({xi}))
        kern::matvec_t_acc(t.v({wi}), dpre.data(), t.g({xi}), m, n);
      if (t.rg({wi})) kern::ger_acc(dpre.data(), t.v({xi}), t.g({wi}), m, n);
      if (t.rg({bi})) {
        double* gb = t.g({bi});
        for (int i = 0; i < m; ++i) gb[i] += dpre[i];
      }
    };
  }
  return result;
}

Tape::LstmOut Tape::lstm_step(TensorRef x, TensorRef h, TensorRef c,
                              TensorRef Wx, TensorRef Wh, TensorRef b) {
  const int d = numel(shape(x));
  const Shape& whs = shape(Wh);
  require(whs.size() == 2, "lstm_step: Wh must be [4u,u]");
  const int u = whs[1];
  require(whs[0] == 4 * u, "lstm_step: Wh must be [4u,u]");
  const Shape& wxs = shape(Wx);
  require(wxs.size() == 2 && wxs[0] == 4 * u && wxs[1] == d,
          "lstm_step: Wx must be [4u,d]");
  require(numel(shape(h)) == u && numel(shape(c)) == u,
          "lstm_step: state size mismatch");
  require(numel(shape(b)) == 4 * u, "lstm_step: bias size mismatch");

  // Gate order in the stacked weight blocks: input, forget, cell, output.
  std::vector<double> z(4 * u);
  kern::matvec(v(Wx), v(x), z.data(), 4 * u, d);
  std::vector<double> zh(4 * u);
  kern::matvec(v(Wh), v(h), zh.data(), 4 * u, u);
  for (int i = 0; i < 4 * u; ++i) z[i] += zh[i] + v(b)[i];

  auto saved = std::make_shared<std::vector<double>>(5 * u);
  double* gi = saved->data();
  double* gf = gi + u;
  double* gg = gf + u;
  double* go_ = gg + u;
  double* tc = go_ + u;

  std::vector<double> out(2 * u);  // [h'; c']
  for (int i = 0; i < u; ++i) {
    gi[i] = 1.0 / (1.0 + std::exp(-z[i]));
    gf[i] = 1.0 / (1.0 + std::exp(-z[u + i]));
    gg[i] = std::tanh(z[2 * u + i]);
    go_[i] = 1.0 / (1.0 + std::exp(-z[3 * u + i]));
    const double cn = gf[i] * v(c)[i] + gi[i] * gg[i];
    out[u + i] = cn;
    tc[i] = std::tanh(cn);
    out[i] = go_[i] * tc[i];
  }

  const bool needs = rg(x) || rg(h) || rg(c) || rg(Wx) || rg(Wh) || rg(b);
  const int xi = x.id, hi = h.id, ci = c.id, wxi = Wx.id, whi = Wh.id,
            bi = b.id;
  TensorRef pair{push({2 * u}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = pair.id;
    at(pair).back = [=](Tape& t) {
      const double* gout = t.gr({oi});  // [dh'; dc']
      const double* gi2 = saved->data();
      const double* gf2 = gi2 + u;
      const double* gg2 = gf2 + u;
      const double* go2 = gg2 + u;
      const double* tc2 = go2 + u;
      const double* cv = t.v({ci});
      std::vector<double> dz(4 * u);
      std::vector<double> dc_in(u);
      for (int i = 0; i < u; ++i) {
        const double dh = gout[i];
        const double dct = gout[u + i] + dh * go2[i] * (1.0 - tc2[i] * tc2[i]);
        const double dpo = dh * tc2[i] * go2[i] * (1.0 - go2[i]);
        const double dpf = dct * cv[i] * gf2[i] * (1.0 - gf2[i]);
        const double dpi = dct * gg2[i] * gi2[i] * (1.0 - gi2[i]);
        const double dpg = dct * gi2[i] * (1.0 - gg2[i] * gg2[i]);
        dz[i] = dpi;
        dz[u + i] = dpf;
        dz[2 * u + i] = dpg;
        dz[3 * u + i] = dpo;
        dc_in[i] = dct * gf2[i];
      }
      if (t.rg({xi}))
        kern::matvec_t_acc(t.v({wxi}), dz.data(), t.g({xi}), 4 * u, d);
      if (t.rg({hi}))
        kern::matvec_t_acc(t.v({whi}), dz.data(), t.g({hi}), 4 * u, u);
      if (t.rg({ci})) {
        double* gc = t.g({ci});
        for (int i = 0; i < u; ++i) gc[i] += dc_in[i];
      }
      if (t.rg({wxi}))
        kern::ger_acc(dz.data(), t.v({xi}), t.g({wxi}), 4 * u, d);
      if (t.rg({whi}))
        kern::ger_acc(dz.data(), t.v({hi}), t.g({whi}), 4 * u, u);
      if (t.rg({bi})) {
        double* gb = t.g({bi});
        for (int i = 0; i < 4 * u; ++i) gb[i] += dz[i];
      }
    };
  }
  return {slice(pair, 0, u), slice(pair, u, u)};
}

TensorRef Tape::softmax(TensorRef x) {
  const int n = numel(shape(x));
  require(n >= 1, "softmax: empty input");
  const double* xv = v(x);
  double mx = xv[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, xv[i]);
  std::vector<double> out(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(xv[i] - mx);
    total += out[i];
  }
  for (double& o : out) o /= total;

  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef result{push({n}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = result.id;
    at(result).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* p = t.v({oi});
      const double gdotp = kern::dot(go, p, n);
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i) gx[i] += p[i] * (go[i] - gdotp);
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise / shape ops

TensorRef Tape::add(TensorRef a, TensorRef b) {
  const int n = numel(shape(a));
  require(numel(shape(b)) == n, "add: shape mismatch");
  std::vector<double> out(v(a), v(a) + n);
  const double* bv = v(b);
  for (int i = 0; i < n; ++i) out[i] += bv[i];
  const bool needs = rg(a) || rg(b);
  const int ai = a.id, bi = b.id;
  TensorRef r{push(shape(a), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({ai})) kern::axpy(1.0, go, t.g({ai}), n);
      if (t.rg({bi})) kern::axpy(1.0, go, t.g({bi}), n);
    };
  }
  return r;
}

TensorRef Tape::sub(TensorRef a, TensorRef b) {
  const int n = numel(shape(a));
  require(numel(shape(b)) == n, "sub: shape mismatch");
  std::vector<double> out(v(a), v(a) + n);
  const double* bv = v(b);
  for (int i = 0; i < n; ++i) out[i] -= bv[i];
  const bool needs = rg(a) || rg(b);
  const int ai = a.id, bi = b.id;
  TensorRef r{push(shape(a), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({ai})) kern::axpy(1.0, go, t.g({ai}), n);
      if (t.rg({bi})) kern::axpy(-1.0, go, t.g({bi}), n);
    };
  }
  return r;
}

TensorRef Tape::mul(TensorRef a, TensorRef b) {
  const int n = numel(shape(a));
  require(numel(shape(b)) == n, "mul: shape mismatch");
  std::vector<double> out(n);
  kern::vmul(v(a), v(b), out.data(), n);
  const bool needs = rg(a) || rg(b);
  const int ai = a.id, bi = b.id;
  TensorRef r{push(shape(a), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({ai})) {
        double* ga = t.g({ai});
        const double* bv = t.v({bi});
        for (int i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
      }
      if (t.rg({bi})) {
        double* gb = t.g({bi});
        const double* av = t.v({ai});
        for (int i = 0; i < n; ++i) gb[i] += go[i] * av[i];
      }
    };
  }
  return r;
}

TensorRef Tape::div(TensorRef a, TensorRef b) {
  const int n = numel(shape(a));
  require(numel(shape(b)) == n, "div: shape mismatch");
  std::vector<double> out(n);
  const double* av = v(a);
  const double* bv = v(b);
  for (int i = 0; i < n; ++i) out[i] = av[i] / bv[i];
  const bool needs = rg(a) || rg(b);
  const int ai = a.id, bi = b.id;
  TensorRef r{push(shape(a), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* av2 = t.v({ai});
      const double* bv2 = t.v({bi});
      if (t.rg({ai})) {
        double* ga = t.g({ai});
        for (int i = 0; i < n; ++i) ga[i] += go[i] / bv2[i];
      }
      if (t.rg({bi})) {
        double* gb = t.g({bi});
        for (int i = 0; i < n; ++i)
          gb[i] -= go[i] * av2[i] / (bv2[i] * bv2[i]);
      }
    };
  }
  return r;
}

TensorRef Tape::mul_scalar(TensorRef x, TensorRef s) {
  const int n = numel(shape(x));
  require(numel(shape(s)) == 1, "mul_scalar: scale must be a single value");
  const double sv = v(s)[0];
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = xv[i] * sv;
  const bool needs = rg(x) || rg(s);
  const int xi = x.id, si = s.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({xi})) kern::axpy(t.v({si})[0], go, t.g({xi}), n);
      if (t.rg({si})) t.g({si})[0] += kern::dot(go, t.v({xi}), n);
    };
  }
  return r;
}

TensorRef Tape::affine(TensorRef x, double scale, double shift) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = scale * xv[i] + shift;
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) { kern::axpy(scale, t.gr({oi}), t.g({xi}), n); };
  }
  return r;
}

TensorRef Tape::relu(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* ov = t.v({oi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i)
        if (ov[i] > 0.0) gx[i] += go[i];
    };
  }
  return r;
}

TensorRef Tape::tanh_act(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* ov = t.v({oi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i) gx[i] += go[i] * (1.0 - ov[i] * ov[i]);
    };
  }
  return r;
}

TensorRef Tape::sigmoid(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* ov = t.v({oi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i) gx[i] += go[i] * ov[i] * (1.0 - ov[i]);
    };
  }
  return r;
}

TensorRef Tape::softplus(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) {
    // log(1+e^x) computed without overflow for large |x|
    out[i] = xv[i] > 0.0 ? xv[i] + std::log1p(std::exp(-xv[i]))
                         : std::log1p(std::exp(xv[i]));
  }
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* xv2 = t.v({xi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i)
        gx[i] += go[i] / (1.0 + std::exp(-xv2[i]));
    };
  }
  return r;
}

TensorRef Tape::vsqrt(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = std::sqrt(xv[i]);
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* ov = t.v({oi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i) gx[i] += go[i] * 0.5 / ov[i];
    };
  }
  return r;
}

TensorRef Tape::vmax_const(TensorRef x, double c) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = xv[i] > c ? xv[i] : c;
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* xv2 = t.v({xi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i)
        if (xv2[i] > c) gx[i] += go[i];
    };
  }
  return r;
}

TensorRef Tape::log_floor(TensorRef x, double floor) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  for (int i = 0; i < n; ++i) out[i] = std::log(xv[i] > floor ? xv[i] : floor);
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      const double* xv2 = t.v({xi});
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i)
        if (xv2[i] > floor) gx[i] += go[i] / xv2[i];
    };
  }
  return r;
}

TensorRef Tape::reshape(TensorRef x, Shape s) {
  require(numel(s) == numel(shape(x)), "reshape: element count mismatch");
  const int n = numel(s);
  std::vector<double> out(v(x), v(x) + n);
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(std::move(s), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) { kern::axpy(1.0, t.gr({oi}), t.g({xi}), n); };
  }
  return r;
}

TensorRef Tape::concat(std::span<const TensorRef> parts) {
  require(!parts.empty(), "concat: no inputs");
  int total = 0;
  bool needs = false;
  for (TensorRef p : parts) {
    total += numel(shape(p));
    needs = needs || rg(p);
  }
  std::vector<double> out;
  out.reserve(total);
  std::vector<std::pair<int, int>> pieces;  // (id, length)
  for (TensorRef p : parts) {
    const int n = numel(shape(p));
    out.insert(out.end(), v(p), v(p) + n);
    pieces.emplace_back(p.id, n);
  }
  TensorRef r{push({total}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      int off = 0;
      for (auto [id, n] : pieces) {
        if (t.rg({id})) kern::axpy(1.0, go + off, t.g({id}), n);
        off += n;
      }
    };
  }
  return r;
}

TensorRef Tape::concat2(TensorRef a, TensorRef b) {
  const TensorRef parts[] = {a, b};
  return concat(parts);
}

TensorRef Tape::concat3(TensorRef a, TensorRef b, TensorRef c) {
  const TensorRef parts[] = {a, b, c};
  return concat(parts);
}

TensorRef Tape::slice(TensorRef x, int offset, int len) {
  const int n = numel(shape(x));
  require(offset >= 0 && len >= 0 && offset + len <= n, "slice: out of range");
  std::vector<double> out(v(x) + offset, v(x) + offset + len);
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push({len}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      kern::axpy(1.0, t.gr({oi}), t.g({xi}) + offset, len);
    };
  }
  return r;
}

TensorRef Tape::sum(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out{kern::vsum(v(x), n)};
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push({1}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double go = t.gr({oi})[0];
      double* gx = t.g({xi});
      for (int i = 0; i < n; ++i) gx[i] += go;
    };
  }
  return r;
}

TensorRef Tape::mean(TensorRef x) {
  const int n = numel(shape(x));
  return affine(sum(x), 1.0 / n, 0.0);
}

TensorRef Tape::gather(TensorRef x, int index) {
  const int n = numel(shape(x));
  require(index >= 0 && index < n, "gather: index out of range");
  std::vector<double> out{v(x)[index]};
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push({1}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) { t.g({xi})[index] += t.gr({oi})[0]; };
  }
  return r;
}

TensorRef Tape::matvec(TensorRef M, TensorRef x) {
  const Shape& ms = shape(M);
  require(ms.size() == 2, "matvec: M must be [m,n]");
  const int m = ms[0], n = ms[1];
  require(numel(shape(x)) == n, "matvec: size mismatch");
  std::vector<double> out(m);
  kern::matvec(v(M), v(x), out.data(), m, n);
  const bool needs = rg(M) || rg(x);
  const int mi = M.id, xi = x.id;
  TensorRef r{push({m}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({xi})) kern::matvec_t_acc(t.v({mi}), go, t.g({xi}), m, n);
      if (t.rg({mi})) kern::ger_acc(go, t.v({xi}), t.g({mi}), m, n);
    };
  }
  return r;
}

TensorRef Tape::vecmat(TensorRef w, TensorRef M) {
  const Shape& ms = shape(M);
  require(ms.size() == 2, "vecmat: M must be [m,n]");
  const int m = ms[0], n = ms[1];
  require(numel(shape(w)) == m, "vecmat: size mismatch");
  std::vector<double> out(n, 0.0);
  kern::matvec_t_acc(v(M), v(w), out.data(), m, n);
  const bool needs = rg(w) || rg(M);
  const int wi = w.id, mi = M.id;
  TensorRef r{push({n}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({wi})) {
        // dw = M g
        std::vector<double> tmp(m);
        kern::matvec(t.v({mi}), go, tmp.data(), m, n);
        kern::axpy(1.0, tmp.data(), t.g({wi}), m);
      }
      if (t.rg({mi})) kern::ger_acc(t.v({wi}), go, t.g({mi}), m, n);
    };
  }
  return r;
}

TensorRef Tape::outer(TensorRef a, TensorRef b) {
  const int m = numel(shape(a));
  const int n = numel(shape(b));
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  kern::ger_acc(v(a), v(b), out.data(), m, n);
  const bool needs = rg(a) || rg(b);
  const int ai = a.id, bi = b.id;
  TensorRef r{push({m, n}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      if (t.rg({ai})) {
        std::vector<double> tmp(m);
        kern::matvec(go, t.v({bi}), tmp.data(), m, n);
        kern::axpy(1.0, tmp.data(), t.g({ai}), m);
      }
      if (t.rg({bi})) kern::matvec_t_acc(go, t.v({ai}), t.g({bi}), m, n);
    };
  }
  return r;
}

TensorRef Tape::row_sum(TensorRef M) {
  const Shape& ms = shape(M);
  require(ms.size() == 2, "row_sum: M must be [m,n]");
  const int m = ms[0], n = ms[1];
  std::vector<double> out(m);
  for (int r2 = 0; r2 < m; ++r2) out[r2] = kern::vsum(v(M) + r2 * n, n);
  const bool needs = rg(M);
  const int mi = M.id;
  TensorRef r{push({m}, std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      const double* go = t.gr({oi});
      double* gm = t.g({mi});
      for (int r2 = 0; r2 < m; ++r2) {
        const double gv = go[r2];
        if (gv == 0.0) continue;
        double* row = gm + r2 * n;
        for (int i = 0; i < n; ++i) row[i] += gv;
      }
    };
  }
  return r;
}

TensorRef Tape::cumprod_exclusive(TensorRef x) {
  const int n = numel(shape(x));
  std::vector<double> out(n);
  const double* xv = v(x);
  double p = 1.0;
  for (int i = 0; i < n; ++i) {
    out[i] = p;
    p *= xv[i];
  }
  const bool needs = rg(x);
  const int xi = x.id;
  TensorRef r{push(shape(x), std::move(out), needs, nullptr)};
  if (needs) {
    const int oi = r.id;
    at(r).back = [=](Tape& t) {
      // dx_k = P_k * T_k with P_k the exclusive prefix product (the output)
      // and T_k = g_{k+1} + x_{k+1} * T_{k+1}.
      const double* go = t.gr({oi});
      const double* xv2 = t.v({xi});
      const double* pv = t.v({oi});
      double* gx = t.g({xi});
      double tk = 0.0;
      for (int k = n - 1; k >= 0; --k) {
        if (k < n - 1) tk = go[k + 1] + xv2[k + 1] * tk;
        gx[k] += pv[k] * tk;
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Backward sweep

void Tape::backward(TensorRef loss) {
  Node& l = at(loss);
  if (numel(l.shape) != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  l.grad[0] = 1.0;
  l.has_grad = true;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.has_grad && n.back) n.back(*this);
  }
  for (Node& n : nodes_) {
    if (n.bound_param && n.has_grad) {
      double* dst = n.bound_param->grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Access

std::span<const double> Tape::val(TensorRef t) const {
  const Node& n = at(t);
  return {n.val.data(), n.val.size()};
}

std::span<const double> Tape::grad(TensorRef t) const {
  const Node& n = at(t);
  return {n.grad.data(), n.grad.size()};
}

std::vector<double> Tape::val_copy(TensorRef t) const {
  const Node& n = at(t);
  return n.val;
}

double Tape::scalar(TensorRef t) const {
  const Node& n = at(t);
  if (numel(n.shape) != 1)
    throw std::invalid_argument("scalar: tensor is not a single value");
  return n.val[0];
}

const Shape& Tape::shape(TensorRef t) const { return at(t).shape; }

int Tape::size_of(TensorRef t) const { return numel(at(t).shape); }

void Tape::clear() { nodes_.clear(); }

}  // namespace macn::diff
