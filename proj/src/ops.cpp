#include "avcn/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace avcn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_3d(const Tensor& x, const char* who) {
  if (x.ndim() != 3) throw std::invalid_argument(std::string(who) + ": expected (M,C,F) tensor");
}

}  // namespace

void init_uniform_fanin(Param& p, int fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& w : p.w.v) w = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------
// LinearChan

void LinearChan::init(int in, int out, Rng& rng) {
  ci = in;
  co = out;
  weight.init({co, ci});
  bias.init({co});
  init_uniform_fanin(weight, ci, rng);
  init_uniform_fanin(bias, ci, rng);
}

void LinearChan::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

Tensor LinearChan::forward(const Tensor& x, const Ctx& ctx) {
  check_3d(x, "linear_chan");
  if (x.dim(1) != ci) throw std::invalid_argument("linear_chan: channel mismatch");
  const int M = x.dim(0), F = x.dim(2);
  Tensor y({M, co, F});
  for (int m = 0; m < M; ++m) {
    double* ym = y.data() + static_cast<size_t>(m) * co * F;
    gemm_nn(weight.w.data(), x.data() + static_cast<size_t>(m) * ci * F, ym, co, ci, F);
    for (int o = 0; o < co; ++o) {
      const double b = bias.w.at(o);
      for (int f = 0; f < F; ++f) ym[static_cast<size_t>(o) * F + f] += b;
    }
  }
  if (ctx.training) x_cache = x;
  return y;
}

Tensor LinearChan::backward(const Tensor& gy) {
  const Tensor& x = x_cache;
  const int M = x.dim(0), F = x.dim(2);
  Tensor dx({M, ci, F});
  for (int m = 0; m < M; ++m) {
    const double* gym = gy.data() + static_cast<size_t>(m) * co * F;
    gemm_tn(weight.w.data(), gym, dx.data() + static_cast<size_t>(m) * ci * F, ci, co, F);
    gemm_nt(gym, x.data() + static_cast<size_t>(m) * ci * F, weight.g.data(), co, F, ci);
    for (int o = 0; o < co; ++o) {
      double s = 0.0;
      for (int f = 0; f < F; ++f) s += gym[static_cast<size_t>(o) * F + f];
      bias.g.at(o) += s;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ConvMHF

void ConvMHF::init(ConvAxis a, int in, int out, int kernel, int g, Rng& rng) {
  if (in % g != 0 || out % g != 0) throw std::invalid_argument("conv: channels not divisible by groups");
  if (kernel % 2 == 0) throw std::invalid_argument("conv: kernel must be odd");
  axis = a;
  ci = in;
  co = out;
  k = kernel;
  groups = g;
  weight.init({co, ci / g, k});
  bias.init({co});
  init_uniform_fanin(weight, (ci / g) * k, rng);
  init_uniform_fanin(bias, (ci / g) * k, rng);
}

void ConvMHF::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

Tensor ConvMHF::forward(const Tensor& x, const Ctx& ctx) {
  check_3d(x, "conv");
  if (x.dim(1) != ci) throw std::invalid_argument("conv: channel mismatch");
  const int M = x.dim(0), F = x.dim(2);
  const int off = k / 2;
  const int cig = ci / groups;
  const int cog = co / groups;
  Tensor y({M, co, F});

  for (int m = 0; m < M; ++m)
    for (int o = 0; o < co; ++o) {
      double* yrow = &y.at(m, o, 0);
      const double b = bias.w.at(o);
      for (int f = 0; f < F; ++f) yrow[f] = b;
      const int gbase = (o / cog) * cig;
      for (int ig = 0; ig < cig; ++ig)
        for (int j = 0; j < k; ++j) {
          const double w = weight.w.at(o, ig, j);
          if (axis == ConvAxis::freq) {
            const int shift = j - off;
            const int f0 = std::max(0, -shift);
            const int f1 = std::min(F, F - shift);
            const double* xrow = &x.at(m, gbase + ig, 0);
            for (int f = f0; f < f1; ++f) yrow[f] += w * xrow[f + shift];
          } else {
            const int ms = m + j - off;
            if (ms < 0 || ms >= M) continue;
            const double* xrow = &x.at(ms, gbase + ig, 0);
            for (int f = 0; f < F; ++f) yrow[f] += w * xrow[f];
          }
        }
    }
  if (ctx.training) x_cache = x;
  return y;
}

Tensor ConvMHF::backward(const Tensor& gy) {
  const Tensor& x = x_cache;
  const int M = x.dim(0), F = x.dim(2);
  const int off = k / 2;
  const int cig = ci / groups;
  const int cog = co / groups;
  Tensor dx({M, ci, F});

  for (int m = 0; m < M; ++m)
    for (int o = 0; o < co; ++o) {
      const double* grow = &gy.at(m, o, 0);
      double s = 0.0;
      for (int f = 0; f < F; ++f) s += grow[f];
      bias.g.at(o) += s;
      const int gbase = (o / cog) * cig;
      for (int ig = 0; ig < cig; ++ig)
        for (int j = 0; j < k; ++j) {
          const double w = weight.w.at(o, ig, j);
          double gw = 0.0;
          if (axis == ConvAxis::freq) {
            const int shift = j - off;
            const int f0 = std::max(0, -shift);
            const int f1 = std::min(F, F - shift);
            const double* xrow = &x.at(m, gbase + ig, 0);
            double* dxrow = &dx.at(m, gbase + ig, 0);
            for (int f = f0; f < f1; ++f) {
              gw += grow[f] * xrow[f + shift];
              dxrow[f + shift] += w * grow[f];
            }
          } else {
            const int ms = m + j - off;
            if (ms < 0 || ms >= M) continue;
            const double* xrow = &x.at(ms, gbase + ig, 0);
            double* dxrow = &dx.at(ms, gbase + ig, 0);
            for (int f = 0; f < F; ++f) {
              gw += grow[f] * xrow[f];
              dxrow[f] += w * grow[f];
            }
          }
          weight.g.at(o, ig, j) += gw;
        }
    }
  return dx;
}

// ---------------------------------------------------------------------------
// LayerNormChan

void LayerNormChan::init(int channels) {
  c = channels;
  gamma.init({c});
  beta.init({c});
  gamma.w.fill(1.0);
}

void LayerNormChan::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".gamma", gamma);
  add_param(out, prefix + ".beta", beta);
}

Tensor LayerNormChan::forward(const Tensor& x, const Ctx& ctx) {
  check_3d(x, "layernorm");
  if (x.dim(1) != c) throw std::invalid_argument("layernorm: channel mismatch");
  const int M = x.dim(0), F = x.dim(2);
  Tensor y({M, c, F});
  Tensor mean({M, F}), rstd({M, F});

  for (int m = 0; m < M; ++m) {
    for (int f = 0; f < F; ++f) mean.at(m, f) = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double* xrow = &x.at(m, ch, 0);
      double* mrow = &mean.at(m, 0);
      for (int f = 0; f < F; ++f) mrow[f] += xrow[f];
    }
    for (int f = 0; f < F; ++f) mean.at(m, f) /= c;
    std::vector<double> var(static_cast<size_t>(F), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const double* xrow = &x.at(m, ch, 0);
      const double* mrow = &mean.at(m, 0);
      for (int f = 0; f < F; ++f) {
        const double d = xrow[f] - mrow[f];
        var[f] += d * d;
      }
    }
    for (int f = 0; f < F; ++f) rstd.at(m, f) = 1.0 / std::sqrt(var[f] / c + eps);
    for (int ch = 0; ch < c; ++ch) {
      const double g = gamma.w.at(ch), b = beta.w.at(ch);
      const double* xrow = &x.at(m, ch, 0);
      double* yrow = &y.at(m, ch, 0);
      for (int f = 0; f < F; ++f)
        yrow[f] = g * (xrow[f] - mean.at(m, f)) * rstd.at(m, f) + b;
    }
  }
  if (ctx.training) {
    x_cache = x;
    mean_cache = mean;
    rstd_cache = rstd;
  }
  return y;
}

Tensor LayerNormChan::backward(const Tensor& gy) {
  const Tensor& x = x_cache;
  const int M = x.dim(0), F = x.dim(2);
  Tensor dx({M, c, F});

  for (int m = 0; m < M; ++m) {
    std::vector<double> sum_g(static_cast<size_t>(F), 0.0);
    std::vector<double> sum_gx(static_cast<size_t>(F), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const double g = gamma.w.at(ch);
      const double* xrow = &x.at(m, ch, 0);
      const double* grow = &gy.at(m, ch, 0);
      double dgamma = 0.0, dbeta = 0.0;
      for (int f = 0; f < F; ++f) {
        const double xh = (xrow[f] - mean_cache.at(m, f)) * rstd_cache.at(m, f);
        const double dxh = grow[f] * g;
        sum_g[f] += dxh;
        sum_gx[f] += dxh * xh;
        dgamma += grow[f] * xh;
        dbeta += grow[f];
      }
      gamma.g.at(ch) += dgamma;
      beta.g.at(ch) += dbeta;
    }
    for (int ch = 0; ch < c; ++ch) {
      const double g = gamma.w.at(ch);
      const double* xrow = &x.at(m, ch, 0);
      const double* grow = &gy.at(m, ch, 0);
      double* dxrow = &dx.at(m, ch, 0);
      for (int f = 0; f < F; ++f) {
        const double r = rstd_cache.at(m, f);
        const double xh = (xrow[f] - mean_cache.at(m, f)) * r;
        const double dxh = grow[f] * g;
        dxrow[f] = r * (dxh - sum_g[f] / c - xh * sum_gx[f] / c);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GroupNormFSeq

void GroupNormFSeq::init(int channels, int g) {
  if (channels % g != 0) throw std::invalid_argument("groupnorm: channels not divisible by groups");
  c = channels;
  groups = g;
  gamma.init({c});
  beta.init({c});
  gamma.w.fill(1.0);
}

void GroupNormFSeq::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".gamma", gamma);
  add_param(out, prefix + ".beta", beta);
}

Tensor GroupNormFSeq::forward(const Tensor& x, const Ctx& ctx) {
  check_3d(x, "groupnorm");
  if (x.dim(1) != c) throw std::invalid_argument("groupnorm: channel mismatch");
  const int M = x.dim(0), F = x.dim(2);
  const int cg = c / groups;
  Tensor y({M, c, F});
  Tensor mean({F, groups}), rstd({F, groups});

  for (int gidx = 0; gidx < groups; ++gidx) {
    std::vector<double> sum(static_cast<size_t>(F), 0.0), sq(static_cast<size_t>(F), 0.0);
    for (int m = 0; m < M; ++m)
      for (int ch = gidx * cg; ch < (gidx + 1) * cg; ++ch) {
        const double* xrow = &x.at(m, ch, 0);
        for (int f = 0; f < F; ++f) {
          sum[f] += xrow[f];
          sq[f] += xrow[f] * xrow[f];
        }
      }
    const double n = static_cast<double>(M) * cg;
    for (int f = 0; f < F; ++f) {
      const double mu = sum[f] / n;
      const double var = sq[f] / n - mu * mu;
      mean.at(f, gidx) = mu;
      rstd.at(f, gidx) = 1.0 / std::sqrt(var + eps);
    }
    for (int m = 0; m < M; ++m)
      for (int ch = gidx * cg; ch < (gidx + 1) * cg; ++ch) {
        const double gch = gamma.w.at(ch), b = beta.w.at(ch);
        const double* xrow = &x.at(m, ch, 0);
        double* yrow = &y.at(m, ch, 0);
        for (int f = 0; f < F; ++f)
          yrow[f] = gch * (xrow[f] - mean.at(f, gidx)) * rstd.at(f, gidx) + b;
      }
  }
  if (ctx.training) {
    x_cache = x;
    mean_cache = mean;
    rstd_cache = rstd;
  }
  return y;
}

Tensor GroupNormFSeq::backward(const Tensor& gy) {
  const Tensor& x = x_cache;
  const int M = x.dim(0), F = x.dim(2);
  const int cg = c / groups;
  Tensor dx({M, c, F});

  for (int gidx = 0; gidx < groups; ++gidx) {
    const double n = static_cast<double>(M) * cg;
    std::vector<double> sum_g(static_cast<size_t>(F), 0.0), sum_gx(static_cast<size_t>(F), 0.0);
    for (int m = 0; m < M; ++m)
      for (int ch = gidx * cg; ch < (gidx + 1) * cg; ++ch) {
        const double gch = gamma.w.at(ch);
        const double* xrow = &x.at(m, ch, 0);
        const double* grow = &gy.at(m, ch, 0);
        double dgamma = 0.0, dbeta = 0.0;
        for (int f = 0; f < F; ++f) {
          const double xh = (xrow[f] - mean_cache.at(f, gidx)) * rstd_cache.at(f, gidx);
          const double dxh = grow[f] * gch;
          sum_g[f] += dxh;
          sum_gx[f] += dxh * xh;
          dgamma += grow[f] * xh;
          dbeta += grow[f];
        }
        gamma.g.at(ch) += dgamma;
        beta.g.at(ch) += dbeta;
      }
    for (int m = 0; m < M; ++m)
      for (int ch = gidx * cg; ch < (gidx + 1) * cg; ++ch) {
        const double gch = gamma.w.at(ch);
        const double* xrow = &x.at(m, ch, 0);
        const double* grow = &gy.at(m, ch, 0);
        double* dxrow = &dx.at(m, ch, 0);
        for (int f = 0; f < F; ++f) {
          const double r = rstd_cache.at(f, gidx);
          const double xh = (xrow[f] - mean_cache.at(f, gidx)) * r;
          const double dxh = grow[f] * gch;
          dxrow[f] = r * (dxh - sum_g[f] / n - xh * sum_gx[f] / n);
        }
      }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// activations / dropout

Tensor SiluChan::forward(const Tensor& x, const Ctx& ctx) {
  Tensor y = x;
  for (double& v : y.v) v = v * sigmoid(v);
  if (ctx.training) x_cache = x;
  return y;
}

Tensor SiluChan::backward(const Tensor& gy) {
  Tensor dx = gy;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    const double x = x_cache.v[i];
    const double s = sigmoid(x);
    dx.v[i] *= s * (1.0 + x * (1.0 - s));
  }
  return dx;
}

void PRelu::init() {
  slope.init({1});
  slope.w.at(0) = 0.25;
}

void PRelu::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".slope", slope);
}

Tensor PRelu::forward(const Tensor& x, const Ctx& ctx) {
  const double a = slope.w.at(0);
  Tensor y = x;
  for (double& v : y.v)
    if (v < 0.0) v *= a;
  if (ctx.training) x_cache = x;
  return y;
}

Tensor PRelu::backward(const Tensor& gy) {
  const double a = slope.w.at(0);
  Tensor dx = gy;
  double da = 0.0;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    const double x = x_cache.v[i];
    if (x < 0.0) {
      da += gy.v[i] * x;
      dx.v[i] *= a;
    }
  }
  slope.g.at(0) += da;
  return dx;
}

Tensor Dropout::forward(const Tensor& x, const Ctx& ctx) {
  if (!ctx.training || rate <= 0.0) {
    mask_cache = Tensor();
    return x;
  }
  if (ctx.rng == nullptr) throw std::invalid_argument("dropout: training forward needs an rng");
  Tensor y = x;
  mask_cache.reshape(x.shape);
  const double keep = 1.0 - rate;
  for (size_t i = 0; i < y.v.size(); ++i) {
    const double m = ctx.rng->uniform01() <= rate ? 0.0 : 1.0 / keep;
    mask_cache.v[i] = m;
    y.v[i] *= m;
  }
  return y;
}

Tensor Dropout::backward(const Tensor& gy) {
  if (mask_cache.numel() == 0) return gy;
  Tensor dx = gy;
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= mask_cache.v[i];
  return dx;
}

// ---------------------------------------------------------------------------
// row-matrix layers

void LinearRows::init(int in, int out, Rng& rng) {
  ci = in;
  co = out;
  weight.init({co, ci});
  bias.init({co});
  init_uniform_fanin(weight, ci, rng);
  init_uniform_fanin(bias, ci, rng);
}

void LinearRows::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

Tensor LinearRows::forward(const Tensor& x) const {
  const int T = x.dim(0);
  Tensor y({T, co});
  gemm_nt(x.data(), weight.w.data(), y.data(), T, ci, co);
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < co; ++o) y.at(t, o) += bias.w.at(o);
  return y;
}

Tensor LinearRows::backward(const Tensor& x, const Tensor& gy, Tensor* dx) {
  const int T = x.dim(0);
  gemm_tn(gy.data(), x.data(), weight.g.data(), co, T, ci);
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < co; ++o) bias.g.at(o) += gy.at(t, o);
  if (dx != nullptr) {
    dx->reshape({T, ci});
    gemm_nn(gy.data(), weight.w.data(), dx->data(), T, co, ci);
  }
  return Tensor();
}

void TimeConv::init(int in, int out, int kernel, Rng& rng) {
  if (kernel % 2 == 0) throw std::invalid_argument("time_conv: kernel must be odd");
  ci = in;
  co = out;
  k = kernel;
  weight.init({co, ci, k});
  bias.init({co});
  init_uniform_fanin(weight, ci * k, rng);
  init_uniform_fanin(bias, ci * k, rng);
}

void TimeConv::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

Tensor TimeConv::forward(const Tensor& x) const {
  const int T = x.dim(0);
  const int off = k / 2;
  Tensor y({T, co});
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < co; ++o) y.at(t, o) = bias.w.at(o);
  for (int j = 0; j < k; ++j) {
    const int shift = j - off;
    const int t0 = std::max(0, -shift);
    const int t1 = std::min(T, T - shift);
    if (t0 >= t1) continue;
    // y[t0:t1] += x[t0+shift : t1+shift] * W_j^T
    for (int t = t0; t < t1; ++t) {
      const double* xrow = &x.at(t + shift, 0);
      double* yrow = &y.at(t, 0);
      for (int o = 0; o < co; ++o) {
        const double* wrow = &weight.w.at(o, 0, 0);
        double s = 0.0;
        for (int i = 0; i < ci; ++i) s += xrow[i] * wrow[static_cast<size_t>(i) * k + j];
        yrow[o] += s;
      }
    }
  }
  return y;
}

Tensor TimeConv::backward(const Tensor& x, const Tensor& gy, Tensor* dx) {
  const int T = x.dim(0);
  const int off = k / 2;
  if (dx != nullptr) dx->reshape({T, ci});
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < co; ++o) bias.g.at(o) += gy.at(t, o);
  for (int j = 0; j < k; ++j) {
    const int shift = j - off;
    const int t0 = std::max(0, -shift);
    const int t1 = std::min(T, T - shift);
    for (int t = t0; t < t1; ++t) {
      const double* xrow = &x.at(t + shift, 0);
      const double* grow = &gy.at(t, 0);
      for (int o = 0; o < co; ++o) {
        const double g = grow[o];
        if (g == 0.0) continue;
        double* wg = &weight.g.at(o, 0, 0);
        for (int i = 0; i < ci; ++i) wg[static_cast<size_t>(i) * k + j] += g * xrow[i];
        if (dx != nullptr) {
          const double* wrow = &weight.w.at(o, 0, 0);
          double* dxrow = &dx->at(t + shift, 0);
          for (int i = 0; i < ci; ++i) dxrow[i] += g * wrow[static_cast<size_t>(i) * k + j];
        }
      }
    }
  }
  return Tensor();
}

// ---------------------------------------------------------------------------
// BatchNormTime

void BatchNormTime::init(int channels) {
  c = channels;
  gamma.init({c});
  beta.init({c});
  gamma.w.fill(1.0);
  running_mean.reshape({c});
  running_var.reshape({c});
  running_var.fill(1.0);
}

void BatchNormTime::collect(ParamList& out, const std::string& prefix) {
  add_param(out, prefix + ".gamma", gamma);
  add_param(out, prefix + ".beta", beta);
  add_state(out, prefix + ".running_mean", running_mean);
  add_state(out, prefix + ".running_var", running_var);
}

Tensor BatchNormTime::forward(const Tensor& x, const Ctx& ctx, Cache& cache) {
  const int T = x.dim(0);
  if (x.dim(1) != c) throw std::invalid_argument("batchnorm: channel mismatch");
  Tensor y({T, c});
  cache.training = ctx.training;
  cache.mean.assign(static_cast<size_t>(c), 0.0);
  cache.rstd.assign(static_cast<size_t>(c), 0.0);

  if (ctx.training) {
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0, sq = 0.0;
      for (int t = 0; t < T; ++t) {
        const double v = x.at(t, ch);
        sum += v;
        sq += v * v;
      }
      const double mu = sum / T;
      const double var = sq / T - mu * mu;
      cache.mean[static_cast<size_t>(ch)] = mu;
      cache.rstd[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + eps);
      running_mean.at(ch) = (1.0 - momentum) * running_mean.at(ch) + momentum * mu;
      const double unbiased = T > 1 ? var * T / (T - 1.0) : var;
      running_var.at(ch) = (1.0 - momentum) * running_var.at(ch) + momentum * unbiased;
    }
    cache.x = x;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      cache.mean[static_cast<size_t>(ch)] = running_mean.at(ch);
      cache.rstd[static_cast<size_t>(ch)] = 1.0 / std::sqrt(running_var.at(ch) + eps);
    }
  }
  for (int t = 0; t < T; ++t)
    for (int ch = 0; ch < c; ++ch)
      y.at(t, ch) = gamma.w.at(ch) * (x.at(t, ch) - cache.mean[static_cast<size_t>(ch)]) *
                        cache.rstd[static_cast<size_t>(ch)] +
                    beta.w.at(ch);
  return y;
}

Tensor BatchNormTime::backward(const Tensor& gy, const Cache& cache) {
  if (!cache.training) throw std::logic_error("batchnorm: backward without a training forward");
  const Tensor& x = cache.x;
  const int T = x.dim(0);
  Tensor dx({T, c});
  for (int ch = 0; ch < c; ++ch) {
    const double mu = cache.mean[static_cast<size_t>(ch)];
    const double r = cache.rstd[static_cast<size_t>(ch)];
    const double g = gamma.w.at(ch);
    double sum_g = 0.0, sum_gx = 0.0, dgamma = 0.0;
    for (int t = 0; t < T; ++t) {
      const double xh = (x.at(t, ch) - mu) * r;
      sum_g += gy.at(t, ch);
      sum_gx += gy.at(t, ch) * xh;
      dgamma += gy.at(t, ch) * xh;
    }
    gamma.g.at(ch) += dgamma;
    beta.g.at(ch) += sum_g;
    for (int t = 0; t < T; ++t) {
      const double xh = (x.at(t, ch) - mu) * r;
      dx.at(t, ch) = g * r * (gy.at(t, ch) - sum_g / T - xh * sum_gx / T);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// attention

void attn_forward(const double* q, const double* k, const double* v, int T, int dq, int dv,
                  double scale, double* A, double* o, const Ctx& ctx) {
  std::fill(A, A + static_cast<size_t>(T) * T, 0.0);
  gemm_nt(q, k, A, T, dq, T);
  for (int i = 0; i < T; ++i) {
    double* row = A + static_cast<size_t>(i) * T;
    double mx = -1e300;
    for (int j = 0; j < T; ++j) {
      row[j] *= scale;
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < T; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < T; ++j) row[j] /= sum;
    if (ctx.attn_row_sums != nullptr) {
      double s = 0.0;
      for (int j = 0; j < T; ++j) s += row[j];
      ctx.attn_row_sums->push_back(s);
    }
  }
  std::fill(o, o + static_cast<size_t>(T) * dv, 0.0);
  gemm_nn(A, v, o, T, T, dv);
}

void attn_backward(const double* q, const double* k, const double* v, const double* A,
                   const double* go, int T, int dq, int dv, double scale, double* dq_out,
                   double* dk_out, double* dv_out) {
  // dV += A^T go
  gemm_tn(A, go, dv_out, T, T, dv);
  // dA = go V^T, then softmax backward into dS (scaled)
  std::vector<double> dS(static_cast<size_t>(T) * T, 0.0);
  gemm_nt(go, v, dS.data(), T, dv, T);
  for (int i = 0; i < T; ++i) {
    const double* arow = A + static_cast<size_t>(i) * T;
    double* drow = dS.data() + static_cast<size_t>(i) * T;
    double dot = 0.0;
    for (int j = 0; j < T; ++j) dot += drow[j] * arow[j];
    for (int j = 0; j < T; ++j) drow[j] = scale * arow[j] * (drow[j] - dot);
  }
  gemm_nn(dS.data(), k, dq_out, T, T, dq);
  gemm_tn(dS.data(), q, dk_out, T, T, dq);
}

}  // namespace avcn
