// Independent plain-loop references for the separator modules. These
// re-derive every operation from its definition (explicit softmax, direct
// convolution sums, per-position normalization) using only the parameter
// values, so they share no code path with the library implementations.
#pragma once

#include <cmath>
#include <vector>

#include "avcn/model.hpp"

namespace naive {

using avcn::Tensor;

inline Tensor layernorm(const Tensor& x, const avcn::LayerNormChan& ln) {
  const int m = x.dim(0), c = x.dim(1), f = x.dim(2);
  Tensor y({m, c, f});
  for (int mm = 0; mm < m; ++mm)
    for (int ff = 0; ff < f; ++ff) {
      double mean = 0.0;
      for (int ch = 0; ch < c; ++ch) mean += x.at(mm, ch, ff);
      mean /= c;
      double var = 0.0;
      for (int ch = 0; ch < c; ++ch)
        var += (x.at(mm, ch, ff) - mean) * (x.at(mm, ch, ff) - mean);
      var /= c;
      for (int ch = 0; ch < c; ++ch)
        y.at(mm, ch, ff) = ln.gamma.w.at(ch) * (x.at(mm, ch, ff) - mean) /
                               std::sqrt(var + 1e-5) +
                           ln.beta.w.at(ch);
    }
  return y;
}

inline Tensor linear_chan(const Tensor& x, const avcn::LinearChan& lin) {
  const int m = x.dim(0), f = x.dim(2);
  Tensor y({m, lin.co, f});
  for (int mm = 0; mm < m; ++mm)
    for (int o = 0; o < lin.co; ++o)
      for (int ff = 0; ff < f; ++ff) {
        double s = lin.bias.w.at(o);
        for (int i = 0; i < lin.ci; ++i) s += lin.weight.w.at(o, i) * x.at(mm, i, ff);
        y.at(mm, o, ff) = s;
      }
  return y;
}

inline Tensor conv_mhf(const Tensor& x, const avcn::ConvMHF& conv) {
  const int m = x.dim(0), f = x.dim(2);
  const int cig = conv.ci / conv.groups, cog = conv.co / conv.groups;
  const int off = conv.k / 2;
  Tensor y({m, conv.co, f});
  for (int mm = 0; mm < m; ++mm)
    for (int o = 0; o < conv.co; ++o)
      for (int ff = 0; ff < f; ++ff) {
        double s = conv.bias.w.at(o);
        const int gbase = (o / cog) * cig;
        for (int ig = 0; ig < cig; ++ig)
          for (int j = 0; j < conv.k; ++j) {
            if (conv.axis == avcn::ConvAxis::freq) {
              const int src = ff + j - off;
              if (src >= 0 && src < f) s += conv.weight.w.at(o, ig, j) * x.at(mm, gbase + ig, src);
            } else {
              const int src = mm + j - off;
              if (src >= 0 && src < m) s += conv.weight.w.at(o, ig, j) * x.at(src, gbase + ig, ff);
            }
          }
        y.at(mm, o, ff) = s;
      }
  return y;
}

inline Tensor groupnorm_fseq(const Tensor& x, const avcn::GroupNormFSeq& gn) {
  const int m = x.dim(0), c = x.dim(1), f = x.dim(2);
  const int cg = c / gn.groups;
  Tensor y({m, c, f});
  for (int ff = 0; ff < f; ++ff)
    for (int g = 0; g < gn.groups; ++g) {
      double mean = 0.0;
      for (int mm = 0; mm < m; ++mm)
        for (int ch = g * cg; ch < (g + 1) * cg; ++ch) mean += x.at(mm, ch, ff);
      const double n = static_cast<double>(m) * cg;
      mean /= n;
      double var = 0.0;
      for (int mm = 0; mm < m; ++mm)
        for (int ch = g * cg; ch < (g + 1) * cg; ++ch)
          var += (x.at(mm, ch, ff) - mean) * (x.at(mm, ch, ff) - mean);
      var /= n;
      for (int mm = 0; mm < m; ++mm)
        for (int ch = g * cg; ch < (g + 1) * cg; ++ch)
          y.at(mm, ch, ff) = gn.gamma.w.at(ch) * (x.at(mm, ch, ff) - mean) /
                                 std::sqrt(var + 1e-5) +
                             gn.beta.w.at(ch);
    }
  return y;
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline Tensor prelu(const Tensor& x, const avcn::PRelu& p) {
  Tensor y = x;
  const double a = p.slope.w.at(0);
  for (double& v : y.v)
    if (v < 0.0) v *= a;
  return y;
}

// row-linear y = x W^T + b on (T, ci)
inline Tensor linear_rows(const Tensor& x, const avcn::LinearRows& lin) {
  const int t = x.dim(0);
  Tensor y({t, lin.co});
  for (int tt = 0; tt < t; ++tt)
    for (int o = 0; o < lin.co; ++o) {
      double s = lin.bias.w.at(o);
      for (int i = 0; i < lin.ci; ++i) s += lin.weight.w.at(o, i) * x.at(tt, i);
      y.at(tt, o) = s;
    }
  return y;
}

// explicit softmax attention over rows of q/k/v
inline Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale) {
  const int t = q.dim(0), dq = q.dim(1), dv = v.dim(1);
  Tensor out({t, dv});
  for (int i = 0; i < t; ++i) {
    std::vector<double> scores(static_cast<size_t>(t));
    double mx = -1e300;
    for (int j = 0; j < t; ++j) {
      double s = 0.0;
      for (int d = 0; d < dq; ++d) s += q.at(i, d) * k.at(j, d);
      scores[static_cast<size_t>(j)] = s * scale;
      mx = std::max(mx, scores[static_cast<size_t>(j)]);
    }
    double z = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      z += s;
    }
    for (int j = 0; j < t; ++j)
      for (int d = 0; d < dv; ++d) out.at(i, d) += scores[static_cast<size_t>(j)] / z * v.at(j, d);
  }
  return out;
}

inline Tensor narrowband(const avcn::NarrowBand& nb, const Tensor& x) {
  const int m = x.dim(0), h = x.dim(1), f = x.dim(2);
  const int heads = nb.attn.heads;
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // stage 1: x + LN(MHSA(LN(x))) with attention along time per frequency
  Tensor pre = layernorm(x, nb.ln_pre);
  Tensor attn_out({m, h, f});
  for (int ff = 0; ff < f; ++ff) {
    Tensor tok({m, h});
    for (int mm = 0; mm < m; ++mm)
      for (int ch = 0; ch < h; ++ch) tok.at(mm, ch) = pre.at(mm, ch, ff);
    Tensor q = linear_rows(tok, nb.attn.wq);
    Tensor k = linear_rows(tok, nb.attn.wk);
    Tensor v = linear_rows(tok, nb.attn.wv);
    Tensor cat({m, h});
    for (int l = 0; l < heads; ++l) {
      Tensor qh({m, dh}), kh({m, dh}), vh({m, dh});
      for (int mm = 0; mm < m; ++mm)
        for (int d = 0; d < dh; ++d) {
          qh.at(mm, d) = q.at(mm, l * dh + d);
          kh.at(mm, d) = k.at(mm, l * dh + d);
          vh.at(mm, d) = v.at(mm, l * dh + d);
        }
      Tensor oh = softmax_attention(qh, kh, vh, scale);
      for (int mm = 0; mm < m; ++mm)
        for (int d = 0; d < dh; ++d) cat.at(mm, l * dh + d) = oh.at(mm, d);
    }
    Tensor yf = linear_rows(cat, nb.attn.wo);
    for (int mm = 0; mm < m; ++mm)
      for (int ch = 0; ch < h; ++ch) attn_out.at(mm, ch, ff) = yf.at(mm, ch);
  }
  Tensor post = layernorm(attn_out, nb.ln_post);
  Tensor u = x;
  for (size_t i = 0; i < u.v.size(); ++i) u.v[i] += post.v[i];

  // stage 2: u + Linear(GN(TGConv(SiLU(Linear(LN(u))))))
  Tensor s = layernorm(u, nb.ln_ffn);
  s = linear_chan(s, nb.ffn1);
  for (double& v : s.v) v = silu(v);
  s = conv_mhf(s, nb.tgconv);
  s = groupnorm_fseq(s, nb.gnorm);
  s = linear_chan(s, nb.ffn2);
  for (size_t i = 0; i < s.v.size(); ++i) s.v[i] += u.v[i];
  return s;
}

inline Tensor crossband(const avcn::CrossBand& cb, const Tensor& x) {
  const int m = x.dim(0), f = x.dim(2);
  Tensor t = layernorm(x, cb.ln1);
  t = conv_mhf(t, cb.fgconv1);
  t = prelu(t, cb.prelu1);
  Tensor a = x;
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += t.v[i];

  Tensor z = linear_chan(a, cb.down);
  for (double& v : z.v) v = silu(v);
  // per-channel shared frequency maps
  Tensor z2({m, cb.shared->channels, f});
  for (int mm = 0; mm < m; ++mm)
    for (int i = 0; i < cb.shared->channels; ++i)
      for (int fo = 0; fo < f; ++fo) {
        double s = cb.shared->bias[static_cast<size_t>(i)].w.at(fo);
        for (int fi = 0; fi < f; ++fi)
          s += cb.shared->weight[static_cast<size_t>(i)].w.at(fo, fi) * z.at(mm, i, fi);
        z2.at(mm, i, fo) = s;
      }
  Tensor z3 = linear_chan(z2, cb.up);
  for (double& v : z3.v) v = silu(v);
  Tensor b = a;
  for (size_t i = 0; i < b.v.size(); ++i) b.v[i] += z3.v[i];

  Tensor u = layernorm(b, cb.ln2);
  u = conv_mhf(u, cb.fgconv2);
  u = prelu(u, cb.prelu2);
  for (size_t i = 0; i < u.v.size(); ++i) u.v[i] += b.v[i];
  return u;
}

inline Tensor gmhsa(const avcn::Gmhsa& gm, const Tensor& x) {
  const int m = x.dim(0), h = x.dim(1), f = x.dim(2);
  const int heads = gm.heads, e = gm.e, dv = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(e) * f);

  Tensor qkv = linear_chan(x, gm.in_conv);
  Tensor cat({m, h, f});
  for (int l = 0; l < heads; ++l) {
    Tensor q({m, e * f}), k({m, e * f}), v({m, dv * f});
    for (int mm = 0; mm < m; ++mm) {
      for (int ee = 0; ee < e; ++ee)
        for (int ff = 0; ff < f; ++ff) {
          q.at(mm, ee * f + ff) = qkv.at(mm, l * e + ee, ff);
          k.at(mm, ee * f + ff) = qkv.at(mm, heads * e + l * e + ee, ff);
        }
      for (int d = 0; d < dv; ++d)
        for (int ff = 0; ff < f; ++ff)
          v.at(mm, d * f + ff) = qkv.at(mm, 2 * heads * e + l * dv + d, ff);
    }
    Tensor o = softmax_attention(q, k, v, scale);
    for (int mm = 0; mm < m; ++mm)
      for (int d = 0; d < dv; ++d)
        for (int ff = 0; ff < f; ++ff) cat.at(mm, l * dv + d, ff) = o.at(mm, d * f + ff);
  }
  Tensor g = linear_chan(cat, gm.out_conv);
  g = prelu(g, gm.prelu);
  g = layernorm(g, gm.ln);
  for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += x.v[i];
  return g;
}

inline Tensor audio_encode(const avcn::ConvMHF& conv, const Tensor& x) { return conv_mhf(x, conv); }

}  // namespace naive
