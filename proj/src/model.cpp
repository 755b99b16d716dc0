#include "avcn/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace avcn {

void ModelConfig::validate() const {
  if (blocks < 1 || hidden < 1 || bottleneck < 1 || ffn_hidden < 1 || speakers < 1 ||
      vtcn_blocks < 1 || visual_dim < 1 || pe_max_frames < 1)
    throw std::invalid_argument("model config: all sizes must be positive");
  if (hidden % groups != 0) throw std::invalid_argument("model config: hidden % groups != 0");
  if (hidden % heads != 0) throw std::invalid_argument("model config: hidden % heads != 0");
  if (ffn_hidden % groups != 0)
    throw std::invalid_argument("model config: ffn_hidden % groups != 0");
  if (embed() < 1) throw std::invalid_argument("model config: attention embed must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: bad dropout");
  stft().validate();
}

// ---------------------------------------------------------------------------
// NarrowBandAttn

void NarrowBandAttn::init(int hidden, int n_heads, Rng& rng) {
  h = hidden;
  heads = n_heads;
  wq.init(h, h, rng);
  wk.init(h, h, rng);
  wv.init(h, h, rng);
  wo.init(h, h, rng);
}

void NarrowBandAttn::collect(ParamList& out, const std::string& prefix) {
  wq.collect(out, prefix + ".q");
  wk.collect(out, prefix + ".k");
  wv.collect(out, prefix + ".v");
  wo.collect(out, prefix + ".out");
}

namespace {

void gather_bin(const Tensor& x, int f, Tensor& tok) {
  const int m = x.dim(0), c = x.dim(1);
  tok.reshape({m, c});
  for (int mm = 0; mm < m; ++mm)
    for (int ch = 0; ch < c; ++ch) tok.at(mm, ch) = x.at(mm, ch, f);
}

void scatter_bin(const Tensor& tok, int f, Tensor& x) {
  const int m = tok.dim(0), c = tok.dim(1);
  for (int mm = 0; mm < m; ++mm)
    for (int ch = 0; ch < c; ++ch) x.at(mm, ch, f) = tok.at(mm, ch);
}

void pack_head(const Tensor& full, int head, int dh, Tensor& packed) {
  const int m = full.dim(0);
  packed.reshape({m, dh});
  for (int mm = 0; mm < m; ++mm)
    std::copy_n(&full.at(mm, head * dh), dh, &packed.at(mm, 0));
}

void unpack_head_add(const Tensor& packed, int head, int dh, Tensor& full) {
  const int m = packed.dim(0);
  for (int mm = 0; mm < m; ++mm)
    for (int d = 0; d < dh; ++d) full.at(mm, head * dh + d) += packed.at(mm, d);
}

}  // namespace

Tensor NarrowBandAttn::forward(const Tensor& x, const Ctx& ctx) {
  const int m = x.dim(0), f = x.dim(2);
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor y({m, h, f});
  if (ctx.training) bins_cache.assign(static_cast<size_t>(f), {});

  Tensor tok, q, k, v, qh, kh, vh, oh, cat, attn;
  for (int ff = 0; ff < f; ++ff) {
    gather_bin(x, ff, tok);
    q = wq.forward(tok);
    k = wk.forward(tok);
    v = wv.forward(tok);
    cat.reshape({m, h});
    attn.reshape({heads, m, m});
    oh.reshape({m, dh});
    for (int l = 0; l < heads; ++l) {
      pack_head(q, l, dh, qh);
      pack_head(k, l, dh, kh);
      pack_head(v, l, dh, vh);
      attn_forward(qh.data(), kh.data(), vh.data(), m, dh, dh, scale,
                   &attn.at(l, 0, 0), oh.data(), ctx);
      unpack_head_add(oh, l, dh, cat);
    }
    Tensor yf = wo.forward(cat);
    scatter_bin(yf, ff, y);
    if (ctx.training) {
      BinCache& bc = bins_cache[static_cast<size_t>(ff)];
      bc.tok = tok;
      bc.q = q;
      bc.k = k;
      bc.v = v;
      bc.cat = cat;
      bc.attn = attn;
    }
  }
  return y;
}

Tensor NarrowBandAttn::backward(const Tensor& gy) {
  const int m = gy.dim(0), f = gy.dim(2);
  const int dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dx({m, h, f});

  Tensor gyf, d_cat, d_q, d_k, d_v, qh, kh, vh, dqh, dkh, dvh, doh, d_tok;
  for (int ff = 0; ff < f; ++ff) {
    BinCache& bc = bins_cache[static_cast<size_t>(ff)];
    gather_bin(gy, ff, gyf);
    wo.backward(bc.cat, gyf, &d_cat);
    d_q.reshape({m, h});
    d_k.reshape({m, h});
    d_v.reshape({m, h});
    for (int l = 0; l < heads; ++l) {
      pack_head(bc.q, l, dh, qh);
      pack_head(bc.k, l, dh, kh);
      pack_head(bc.v, l, dh, vh);
      pack_head(d_cat, l, dh, doh);
      dqh.reshape({m, dh});
      dkh.reshape({m, dh});
      dvh.reshape({m, dh});
      attn_backward(qh.data(), kh.data(), vh.data(), &bc.attn.at(l, 0, 0), doh.data(), m, dh, dh,
                    scale, dqh.data(), dkh.data(), dvh.data());
      unpack_head_add(dqh, l, dh, d_q);
      unpack_head_add(dkh, l, dh, d_k);
      unpack_head_add(dvh, l, dh, d_v);
    }
    Tensor d_tok_q, d_tok_k, d_tok_v;
    wq.backward(bc.tok, d_q, &d_tok_q);
    wk.backward(bc.tok, d_k, &d_tok_k);
    wv.backward(bc.tok, d_v, &d_tok_v);
    d_tok.reshape({m, h});
    for (int64_t i = 0; i < d_tok.numel(); ++i)
      d_tok.v[static_cast<size_t>(i)] = d_tok_q.v[static_cast<size_t>(i)] +
                                        d_tok_k.v[static_cast<size_t>(i)] +
                                        d_tok_v.v[static_cast<size_t>(i)];
    scatter_bin(d_tok, ff, dx);
  }
  bins_cache.clear();
  return dx;
}

// ---------------------------------------------------------------------------
// NarrowBand

void NarrowBand::init(const ModelConfig& cfg, Rng& rng) {
  ln_pre.init(cfg.hidden);
  ln_post.init(cfg.hidden);
  ln_ffn.init(cfg.hidden);
  attn.init(cfg.hidden, cfg.heads, rng);
  ffn1.init(cfg.hidden, cfg.ffn_hidden, rng);
  ffn2.init(cfg.ffn_hidden, cfg.hidden, rng);
  tgconv.init(ConvAxis::time, cfg.ffn_hidden, cfg.ffn_hidden, cfg.time_kernel, cfg.groups, rng);
  gnorm.init(cfg.ffn_hidden, cfg.groups);
  drop.rate = cfg.dropout;
}

void NarrowBand::collect(ParamList& out, const std::string& prefix) {
  ln_pre.collect(out, prefix + ".ln_pre");
  attn.collect(out, prefix + ".attn");
  ln_post.collect(out, prefix + ".ln_post");
  ln_ffn.collect(out, prefix + ".ln_ffn");
  ffn1.collect(out, prefix + ".ffn1");
  tgconv.collect(out, prefix + ".tgconv");
  gnorm.collect(out, prefix + ".gnorm");
  ffn2.collect(out, prefix + ".ffn2");
}

Tensor NarrowBand::forward(const Tensor& x, const Ctx& ctx) {
  Tensor t = ln_pre.forward(x, ctx);
  t = attn.forward(t, ctx);
  t = ln_post.forward(t, ctx);
  Tensor u = x;
  for (size_t i = 0; i < u.v.size(); ++i) u.v[i] += t.v[i];

  Tensor s = ln_ffn.forward(u, ctx);
  s = ffn1.forward(s, ctx);
  s = silu.forward(s, ctx);
  s = tgconv.forward(s, ctx);
  s = gnorm.forward(s, ctx);
  s = ffn2.forward(s, ctx);
  s = drop.forward(s, ctx);
  for (size_t i = 0; i < s.v.size(); ++i) s.v[i] += u.v[i];
  return s;
}

Tensor NarrowBand::backward(const Tensor& gy) {
  Tensor d = drop.backward(gy);
  d = ffn2.backward(d);
  d = gnorm.backward(d);
  d = tgconv.backward(d);
  d = silu.backward(d);
  d = ffn1.backward(d);
  d = ln_ffn.backward(d);
  Tensor du = gy;
  for (size_t i = 0; i < du.v.size(); ++i) du.v[i] += d.v[i];

  Tensor dt = ln_post.backward(du);
  dt = attn.backward(dt);
  dt = ln_pre.backward(dt);
  for (size_t i = 0; i < dt.v.size(); ++i) dt.v[i] += du.v[i];
  return dt;
}

// ---------------------------------------------------------------------------
// SharedFullBand

void SharedFullBand::init(int h_prime, int bins, Rng& rng) {
  channels = h_prime;
  f = bins;
  weight.resize(static_cast<size_t>(channels));
  bias.resize(static_cast<size_t>(channels));
  for (int i = 0; i < channels; ++i) {
    weight[static_cast<size_t>(i)].init({f, f});
    bias[static_cast<size_t>(i)].init({f});
    init_uniform_fanin(weight[static_cast<size_t>(i)], f, rng);
    init_uniform_fanin(bias[static_cast<size_t>(i)], f, rng);
  }
}

void SharedFullBand::collect(ParamList& out, const std::string& prefix) {
  for (int i = 0; i < channels; ++i) {
    add_param(out, prefix + "." + std::to_string(i) + ".weight", weight[static_cast<size_t>(i)]);
    add_param(out, prefix + "." + std::to_string(i) + ".bias", bias[static_cast<size_t>(i)]);
  }
}

Tensor SharedFullBand::forward(const Tensor& x) const {
  const int m = x.dim(0);
  if (x.dim(1) != channels || x.dim(2) != f)
    throw std::invalid_argument("fullband: shape mismatch");
  Tensor y({m, channels, f});
  for (int mm = 0; mm < m; ++mm)
    for (int i = 0; i < channels; ++i) {
      const double* xrow = &x.at(mm, i, 0);
      const double* w = weight[static_cast<size_t>(i)].w.data();
      const double* b = bias[static_cast<size_t>(i)].w.data();
      double* yrow = &y.at(mm, i, 0);
      for (int fo = 0; fo < f; ++fo) {
        const double* wrow = w + static_cast<size_t>(fo) * f;
        double s = b[fo];
        for (int fi = 0; fi < f; ++fi) s += wrow[fi] * xrow[fi];
        yrow[fo] = s;
      }
    }
  return y;
}

Tensor SharedFullBand::backward(const Tensor& x, const Tensor& gy) {
  const int m = x.dim(0);
  Tensor dx({m, channels, f});
  for (int mm = 0; mm < m; ++mm)
    for (int i = 0; i < channels; ++i) {
      const double* xrow = &x.at(mm, i, 0);
      const double* grow = &gy.at(mm, i, 0);
      const double* w = weight[static_cast<size_t>(i)].w.data();
      double* gw = weight[static_cast<size_t>(i)].g.data();
      double* gb = bias[static_cast<size_t>(i)].g.data();
      double* dxrow = &dx.at(mm, i, 0);
      for (int fo = 0; fo < f; ++fo) {
        const double g = grow[fo];
        gb[fo] += g;
        if (g == 0.0) continue;
        const double* wrow = w + static_cast<size_t>(fo) * f;
        double* gwrow = gw + static_cast<size_t>(fo) * f;
        for (int fi = 0; fi < f; ++fi) {
          gwrow[fi] += g * xrow[fi];
          dxrow[fi] += g * wrow[fi];
        }
      }
    }
  return dx;
}

// ---------------------------------------------------------------------------
// CrossBand

void CrossBand::init(const ModelConfig& cfg, SharedFullBand* shared_fb, Rng& rng) {
  shared = shared_fb;
  ln1.init(cfg.hidden);
  ln2.init(cfg.hidden);
  fgconv1.init(ConvAxis::freq, cfg.hidden, cfg.hidden, cfg.freq_kernel, cfg.groups, rng);
  fgconv2.init(ConvAxis::freq, cfg.hidden, cfg.hidden, cfg.freq_kernel, cfg.groups, rng);
  prelu1.init();
  prelu2.init();
  down.init(cfg.hidden, cfg.bottleneck, rng);
  up.init(cfg.bottleneck, cfg.hidden, rng);
}

void CrossBand::collect(ParamList& out, const std::string& prefix) {
  ln1.collect(out, prefix + ".ln1");
  fgconv1.collect(out, prefix + ".fgconv1");
  prelu1.collect(out, prefix + ".prelu1");
  down.collect(out, prefix + ".down");
  up.collect(out, prefix + ".up");
  ln2.collect(out, prefix + ".ln2");
  fgconv2.collect(out, prefix + ".fgconv2");
  prelu2.collect(out, prefix + ".prelu2");
}

Tensor CrossBand::forward(const Tensor& x, const Ctx& ctx) {
  Tensor t = ln1.forward(x, ctx);
  t = fgconv1.forward(t, ctx);
  t = prelu1.forward(t, ctx);
  Tensor a = x;
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += t.v[i];

  Tensor z = down.forward(a, ctx);
  z = silu1.forward(z, ctx);
  if (ctx.training) fb_in_cache = z;
  Tensor z2 = shared->forward(z);
  z2 = up.forward(z2, ctx);
  z2 = silu2.forward(z2, ctx);
  Tensor b = a;
  for (size_t i = 0; i < b.v.size(); ++i) b.v[i] += z2.v[i];

  Tensor u = ln2.forward(b, ctx);
  u = fgconv2.forward(u, ctx);
  u = prelu2.forward(u, ctx);
  for (size_t i = 0; i < u.v.size(); ++i) u.v[i] += b.v[i];
  return u;
}

Tensor CrossBand::backward(const Tensor& gy) {
  Tensor d = prelu2.backward(gy);
  d = fgconv2.backward(d);
  d = ln2.backward(d);
  Tensor db = gy;
  for (size_t i = 0; i < db.v.size(); ++i) db.v[i] += d.v[i];

  Tensor dz = silu2.backward(db);
  dz = up.backward(dz);
  dz = shared->backward(fb_in_cache, dz);
  dz = silu1.backward(dz);
  dz = down.backward(dz);
  Tensor da = db;
  for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += dz.v[i];

  Tensor dt = prelu1.backward(da);
  dt = fgconv1.backward(dt);
  dt = ln1.backward(dt);
  for (size_t i = 0; i < dt.v.size(); ++i) dt.v[i] += da.v[i];
  return dt;
}

// ---------------------------------------------------------------------------
// Gmhsa

void Gmhsa::init(const ModelConfig& cfg, Rng& rng) {
  h = cfg.hidden;
  heads = cfg.heads;
  e = cfg.embed();
  in_conv.init(h, qkv_channels(), rng);
  out_conv.init(h, h, rng);
  prelu.init();
  ln.init(h);
}

void Gmhsa::collect(ParamList& out, const std::string& prefix) {
  in_conv.collect(out, prefix + ".in_conv");
  out_conv.collect(out, prefix + ".out_conv");
  prelu.collect(out, prefix + ".prelu");
  ln.collect(out, prefix + ".ln");
}

Tensor Gmhsa::forward(const Tensor& x, const Ctx& ctx) {
  const int m = x.dim(0), f = x.dim(2);
  const int dv = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(e) * f);

  Tensor qkv = in_conv.forward(x, ctx);
  const int ct = qkv_channels();
  Tensor cat({m, h, f});
  Tensor attn({heads, m, m});

  Tensor qp({m, e * f}), kp({m, e * f}), vp({m, dv * f}), op({m, dv * f});
  for (int l = 0; l < heads; ++l) {
    for (int mm = 0; mm < m; ++mm) {
      std::copy_n(&qkv.at(mm, l * e, 0), static_cast<size_t>(e) * f, &qp.at(mm, 0));
      std::copy_n(&qkv.at(mm, heads * e + l * e, 0), static_cast<size_t>(e) * f, &kp.at(mm, 0));
      std::copy_n(&qkv.at(mm, 2 * heads * e + l * dv, 0), static_cast<size_t>(dv) * f,
                  &vp.at(mm, 0));
    }
    attn_forward(qp.data(), kp.data(), vp.data(), m, e * f, dv * f, scale, &attn.at(l, 0, 0),
                 op.data(), ctx);
    for (int mm = 0; mm < m; ++mm)
      std::copy_n(&op.at(mm, 0), static_cast<size_t>(dv) * f, &cat.at(mm, l * dv, 0));
  }
  (void)ct;

  Tensor g = out_conv.forward(cat, ctx);
  g = prelu.forward(g, ctx);
  g = ln.forward(g, ctx);
  for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += x.v[i];
  if (ctx.training) {
    qkv_cache = qkv;
    attn_cache = attn;
  }
  return g;
}

Tensor Gmhsa::backward(const Tensor& gy) {
  const int m = gy.dim(0), f = gy.dim(2);
  const int dv = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(e) * f);

  Tensor d = ln.backward(gy);
  d = prelu.backward(d);
  Tensor d_cat = out_conv.backward(d);

  Tensor d_qkv({m, qkv_channels(), f});
  Tensor qp({m, e * f}), kp({m, e * f}), vp({m, dv * f});
  Tensor dqp({m, e * f}), dkp({m, e * f}), dvp({m, dv * f}), dop({m, dv * f});
  for (int l = 0; l < heads; ++l) {
    for (int mm = 0; mm < m; ++mm) {
      std::copy_n(&qkv_cache.at(mm, l * e, 0), static_cast<size_t>(e) * f, &qp.at(mm, 0));
      std::copy_n(&qkv_cache.at(mm, heads * e + l * e, 0), static_cast<size_t>(e) * f,
                  &kp.at(mm, 0));
      std::copy_n(&qkv_cache.at(mm, 2 * heads * e + l * dv, 0), static_cast<size_t>(dv) * f,
                  &vp.at(mm, 0));
      std::copy_n(&d_cat.at(mm, l * dv, 0), static_cast<size_t>(dv) * f, &dop.at(mm, 0));
    }
    dqp.zero();
    dkp.zero();
    dvp.zero();
    attn_backward(qp.data(), kp.data(), vp.data(), &attn_cache.at(l, 0, 0), dop.data(), m, e * f,
                  dv * f, scale, dqp.data(), dkp.data(), dvp.data());
    for (int mm = 0; mm < m; ++mm) {
      std::copy_n(&dqp.at(mm, 0), static_cast<size_t>(e) * f, &d_qkv.at(mm, l * e, 0));
      std::copy_n(&dkp.at(mm, 0), static_cast<size_t>(e) * f, &d_qkv.at(mm, heads * e + l * e, 0));
      std::copy_n(&dvp.at(mm, 0), static_cast<size_t>(dv) * f,
                  &d_qkv.at(mm, 2 * heads * e + l * dv, 0));
    }
  }
  Tensor dx = in_conv.backward(d_qkv);
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += gy.v[i];
  qkv_cache = Tensor();
  attn_cache = Tensor();
  return dx;
}

// ---------------------------------------------------------------------------
// Block

void Block::init(const ModelConfig& cfg, SharedFullBand* shared, Rng& rng) {
  narrowband.init(cfg, rng);
  crossband.init(cfg, shared, rng);
  gmhsa.init(cfg, rng);
}

void Block::collect(ParamList& out, const std::string& prefix) {
  narrowband.collect(out, prefix + ".narrowband");
  crossband.collect(out, prefix + ".crossband");
  gmhsa.collect(out, prefix + ".gmhsa");
}

Tensor Block::forward(const Tensor& x, const Ctx& ctx) {
  Tensor t = narrowband.forward(x, ctx);
  t = crossband.forward(t, ctx);
  return gmhsa.forward(t, ctx);
}

Tensor Block::backward(const Tensor& gy) {
  Tensor d = gmhsa.backward(gy);
  d = crossband.backward(d);
  return narrowband.backward(d);
}

// ---------------------------------------------------------------------------
// Separator

void Separator::init(const ModelConfig& config, uint64_t seed) {
  cfg = config;
  cfg.validate();
  Rng rng(seed);
  const int f = cfg.bins();

  audio_enc.init(ConvAxis::freq, 2, cfg.hidden, cfg.audio_kernel, 1, rng);
  visual.init(cfg.visual_dim, f, cfg.hidden, cfg.vtcn_blocks, rng);
  fusion.init(cfg.hidden, cfg.speakers, rng);
  pe.build(cfg.pe_max_frames, cfg.hidden, f);
  shared.init(cfg.bottleneck, f, rng);
  blocks.assign(static_cast<size_t>(cfg.blocks), {});
  for (auto& b : blocks) b.init(cfg, &shared, rng);
  decoder.init(cfg.hidden, 2 * cfg.speakers, rng);
}

void Separator::collect(ParamList& out) {
  audio_enc.collect(out, "audio_encoder.conv");
  visual.collect(out, "visual");
  fusion.collect(out, "fusion");
  for (int b = 0; b < cfg.blocks; ++b)
    blocks[static_cast<size_t>(b)].collect(out, "block." + std::to_string(b));
  shared.collect(out, "shared.fullband");
  decoder.collect(out, "decoder.linear");
}

int64_t Separator::count_parameters() const {
  ParamList params;
  const_cast<Separator*>(this)->collect(params);
  int64_t n = 0;
  for (const ParamRef& p : params)
    if (p.learnable) n += p.value->numel();
  return n;
}

void Separator::zero_grads() {
  ParamList params;
  collect(params);
  for (ParamRef& p : params)
    if (p.grad != nullptr) p.grad->zero();
}

Tensor Separator::audio_encode(const Tensor& stacked_ri, const Ctx& ctx) {
  return audio_enc.forward(stacked_ri, ctx);
}

std::vector<ComplexSpectrogram> Separator::decode(const Tensor& x, const Ctx& ctx) {
  Tensor z = decoder.forward(x, ctx);
  const int m = z.dim(0), f = z.dim(2);
  std::vector<ComplexSpectrogram> specs;
  specs.reserve(static_cast<size_t>(cfg.speakers));
  for (int c = 0; c < cfg.speakers; ++c) {
    ComplexSpectrogram s(m, f);
    for (int mm = 0; mm < m; ++mm)
      for (int ff = 0; ff < f; ++ff) {
        s.real(mm, ff) = z.at(mm, 2 * c, ff);
        s.imag(mm, ff) = z.at(mm, 2 * c + 1, ff);
      }
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<Waveform> Separator::run(const Waveform& mixture,
                                     const std::vector<VisualEmbeddingSequence>& visuals,
                                     const Ctx& ctx, Rng* rng) {
  if (static_cast<int>(visuals.size()) != cfg.speakers)
    throw std::invalid_argument("separator: expected one embedding stream per speaker");

  auto [norm_wave, norm_state] = normalize_variance(mixture);
  item = ItemState{};
  item.norm = norm_state;
  item.mix_len = mixture.length();

  const StftConfig sc = cfg.stft();
  ComplexSpectrogram spec = stft(norm_wave, sc);
  item.frames = spec.frames;

  Tensor x = audio_enc.forward(stack_ri(spec), ctx);

  item.vis_caches.assign(static_cast<size_t>(cfg.speakers), {});
  std::vector<Tensor> streams;
  streams.reserve(static_cast<size_t>(cfg.speakers));
  for (int c = 0; c < cfg.speakers; ++c)
    streams.push_back(visual.forward(visuals[static_cast<size_t>(c)], spec.frames, ctx,
                                     item.vis_caches[static_cast<size_t>(c)]));
  Tensor vstack = stack_speakers(streams);
  streams.clear();

  x = fusion.forward(x, vstack, ctx);
  vstack = Tensor();

  const PeSlice slice =
      rcpe_select(pe, spec.frames, ctx.training ? PeMode::train : PeMode::eval, rng);
  x = add_pe(x, slice);

  for (auto& b : blocks) x = b.forward(x, ctx);

  std::vector<ComplexSpectrogram> outs = decode(x, ctx);
  std::vector<Waveform> estimates;
  estimates.reserve(outs.size());
  for (const auto& s : outs) {
    Waveform w = istft(s, sc, item.mix_len);
    w.sample_rate = mixture.sample_rate;
    estimates.push_back(denormalize(w, norm_state));
  }
  if (ctx.training) item.estimates = estimates;
  return estimates;
}

std::vector<Waveform> Separator::separate(const Waveform& mixture,
                                          const std::vector<VisualEmbeddingSequence>& visuals) {
  Ctx ctx;
  ctx.training = false;
  return run(mixture, visuals, ctx, nullptr);
}

std::vector<Waveform> Separator::forward_train(const Waveform& mixture,
                                               const std::vector<VisualEmbeddingSequence>& visuals,
                                               Rng& rng) {
  Ctx ctx;
  ctx.training = true;
  ctx.rng = &rng;
  return run(mixture, visuals, ctx, &rng);
}

void Separator::backward_train(const std::vector<std::vector<double>>& grad_estimates) {
  const StftConfig sc = cfg.stft();
  const int m = item.frames;
  const int f = cfg.bins();

  Tensor dz({m, 2 * cfg.speakers, f});
  for (int c = 0; c < cfg.speakers; ++c) {
    // denormalize backward is multiplication by the stored scale
    std::vector<double> dw = grad_estimates[static_cast<size_t>(c)];
    for (double& g : dw) g *= item.norm.scale;
    ComplexSpectrogram ds = istft_adjoint(dw, sc, m);
    for (int mm = 0; mm < m; ++mm)
      for (int ff = 0; ff < f; ++ff) {
        dz.at(mm, 2 * c, ff) = ds.real(mm, ff);
        dz.at(mm, 2 * c + 1, ff) = ds.imag(mm, ff);
      }
  }

  Tensor dx = decoder.backward(dz);
  for (int b = cfg.blocks - 1; b >= 0; --b) dx = blocks[static_cast<size_t>(b)].backward(dx);
  // add_pe contributes identity
  auto [d_audio, d_vstack] = fusion.backward(dx);
  audio_enc.backward(d_audio);
  std::vector<Tensor> parts = split_speakers(d_vstack, cfg.speakers);
  for (int c = 0; c < cfg.speakers; ++c)
    visual.backward(parts[static_cast<size_t>(c)], item.vis_caches[static_cast<size_t>(c)]);
  item = ItemState{};
}

}  // namespace avcn
