// Central-difference gradient checking for every differentiable operation,
// on tiny configurations. The analytic backward passes are compared against
// (L(x+eps) - L(x-eps)) / (2 eps) of a fixed random linear functional.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avcn/loss.hpp"
#include "avcn/model.hpp"

namespace gradcheck {

using avcn::Ctx;
using avcn::ParamList;
using avcn::Rng;
using avcn::Tensor;

constexpr double kEps = 1e-5;

struct Result {
  double max_rel = 0.0;
  int64_t coords = 0;

  void fold(double analytic, double numeric) {
    ++coords;
    const double diff = std::abs(analytic - numeric);
    if (diff <= 1e-9) return;
    max_rel = std::max(max_rel, diff / std::max(std::abs(analytic), std::abs(numeric)));
  }
};

inline double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * r.v[i];
  return s;
}

// forward: fresh training-mode evaluation; backward: gradient of the
// functional with weights r (called once, after one forward)
struct Op {
  std::function<Tensor()> forward;
  std::function<Tensor(const Tensor& r)> backward;
  ParamList params;
  std::vector<Tensor*> inputs;
};

inline Result check_op(Op& op, Rng& rng) {
  Tensor y0 = op.forward();
  Tensor r(y0.shape);
  for (double& v : r.v) v = rng.uniform(-1.0, 1.0);

  for (avcn::ParamRef& p : op.params)
    if (p.grad != nullptr) p.grad->zero();
  Tensor dx = op.backward(r);

  auto loss_now = [&]() { return weighted_sum(op.forward(), r); };

  Result res;
  // input coordinates (dx corresponds to the concatenation of op.inputs)
  size_t off = 0;
  for (Tensor* x : op.inputs) {
    for (size_t i = 0; i < x->v.size(); ++i) {
      const double keep = x->v[i];
      x->v[i] = keep + kEps;
      const double lp = loss_now();
      x->v[i] = keep - kEps;
      const double lm = loss_now();
      x->v[i] = keep;
      res.fold(dx.v[off + i], (lp - lm) / (2.0 * kEps));
    }
    off += x->v.size();
  }
  // parameter coordinates
  for (avcn::ParamRef& p : op.params) {
    if (!p.learnable) continue;
    for (size_t i = 0; i < p.value->v.size(); ++i) {
      const double keep = p.value->v[i];
      p.value->v[i] = keep + kEps;
      const double lp = loss_now();
      p.value->v[i] = keep - kEps;
      const double lm = loss_now();
      p.value->v[i] = keep;
      res.fold(p.grad->v[i], (lp - lm) / (2.0 * kEps));
    }
  }
  return res;
}

inline Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

inline avcn::ModelConfig grad_config() {
  avcn::ModelConfig cfg;
  cfg.blocks = 2;
  cfg.hidden = 8;
  cfg.bottleneck = 2;
  cfg.ffn_hidden = 16;
  cfg.groups = 8;
  cfg.heads = 2;
  cfg.attn_embed = 1;
  cfg.win_length = 16;
  cfg.hop = 8;
  cfg.speakers = 2;
  cfg.vtcn_blocks = 2;
  cfg.visual_dim = 6;
  cfg.pe_max_frames = 32;
  return cfg;
}

// named operations of the gradient-correctness contract; returns max relative
// error across input and parameter coordinates
inline Result check_named_op(const std::string& name, uint64_t seed) {
  Rng rng(seed);
  const avcn::ModelConfig cfg = grad_config();
  const int m = 5, f = 9;
  Ctx train_ctx;
  train_ctx.training = true;

  if (name == "audio_encode") {
    avcn::ConvMHF conv;
    conv.init(avcn::ConvAxis::freq, 2, cfg.hidden, 5, 1, rng);
    Tensor x = rand_tensor({m, 2, f}, rng);
    Op op;
    op.inputs = {&x};
    conv.collect(op.params, "enc");
    op.forward = [&]() { return conv.forward(x, train_ctx); };
    op.backward = [&](const Tensor& r) { return conv.backward(r); };
    return check_op(op, rng);
  }
  if (name == "vtcn_forward") {
    avcn::VisualEncoder enc;
    enc.init(cfg.visual_dim, f, 3, cfg.vtcn_blocks, rng);
    Tensor x = rand_tensor({m, cfg.visual_dim}, rng);
    avcn::VisualEncoder::Cache cache;
    Op op;
    op.inputs = {&x};
    for (int rblk = 0; rblk < enc.blocks; ++rblk)
      enc.vtcn[static_cast<size_t>(rblk)].collect(op.params, "vtcn." + std::to_string(rblk));
    op.forward = [&]() {
      cache = {};
      return enc.vtcn_forward(x, train_ctx, cache);
    };
    op.backward = [&](const Tensor& r) { return enc.vtcn_backward(r, cache); };
    return check_op(op, rng);
  }
  if (name == "fuse") {
    avcn::Fusion fu;
    fu.init(cfg.hidden, 2, rng);
    Tensor audio = rand_tensor({m, cfg.hidden, f}, rng);
    Tensor visual = rand_tensor({m, 2 * cfg.hidden, f}, rng);
    Op op;
    op.inputs = {&audio, &visual};
    fu.collect(op.params, "fusion");
    op.forward = [&]() { return fu.forward(audio, visual, train_ctx); };
    op.backward = [&](const Tensor& r) {
      auto [da, dv] = fu.backward(r);
      Tensor both({static_cast<int>(da.numel() + dv.numel())});
      std::copy(da.v.begin(), da.v.end(), both.v.begin());
      std::copy(dv.v.begin(), dv.v.end(), both.v.begin() + da.numel());
      return both;
    };
    return check_op(op, rng);
  }
  if (name == "narrowband_forward" || name == "crossband_forward" || name == "gmhsa_forward") {
    avcn::SharedFullBand shared;
    shared.init(cfg.bottleneck, f, rng);
    avcn::ModelConfig cfg_f = cfg;
    cfg_f.win_length = (f - 1) * 2;
    cfg_f.hop = f - 1;
    avcn::Block blk;
    blk.init(cfg_f, &shared, rng);
    Tensor x = rand_tensor({m, cfg.hidden, f}, rng);
    Op op;
    op.inputs = {&x};
    if (name == "narrowband_forward") {
      blk.narrowband.collect(op.params, "nb");
      op.forward = [&]() { return blk.narrowband.forward(x, train_ctx); };
      op.backward = [&](const Tensor& r) { return blk.narrowband.backward(r); };
    } else if (name == "crossband_forward") {
      blk.crossband.collect(op.params, "cb");
      shared.collect(op.params, "shared");
      op.forward = [&]() { return blk.crossband.forward(x, train_ctx); };
      op.backward = [&](const Tensor& r) { return blk.crossband.backward(r); };
    } else {
      blk.gmhsa.collect(op.params, "gm");
      op.forward = [&]() { return blk.gmhsa.forward(x, train_ctx); };
      op.backward = [&](const Tensor& r) { return blk.gmhsa.backward(r); };
    }
    return check_op(op, rng);
  }
  if (name == "decode") {
    avcn::LinearChan dec;
    dec.init(cfg.hidden, 2 * cfg.speakers, rng);
    Tensor x = rand_tensor({m, cfg.hidden, f}, rng);
    Op op;
    op.inputs = {&x};
    dec.collect(op.params, "dec");
    op.forward = [&]() { return dec.forward(x, train_ctx); };
    op.backward = [&](const Tensor& r) { return dec.backward(r); };
    return check_op(op, rng);
  }
  if (name == "loss_mag" || name == "loss_sisdr") {
    // scalar losses: compare the analytic est-gradient coordinate-wise
    const int frames = 3, bins = 4, samples = 24;
    Result res;
    if (name == "loss_mag") {
      std::vector<avcn::ComplexSpectrogram> est(2, avcn::ComplexSpectrogram(frames, bins));
      std::vector<avcn::ComplexSpectrogram> tgt(2, avcn::ComplexSpectrogram(frames, bins));
      for (auto& s : est) {
        for (double& v : s.re) v = rng.uniform(-1.0, 1.0);
        for (double& v : s.im) v = rng.uniform(-1.0, 1.0);
      }
      for (auto& s : tgt) {
        for (double& v : s.re) v = rng.uniform(-1.0, 1.0);
        for (double& v : s.im) v = rng.uniform(-1.0, 1.0);
      }
      std::vector<avcn::ComplexSpectrogram> grad;
      avcn::loss_mag(est, tgt, &grad);
      for (size_t c = 0; c < est.size(); ++c)
        for (int part = 0; part < 2; ++part)
          for (size_t i = 0; i < est[c].re.size(); ++i) {
            std::vector<double>& plane = part == 0 ? est[c].re : est[c].im;
            const double keep = plane[i];
            plane[i] = keep + kEps;
            const double lp = avcn::loss_mag(est, tgt, nullptr);
            plane[i] = keep - kEps;
            const double lm = avcn::loss_mag(est, tgt, nullptr);
            plane[i] = keep;
            res.fold(part == 0 ? grad[c].re[i] : grad[c].im[i], (lp - lm) / (2.0 * kEps));
          }
    } else {
      std::vector<std::vector<double>> est(2), tgt(2);
      for (auto& e : est) {
        e.resize(samples);
        for (double& v : e) v = rng.uniform(-1.0, 1.0);
      }
      for (auto& t : tgt) {
        t.resize(samples);
        for (double& v : t) v = rng.uniform(-1.0, 1.0);
      }
      std::vector<std::vector<double>> grad;
      avcn::loss_sisdr(est, tgt, &grad);
      for (size_t c = 0; c < est.size(); ++c)
        for (size_t i = 0; i < est[c].size(); ++i) {
          const double keep = est[c][i];
          est[c][i] = keep + kEps;
          const double lp = avcn::loss_sisdr(est, tgt, nullptr);
          est[c][i] = keep - kEps;
          const double lm = avcn::loss_sisdr(est, tgt, nullptr);
          est[c][i] = keep;
          res.fold(grad[c][i], (lp - lm) / (2.0 * kEps));
        }
    }
    return res;
  }
  throw std::invalid_argument("gradcheck: unknown op " + name);
}

inline const std::vector<std::string>& op_names() {
  static const std::vector<std::string> names = {
      "audio_encode",  "vtcn_forward",      "fuse",   "narrowband_forward",
      "crossband_forward", "gmhsa_forward", "decode", "loss_mag",
      "loss_sisdr"};
  return names;
}

}  // namespace gradcheck
