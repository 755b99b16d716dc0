#include "avcn/visual.hpp"

#include <cmath>
#include <stdexcept>

namespace avcn {

namespace {

Tensor relu_rows(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.v) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_rows_backward(const Tensor& x, const Tensor& gy) {
  Tensor dx = gy;
  for (size_t i = 0; i < dx.v.size(); ++i)
    if (x.v[i] <= 0.0) dx.v[i] = 0.0;
  return dx;
}

}  // namespace

Tensor embeddings_to_tensor(const VisualEmbeddingSequence& emb) {
  Tensor t({emb.frames, emb.dim});
  t.v = emb.data;
  return t;
}

// ---------------------------------------------------------------------------
// VtcnBlock

void VtcnBlock::init(int dim, Rng& rng) {
  fv = dim;
  bn1.init(dim);
  bn2.init(dim);
  conv1.init(dim, dim, 1, rng);
  conv2.init(dim, dim, 3, rng);
  prelu.init();
}

void VtcnBlock::collect(ParamList& out, const std::string& prefix) {
  bn1.collect(out, prefix + ".bn1");
  conv1.collect(out, prefix + ".conv1");
  prelu.collect(out, prefix + ".prelu");
  bn2.collect(out, prefix + ".bn2");
  conv2.collect(out, prefix + ".conv2");
}

Tensor VtcnBlock::forward(const Tensor& x, const Ctx& ctx, Cache& cache) {
  cache.x = x;
  cache.r = relu_rows(x);
  cache.b1 = bn1.forward(cache.r, ctx, cache.bn1c);
  cache.c1 = conv1.forward(cache.b1);
  cache.prelu_in = cache.c1;
  Tensor p1 = cache.c1;
  const double a = prelu.slope.w.at(0);
  for (double& v : p1.v)
    if (v < 0.0) v *= a;
  cache.p1 = p1;
  cache.b2 = bn2.forward(p1, ctx, cache.bn2c);
  Tensor c2 = conv2.forward(cache.b2);
  for (size_t i = 0; i < c2.v.size(); ++i) c2.v[i] += x.v[i];
  return c2;
}

Tensor VtcnBlock::backward(const Tensor& gy, Cache& cache) {
  Tensor d_b2;
  conv2.backward(cache.b2, gy, &d_b2);
  Tensor d_p1 = bn2.backward(d_b2, cache.bn2c);

  // prelu backward (single slope)
  const double a = prelu.slope.w.at(0);
  Tensor d_c1 = d_p1;
  double da = 0.0;
  for (size_t i = 0; i < d_c1.v.size(); ++i) {
    const double x = cache.prelu_in.v[i];
    if (x < 0.0) {
      da += d_p1.v[i] * x;
      d_c1.v[i] *= a;
    }
  }
  prelu.slope.g.at(0) += da;

  Tensor d_b1;
  conv1.backward(cache.b1, d_c1, &d_b1);
  Tensor d_r = bn1.backward(d_b1, cache.bn1c);
  Tensor dx = relu_rows_backward(cache.x, d_r);
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += gy.v[i];  // residual
  return dx;
}

// ---------------------------------------------------------------------------
// VisualEncoder

void VisualEncoder::init(int embedding_dim, int bins, int channels, int r_blocks, Rng& rng) {
  fv = embedding_dim;
  f = bins;
  h = channels;
  blocks = r_blocks;
  vtcn.resize(static_cast<size_t>(r_blocks));
  for (auto& b : vtcn) b.init(embedding_dim, rng);
  proj.init(embedding_dim, bins, rng);
}

void VisualEncoder::collect(ParamList& out, const std::string& prefix) {
  for (int r = 0; r < blocks; ++r)
    vtcn[static_cast<size_t>(r)].collect(out, prefix + ".vtcn." + std::to_string(r));
  proj.collect(out, prefix + ".proj");
}

Tensor VisualEncoder::vtcn_forward(const Tensor& v, const Ctx& ctx, Cache& cache) {
  if (v.dim(1) != fv) throw std::invalid_argument("vtcn: embedding dim mismatch");
  cache.vtcn_caches.assign(static_cast<size_t>(blocks), {});
  Tensor x = v;
  for (int r = 0; r < blocks; ++r)
    x = vtcn[static_cast<size_t>(r)].forward(x, ctx, cache.vtcn_caches[static_cast<size_t>(r)]);
  return x;
}

Tensor VisualEncoder::vtcn_backward(const Tensor& gy, Cache& cache) {
  Tensor g = gy;
  for (int r = blocks - 1; r >= 0; --r)
    g = vtcn[static_cast<size_t>(r)].backward(g, cache.vtcn_caches[static_cast<size_t>(r)]);
  return g;
}

namespace {

// linear interpolation positions with pinned endpoints
double src_pos(int j, int m, int mv) {
  if (m <= 1 || mv <= 1) return 0.0;
  return static_cast<double>(j) * (mv - 1) / (m - 1);
}

}  // namespace

Tensor project_and_upsample(const LinearRows& proj, const Tensor& v, int m_frames, int h) {
  const int mv = v.dim(0);
  if (m_frames < 1) throw std::invalid_argument("upsample: need at least one output frame");
  Tensor p = proj.forward(v);  // (Mv, F)
  const int f = p.dim(1);

  Tensor out({m_frames, h, f});
  for (int j = 0; j < m_frames; ++j) {
    const double pos = src_pos(j, m_frames, mv);
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, mv - 1);
    const double w = pos - lo;
    for (int ff = 0; ff < f; ++ff) {
      const double val = (1.0 - w) * p.at(lo, ff) + w * p.at(hi, ff);
      for (int ch = 0; ch < h; ++ch) out.at(j, ch, ff) = val;
    }
  }
  return out;
}

Tensor VisualEncoder::forward(const VisualEmbeddingSequence& emb, int m_frames, const Ctx& ctx,
                              Cache& cache) {
  Tensor v = embeddings_to_tensor(emb);
  cache.mv = emb.frames;
  cache.m = m_frames;
  cache.vtcn_out = vtcn_forward(v, ctx, cache);
  cache.projected = proj.forward(cache.vtcn_out);

  const int mv = cache.mv;
  Tensor out({m_frames, h, f});
  for (int j = 0; j < m_frames; ++j) {
    const double pos = src_pos(j, m_frames, mv);
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, mv - 1);
    const double w = pos - lo;
    for (int ff = 0; ff < f; ++ff) {
      const double val = (1.0 - w) * cache.projected.at(lo, ff) + w * cache.projected.at(hi, ff);
      for (int ch = 0; ch < h; ++ch) out.at(j, ch, ff) = val;
    }
  }
  if (!ctx.training) {
    cache.vtcn_caches.clear();
    cache.vtcn_out = Tensor();
    cache.projected = Tensor();
  }
  return out;
}

void VisualEncoder::backward(const Tensor& gy, Cache& cache) {
  const int mv = cache.mv, m = cache.m;
  // broadcast adjoint (sum over channels) + interpolation adjoint (scatter)
  Tensor d_proj({mv, f});
  for (int j = 0; j < m; ++j) {
    const double pos = src_pos(j, m, mv);
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, mv - 1);
    const double w = pos - lo;
    for (int ff = 0; ff < f; ++ff) {
      double s = 0.0;
      for (int ch = 0; ch < h; ++ch) s += gy.at(j, ch, ff);
      d_proj.at(lo, ff) += (1.0 - w) * s;
      d_proj.at(hi, ff) += w * s;
    }
  }
  Tensor d_vtcn_out;
  proj.backward(cache.vtcn_out, d_proj, &d_vtcn_out);
  vtcn_backward(d_vtcn_out, cache);  // gradient stops at the embedding input
}

// ---------------------------------------------------------------------------

Tensor stack_speakers(const std::vector<Tensor>& streams) {
  if (streams.empty()) throw std::invalid_argument("stack_speakers: no streams");
  const int m = streams[0].dim(0), h = streams[0].dim(1), f = streams[0].dim(2);
  for (const Tensor& s : streams)
    if (s.dim(0) != m || s.dim(1) != h || s.dim(2) != f)
      throw std::invalid_argument("stack_speakers: stream shape mismatch");
  const int c = static_cast<int>(streams.size());
  Tensor out({m, c * h, f});
  for (int ci = 0; ci < c; ++ci)
    for (int mm = 0; mm < m; ++mm)
      for (int ch = 0; ch < h; ++ch)
        std::copy_n(&streams[static_cast<size_t>(ci)].at(mm, ch, 0), f,
                    &out.at(mm, ci * h + ch, 0));
  return out;
}

std::vector<Tensor> split_speakers(const Tensor& stacked, int speakers) {
  const int m = stacked.dim(0), ch_total = stacked.dim(1), f = stacked.dim(2);
  const int h = ch_total / speakers;
  std::vector<Tensor> parts(static_cast<size_t>(speakers));
  for (int ci = 0; ci < speakers; ++ci) {
    parts[static_cast<size_t>(ci)].reshape({m, h, f});
    for (int mm = 0; mm < m; ++mm)
      for (int ch = 0; ch < h; ++ch)
        std::copy_n(&stacked.at(mm, ci * h + ch, 0), f,
                    &parts[static_cast<size_t>(ci)].at(mm, ch, 0));
  }
  return parts;
}

}  // namespace avcn
