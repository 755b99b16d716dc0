// Visual front end: V-TCN refinement of pre-extracted face embeddings,
// projection to the frequency width, channel broadcast and temporal
// upsampling to the audio frame rate. Weights are shared across speaker
// streams, so forward/backward carry explicit cache objects.
#pragma once

#include <vector>

#include "avcn/aveb.hpp"
#include "avcn/ops.hpp"

namespace avcn {

// one residual block: x + Conv1d_k3(BN(PReLU(Conv1d_k1(BN(ReLU(x))))))
struct VtcnBlock {
  int fv = 0;
  BatchNormTime bn1, bn2;
  TimeConv conv1, conv2;
  PRelu prelu;

  struct Cache {
    Tensor x, r, b1, c1, p1, b2;
    BatchNormTime::Cache bn1c, bn2c;
    Tensor prelu_in;
  };

  void init(int dim, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx, Cache& cache);
  Tensor backward(const Tensor& gy, Cache& cache);
};

struct VisualEncoder {
  int fv = 0;    // embedding dim
  int f = 0;     // frequency bins
  int h = 0;     // broadcast channels
  int blocks = 0;
  std::vector<VtcnBlock> vtcn;
  LinearRows proj;  // Fv -> F

  struct Cache {
    std::vector<VtcnBlock::Cache> vtcn_caches;
    Tensor vtcn_out;   // (Mv, Fv)
    Tensor projected;  // (Mv, F)
    int mv = 0, m = 0;
  };

  void init(int embedding_dim, int bins, int channels, int r_blocks, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);

  // V-TCN stack only: (Mv, Fv) -> (Mv, Fv)
  Tensor vtcn_forward(const Tensor& v, const Ctx& ctx, Cache& cache);
  Tensor vtcn_backward(const Tensor& gy, Cache& cache);

  // full chain to an (M, H, F) feature tensor
  Tensor forward(const VisualEmbeddingSequence& emb, int m_frames, const Ctx& ctx, Cache& cache);
  void backward(const Tensor& gy, Cache& cache);
};

// projection + channel broadcast + temporal interpolation with pinned
// endpoints; exposed separately for direct testing
Tensor project_and_upsample(const LinearRows& proj, const Tensor& v, int m_frames, int h);

// channel-axis concatenation of per-speaker (M, H, F) tensors
Tensor stack_speakers(const std::vector<Tensor>& streams);
// split of the stacked gradient back into per-speaker parts
std::vector<Tensor> split_speakers(const Tensor& stacked, int speakers);

Tensor embeddings_to_tensor(const VisualEmbeddingSequence& emb);

}  // namespace avcn
