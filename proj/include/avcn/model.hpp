// Separator network: audio encoder, stacked blocks combining per-frequency
// temporal attention, cross-band convolution with shared full-band linears,
// and global multi-head self-attention over whole frames, plus the decoder
// back to per-speaker complex spectrograms.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "avcn/aveb.hpp"
#include "avcn/dsp.hpp"
#include "avcn/fusion.hpp"
#include "avcn/ops.hpp"
#include "avcn/visual.hpp"

namespace avcn {

struct ModelConfig {
  int blocks = 12;        // B
  int hidden = 192;       // H
  int bottleneck = 16;    // H'
  int ffn_hidden = 384;   // H''
  int audio_kernel = 5;   // k_a
  int time_kernel = 5;
  int freq_kernel = 3;
  int groups = 8;
  int heads = 4;
  int attn_embed = 0;     // E; 0 derives ceil(512/F)
  int win_length = 512;
  int hop = 256;
  int speakers = 2;       // C
  int vtcn_blocks = 5;    // R
  int visual_dim = 512;   // Fv
  double dropout = 0.0;
  int pe_max_frames = 2000;
  int sample_rate = 16000;

  int bins() const { return win_length / 2 + 1; }
  int embed() const {
    if (attn_embed > 0) return attn_embed;
    return (512 + bins() - 1) / bins();
  }
  StftConfig stft() const { return {win_length, hop}; }
  void validate() const;
};

// MHSA along the time axis, run independently per frequency bin.
struct NarrowBandAttn {
  int h = 0, heads = 0;
  LinearRows wq, wk, wv, wo;

  struct BinCache {
    Tensor tok, q, k, v, cat;
    Tensor attn;  // (heads, M, M)
  };
  std::vector<BinCache> bins_cache;

  void init(int hidden, int n_heads, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

struct NarrowBand {
  LayerNormChan ln_pre, ln_post, ln_ffn;
  NarrowBandAttn attn;
  LinearChan ffn1, ffn2;
  SiluChan silu;
  ConvMHF tgconv;
  GroupNormFSeq gnorm;
  Dropout drop;

  void init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// Per-channel frequency-axis linear maps shared by every block.
struct SharedFullBand {
  int channels = 0;  // H'
  int f = 0;
  std::vector<Param> weight;  // each (F, F)
  std::vector<Param> bias;    // each (F)

  void init(int h_prime, int bins, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& gy);
};

struct CrossBand {
  LayerNormChan ln1, ln2;
  ConvMHF fgconv1, fgconv2;
  PRelu prelu1, prelu2;
  LinearChan down, up;
  SiluChan silu1, silu2;
  SharedFullBand* shared = nullptr;
  Tensor fb_in_cache;

  void init(const ModelConfig& cfg, SharedFullBand* shared_fb, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// Attention over whole frames with channel x frequency flattened into the
// token embedding.
struct Gmhsa {
  int h = 0, heads = 0, e = 0;
  LinearChan in_conv, out_conv;
  PRelu prelu;
  LayerNormChan ln;
  Tensor qkv_cache;
  Tensor attn_cache;  // (heads, M, M)

  int qkv_channels() const { return heads * (2 * e + h / heads); }
  void init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

struct Block {
  NarrowBand narrowband;
  CrossBand crossband;
  Gmhsa gmhsa;

  void init(const ModelConfig& cfg, SharedFullBand* shared, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

struct Separator {
  ModelConfig cfg;
  ConvMHF audio_enc;          // (M,2,F) -> (M,H,F), kernel along frequency
  VisualEncoder visual;
  Fusion fusion;
  PositionalTable pe;
  SharedFullBand shared;
  std::vector<Block> blocks;
  LinearChan decoder;         // H -> 2C

  // per-item state retained between forward_train and backward_train
  struct ItemState {
    NormalizationState norm;
    int64_t mix_len = 0;
    int frames = 0;
    std::vector<VisualEncoder::Cache> vis_caches;
    std::vector<Waveform> estimates;
  };
  ItemState item;

  void init(const ModelConfig& config, uint64_t seed);
  void collect(ParamList& out);
  int64_t count_parameters() const;
  void zero_grads();

  Tensor audio_encode(const Tensor& stacked_ri, const Ctx& ctx);
  // maps (M,H,F) features to C complex spectrograms
  std::vector<ComplexSpectrogram> decode(const Tensor& x, const Ctx& ctx);

  // full pipeline; eval mode takes the leading PE rows and keeps no caches
  std::vector<Waveform> separate(const Waveform& mixture,
                                 const std::vector<VisualEmbeddingSequence>& visuals);
  // training forward; caches everything needed by backward_train
  std::vector<Waveform> forward_train(const Waveform& mixture,
                                      const std::vector<VisualEmbeddingSequence>& visuals,
                                      Rng& rng);
  // grad_estimates[c] is dLoss/d(estimate_c); accumulates parameter grads
  void backward_train(const std::vector<std::vector<double>>& grad_estimates);

 private:
  std::vector<Waveform> run(const Waveform& mixture,
                            const std::vector<VisualEmbeddingSequence>& visuals, const Ctx& ctx,
                            Rng* rng);
};

}  // namespace avcn
