// Neural-net building blocks with hand-written backward passes. Feature
// tensors are (M, C, F) row-major: time frames, channels, frequency bins.
// Visual-path layers work on (T, C) row matrices instead.
//
// Forward passes cache what backward needs only when ctx.training is set;
// evaluation runs cache-free. Gradients accumulate into Param::g until
// zero_grads().
#pragma once

#include <string>
#include <vector>

#include "avcn/rng.hpp"
#include "avcn/tensor.hpp"

namespace avcn {

struct Param {
  Tensor w;
  Tensor g;

  void init(std::vector<int> shape) {
    w.reshape(shape);
    g.reshape(std::move(shape));
  }
};

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;   // null for state tensors (running stats)
  bool learnable = true;
};
using ParamList = std::vector<ParamRef>;

inline void add_param(ParamList& out, const std::string& name, Param& p) {
  out.push_back({name, &p.w, &p.g, true});
}
inline void add_state(ParamList& out, const std::string& name, Tensor& t) {
  out.push_back({name, &t, nullptr, false});
}

struct Ctx {
  bool training = false;
  Rng* rng = nullptr;
  // when set, attention rows append their post-softmax row sums here
  std::vector<double>* attn_row_sums = nullptr;
};

// bound = sqrt(1/fan_in), uniform for weights and biases
void init_uniform_fanin(Param& p, int fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// (M, C, F) layers

// y[m,:,f] = W x[m,:,f] + b, pointwise over (m, f)
struct LinearChan {
  int ci = 0, co = 0;
  Param weight, bias;
  Tensor x_cache;

  void init(int in, int out, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

enum class ConvAxis { time, freq };

// Grouped 1-D convolution along time or frequency, stride 1, zero same-pad.
struct ConvMHF {
  ConvAxis axis = ConvAxis::freq;
  int ci = 0, co = 0, k = 1, groups = 1;
  Param weight;  // (co, ci/groups, k)
  Param bias;    // (co)
  Tensor x_cache;

  void init(ConvAxis a, int in, int out, int kernel, int g, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// LayerNorm over the channel axis at each (m, f) position.
struct LayerNormChan {
  int c = 0;
  double eps = 1e-5;
  Param gamma, beta;
  Tensor x_cache, mean_cache, rstd_cache;

  void init(int channels);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// GroupNorm for per-frequency time sequences: statistics are taken per
// (frequency bin, channel group) over (channels-in-group x frames).
struct GroupNormFSeq {
  int c = 0, groups = 1;
  double eps = 1e-5;
  Param gamma, beta;
  Tensor x_cache, mean_cache, rstd_cache;  // caches are (F, groups)

  void init(int channels, int g);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

struct SiluChan {
  Tensor x_cache;
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// Single-slope parametric ReLU.
struct PRelu {
  Param slope;
  Tensor x_cache;

  void init();
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// Inverted dropout; identity when rate is 0 or in evaluation mode.
struct Dropout {
  double rate = 0.0;
  Tensor mask_cache;

  Tensor forward(const Tensor& x, const Ctx& ctx);
  Tensor backward(const Tensor& gy);
};

// ---------------------------------------------------------------------------
// (T, C) row-matrix layers for the visual path

struct LinearRows {
  int ci = 0, co = 0;
  Param weight, bias;

  void init(int in, int out, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  // caller keeps x for the backward call (shared-weight layers are invoked
  // several times per step)
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& gy, Tensor* dx);
};

// Dense 1-D convolution along rows (time), zero same-pad, stride 1.
struct TimeConv {
  int ci = 0, co = 0, k = 1;
  Param weight;  // (co, ci, k)
  Param bias;    // (co)

  void init(int in, int out, int kernel, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& gy, Tensor* dx);
};

// BatchNorm over the time axis of a (T, C) matrix.
struct BatchNormTime {
  int c = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Param gamma, beta;
  Tensor running_mean, running_var;

  struct Cache {
    Tensor x;
    std::vector<double> mean, rstd;
    bool training = false;
  };

  void init(int channels);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& x, const Ctx& ctx, Cache& cache);
  Tensor backward(const Tensor& gy, const Cache& cache);
};

// ---------------------------------------------------------------------------
// scaled-dot-product attention on packed token matrices

// A = softmax(q k^T * scale) row-wise, o = A v
void attn_forward(const double* q, const double* k, const double* v, int T, int dq, int dv,
                  double scale, double* A, double* o, const Ctx& ctx);
// accumulates into dq/dk/dv
void attn_backward(const double* q, const double* k, const double* v, const double* A,
                   const double* go, int T, int dq, int dv, double scale, double* dq_out,
                   double* dk_out, double* dv_out);

}  // namespace avcn
