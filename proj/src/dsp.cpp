#include "avcn/dsp.hpp"

#include <cmath>
#include <stdexcept>

namespace avcn {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT. sign = -1 for the analysis transform, +1 for the
// unscaled synthesis transform; callers apply 1/N where needed.
struct Fft {
  int n = 0;
  std::vector<int> rev;
  std::vector<double> cs, sn;

  explicit Fft(int size) : n(size), rev(size) {
    int logn = 0;
    while ((1 << logn) < n) ++logn;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < logn; ++b)
        if (i & (1 << b)) r |= 1 << (logn - 1 - b);
      rev[i] = r;
    }
    cs.resize(n / 2);
    sn.resize(n / 2);
    for (int i = 0; i < n / 2; ++i) {
      cs[i] = std::cos(2.0 * kPi * i / n);
      sn[i] = std::sin(2.0 * kPi * i / n);
    }
  }

  void run(double* re, double* im, int sign) const {
    for (int i = 0; i < n; ++i) {
      const int r = rev[i];
      if (r > i) {
        std::swap(re[i], re[r]);
        std::swap(im[i], im[r]);
      }
    }
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len >> 1;
      const int step = n / len;
      for (int start = 0; start < n; start += len) {
        for (int k = 0; k < half; ++k) {
          const double wr = cs[static_cast<size_t>(k) * step];
          const double wi = sign * sn[static_cast<size_t>(k) * step];
          const int a = start + k;
          const int b = a + half;
          const double tr = re[b] * wr - im[b] * wi;
          const double ti = re[b] * wi + im[b] * wr;
          re[b] = re[a] - tr;
          im[b] = im[a] - ti;
          re[a] += tr;
          im[a] += ti;
        }
      }
    }
  }
};

// Reflect (no edge repeat) index for position p of a signal padded by `pad`
// on both sides. Bounces for short signals; length 1 extends constantly.
int64_t reflect_index(int64_t p, int64_t pad, int64_t len) {
  if (len == 1) return 0;
  int64_t s = p - pad;
  const int64_t period = 2 * (len - 1);
  s = ((s % period) + period) % period;
  if (s >= len) s = period - s;
  return s;
}

}  // namespace

void StftConfig::validate() const {
  if (!is_pow2(win_length)) throw std::invalid_argument("stft: win_length must be a power of two");
  if (hop != win_length / 2) throw std::invalid_argument("stft: hop must equal win_length/2");
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  return w;
}

std::pair<Waveform, NormalizationState> normalize_variance(const Waveform& wave) {
  if (wave.samples.empty()) throw std::invalid_argument("normalize_variance: empty waveform");
  double mean = 0.0;
  for (double s : wave.samples) mean += s;
  mean /= static_cast<double>(wave.samples.size());
  double var = 0.0;
  for (double s : wave.samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(wave.samples.size());
  const double sd = std::sqrt(var);

  NormalizationState state;
  state.degenerate = sd < 1e-8;
  state.scale = state.degenerate ? 1e-8 : sd;

  Waveform out = wave;
  for (double& s : out.samples) s /= state.scale;
  return {std::move(out), state};
}

Waveform denormalize(const Waveform& wave, const NormalizationState& state) {
  Waveform out = wave;
  for (double& s : out.samples) s *= state.scale;
  return out;
}

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  cfg.validate();
  const int64_t len = wave.length();
  if (len < 1) throw std::invalid_argument("stft: waveform is empty");

  const int W = cfg.win_length;
  const int pad = W / 2;
  const int M = cfg.frames_for(len);
  const int F = cfg.bins();
  const std::vector<double> win = hann_window(W);
  const Fft fft(W);

  ComplexSpectrogram spec(M, F);
  std::vector<double> re(static_cast<size_t>(W)), im(static_cast<size_t>(W));
  for (int m = 0; m < M; ++m) {
    const int64_t start = static_cast<int64_t>(m) * cfg.hop;
    for (int n = 0; n < W; ++n) {
      re[n] = win[n] * wave.samples[static_cast<size_t>(reflect_index(start + n, pad, len))];
      im[n] = 0.0;
    }
    fft.run(re.data(), im.data(), -1);
    for (int f = 0; f < F; ++f) {
      spec.real(m, f) = re[f];
      spec.imag(m, f) = im[f];
    }
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, int64_t out_length) {
  cfg.validate();
  const int W = cfg.win_length;
  const int pad = W / 2;
  const int M = spec.frames;
  const int F = cfg.bins();
  if (spec.bins != F) throw std::invalid_argument("istft: bin count does not match config");
  if (out_length < 0 || out_length > static_cast<int64_t>(M) * cfg.hop + W)
    throw std::invalid_argument("istft: out_length inconsistent with frame count");

  const std::vector<double> win = hann_window(W);
  const Fft fft(W);

  const int64_t padded = static_cast<int64_t>(M - 1) * cfg.hop + W;
  std::vector<double> acc(static_cast<size_t>(padded), 0.0);
  std::vector<double> wsq(static_cast<size_t>(padded), 0.0);

  std::vector<double> re(static_cast<size_t>(W)), im(static_cast<size_t>(W));
  for (int m = 0; m < M; ++m) {
    for (int f = 0; f < F; ++f) {
      re[f] = spec.real(m, f);
      im[f] = spec.imag(m, f);
    }
    // hermitian completion; the imaginary parts of DC and Nyquist drop out
    im[0] = 0.0;
    im[W / 2] = 0.0;
    for (int f = F; f < W; ++f) {
      re[f] = re[W - f];
      im[f] = -im[W - f];
    }
    fft.run(re.data(), im.data(), +1);
    const int64_t start = static_cast<int64_t>(m) * cfg.hop;
    for (int n = 0; n < W; ++n) {
      acc[static_cast<size_t>(start + n)] += win[n] * re[n] / W;
      wsq[static_cast<size_t>(start + n)] += win[n] * win[n];
    }
  }

  Waveform out;
  out.samples.resize(static_cast<size_t>(out_length), 0.0);
  for (int64_t t = 0; t < out_length; ++t) {
    const int64_t p = t + pad;
    if (p < padded && wsq[static_cast<size_t>(p)] > 1e-30)
      out.samples[static_cast<size_t>(t)] = acc[static_cast<size_t>(p)] / wsq[static_cast<size_t>(p)];
  }
  return out;
}

std::vector<double> stft_adjoint(const ComplexSpectrogram& grad_spec, const StftConfig& cfg,
                                 int64_t in_length) {
  cfg.validate();
  const int W = cfg.win_length;
  const int pad = W / 2;
  const int M = grad_spec.frames;
  const int F = cfg.bins();
  const std::vector<double> win = hann_window(W);
  const Fft fft(W);

  std::vector<double> grad(static_cast<size_t>(in_length), 0.0);
  std::vector<double> re(static_cast<size_t>(W)), im(static_cast<size_t>(W));
  for (int m = 0; m < M; ++m) {
    for (int f = 0; f < W; ++f) {
      re[f] = f < F ? grad_spec.real(m, f) : 0.0;
      im[f] = f < F ? grad_spec.imag(m, f) : 0.0;
    }
    // adjoint of the analysis DFT restricted to the F kept bins
    fft.run(re.data(), im.data(), +1);
    const int64_t start = static_cast<int64_t>(m) * cfg.hop;
    for (int n = 0; n < W; ++n) {
      const int64_t src = reflect_index(start + n, pad, in_length);
      grad[static_cast<size_t>(src)] += win[n] * re[n];
    }
  }
  return grad;
}

ComplexSpectrogram istft_adjoint(const std::vector<double>& grad_wave, const StftConfig& cfg,
                                 int frames) {
  cfg.validate();
  const int W = cfg.win_length;
  const int pad = W / 2;
  const int M = frames;
  const int F = cfg.bins();
  const int64_t out_length = static_cast<int64_t>(grad_wave.size());
  const std::vector<double> win = hann_window(W);
  const Fft fft(W);

  const int64_t padded = static_cast<int64_t>(M - 1) * cfg.hop + W;
  std::vector<double> wsq(static_cast<size_t>(padded), 0.0);
  for (int m = 0; m < M; ++m) {
    const int64_t start = static_cast<int64_t>(m) * cfg.hop;
    for (int n = 0; n < W; ++n) wsq[static_cast<size_t>(start + n)] += win[n] * win[n];
  }

  ComplexSpectrogram grad(M, F);
  std::vector<double> re(static_cast<size_t>(W)), im(static_cast<size_t>(W));
  for (int m = 0; m < M; ++m) {
    const int64_t start = static_cast<int64_t>(m) * cfg.hop;
    for (int n = 0; n < W; ++n) {
      const int64_t t = start + n - pad;
      double g = 0.0;
      if (t >= 0 && t < out_length && wsq[static_cast<size_t>(start + n)] > 1e-30)
        g = grad_wave[static_cast<size_t>(t)] * win[n] / (wsq[static_cast<size_t>(start + n)] * W);
      re[n] = g;
      im[n] = 0.0;
    }
    fft.run(re.data(), im.data(), -1);
    for (int f = 0; f < F; ++f) {
      const double c = (f == 0 || f == W / 2) ? 1.0 : 2.0;
      grad.real(m, f) = c * re[f];
      grad.imag(m, f) = (f == 0 || f == W / 2) ? 0.0 : c * im[f];
    }
  }
  return grad;
}

Tensor stack_ri(const ComplexSpectrogram& spec) {
  Tensor t({spec.frames, 2, spec.bins});
  for (int m = 0; m < spec.frames; ++m)
    for (int f = 0; f < spec.bins; ++f) {
      t.at(m, 0, f) = spec.real(m, f);
      t.at(m, 1, f) = spec.imag(m, f);
    }
  return t;
}

ComplexSpectrogram unstack_ri(const Tensor& t) {
  if (t.ndim() != 3 || t.dim(1) != 2) throw std::invalid_argument("unstack_ri: expected (M,2,F)");
  ComplexSpectrogram spec(t.dim(0), t.dim(2));
  for (int m = 0; m < spec.frames; ++m)
    for (int f = 0; f < spec.bins; ++f) {
      spec.real(m, f) = t.at(m, 0, f);
      spec.imag(m, f) = t.at(m, 1, f);
    }
  return spec;
}

}  // namespace avcn
