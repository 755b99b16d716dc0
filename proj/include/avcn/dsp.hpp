// Time <-> frequency front end: variance normalization, STFT/iSTFT with
// center reflect padding and weighted overlap-add synthesis, and real/imag
// stacking. Adjoint operators back the training gradients.
#pragma once

#include <utility>
#include <vector>

#include "avcn/tensor.hpp"

namespace avcn {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(std::vector<double> s, int sr) : samples(std::move(s)), sample_rate(sr) {}
  int64_t length() const { return static_cast<int64_t>(samples.size()); }
};

struct StftConfig {
  int win_length = 512;  // samples, power of two
  int hop = 256;         // win_length / 2

  int bins() const { return win_length / 2 + 1; }
  // frames produced for a signal of the given length with center padding
  int frames_for(int64_t length) const {
    return static_cast<int>(length / hop) + 1;
  }
  void validate() const;
};

struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> re, im;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int m, int f)
      : frames(m), bins(f),
        re(static_cast<size_t>(m) * f, 0.0),
        im(static_cast<size_t>(m) * f, 0.0) {}

  size_t idx(int m, int f) const { return static_cast<size_t>(m) * bins + f; }
  double& real(int m, int f) { return re[idx(m, f)]; }
  double real(int m, int f) const { return re[idx(m, f)]; }
  double& imag(int m, int f) { return im[idx(m, f)]; }
  double imag(int m, int f) const { return im[idx(m, f)]; }
};

struct NormalizationState {
  double scale = 1.0;
  bool degenerate = false;  // input std fell below the 1e-8 clamp
};

// Divides by the (population) standard deviation; silent input clamps the
// scale to 1e-8 and sets the degenerate flag.
std::pair<Waveform, NormalizationState> normalize_variance(const Waveform& wave);
Waveform denormalize(const Waveform& wave, const NormalizationState& state);

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg);
// out_length restores the original sample count; it may not exceed
// frames*hop + win_length.
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, int64_t out_length);

// Adjoint of stft as a linear map R^len -> (re, im) pairs; used to chain
// spectral-loss gradients back to the waveform.
std::vector<double> stft_adjoint(const ComplexSpectrogram& grad_spec, const StftConfig& cfg,
                                 int64_t in_length);
// Adjoint of istft (with the same out_length that produced the waveform).
ComplexSpectrogram istft_adjoint(const std::vector<double>& grad_wave, const StftConfig& cfg,
                                 int frames);

// (M,F) complex -> (M,2,F) real; channel 0 real, channel 1 imaginary.
Tensor stack_ri(const ComplexSpectrogram& spec);
ComplexSpectrogram unstack_ri(const Tensor& t);

std::vector<double> hann_window(int n);

}  // namespace avcn
