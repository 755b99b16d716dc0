// Training objective (normalized magnitude loss + negative SI-SDR) with
// visual-order target assignment, plus the evaluation metrics.
#pragma once

#include <string>
#include <vector>

#include "avcn/dsp.hpp"

namespace avcn {

struct LossReport {
  double total = 0.0;
  double mag = 0.0;
  double sisdr = 0.0;
};

// L1 magnitude error normalized by the target magnitude L1 norm, summed over
// speakers. grad (optional) receives dLoss/d(est) per speaker.
double loss_mag(const std::vector<ComplexSpectrogram>& est,
                const std::vector<ComplexSpectrogram>& tgt,
                std::vector<ComplexSpectrogram>* grad = nullptr);

// -sum_c 10 log10(|s|^2 / |s_hat - alpha s|^2); the residual energy is
// floored at 1e-10, capping each term at +-100 dB.
double loss_sisdr(const std::vector<std::vector<double>>& est,
                  const std::vector<std::vector<double>>& tgt,
                  std::vector<std::vector<double>>* grad = nullptr);

// scale-invariant SDR of est against ref in dB (higher is better, capped at
// +-100 dB)
double metric_si_sdr(const std::vector<double>& est, const std::vector<double>& ref);
double metric_si_sdr_i(const std::vector<double>& est, const std::vector<double>& mix,
                       const std::vector<double>& ref);
double metric_snr(const std::vector<double>& est, const std::vector<double>& ref);

// Reorders sources into the given visual-stream order; ids and sources are
// matched by key, no permutation search.
std::vector<std::vector<double>> assign_targets(
    const std::vector<std::string>& visual_order,
    const std::vector<std::pair<std::string, std::vector<double>>>& sources);

struct UtteranceMetrics {
  std::string id;
  double si_sdr = 0.0;
  double si_sdr_i = 0.0;
  double snr = 0.0;
};

struct MetricReport {
  std::vector<UtteranceMetrics> utterances;
  double mean_si_sdr = 0.0, ci_si_sdr = 0.0;
  double mean_si_sdr_i = 0.0, ci_si_sdr_i = 0.0;
  double mean_snr = 0.0, ci_snr = 0.0;

  void finalize();  // fills means and 95% CI half-widths
  // one JSON object per utterance plus a final aggregate record
  std::string to_jsonl() const;
};

}  // namespace avcn
