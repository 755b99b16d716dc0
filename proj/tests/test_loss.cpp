// Objective and metric checks against hand-evaluated and direct-formula
// oracles.
#include <cmath>

#include "avcn/loss.hpp"
#include "avcn/rng.hpp"
#include "test_util.hpp"

using namespace avcn;
using testutil::check;
using testutil::check_close;
using testutil::check_throws;

namespace {

void test_loss_mag() {
  Rng rng(61);
  {
    std::vector<ComplexSpectrogram> est(2, ComplexSpectrogram(3, 4));
    for (auto& s : est) {
      for (double& v : s.re) v = rng.uniform(-1.0, 1.0);
      for (double& v : s.im) v = rng.uniform(-1.0, 1.0);
    }
    check_close(loss_mag(est, est, nullptr), 0.0, 1e-12, "perfect magnitude estimate costs zero");

    std::vector<ComplexSpectrogram> zero(2, ComplexSpectrogram(3, 4));
    check_close(loss_mag(zero, est, nullptr), 2.0, 1e-9,
                "all-zero estimate costs one per speaker");
  }
  {
    // 2x2 hand spectrograms against the direct formula
    std::vector<ComplexSpectrogram> est(1, ComplexSpectrogram(2, 2));
    std::vector<ComplexSpectrogram> tgt(1, ComplexSpectrogram(2, 2));
    est[0].re = {3.0, 0.0, -1.0, 2.0};
    est[0].im = {4.0, 1.0, 0.0, -2.0};
    tgt[0].re = {1.0, 2.0, 2.0, 0.5};
    tgt[0].im = {0.0, 0.0, -1.5, 0.5};
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double me = std::hypot(est[0].re[i], est[0].im[i]);
      const double mt = std::hypot(tgt[0].re[i], tgt[0].im[i]);
      num += std::abs(me - mt);
      den += mt;
    }
    check_close(loss_mag(est, tgt, nullptr), num / den, 1e-12,
                "hand spectrogram matches the direct evaluation");
  }
  {
    // invariance to the estimate's phase at matched magnitudes
    std::vector<ComplexSpectrogram> a(1, ComplexSpectrogram(2, 2));
    a[0].re = {1.0, 0.5, -0.25, 2.0};
    a[0].im = {0.5, -1.0, 1.0, 0.0};
    std::vector<ComplexSpectrogram> rot = a;
    for (size_t i = 0; i < 4; ++i) {
      const double mag = std::hypot(a[0].re[i], a[0].im[i]);
      const double ang = 0.3 + static_cast<double>(i);
      rot[0].re[i] = mag * std::cos(ang);
      rot[0].im[i] = mag * std::sin(ang);
    }
    std::vector<ComplexSpectrogram> tgt(1, ComplexSpectrogram(2, 2));
    for (double& v : tgt[0].re) v = rng.uniform(0.1, 1.0);
    check_close(loss_mag(a, tgt, nullptr), loss_mag(rot, tgt, nullptr), 1e-12,
                "magnitude loss ignores the estimate phase");
  }
  {
    // all-zero target hits the clamped denominator, not a division blow-up
    std::vector<ComplexSpectrogram> est(1, ComplexSpectrogram(1, 2));
    est[0].re = {1.0, 1.0};
    std::vector<ComplexSpectrogram> tgt(1, ComplexSpectrogram(1, 2));
    const double val = loss_mag(est, tgt, nullptr);
    check(std::isfinite(val), "zero target stays finite via the 1e-8 clamp");
  }
}

void test_loss_sisdr() {
  {
    std::vector<std::vector<double>> s = {{1.0, 0.0}};
    std::vector<std::vector<double>> sh = {{1.0, 1.0}};
    check_close(loss_sisdr(sh, s, nullptr), 0.0, 1e-12,
                "alpha=1 residual [0,1] evaluates to 0 dB");
  }
  {
    // perfect estimate: floored residual puts the term near the cap
    std::vector<std::vector<double>> s = {{0.5, -0.25, 0.75, 0.1}};
    const double l = loss_sisdr(s, s, nullptr);
    check(l <= -95.0 && l >= -100.0, "perfect estimate lands at the documented cap");
    // with unit-or-larger target energy the clamp engages exactly
    std::vector<std::vector<double>> big = {{1.0, -0.5, 1.5, 0.2}};
    check_close(loss_sisdr(big, big, nullptr), -100.0, 1e-9,
                "cap is exactly -100 dB at unit-plus target energy");
    std::vector<std::vector<double>> two = big;
    for (double& v : two[0]) v *= 2.0;
    check_close(loss_sisdr(two, big, nullptr), -100.0, 1e-9,
                "scaled perfect estimate also hits the cap");
  }
  check_throws(
      [] {
        std::vector<std::vector<double>> z = {{0.0, 0.0}};
        std::vector<std::vector<double>> e = {{1.0, 1.0}};
        loss_sisdr(e, z, nullptr);
      },
      "zero target rejected");

  // monotone decrease along the interpolation path from noise to target
  Rng rng(62);
  std::vector<double> tgt(64), noise(64);
  for (double& v : tgt) v = rng.uniform(-1.0, 1.0);
  for (double& v : noise) v = rng.uniform(-1.0, 1.0);
  double prev = 1e300;
  bool monotone = true;
  for (int k = 0; k <= 10; ++k) {
    const double a = k / 10.0;
    std::vector<double> est(64);
    for (size_t i = 0; i < est.size(); ++i) est[i] = (1.0 - a) * noise[i] + a * tgt[i];
    const double l = loss_sisdr({est}, {tgt}, nullptr);
    if (l >= prev) monotone = false;
    prev = l;
  }
  check(monotone, "loss decreases from noise toward the target");
}

void test_metrics() {
  Rng rng(63);
  std::vector<double> ref(16), est(16), mix(16);
  for (double& v : ref) v = rng.uniform(-1.0, 1.0);
  for (double& v : est) v = rng.uniform(-1.0, 1.0);
  for (double& v : mix) v = rng.uniform(-1.0, 1.0);

  check_close(metric_si_sdr(ref, ref), 100.0, 1e-9, "perfect estimate caps at +100 dB");
  check_close(metric_si_sdr_i(mix, mix, ref), 0.0, 1e-12, "est == mix has zero improvement");
  check_close(metric_snr(ref, ref), 100.0, 1e-9, "snr caps at +100 dB for est == ref");

  // direct-formula oracle
  double ss = 0.0, se = 0.0;
  for (int i = 0; i < 16; ++i) {
    ss += ref[i] * ref[i];
    se += ref[i] * est[i];
  }
  const double alpha = se / ss;
  double resid = 0.0;
  for (int i = 0; i < 16; ++i)
    resid += (est[i] - alpha * ref[i]) * (est[i] - alpha * ref[i]);
  const double want = 10.0 * std::log10(alpha * alpha * ss / resid);
  check_close(metric_si_sdr(est, ref), want, 1e-9, "si_sdr matches the direct formula");

  double resid_plain = 0.0;
  for (int i = 0; i < 16; ++i) resid_plain += (est[i] - ref[i]) * (est[i] - ref[i]);
  check_close(metric_snr(est, ref), 10.0 * std::log10(ss / resid_plain), 1e-9,
              "snr matches the direct formula");

  // scale invariance to 1e-9
  for (double a : {0.01, 0.5, 7.0, 1234.5}) {
    std::vector<double> scaled = est;
    for (double& v : scaled) v *= a;
    check_close(metric_si_sdr(scaled, ref), metric_si_sdr(est, ref), 1e-9,
                "si_sdr scale invariance");
  }

  check_throws([] { metric_snr({1.0}, {0.0}); }, "zero reference rejected");
}

void test_assign_targets() {
  std::vector<std::pair<std::string, std::vector<double>>> sources = {
      {"A", {1.0, 2.0}}, {"B", {3.0, 4.0}}};
  auto out = assign_targets({"B", "A"}, sources);
  check(out[0] == std::vector<double>({3.0, 4.0}) && out[1] == std::vector<double>({1.0, 2.0}),
        "ids [B,A] reorder the sources");
  auto ident = assign_targets({"A", "B"}, sources);
  check(ident[0] == sources[0].second && ident[1] == sources[1].second,
        "identity order keeps the sources");
  // applying the inverse order restores the original
  std::vector<std::pair<std::string, std::vector<double>>> swapped = {{"B", out[0]},
                                                                      {"A", out[1]}};
  auto back = assign_targets({"A", "B"}, swapped);
  check(back[0] == sources[0].second && back[1] == sources[1].second,
        "inverse order restores the original arrangement");
  check_throws([&] { assign_targets({"A", "C"}, sources); }, "missing id rejected");

  // visual-order loss consistency: swapping streams and sources together
  // leaves the loss unchanged
  Rng rng(64);
  std::vector<std::vector<double>> est(2), tgt(2);
  for (auto& e : est) {
    e.resize(32);
    for (double& v : e) v = rng.uniform(-1.0, 1.0);
  }
  for (auto& t : tgt) {
    t.resize(32);
    for (double& v : t) v = rng.uniform(-1.0, 1.0);
  }
  const double direct = loss_sisdr(est, tgt, nullptr);
  std::vector<std::vector<double>> est_sw = {est[1], est[0]};
  std::vector<std::vector<double>> tgt_sw = {tgt[1], tgt[0]};
  check_close(loss_sisdr(est_sw, tgt_sw, nullptr), direct, 1e-12,
              "swapping streams and sources together preserves the loss");
}

void test_report() {
  MetricReport rep;
  rep.utterances = {{"a", 10.0, 5.0, 8.0}, {"b", 14.0, 7.0, 12.0}, {"c", 12.0, 6.0, 10.0}};
  rep.finalize();
  check_close(rep.mean_si_sdr, 12.0, 1e-12, "aggregate mean si_sdr");
  check_close(rep.mean_si_sdr_i, 6.0, 1e-12, "aggregate mean si_sdr_i");
  // 95% CI half-width with sample std 2 over 3 items
  check_close(rep.ci_si_sdr, 1.96 * 2.0 / std::sqrt(3.0), 1e-9, "normal-approximation CI");
  const std::string jsonl = rep.to_jsonl();
  check(jsonl.find("\"aggregate\":true") != std::string::npos, "report ends with an aggregate");
  check(jsonl.find("\"id\":\"a\"") != std::string::npos, "report has per-utterance lines");
}

}  // namespace

int main() {
  test_loss_mag();
  test_loss_sisdr();
  test_metrics();
  test_assign_targets();
  test_report();
  return testutil::summary("test_loss");
}
