#include "avcn/loss.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace avcn {

namespace {

constexpr double kResidualFloor = 1e-10;
constexpr double kDbCap = 100.0;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// one SI-SDR-style term with the standard scaled-target projection
double si_sdr_term(const std::vector<double>& est, const std::vector<double>& ref,
                   bool scaled_target_energy) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_sdr: length mismatch");
  const double ss = dot(ref, ref);
  if (ss <= 0.0) throw std::invalid_argument("si_sdr: zero reference");
  const double alpha = dot(ref, est) / ss;
  double resid = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double r = est[i] - alpha * ref[i];
    resid += r * r;
  }
  const double num = scaled_target_energy ? alpha * alpha * ss : ss;
  const double db = 10.0 * std::log10(std::max(num, kResidualFloor) /
                                      std::max(resid, kResidualFloor));
  return std::clamp(db, -kDbCap, kDbCap);
}

}  // namespace

double loss_mag(const std::vector<ComplexSpectrogram>& est,
                const std::vector<ComplexSpectrogram>& tgt,
                std::vector<ComplexSpectrogram>* grad) {
  if (est.size() != tgt.size()) throw std::invalid_argument("loss_mag: speaker count mismatch");
  if (grad != nullptr) grad->assign(est.size(), ComplexSpectrogram());

  double total = 0.0;
  for (size_t c = 0; c < est.size(); ++c) {
    const ComplexSpectrogram& e = est[c];
    const ComplexSpectrogram& t = tgt[c];
    if (e.frames != t.frames || e.bins != t.bins)
      throw std::invalid_argument("loss_mag: shape mismatch");

    double den = 0.0;
    for (size_t i = 0; i < t.re.size(); ++i) den += std::hypot(t.re[i], t.im[i]);
    den = std::max(den, 1e-8);

    double num = 0.0;
    if (grad != nullptr) (*grad)[c] = ComplexSpectrogram(e.frames, e.bins);
    for (size_t i = 0; i < e.re.size(); ++i) {
      const double me = std::hypot(e.re[i], e.im[i]);
      const double mt = std::hypot(t.re[i], t.im[i]);
      num += std::abs(me - mt);
      if (grad != nullptr && me > 1e-300) {
        const double sign = me > mt ? 1.0 : (me < mt ? -1.0 : 0.0);
        (*grad)[c].re[i] = sign * e.re[i] / (me * den);
        (*grad)[c].im[i] = sign * e.im[i] / (me * den);
      }
    }
    total += num / den;
  }
  return total;
}

double loss_sisdr(const std::vector<std::vector<double>>& est,
                  const std::vector<std::vector<double>>& tgt,
                  std::vector<std::vector<double>>* grad) {
  if (est.size() != tgt.size()) throw std::invalid_argument("loss_sisdr: speaker count mismatch");
  if (grad != nullptr) grad->assign(est.size(), {});

  double total = 0.0;
  for (size_t c = 0; c < est.size(); ++c) {
    const std::vector<double>& e = est[c];
    const std::vector<double>& s = tgt[c];
    if (e.size() != s.size()) throw std::invalid_argument("loss_sisdr: length mismatch");
    const double ss = dot(s, s);
    if (ss <= 0.0) throw std::invalid_argument("loss_sisdr: zero target");
    const double alpha = dot(s, e) / ss;

    std::vector<double> resid(e.size());
    double rr = 0.0;
    for (size_t i = 0; i < e.size(); ++i) {
      resid[i] = e[i] - alpha * s[i];
      rr += resid[i] * resid[i];
    }
    const double db = 10.0 * std::log10(ss / std::max(rr, kResidualFloor));
    const double term = -std::clamp(db, -kDbCap, kDbCap);
    total += term;

    if (grad != nullptr) {
      (*grad)[c].assign(e.size(), 0.0);
      const bool active = rr > kResidualFloor && std::abs(db) < kDbCap;
      if (active) {
        // d(-10 log10(ss/rr))/de = (10/ln10) * (1/rr) * d(rr)/de, and
        // d(rr)/de_i = 2 resid_i (the resid-target cross term vanishes)
        const double k = 10.0 / std::log(10.0) / rr;
        for (size_t i = 0; i < e.size(); ++i) (*grad)[c][i] = 2.0 * k * resid[i];
      }
    }
  }
  return total;
}

double metric_si_sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  return si_sdr_term(est, ref, /*scaled_target_energy=*/true);
}

double metric_si_sdr_i(const std::vector<double>& est, const std::vector<double>& mix,
                       const std::vector<double>& ref) {
  return metric_si_sdr(est, ref) - metric_si_sdr(mix, ref);
}

double metric_snr(const std::vector<double>& est, const std::vector<double>& ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("snr: length mismatch");
  const double ss = dot(ref, ref);
  if (ss <= 0.0) throw std::invalid_argument("snr: zero reference");
  double resid = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double r = est[i] - ref[i];
    resid += r * r;
  }
  const double db =
      10.0 * std::log10(std::max(ss, kResidualFloor) / std::max(resid, kResidualFloor));
  return std::clamp(db, -kDbCap, kDbCap);
}

std::vector<std::vector<double>> assign_targets(
    const std::vector<std::string>& visual_order,
    const std::vector<std::pair<std::string, std::vector<double>>>& sources) {
  if (visual_order.size() != sources.size())
    throw std::invalid_argument("assign_targets: id/source count mismatch");
  std::map<std::string, const std::vector<double>*> by_id;
  for (const auto& [id, src] : sources) {
    if (!by_id.emplace(id, &src).second)
      throw std::invalid_argument("assign_targets: duplicate source id " + id);
  }
  std::vector<std::vector<double>> out;
  out.reserve(visual_order.size());
  for (const std::string& id : visual_order) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("assign_targets: missing source id " + id);
    out.push_back(*it->second);
  }
  return out;
}

void MetricReport::finalize() {
  const size_t n = utterances.size();
  if (n == 0) return;
  auto stats = [n](auto getter, const std::vector<UtteranceMetrics>& u, double& mean, double& ci) {
    double s = 0.0;
    for (const auto& m : u) s += getter(m);
    mean = s / static_cast<double>(n);
    double var = 0.0;
    for (const auto& m : u) var += (getter(m) - mean) * (getter(m) - mean);
    var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
    ci = 1.96 * std::sqrt(var / static_cast<double>(n));
  };
  stats([](const UtteranceMetrics& m) { return m.si_sdr; }, utterances, mean_si_sdr, ci_si_sdr);
  stats([](const UtteranceMetrics& m) { return m.si_sdr_i; }, utterances, mean_si_sdr_i,
        ci_si_sdr_i);
  stats([](const UtteranceMetrics& m) { return m.snr; }, utterances, mean_snr, ci_snr);
}

std::string MetricReport::to_jsonl() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  for (const auto& u : utterances)
    os << "{\"id\":\"" << u.id << "\",\"si_sdr\":" << u.si_sdr << ",\"si_sdr_i\":" << u.si_sdr_i
       << ",\"snr\":" << u.snr << "}\n";
  os << "{\"aggregate\":true,\"n\":" << utterances.size() << ",\"mean_si_sdr\":" << mean_si_sdr
     << ",\"ci95_si_sdr\":" << ci_si_sdr << ",\"mean_si_sdr_i\":" << mean_si_sdr_i
     << ",\"ci95_si_sdr_i\":" << ci_si_sdr_i << ",\"mean_snr\":" << mean_snr
     << ",\"ci95_snr\":" << ci_snr << "}\n";
  return os.str();
}

}  // namespace avcn
