#include "avcn/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace avcn {

void Fusion::init(int hidden, int c, Rng& rng) {
  h = hidden;
  speakers = c;
  linear.init((c + 1) * hidden, hidden, rng);
}

void Fusion::collect(ParamList& out, const std::string& prefix) {
  linear.collect(out, prefix + ".linear");
}

Tensor Fusion::forward(const Tensor& audio, const Tensor& visual, const Ctx& ctx) {
  const int m = audio.dim(0), f = audio.dim(2);
  if (visual.dim(0) != m || visual.dim(2) != f)
    throw std::invalid_argument("fusion: audio/visual frame or bin mismatch");
  if (audio.dim(1) != h || visual.dim(1) != speakers * h)
    throw std::invalid_argument("fusion: channel count does not match configured speakers");

  Tensor cat({m, (speakers + 1) * h, f});
  for (int mm = 0; mm < m; ++mm) {
    std::copy_n(&audio.at(mm, 0, 0), static_cast<size_t>(h) * f, &cat.at(mm, 0, 0));
    std::copy_n(&visual.at(mm, 0, 0), static_cast<size_t>(speakers) * h * f, &cat.at(mm, h, 0));
  }
  return linear.forward(cat, ctx);
}

std::pair<Tensor, Tensor> Fusion::backward(const Tensor& gy) {
  Tensor d_cat = linear.backward(gy);
  const int m = d_cat.dim(0), f = d_cat.dim(2);
  Tensor d_audio({m, h, f});
  Tensor d_visual({m, speakers * h, f});
  for (int mm = 0; mm < m; ++mm) {
    std::copy_n(&d_cat.at(mm, 0, 0), static_cast<size_t>(h) * f, &d_audio.at(mm, 0, 0));
    std::copy_n(&d_cat.at(mm, h, 0), static_cast<size_t>(speakers) * h * f, &d_visual.at(mm, 0, 0));
  }
  return {std::move(d_audio), std::move(d_visual)};
}

void PositionalTable::build(int max_frames, int h, int f) {
  l_max = max_frames;
  d = h * f;
}

void PositionalTable::fill_row(int r, double* out) const {
  for (int i = 0; 2 * i < d; ++i) {
    const double angle = r / std::pow(10000.0, 2.0 * i / d);
    out[2 * i] = std::sin(angle);
    if (2 * i + 1 < d) out[2 * i + 1] = std::cos(angle);
  }
}

std::vector<double> PositionalTable::row_values(int r) const {
  std::vector<double> out(static_cast<size_t>(d));
  fill_row(r, out.data());
  return out;
}

PeSlice rcpe_select(const PositionalTable& table, int length, PeMode mode, Rng* rng) {
  if (length < 1 || length > table.l_max)
    throw std::invalid_argument("rcpe: sequence length exceeds the positional table");
  PeSlice slice;
  slice.table = &table;
  slice.length = length;
  if (mode == PeMode::train) {
    if (rng == nullptr) throw std::invalid_argument("rcpe: train mode needs an rng");
    slice.offset = rng->uniform_int(0, table.l_max - length);
  } else {
    slice.offset = 0;
  }
  return slice;
}

Tensor add_pe(const Tensor& x, const PeSlice& slice) {
  const int m = x.dim(0), h = x.dim(1), f = x.dim(2);
  if (m != slice.length) throw std::invalid_argument("add_pe: slice length mismatch");
  if (h * f != slice.table->d) throw std::invalid_argument("add_pe: feature width mismatch");
  Tensor y = x;
  std::vector<double> pe(static_cast<size_t>(h) * f);
  for (int mm = 0; mm < m; ++mm) {
    slice.table->fill_row(slice.offset + mm, pe.data());
    double* yrow = &y.at(mm, 0, 0);
    for (int i = 0; i < h * f; ++i) yrow[i] += pe[i];
  }
  return y;
}

}  // namespace avcn
