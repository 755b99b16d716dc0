// Early audiovisual fusion and random-chunk positional encoding.
#pragma once

#include "avcn/ops.hpp"

namespace avcn {

// concatenates audio (M,H,F) with stacked visual (M,C*H,F) along channels and
// projects back to H
struct Fusion {
  int h = 0, speakers = 0;
  LinearChan linear;
  Tensor cat_cache;

  void init(int hidden, int c, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
  Tensor forward(const Tensor& audio, const Tensor& visual, const Ctx& ctx);
  // returns (d_audio, d_visual_stacked)
  std::pair<Tensor, Tensor> backward(const Tensor& gy);
};

// Sinusoidal table, rows indexed 0-based; row r holds the encoding of
// position m = r. The 1-based tau of the chunk rule maps to offset = tau - 1.
// Rows are generated on demand (at full size the dense Lmax x D matrix would
// be hundreds of megabytes); the values are a fixed pure function of (r, D).
struct PositionalTable {
  int l_max = 0;
  int d = 0;  // F * H

  void build(int max_frames, int h, int f);
  void fill_row(int r, double* out) const;
  std::vector<double> row_values(int r) const;
};

enum class PeMode { train, eval };

struct PeSlice {
  const PositionalTable* table = nullptr;
  int offset = 0;  // 0-based start row
  int length = 0;
};

// train mode draws the chunk start uniformly; eval mode always takes the
// leading rows. Throws when L exceeds the table.
PeSlice rcpe_select(const PositionalTable& table, int length, PeMode mode, Rng* rng);

// x[m,h,f] += slice[m, h*F + f]
Tensor add_pe(const Tensor& x, const PeSlice& slice);
// gradient of add_pe w.r.t. x is the identity

}  // namespace avcn
