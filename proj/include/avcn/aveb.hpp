// AVEB embedding container: per-frame face embedding matrices exchanged with
// the upstream visual feature extractor.
//
// Layout (little-endian): magic "AVEB", u32 version=1, u32 Mv, u32 Fv,
// u32 fps_milli, then Mv*Fv float32, row-major by frame.
#pragma once

#include <string>
#include <vector>

namespace avcn {

struct VisualEmbeddingSequence {
  int frames = 0;    // Mv
  int dim = 0;       // Fv
  double fps = 25.0;
  std::vector<double> data;  // frames x dim, row-major

  double& at(int t, int d) { return data[static_cast<size_t>(t) * dim + d]; }
  double at(int t, int d) const { return data[static_cast<size_t>(t) * dim + d]; }
};

VisualEmbeddingSequence load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const VisualEmbeddingSequence& emb);

}  // namespace avcn
