#include "avcn/aveb.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace avcn {

namespace {

uint32_t rd_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("aveb: truncated header");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void wr_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

VisualEmbeddingSequence load_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("aveb: cannot open " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AVEB", 4) != 0)
    throw std::runtime_error("aveb: bad magic in " + path);
  const uint32_t version = rd_u32(is);
  if (version != 1) throw std::runtime_error("aveb: unsupported version in " + path);
  const uint32_t mv = rd_u32(is);
  const uint32_t fv = rd_u32(is);
  const uint32_t fps_milli = rd_u32(is);
  if (mv < 1 || fv < 1) throw std::runtime_error("aveb: empty dimensions in " + path);

  VisualEmbeddingSequence emb;
  emb.frames = static_cast<int>(mv);
  emb.dim = static_cast<int>(fv);
  emb.fps = fps_milli / 1000.0;
  emb.data.resize(static_cast<size_t>(mv) * fv);

  std::vector<float> buf(emb.data.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (is.gcount() != static_cast<std::streamsize>(buf.size() * 4))
    throw std::runtime_error("aveb: truncated payload in " + path);
  for (size_t i = 0; i < buf.size(); ++i) {
    emb.data[i] = static_cast<double>(buf[i]);
    if (!std::isfinite(emb.data[i]))
      throw std::runtime_error("aveb: non-finite value in " + path);
  }
  return emb;
}

void save_embeddings(const std::string& path, const VisualEmbeddingSequence& emb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("aveb: cannot write " + path);
  os.write("AVEB", 4);
  wr_u32(os, 1);
  wr_u32(os, static_cast<uint32_t>(emb.frames));
  wr_u32(os, static_cast<uint32_t>(emb.dim));
  wr_u32(os, static_cast<uint32_t>(std::lround(emb.fps * 1000.0)));
  for (double v : emb.data) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!os) throw std::runtime_error("aveb: write failed: " + path);
}

}  // namespace avcn
