#include "avcn/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace avcn {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}
uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void wr_u32(std::ofstream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ofstream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);

  uint16_t fmt_code = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t p = 12;
  while (p + 8 <= buf.size()) {
    const uint32_t chunk_len = rd_u32(buf.data() + p + 4);
    const unsigned char* id = buf.data() + p;
    const size_t body = p + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > buf.size()) throw std::runtime_error("wav: truncated fmt chunk");
      fmt_code = rd_u16(buf.data() + body);
      channels = rd_u16(buf.data() + body + 2);
      sample_rate = rd_u32(buf.data() + body + 4);
      bits = rd_u16(buf.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
    }
    p = body + chunk_len + (chunk_len & 1);
  }
  if (data_off == 0) throw std::runtime_error("wav: missing data chunk: " + path);
  if (data_off + data_len > buf.size()) throw std::runtime_error("wav: truncated data chunk: " + path);
  if (channels != 1) throw std::runtime_error("wav: only mono supported: " + path);

  Waveform wave;
  wave.sample_rate = static_cast<int>(sample_rate);
  if (fmt_code == 1 && bits == 16) {
    const size_t n = data_len / 2;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t s;
      std::memcpy(&s, buf.data() + data_off + 2 * i, 2);
      wave.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (fmt_code == 3 && bits == 32) {
    const size_t n = data_len / 4;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      float s;
      std::memcpy(&s, buf.data() + data_off + 4 * i, 4);
      wave.samples[i] = static_cast<double>(s);
    }
  } else {
    throw std::runtime_error("wav: unsupported format (need pcm16 or float32): " + path);
  }
  return wave;
}

void write_wav(const std::string& path, const Waveform& wave, WavFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("wav: cannot write " + path);

  const uint32_t n = static_cast<uint32_t>(wave.samples.size());
  const uint16_t bytes_per = format == WavFormat::pcm16 ? 2 : 4;
  const uint32_t data_len = n * bytes_per;

  os.write("RIFF", 4);
  wr_u32(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, format == WavFormat::pcm16 ? 1 : 3);
  wr_u16(os, 1);
  wr_u32(os, static_cast<uint32_t>(wave.sample_rate));
  wr_u32(os, static_cast<uint32_t>(wave.sample_rate) * bytes_per);
  wr_u16(os, bytes_per);
  wr_u16(os, static_cast<uint16_t>(bytes_per * 8));
  os.write("data", 4);
  wr_u32(os, data_len);

  if (format == WavFormat::pcm16) {
    for (double s : wave.samples) {
      const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
      const int16_t q = static_cast<int16_t>(std::lrint(clipped * 32768.0));
      os.write(reinterpret_cast<const char*>(&q), 2);
    }
  } else {
    for (double s : wave.samples) {
      const float f = static_cast<float>(s);
      os.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!os) throw std::runtime_error("wav: write failed: " + path);
}

}  // namespace avcn
