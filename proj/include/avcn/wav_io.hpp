// Mono RIFF WAV reader/writer, 16-bit PCM and 32-bit float, little-endian.
#pragma once

#include <string>

#include "avcn/dsp.hpp"

namespace avcn {

enum class WavFormat { pcm16, float32 };

Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave, WavFormat format = WavFormat::float32);

}  // namespace avcn
