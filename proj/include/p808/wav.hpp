#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "p808/audio.hpp"

namespace p808 {

enum class WavFormat { pcm16, float32 };

// Mono RIFF/WAVE only. Multi-channel files are rejected.
std::string encode_wav(const AudioBuffer& audio,
                       WavFormat format = WavFormat::pcm16);
AudioBuffer decode_wav(std::string_view bytes);

AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               WavFormat format = WavFormat::pcm16);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace p808
