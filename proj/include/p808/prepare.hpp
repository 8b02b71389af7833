#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "p808/localization.hpp"
#include "p808/manifest.hpp"
#include "p808/tts.hpp"
#include "p808/wav.hpp"

namespace p808 {

struct PrepareOptions {
  // Relative `source` and `path` entries resolve against these.
  std::filesystem::path source_dir = ".";
  std::filesystem::path out_dir = ".";
  // Needed for trapping and tts rows.
  std::optional<StringCatalog> catalog;
  std::shared_ptr<TtsClient> tts;
  std::string voice;
  std::uint64_t seed = 0;
  WavFormat format = WavFormat::pcm16;
  BandwidthTestOptions bandwidth;
};

// Generates the audio of every row that has a `generate` directive, writing
// it to out_dir/<path>. Returns the manifest with generated rows' expected
// values filled in; rows without a directive pass through unchanged.
std::vector<ManifestRow> prepare_clips(const std::vector<ManifestRow>& rows,
                                       const PrepareOptions& options);

}  // namespace p808
