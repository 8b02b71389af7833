#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "p808/campaign.hpp"

namespace p808 {

// One manifest line. `generate`/`source` are only meaningful to `prepare`:
//   bw:<cutoff_hz>          bandwidth-test clip from `source` speech
//   comparison:high|low     45 dB / 35 dB member of the comparison pair
//   trapping                noise + TTS prompt for `expected`
//   tts:<catalog key>       spoken instruction rendered from the catalog
struct ManifestRow {
  Clip clip;
  std::string generate;
  std::string source;
};

// Tab-separated, first line is the header. Required columns:
//   id role path language expected
// Optional: gold_tolerance reference_score asset expected_text model
//           utterance generate source. Empty cells and "-" mean absent.
std::vector<ManifestRow> parse_manifest(std::string_view text);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
std::string format_manifest(const std::vector<ManifestRow>& rows);

ClipSets split_by_role(const std::vector<ManifestRow>& rows);

}  // namespace p808
