#include "p808/prepare.hpp"

#include "p808/audio.hpp"
#include "p808/error.hpp"
#include "p808/random.hpp"

namespace p808 {

namespace fs = std::filesystem;

namespace {

fs::path under(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

const StringCatalog& need_catalog(const PrepareOptions& o, const ManifestRow& r) {
  if (!o.catalog || !o.tts) {
    throw ConfigurationError("clip " + r.clip.id +
                             " needs a string catalog and a TTS client");
  }
  if (o.catalog->language() != r.clip.language) {
    throw ConfigurationError("clip " + r.clip.id + " is in " + r.clip.language +
                             " but the catalog is " + o.catalog->language());
  }
  return *o.catalog;
}

}  // namespace

std::vector<ManifestRow> prepare_clips(const std::vector<ManifestRow>& rows,
                                       const PrepareOptions& options) {
  std::vector<ManifestRow> out;
  for (const auto& row : rows) {
    ManifestRow r = row;
    if (r.generate.empty()) {
      out.push_back(std::move(r));
      continue;
    }
    if (r.clip.path.empty()) throw InvalidArgument("clip " + r.clip.id + " has no path");
    const std::uint64_t seed = combine_seed(options.seed, r.clip.id);
    const std::string& g = r.generate;
    AudioBuffer audio;
    auto source = [&] {
      if (r.source.empty()) {
        throw InvalidArgument("clip " + r.clip.id + " needs a source recording");
      }
      return read_wav(under(options.source_dir, r.source));
    };

    if (g.rfind("bw:", 0) == 0) {
      double cutoff = 0.0;
      try {
        cutoff = std::stod(g.substr(3));
      } catch (const std::exception&) {
        throw InvalidArgument("clip " + r.clip.id + ": bad cutoff in \"" + g + "\"");
      }
      audio = make_bw_test_clip(source(), cutoff, options.bandwidth.snr_db, seed,
                                options.bandwidth);
      if (r.clip.expected_text.empty()) r.clip.expected_text = g.substr(3);
    } else if (g == "comparison:high" || g == "comparison:low") {
      // Both members of a pair share the source-derived seed.
      const auto pair = make_comparison_pair(
          source(), combine_seed(options.seed, "comparison:" + r.source));
      audio = g == "comparison:high" ? pair.first : pair.second;
    } else if (g == "trapping") {
      const StringCatalog& cat = need_catalog(options, r);
      if (!r.clip.expected_answer) {
        throw InvalidArgument("trapping clip " + r.clip.id + " has no expected answer");
      }
      const int label = *r.clip.expected_answer;
      std::string prompt;
      for (const auto& [l, text] : build_trapping_prompts(cat)) {
        if (l.value == label) prompt = text;
      }
      if (prompt.empty()) {
        throw InvalidArgument("no trapping prompt for label " + std::to_string(label));
      }
      const AudioBuffer speech =
          synthesize(*options.tts, {prompt, cat.language(), options.voice});
      audio = make_trapping_clip(make_trapping_noise_segment(seed), speech, label).audio;
      if (r.clip.expected_text.empty()) r.clip.expected_text = prompt;
    } else if (g.rfind("tts:", 0) == 0) {
      const StringCatalog& cat = need_catalog(options, r);
      audio = synthesize(*options.tts,
                         make_tts_request(cat, g.substr(4), {}, options.voice));
    } else {
      throw InvalidArgument("clip " + r.clip.id + ": unknown generate directive \"" +
                            g + "\"");
    }

    const fs::path target = under(options.out_dir, r.clip.path);
    fs::create_directories(target.parent_path());
    write_wav(target, audio, options.format);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace p808
