#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace p808 {

inline constexpr int kStimulusRate = 48000;
inline constexpr double kPeakCeiling = 0.99;

// Mono audio. Samples are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kStimulusRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  double peak() const;

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

// Pass band [low_cutoff, high_cutoff] in Hz; high_cutoff defaults to Nyquist.
struct BandSpec {
  double low_cutoff = 0.0;
  std::optional<double> high_cutoff;

  double high_for(int sample_rate) const {
    return high_cutoff.value_or(sample_rate / 2.0);
  }
};

// Seeded white Gaussian noise, peak-scaled to 0.5.
AudioBuffer generate_wgn(double duration, int sample_rate, std::uint64_t seed);

// Frequency-domain brickwall: DFT bins strictly outside the band are zeroed.
AudioBuffer bandlimit(const AudioBuffer& noise, const BandSpec& band);

// 20*log10(rms). Returns -infinity for an all-zero buffer.
double rms_dbfs(const AudioBuffer& a);
double mean_power(std::span<const double> samples);

// A mixture together with the two parts it was summed from, after the common
// peak rescale. snr is measured between `speech` and `noise`.
struct Mixture {
  AudioBuffer mixture;
  AudioBuffer speech;
  AudioBuffer noise;
};

Mixture mix_components(const AudioBuffer& speech, const AudioBuffer& noise,
                       double snr_db);
AudioBuffer mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                       double snr_db);

// Re-measures 10*log10(P_speech / P_noise) from the two parts.
double measured_snr(const Mixture& m);

struct BandwidthTestOptions {
  std::vector<double> allowed_cutoffs{4000.0, 9000.0, 16000.0};
  double snr_db = 20.0;
};

Mixture make_bw_test_mixture(const AudioBuffer& speech, double cutoff,
                             double snr_db, std::uint64_t seed,
                             const BandwidthTestOptions& options = {});
AudioBuffer make_bw_test_clip(const AudioBuffer& speech, double cutoff,
                              double snr_db, std::uint64_t seed,
                              const BandwidthTestOptions& options = {});

inline constexpr double kComparisonHighSnr = 45.0;
inline constexpr double kComparisonLowSnr = 35.0;

// (45 dB mixture, 35 dB mixture) with independently seeded noise.
std::pair<AudioBuffer, AudioBuffer> make_comparison_pair(
    const AudioBuffer& speech, std::uint64_t seed);

enum class ClipRole { rating, gold, trapping, training, setup };

// A synthesized stimulus plus the answer a worker is expected to give.
struct StimulusClip {
  AudioBuffer audio;
  ClipRole role = ClipRole::rating;
  std::optional<int> expected_answer;
};

inline constexpr double kTrappingNoiseSeconds = 0.5;
inline constexpr double kTrappingNoiseDbfs = -20.0;
inline constexpr double kTrappingGapSeconds = 0.3;

// 0.5 s of WGN at -20 dBFS RMS, the lead-in of a trapping clip.
AudioBuffer make_trapping_noise_segment(std::uint64_t seed,
                                        int sample_rate = kStimulusRate);

// noise ++ 0.3 s silence ++ spoken instruction.
StimulusClip make_trapping_clip(const AudioBuffer& noise_segment,
                                const AudioBuffer& instruction,
                                int requested_label);

// Scales the buffer so that its peak is at most `ceiling`.
void limit_peak(AudioBuffer& a, double ceiling = kPeakCeiling);

}  // namespace p808
