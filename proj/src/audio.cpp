#include "p808/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>

#include "p808/error.hpp"
#include "p808/random.hpp"

namespace p808 {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void require_same_rate(const AudioBuffer& a, const AudioBuffer& b) {
  if (a.sample_rate != b.sample_rate) {
    throw InvalidArgument("sample rate mismatch: " +
                          std::to_string(a.sample_rate) + " vs " +
                          std::to_string(b.sample_rate));
  }
}

void require_stimulus_rate(const AudioBuffer& a) {
  if (a.sample_rate != kStimulusRate) {
    throw InvalidArgument("stimuli must be 48 kHz, got " +
                          std::to_string(a.sample_rate));
  }
}

void scale(AudioBuffer& a, double g) {
  for (double& s : a.samples) s *= g;
}

}  // namespace

double AudioBuffer::peak() const {
  double p = 0.0;
  for (double s : samples) p = std::max(p, std::abs(s));
  return p;
}

void limit_peak(AudioBuffer& a, double ceiling) {
  const double p = a.peak();
  if (p > ceiling) scale(a, ceiling / p);
}

AudioBuffer generate_wgn(double duration, int sample_rate, std::uint64_t seed) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw InvalidArgument("noise duration must be positive");
  }
  if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  if (n == 0) throw InvalidArgument("noise duration rounds to zero samples");

  Rng rng(seed);
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(n);
  for (double& s : out.samples) s = rng.normal();
  const double p = out.peak();
  if (p > 0.0) scale(out, 0.5 / p);
  return out;
}

AudioBuffer bandlimit(const AudioBuffer& noise, const BandSpec& band) {
  const double nyquist = noise.sample_rate / 2.0;
  const double high = band.high_for(noise.sample_rate);
  if (noise.sample_rate <= 0 || !(band.low_cutoff >= 0.0) ||
      !(band.low_cutoff < high) || !(high <= nyquist)) {
    throw InvalidArgument("band [" + std::to_string(band.low_cutoff) + ", " +
                          std::to_string(high) + "] invalid for rate " +
                          std::to_string(noise.sample_rate));
  }
  const int n = static_cast<int>(noise.size());
  if (n == 0) return noise;

  const int bins = n / 2 + 1;
  std::vector<double> time(noise.samples);
  std::vector<std::complex<double>> spectrum(bins);
  auto* spec = reinterpret_cast<fftw_complex*>(spectrum.data());

  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_1d(n, time.data(), spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(n, spec, time.data(), FFTW_ESTIMATE);
  }
  fftw_execute(forward);

  // Only the non-negative half is stored; c2r implies the conjugate half, so
  // zeroing here zeroes both mirrors.
  const double bin_hz = static_cast<double>(noise.sample_rate) / n;
  for (int k = 0; k < bins; ++k) {
    const double f = k * bin_hz;
    if (f < band.low_cutoff || f > high) spectrum[k] = 0.0;
  }
  fftw_execute(inverse);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }

  AudioBuffer out;
  out.sample_rate = noise.sample_rate;
  out.samples = std::move(time);
  scale(out, 1.0 / n);
  return out;
}

double mean_power(std::span<const double> samples) {
  if (samples.empty()) throw InvalidArgument("empty buffer");
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

double rms_dbfs(const AudioBuffer& a) {
  const double p = mean_power(a.samples);
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p);
}

Mixture mix_components(const AudioBuffer& speech, const AudioBuffer& noise,
                       double snr_db) {
  require_same_rate(speech, noise);
  if (speech.empty()) throw InvalidArgument("empty speech buffer");
  if (noise.size() < speech.size()) {
    throw InvalidArgument("noise shorter than speech");
  }
  if (!std::isfinite(snr_db)) throw InvalidArgument("snr must be finite");

  const std::span<const double> noise_part(noise.samples.data(), speech.size());
  const double ps = mean_power(speech.samples);
  const double pn = mean_power(noise_part);
  if (ps == 0.0) throw DegenerateSignal("speech has zero RMS");
  if (pn == 0.0) throw DegenerateSignal("noise has zero RMS");

  const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  Mixture m;
  m.speech = speech;
  m.noise.sample_rate = speech.sample_rate;
  m.noise.samples.assign(noise_part.begin(), noise_part.end());
  scale(m.noise, gain);
  m.mixture.sample_rate = speech.sample_rate;
  m.mixture.samples.resize(speech.size());
  for (std::size_t i = 0; i < speech.size(); ++i) {
    m.mixture.samples[i] = m.speech.samples[i] + m.noise.samples[i];
  }
  const double p = m.mixture.peak();
  if (p > kPeakCeiling) {
    const double g = kPeakCeiling / p;
    scale(m.mixture, g);
    scale(m.speech, g);
    scale(m.noise, g);
  }
  return m;
}

AudioBuffer mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                       double snr_db) {
  return mix_components(speech, noise, snr_db).mixture;
}

double measured_snr(const Mixture& m) {
  return 10.0 * std::log10(mean_power(m.speech.samples) /
                           mean_power(m.noise.samples));
}

Mixture make_bw_test_mixture(const AudioBuffer& speech, double cutoff,
                             double snr_db, std::uint64_t seed,
                             const BandwidthTestOptions& options) {
  const auto& allowed = options.allowed_cutoffs;
  if (std::find(allowed.begin(), allowed.end(), cutoff) == allowed.end()) {
    throw InvalidArgument("cutoff " + std::to_string(cutoff) +
                          " Hz is not a configured bandwidth-test cutoff");
  }
  require_stimulus_rate(speech);
  if (speech.empty()) throw InvalidArgument("empty speech buffer");
  AudioBuffer noise = generate_wgn(speech.duration(), speech.sample_rate, seed);
  noise.samples.resize(speech.size());
  noise = bandlimit(noise, BandSpec{cutoff, std::nullopt});
  return mix_components(speech, noise, snr_db);
}

AudioBuffer make_bw_test_clip(const AudioBuffer& speech, double cutoff,
                              double snr_db, std::uint64_t seed,
                              const BandwidthTestOptions& options) {
  return make_bw_test_mixture(speech, cutoff, snr_db, seed, options).mixture;
}

std::pair<AudioBuffer, AudioBuffer> make_comparison_pair(
    const AudioBuffer& speech, std::uint64_t seed) {
  require_stimulus_rate(speech);
  if (speech.empty()) throw InvalidArgument("empty speech buffer");
  if (mean_power(speech.samples) == 0.0) {
    throw DegenerateSignal("speech has zero RMS");
  }
  const double d = speech.duration();
  const AudioBuffer noise_hi =
      generate_wgn(d, speech.sample_rate, combine_seed(seed, "comparison.45"));
  const AudioBuffer noise_lo =
      generate_wgn(d, speech.sample_rate, combine_seed(seed, "comparison.35"));
  return {mix_at_snr(speech, noise_hi, kComparisonHighSnr),
          mix_at_snr(speech, noise_lo, kComparisonLowSnr)};
}

AudioBuffer make_trapping_noise_segment(std::uint64_t seed, int sample_rate) {
  AudioBuffer noise = generate_wgn(kTrappingNoiseSeconds, sample_rate, seed);
  const double target = std::pow(10.0, kTrappingNoiseDbfs / 20.0);
  scale(noise, target / std::sqrt(mean_power(noise.samples)));
  limit_peak(noise);
  return noise;
}

StimulusClip make_trapping_clip(const AudioBuffer& noise_segment,
                                const AudioBuffer& instruction,
                                int requested_label) {
  if (requested_label < 1 || requested_label > 5) {
    throw InvalidArgument("requested label must be in 1..5, got " +
                          std::to_string(requested_label));
  }
  require_same_rate(noise_segment, instruction);
  const auto gap = static_cast<std::size_t>(
      std::llround(kTrappingGapSeconds * noise_segment.sample_rate));

  StimulusClip clip;
  clip.role = ClipRole::trapping;
  clip.expected_answer = requested_label;
  clip.audio.sample_rate = noise_segment.sample_rate;
  auto& s = clip.audio.samples;
  s.reserve(noise_segment.size() + gap + instruction.size());
  s.insert(s.end(), noise_segment.samples.begin(), noise_segment.samples.end());
  s.insert(s.end(), gap, 0.0);
  s.insert(s.end(), instruction.samples.begin(), instruction.samples.end());
  limit_peak(clip.audio);
  return clip;
}

}  // namespace p808
