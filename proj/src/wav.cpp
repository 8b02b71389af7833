#include "p808/wav.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "p808/error.hpp"

namespace p808 {

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t offset) {
  if (offset + sizeof(T) > bytes.size()) throw ParseError("truncated WAV");
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

std::string encode_wav(const AudioBuffer& audio, WavFormat format) {
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint16_t block_align = bits / 8;
  const auto data_bytes =
      static_cast<std::uint32_t>(audio.size() * block_align);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate) *
                              block_align);
  put<std::uint16_t>(out, block_align);
  put<std::uint16_t>(out, bits);
  out += "data";
  put<std::uint32_t>(out, data_bytes);
  for (double s : audio.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    if (format == WavFormat::pcm16) {
      put<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(c * 32767.0)));
    } else {
      put<float>(out, static_cast<float>(c));
    }
  }
  return out;
}

AudioBuffer decode_wav(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" ||
      bytes.substr(8, 4) != "WAVE") {
    throw ParseError("not a RIFF/WAVE stream");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto id = bytes.substr(pos, 4);
    const auto size = get<std::uint32_t>(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = get<std::uint16_t>(bytes, body);
      channels = get<std::uint16_t>(bytes, body + 2);
      rate = get<std::uint32_t>(bytes, body + 4);
      bits = get<std::uint16_t>(bytes, body + 14);
      if (format == kFormatExtensible && size >= 26) {
        format = get<std::uint16_t>(bytes, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("WAV data chunk before fmt chunk");
      if (channels != 1) {
        throw InvalidArgument("only mono WAV is supported, got " +
                              std::to_string(channels) + " channels");
      }
      const std::size_t len =
          std::min<std::size_t>(size, bytes.size() - body);
      AudioBuffer out;
      out.sample_rate = static_cast<int>(rate);
      if (format == kFormatPcm && bits == 16) {
        out.samples.resize(len / 2);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
          out.samples[i] = get<std::int16_t>(bytes, body + 2 * i) / 32768.0;
        }
      } else if (format == kFormatFloat && bits == 32) {
        out.samples.resize(len / 4);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
          out.samples[i] = get<float>(bytes, body + 4 * i);
        }
      } else {
        throw ParseError("unsupported WAV subformat (format " +
                         std::to_string(format) + ", " + std::to_string(bits) +
                         " bits)");
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw ParseError("WAV stream has no data chunk");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("rename to " + path.string() + ": " + ec.message());
  }
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  return decode_wav(read_file(path));
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               WavFormat format) {
  write_file_atomic(path, encode_wav(audio, format));
}

}  // namespace p808
