#include "drumloop/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>

#include "drumloop/errors.hpp"

namespace drumloop::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

// Kaiser-windowed sinc lowpass tabulated on a fine grid of the (input sample)
// offset, evaluated by linear interpolation.
class SincKernel {
 public:
  SincKernel(double cutoff, double half_width)
      : half_width_(half_width), table_(static_cast<std::size_t>(half_width * kOversample) + 2) {
    const double beta = 9.0;
    const double norm = std::cyl_bessel_i(0.0, beta);
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const double t = static_cast<double>(i) / kOversample;
      if (t >= half_width) {
        table_[i] = 0.0;
        continue;
      }
      const double x = 2.0 * cutoff * t;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double r = t / half_width;
      const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / norm;
      table_[i] = 2.0 * cutoff * sinc * window;
    }
  }

  double operator()(double offset) const {
    const double pos = std::abs(offset) * kOversample;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= table_.size()) return 0.0;
    const double frac = pos - static_cast<double>(i);
    return table_[i] + frac * (table_[i + 1] - table_[i]);
  }

  double half_width() const { return half_width_; }

 private:
  static constexpr int kOversample = 512;
  double half_width_;
  std::vector<double> table_;
};

}  // namespace

RawPcm read_wave(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw IoError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    std::size_t size = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    size = std::min(size, bytes.size() - body);
    if (id == "fmt ") {
      if (size < 16) throw IoError("truncated fmt chunk in " + path.string());
      format = read_u16(&bytes[body]);
      channels = read_u16(&bytes[body + 2]);
      rate = read_u32(&bytes[body + 4]);
      bits = read_u16(&bytes[body + 14]);
      if (format == kFormatExtensible) {
        if (size < 26) throw IoError("truncated extensible fmt chunk in " + path.string());
        format = read_u16(&bytes[body + 24]);
      }
    } else if (id == "data") {
      data = &bytes[body];
      data_size = size;
    }
    pos = body + size + (size & 1);
  }

  if (channels == 0 || rate == 0) throw IoError("missing fmt chunk in " + path.string());
  if (data == nullptr) throw IoError("missing data chunk in " + path.string());

  const bool supported = (format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24)) ||
                         (format == kFormatFloat && bits == 32);
  if (!supported) {
    throw IoError("unsupported wave encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bit) in " + path.string());
  }

  const std::size_t width = bits / 8;
  const std::size_t count = data_size / width;
  if (count < channels) throw IoError("zero-length audio in " + path.string());

  RawPcm pcm;
  pcm.channels = channels;
  pcm.sample_rate = static_cast<int>(rate);
  pcm.interleaved.resize(count - count % channels);
  for (std::size_t i = 0; i < pcm.interleaved.size(); ++i) {
    const unsigned char* p = data + i * width;
    float v = 0.0F;
    switch (bits) {
      case 8:
        v = (static_cast<float>(p[0]) - 128.0F) / 128.0F;
        break;
      case 16:
        v = static_cast<float>(static_cast<std::int16_t>(read_u16(p))) / 32768.0F;
        break;
      case 24: {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s -= 0x1000000;
        v = static_cast<float>(s) / 8388608.0F;
        break;
      }
      case 32:
        v = std::bit_cast<float>(read_u32(p));
        break;
    }
    pcm.interleaved[i] = v;
  }
  return pcm;
}

void write_wave(const std::filesystem::path& path, const AudioClip& clip, SampleFormat format) {
  std::uint16_t bits = 16;
  std::uint16_t tag = kFormatPcm;
  switch (format) {
    case SampleFormat::Int8: bits = 8; break;
    case SampleFormat::Int16: bits = 16; break;
    case SampleFormat::Int24: bits = 24; break;
    case SampleFormat::Float32:
      bits = 32;
      tag = kFormatFloat;
      break;
  }
  const std::uint32_t width = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * width);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * width);
  put_u16(out, static_cast<std::uint16_t>(width));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_size);

  for (float sample : clip.samples) {
    const double s = std::clamp(static_cast<double>(sample), -1.0, 1.0);
    switch (format) {
      case SampleFormat::Int8:
        out.push_back(static_cast<char>(std::clamp<long>(std::lround(s * 128.0) + 128, 0, 255)));
        break;
      case SampleFormat::Int16:
        put_u16(out, static_cast<std::uint16_t>(std::clamp<long>(std::lround(s * 32768.0), -32768, 32767)));
        break;
      case SampleFormat::Int24: {
        const auto v = static_cast<std::uint32_t>(std::clamp<long>(std::lround(s * 8388608.0), -8388608, 8388607));
        out.push_back(static_cast<char>(v & 0xFF));
        out.push_back(static_cast<char>((v >> 8) & 0xFF));
        out.push_back(static_cast<char>((v >> 16) & 0xFF));
        break;
      }
      case SampleFormat::Float32:
        put_u32(out, std::bit_cast<std::uint32_t>(sample));
        break;
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write audio file: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing audio file: " + path.string());
}

ExternalCommandDecoder::ExternalCommandDecoder(std::string command_template)
    : command_template_(std::move(command_template)) {}

RawPcm ExternalCommandDecoder::decode(const std::filesystem::path& path) const {
  if (!std::filesystem::exists(path)) throw IoError("cannot open audio file: " + path.string());

  std::random_device rd;
  const auto tmp = std::filesystem::temp_directory_path() /
                   ("drumloop-" + std::to_string(rd()) + "-" + std::to_string(rd()) + ".wav");
  std::string command = command_template_;
  auto replace = [&](const std::string& key, const std::string& value) {
    for (auto at = command.find(key); at != std::string::npos; at = command.find(key, at + value.size())) {
      command.replace(at, key.size(), value);
    }
  };
  replace("{in}", shell_quote(path.string()));
  replace("{out}", shell_quote(tmp.string()));

  const int status = std::system(command.c_str());
  if (status != 0 || !std::filesystem::exists(tmp)) {
    std::filesystem::remove(tmp);
    throw IoError("external decoder failed for " + path.string() + " (command: " + command + ")");
  }
  RawPcm pcm;
  try {
    pcm = read_wave(tmp);
  } catch (...) {
    std::filesystem::remove(tmp);
    throw;
  }
  std::filesystem::remove(tmp);
  return pcm;
}

void DecoderRegistry::add(std::string extension, std::shared_ptr<const Decoder> decoder) {
  std::transform(extension.begin(), extension.end(), extension.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  decoders_[std::move(extension)] = std::move(decoder);
}

const Decoder* DecoderRegistry::find(const std::string& extension) const {
  const auto it = decoders_.find(extension);
  return it == decoders_.end() ? nullptr : it->second.get();
}

DecoderRegistry DecoderRegistry::with_external_fallback() {
  DecoderRegistry registry;
  auto external = std::make_shared<ExternalCommandDecoder>();
  for (const char* ext : {".mp3", ".flac", ".ogg", ".m4a"}) registry.add(ext, external);
  return registry;
}

AudioClip decode(const std::filesystem::path& path, const DecoderRegistry& registry, int target_rate) {
  if (!std::filesystem::exists(path)) throw IoError("cannot open audio file: " + path.string());

  const std::string ext = lower_extension(path);
  RawPcm pcm;
  if (ext == ".wav" || ext == ".wave") {
    pcm = read_wave(path);
  } else if (const Decoder* decoder = registry.find(ext)) {
    pcm = decoder->decode(path);
  } else {
    throw IoError("unsupported codec '" + ext + "' for " + path.string() +
                  " (only wave is built in; register a decoder for others)");
  }
  if (pcm.channels <= 0 || pcm.sample_rate <= 0 || pcm.interleaved.empty()) {
    throw IoError("zero-length audio in " + path.string());
  }

  const auto channels = static_cast<std::size_t>(pcm.channels);
  const std::size_t frames = pcm.interleaved.size() / channels;
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) sum += pcm.interleaved[i * channels + c];
    mono[i] = static_cast<float>(sum / static_cast<double>(channels));
  }

  AudioClip clip;
  clip.source_path = path.string();
  clip.sample_rate = target_rate;
  clip.samples = resample(mono, pcm.sample_rate, target_rate);

  float peak = 0.0F;
  for (float s : clip.samples) {
    if (!std::isfinite(s)) throw IoError("non-finite sample in " + path.string());
    peak = std::max(peak, std::abs(s));
  }
  if (peak > 1.0F) {
    for (float& s : clip.samples) s /= peak;
  }
  return clip;
}

std::vector<float> resample(std::span<const float> input, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw std::invalid_argument("sample rates must be positive");
  if (from_rate == to_rate || input.empty()) return {input.begin(), input.end()};

  const double step = static_cast<double>(from_rate) / to_rate;  // input samples per output sample
  // Cutoff in cycles per input sample, a little under the lower Nyquist.
  const double cutoff = 0.5 * std::min(1.0, 1.0 / step) * 0.94;
  const SincKernel kernel(cutoff, 24.0 / (2.0 * cutoff));

  const auto out_len = static_cast<std::size_t>(
      std::floor(static_cast<double>(input.size()) * to_rate / from_rate));
  std::vector<float> out(out_len);
  const auto n = static_cast<std::ptrdiff_t>(input.size());
  const double hw = kernel.half_width();
  for (std::size_t j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) * step;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - hw)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(t + hw)));
    double acc = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) acc += input[static_cast<std::size_t>(i)] * kernel(t - static_cast<double>(i));
    out[j] = static_cast<float>(acc);
  }
  return out;
}

AudioClip sample_window(const AudioClip& clip, double start_seconds, double length_seconds) {
  const auto start = static_cast<std::size_t>(std::llround(start_seconds * clip.sample_rate));
  const auto length = static_cast<std::size_t>(std::llround(length_seconds * clip.sample_rate));
  if (clip.samples.size() < start + length) {
    throw ClipTooShort("song shorter than 2 minutes (" + std::to_string(clip.duration()) + " s)");
  }
  AudioClip window;
  window.sample_rate = clip.sample_rate;
  window.source_path = clip.source_path;
  window.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        clip.samples.begin() + static_cast<std::ptrdiff_t>(start + length));
  return window;
}

}  // namespace drumloop::audio
