#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace drumloop::audio {

// Every clip is resampled to this rate on decode so that STFT bin spacing
// means the same thing for every input.
inline constexpr int kPipelineRate = 22050;

inline constexpr double kWindowStartSeconds = 60.0;
inline constexpr double kWindowSeconds = 60.0;

struct AudioClip {
  std::vector<float> samples;  // mono, within [-1, 1]
  int sample_rate = kPipelineRate;
  std::string source_path;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Interleaved PCM straight out of a container, before mixing/resampling.
struct RawPcm {
  std::vector<float> interleaved;
  int channels = 1;
  int sample_rate = 0;
};

enum class SampleFormat { Int8, Int16, Int24, Float32 };

RawPcm read_wave(const std::filesystem::path& path);

// Writes mono RIFF/WAVE. Samples outside [-1, 1] are clipped for integer
// formats.
void write_wave(const std::filesystem::path& path, const AudioClip& clip,
                SampleFormat format = SampleFormat::Int16);

// Plug-in contract for compressed formats: (path) -> raw interleaved PCM.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual RawPcm decode(const std::filesystem::path& path) const = 0;
};

// Runs an external converter that writes a wave file, then reads that.
// The template's {in} and {out} placeholders are replaced by quoted paths.
class ExternalCommandDecoder : public Decoder {
 public:
  explicit ExternalCommandDecoder(
      std::string command_template =
          "ffmpeg -nostdin -v error -y -i {in} -f wav -acodec pcm_s16le {out}");
  RawPcm decode(const std::filesystem::path& path) const override;

 private:
  std::string command_template_;
};

// Maps lower-case file extensions (".mp3") to decoders. Wave is built in and
// never goes through the registry.
class DecoderRegistry {
 public:
  void add(std::string extension, std::shared_ptr<const Decoder> decoder);
  const Decoder* find(const std::string& extension) const;

  // Registry with the ffmpeg shell-out for mp3, flac and ogg.
  static DecoderRegistry with_external_fallback();

 private:
  std::map<std::string, std::shared_ptr<const Decoder>> decoders_;
};

// Decodes, averages channels to mono, resamples to target_rate and peak
// scales into [-1, 1] if anything exceeds it.
AudioClip decode(const std::filesystem::path& path,
                 const DecoderRegistry& registry = {},
                 int target_rate = kPipelineRate);

// Band-limited (Kaiser windowed sinc) sample rate conversion.
std::vector<float> resample(std::span<const float> input, int from_rate, int to_rate);

// The [60 s, 120 s) slice. Throws ClipTooShort below 120 s.
AudioClip sample_window(const AudioClip& clip,
                        double start_seconds = kWindowStartSeconds,
                        double length_seconds = kWindowSeconds);

}  // namespace drumloop::audio
