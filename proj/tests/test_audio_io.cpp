#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "drumloop/audio_io.hpp"
#include "drumloop/errors.hpp"
#include "drumloop/random.hpp"
#include "drumloop/spectral.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace drumloop;
using drumloop::testing::TempDir;

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::ofstream& f, std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); }

// Minimal 16-bit interleaved writer for multichannel fixtures.
void write_pcm16(const std::filesystem::path& path, const std::vector<std::int16_t>& interleaved, int channels,
                 int rate) {
  std::ofstream f(path, std::ios::binary);
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVEfmt ", 8);
  put_u32(f, 16);
  put_u16(f, 1);
  put_u16(f, static_cast<std::uint16_t>(channels));
  put_u32(f, static_cast<std::uint32_t>(rate));
  put_u32(f, static_cast<std::uint32_t>(rate * channels * 2));
  put_u16(f, static_cast<std::uint16_t>(channels * 2));
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, data_bytes);
  f.write(reinterpret_cast<const char*>(interleaved.data()), data_bytes);
}

audio::AudioClip sine(double freq, double seconds, int rate, double amp = 0.5) {
  audio::AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate));
  }
  return c;
}

// Frequency from upward zero crossings with linear interpolation.
double measured_frequency(const std::vector<float>& x, int rate) {
  double first = -1.0;
  double last = -1.0;
  int crossings = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i - 1] < 0.0F && x[i] >= 0.0F) {
      const double t = static_cast<double>(i - 1) + x[i - 1] / static_cast<double>(x[i - 1] - x[i]);
      if (first < 0) first = t;
      last = t;
      ++crossings;
    }
  }
  return (crossings - 1) * rate / (last - first);
}

class ConstantDecoder : public audio::Decoder {
 public:
  audio::RawPcm decode(const std::filesystem::path&) const override {
    audio::RawPcm pcm;
    pcm.channels = 2;
    pcm.sample_rate = audio::kPipelineRate;
    pcm.interleaved = {0.5F, -0.5F, 0.25F, 0.75F};
    return pcm;
  }
};

}  // namespace

TEST_CASE("stereo wave with identical channels decodes to the same mono content") {
  TempDir dir;
  const int rate = 44100;
  const auto tone = sine(440.0, 1.0, rate);
  std::vector<std::int16_t> stereo;
  std::vector<std::int16_t> mono;
  for (float s : tone.samples) {
    const auto v = static_cast<std::int16_t>(std::lround(s * 32767.0));
    stereo.push_back(v);
    stereo.push_back(v);
    mono.push_back(v);
  }
  write_pcm16(dir / "stereo.wav", stereo, 2, rate);
  write_pcm16(dir / "mono.wav", mono, 1, rate);

  const auto a = audio::decode(dir / "stereo.wav");
  const auto b = audio::decode(dir / "mono.wav");
  CHECK(a.sample_rate == audio::kPipelineRate);
  CHECK(a.samples.size() == static_cast<std::size_t>(audio::kPipelineRate));
  CHECK(a.samples == b.samples);
}

TEST_CASE("silence passes through at the pipeline rate") {
  TempDir dir;
  audio::AudioClip zeros;
  zeros.sample_rate = 44100;
  zeros.samples.assign(10 * 44100, 0.0F);
  audio::write_wave(dir / "z.wav", zeros);
  const auto clip = audio::decode(dir / "z.wav");
  CHECK(clip.samples.size() == 10U * audio::kPipelineRate);
  for (float s : clip.samples) REQUIRE(s == 0.0F);
}

TEST_CASE("1 kHz tone keeps its frequency through decode") {
  TempDir dir;
  audio::write_wave(dir / "tone.wav", sine(1000.0, 3.0, 44100), audio::SampleFormat::Float32);
  const auto clip = audio::decode(dir / "tone.wav");

  const double f = measured_frequency(clip.samples, clip.sample_rate);
  CHECK(std::abs(f - 1000.0) / 1000.0 < 1e-3);

  // Dominant bin of a Hann-windowed frame, by direct DFT.
  const int n_fft = spectral::kDefaultFftSize;
  const auto window = spectral::hann_window(n_fft);
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) frame[static_cast<std::size_t>(i)] = clip.samples[20000 + static_cast<std::size_t>(i)] * window(i);
  const auto dft = drumloop::testing::naive_dft(frame);
  std::size_t peak = 0;
  for (std::size_t k = 1; k < dft.size(); ++k) {
    if (std::abs(dft[k]) > std::abs(dft[peak])) peak = k;
  }
  const auto expected = static_cast<std::size_t>(std::lround(1000.0 * n_fft / audio::kPipelineRate));
  CHECK(expected == 93);
  CHECK(peak == expected);
}

TEST_CASE("wave round trip stays within one step of the bit depth") {
  TempDir dir;
  Rng rng(3);
  audio::AudioClip clip;
  clip.sample_rate = audio::kPipelineRate;
  for (int i = 0; i < 4000; ++i) clip.samples.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));

  const std::pair<audio::SampleFormat, double> cases[] = {
      {audio::SampleFormat::Int8, 1.0 / 128},
      {audio::SampleFormat::Int16, 1.0 / 32768},
      {audio::SampleFormat::Int24, 1.0 / 8388608},
      {audio::SampleFormat::Float32, 0.0},
  };
  for (const auto& [fmt, lsb] : cases) {
    CAPTURE(static_cast<int>(fmt));
    audio::write_wave(dir / "rt.wav", clip, fmt);
    const auto pcm = audio::read_wave(dir / "rt.wav");
    REQUIRE(pcm.interleaved.size() == clip.samples.size());
    CHECK(pcm.channels == 1);
    CHECK(pcm.sample_rate == clip.sample_rate);
    double worst = 0.0;
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(pcm.interleaved[i]) - clip.samples[i]));
    }
    CHECK(worst <= lsb * 1.0000001);
  }
}

TEST_CASE("decode errors") {
  TempDir dir;
  CHECK_THROWS_AS(audio::decode(dir / "missing.wav"), IoError);

  {
    std::ofstream f(dir / "junk.wav", std::ios::binary);
    f << "this is not audio";
  }
  CHECK_THROWS_AS(audio::decode(dir / "junk.wav"), IoError);

  write_pcm16(dir / "empty.wav", {}, 1, 22050);
  CHECK_THROWS_AS(audio::decode(dir / "empty.wav"), IoError);

  {
    std::ofstream f(dir / "song.xyz", std::ios::binary);
    f << "x";
  }
  CHECK_THROWS_AS(audio::decode(dir / "song.xyz"), IoError);
}

TEST_CASE("registered decoders handle their extension") {
  TempDir dir;
  {
    std::ofstream f(dir / "clip.fake");
    f << "x";
  }
  audio::DecoderRegistry registry;
  registry.add(".fake", std::make_shared<ConstantDecoder>());
  const auto clip = audio::decode(dir / "clip.fake", registry);
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == doctest::Approx(0.0));
  CHECK(clip.samples[1] == doctest::Approx(0.5));
  CHECK(audio::DecoderRegistry::with_external_fallback().find(".mp3") != nullptr);
}

TEST_CASE("decode peak-scales clips that exceed full scale") {
  TempDir dir;
  audio::AudioClip loud;
  loud.sample_rate = audio::kPipelineRate;
  loud.samples = {0.0F, 2.0F, -4.0F, 1.0F};
  audio::write_wave(dir / "loud.wav", loud, audio::SampleFormat::Float32);
  const auto clip = audio::decode(dir / "loud.wav");
  CHECK(clip.samples[2] == doctest::Approx(-1.0));
  CHECK(clip.samples[1] == doctest::Approx(0.5));
}

TEST_CASE("sample_window") {
  const int rate = 1000;
  auto ramp = [&](double seconds) {
    audio::AudioClip c;
    c.sample_rate = rate;
    for (int i = 0; i < static_cast<int>(seconds * rate); ++i) c.samples.push_back(static_cast<float>(i % 977) / 977.0F);
    return c;
  };

  SUBCASE("180 s clip gives the slice starting at 60 s") {
    const auto clip = ramp(180.0);
    const auto w = audio::sample_window(clip);
    REQUIRE(w.samples.size() == 60U * rate);
    CHECK(w.samples.front() == clip.samples[60U * rate]);
    CHECK(w.samples.back() == clip.samples[120U * rate - 1]);
  }
  SUBCASE("exactly 120 s is accepted") {
    const auto clip = ramp(120.0);
    const auto w = audio::sample_window(clip);
    CHECK(w.samples.size() == 60U * rate);
    CHECK(w.samples.back() == clip.samples.back());
  }
  SUBCASE("119 s is too short") {
    CHECK_THROWS_AS(audio::sample_window(ramp(119.0)), ClipTooShort);
    CHECK_THROWS_WITH_AS(audio::sample_window(ramp(90.0)), doctest::Contains("song shorter than 2 minutes"),
                         ClipTooShort);
  }
  SUBCASE("window length is exact for many durations") {
    for (double seconds : {120.0, 120.001, 133.7, 200.0, 301.25}) {
      CHECK(audio::sample_window(ramp(seconds)).samples.size() == 60U * rate);
    }
  }
}
