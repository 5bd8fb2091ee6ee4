#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "drumloop/random.hpp"

namespace drumloop::testing {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Direct-form biquad, RBJ cookbook coefficients.
struct Biquad {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  static Biquad make(bool highpass, double freq, double q, int rate) {
    const double w = kTwoPi * freq / rate;
    const double alpha = std::sin(w) / (2.0 * q);
    const double c = std::cos(w);
    const double a0 = 1.0 + alpha;
    Biquad f{};
    if (highpass) {
      f.b0 = (1.0 + c) / 2.0 / a0;
      f.b1 = -(1.0 + c) / a0;
      f.b2 = f.b0;
    } else {  // band-pass, constant peak gain
      f.b0 = alpha / a0;
      f.b1 = 0.0;
      f.b2 = -alpha / a0;
    }
    f.a1 = -2.0 * c / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }

  double operator()(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

std::vector<float> drum_hit(Voice voice, int rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> out;
  switch (voice) {
    case Voice::Kick: {
      // Pitch-swept body plus a short broadband beater click.
      out.resize(static_cast<std::size_t>(0.30 * rate));
      double phase = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        const double freq = 45.0 + 90.0 * std::exp(-t / 0.03);
        phase += kTwoPi * freq / rate;
        const double beater = rng.uniform(-1.0, 1.0) * std::exp(-t / 0.004);
        out[i] = static_cast<float>(0.7 * std::sin(phase) * std::exp(-t / 0.07) + 0.6 * beater);
      }
      break;
    }
    case Voice::Snare: {
      out.resize(static_cast<std::size_t>(0.20 * rate));
      auto band = Biquad::make(false, 2500.0, 0.8, rate);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        const double noise = band(rng.uniform(-1.0, 1.0)) * 2.0;
        const double body = 0.5 * std::sin(kTwoPi * 190.0 * t) * std::exp(-t / 0.03);
        out[i] = static_cast<float>(noise * std::exp(-t / 0.045) + body);
      }
      break;
    }
    case Voice::Hat: {
      out.resize(static_cast<std::size_t>(0.08 * rate));
      auto hp1 = Biquad::make(true, 7000.0, 0.7, rate);
      auto hp2 = Biquad::make(true, 7000.0, 0.7, rate);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        out[i] = static_cast<float>(hp2(hp1(rng.uniform(-1.0, 1.0))) * std::exp(-t / 0.015));
      }
      break;
    }
    case Voice::Tom: {
      out.resize(static_cast<std::size_t>(0.25 * rate));
      double phase = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        const double freq = 420.0 + 80.0 * std::exp(-t / 0.05);
        phase += kTwoPi * freq / rate;
        out[i] = static_cast<float>(std::sin(phase) * std::exp(-t / 0.06));
      }
      break;
    }
  }
  return out;
}

audio::AudioClip render_loop(const LoopSpec& loop, double bpm, double seconds, int rate, std::uint64_t seed) {
  audio::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.assign(static_cast<std::size_t>(std::lround(seconds * rate)), 0.0F);
  const double step = 15.0 / bpm;
  std::uint64_t hit_seed = seed;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * step;
    if (t >= seconds) break;
    const auto pos = static_cast<std::size_t>(k % kPatternSteps);
    for (std::size_t v = 0; v < kVoices.size(); ++v) {
      if (!loop.voices[v].test(pos)) continue;
      const std::uint64_t hs = mix_seed(hit_seed++);
      const auto hit = drum_hit(kVoices[v], rate, hs);
      // +-15% velocity so repeated hits are not identical.
      const double velocity = 1.0 + 0.3 * (static_cast<double>(hs >> 11) * 0x1.0p-53 - 0.5);
      const auto start = static_cast<std::size_t>(std::lround(t * rate));
      for (std::size_t i = 0; i < hit.size() && start + i < clip.samples.size(); ++i) {
        clip.samples[start + i] += static_cast<float>(loop.gains[v] * velocity) * hit[i];
      }
    }
  }
  for (float& s : clip.samples) s = std::clamp(s, -1.0F, 1.0F);
  return clip;
}

LoopSpec reference_loop() {
  LoopSpec loop;
  auto set = [&](Voice v, std::initializer_list<int> steps) {
    for (int s : steps) loop.voices[static_cast<std::size_t>(v)].set(static_cast<std::size_t>(s));
  };
  set(Voice::Kick, {0, 4, 8, 12, 16, 20, 24, 28});
  set(Voice::Hat, {2, 10, 18, 26});
  set(Voice::Snare, {6, 22, 30});
  set(Voice::Tom, {14});
  return loop;
}

int aligned_hamming(const ConsensusPattern& pattern, const LoopSpec& loop) {
  std::array<int, 4> perm = {0, 1, 2, 3};
  int best = std::numeric_limits<int>::max();
  do {
    int d = 0;
    for (std::size_t v = 0; v < 4; ++v) {
      d += static_cast<int>((pattern.tracks[static_cast<std::size_t>(perm[v])] ^ loop.voices[v]).count());
    }
    best = std::min(best, d);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace drumloop::testing
