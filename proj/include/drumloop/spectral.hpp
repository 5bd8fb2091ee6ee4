#pragma once

#include <Eigen/Dense>

#include "drumloop/audio_io.hpp"

namespace drumloop::spectral {

inline constexpr int kDefaultFftSize = 2048;
inline constexpr int kDefaultHop = 512;
inline constexpr int kDefaultKernel = 75;

enum class WindowType { Hann };

// Complex STFT, rows are frequency bins (n_fft/2 + 1), columns are frames.
struct Spectrogram {
  Eigen::MatrixXcd values;
  int n_fft = kDefaultFftSize;
  int hop = kDefaultHop;
  WindowType window = WindowType::Hann;
  int sample_rate = audio::kPipelineRate;

  Eigen::Index bins() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
  Eigen::MatrixXd magnitude() const { return values.cwiseAbs(); }
};

struct HpssResult {
  Eigen::MatrixXd harmonic;
  Eigen::MatrixXd percussive;
  Eigen::MatrixXcd phase;  // unit-modulus, shared by both components
};

struct SoftMasks {
  Eigen::MatrixXd harmonic;
  Eigen::MatrixXd percussive;
};

// Periodic Hann window of the given length.
Eigen::VectorXd hann_window(int length);

// Centered frames: the signal is zero padded by n_fft/2 on both sides so
// frame t is centered on sample t*hop. Produces 1 + len/hop frames.
Spectrogram stft(const audio::AudioClip& clip, int n_fft = kDefaultFftSize, int hop = kDefaultHop);

// Running medians with replicated edges. kernel must be odd and positive.
Eigen::MatrixXd median_filter_time(const Eigen::MatrixXd& magnitude, int kernel);
Eigen::MatrixXd median_filter_freq(const Eigen::MatrixXd& magnitude, int kernel);

// Wiener-style masks H^p / (H^p + P^p) and its complement. Where both enhanced
// values are zero the energy is split evenly, so the masks always sum to 1.
SoftMasks soft_masks(const Eigen::MatrixXd& harmonic_enhanced,
                     const Eigen::MatrixXd& percussive_enhanced, double power = 2.0);

// Median-filtering harmonic/percussive separation. kernel_time filters along
// frames (harmonic), kernel_freq along bins (percussive).
HpssResult hpss(const Spectrogram& spec, int kernel_time = kDefaultKernel,
                int kernel_freq = kDefaultKernel);

}  // namespace drumloop::spectral
