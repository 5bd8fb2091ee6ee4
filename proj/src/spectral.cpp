#include "drumloop/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "drumloop/errors.hpp"

namespace drumloop::spectral {
namespace {

// The FFTW planner is not reentrant; execution of a finished plan is.
std::mutex planner_mutex;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(int n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * static_cast<std::size_t>(n)))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex);
    plan_ = fftw_plan_dft_r2c_1d(n, in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex);
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }
  void execute() { fftw_execute(plan_); }
  std::complex<double> bin(int k) const { return {out_.get()[k][0], out_.get()[k][1]}; }

 private:
  int n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_;
};

void check_kernel(int kernel) {
  if (kernel <= 0 || kernel % 2 == 0) {
    throw std::invalid_argument("median kernel must be odd and positive, got " + std::to_string(kernel));
  }
}

// Median of the window centred on each element of `line`, edges replicated.
void running_median(const std::vector<double>& line, int kernel, std::vector<double>& scratch,
                    std::vector<double>& out) {
  const auto n = static_cast<std::ptrdiff_t>(line.size());
  const int half = kernel / 2;
  out.resize(line.size());
  scratch.resize(static_cast<std::size_t>(kernel));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (int j = -half; j <= half; ++j) {
      const auto idx = std::clamp<std::ptrdiff_t>(i + j, 0, n - 1);
      scratch[static_cast<std::size_t>(j + half)] = line[static_cast<std::size_t>(idx)];
    }
    std::nth_element(scratch.begin(), scratch.begin() + half, scratch.end());
    out[static_cast<std::size_t>(i)] = scratch[static_cast<std::size_t>(half)];
  }
}

}  // namespace

Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

Spectrogram stft(const audio::AudioClip& clip, int n_fft, int hop) {
  if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0) throw std::invalid_argument("n_fft must be a power of two");
  if (hop <= 0 || hop > n_fft) throw std::invalid_argument("hop must be in (0, n_fft]");
  if (clip.samples.empty()) throw Error("stft of an empty clip");

  const auto len = static_cast<std::ptrdiff_t>(clip.samples.size());
  const Eigen::Index frames = 1 + len / hop;
  const int bins = n_fft / 2 + 1;
  const Eigen::VectorXd window = hann_window(n_fft);

  Spectrogram spec;
  spec.n_fft = n_fft;
  spec.hop = hop;
  spec.sample_rate = clip.sample_rate;
  spec.values.resize(bins, frames);

  RealFft fft(n_fft);
  double* in = fft.input();
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::ptrdiff_t start = t * hop - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      const std::ptrdiff_t s = start + i;
      in[i] = (s >= 0 && s < len) ? clip.samples[static_cast<std::size_t>(s)] * window[i] : 0.0;
    }
    fft.execute();
    for (int k = 0; k < bins; ++k) spec.values(k, t) = fft.bin(k);
  }
  return spec;
}

Eigen::MatrixXd median_filter_time(const Eigen::MatrixXd& magnitude, int kernel) {
  check_kernel(kernel);
  Eigen::MatrixXd out(magnitude.rows(), magnitude.cols());
  std::vector<double> line(static_cast<std::size_t>(magnitude.cols())), scratch, filtered;
  for (Eigen::Index f = 0; f < magnitude.rows(); ++f) {
    for (Eigen::Index t = 0; t < magnitude.cols(); ++t) line[static_cast<std::size_t>(t)] = magnitude(f, t);
    running_median(line, kernel, scratch, filtered);
    for (Eigen::Index t = 0; t < magnitude.cols(); ++t) out(f, t) = filtered[static_cast<std::size_t>(t)];
  }
  return out;
}

Eigen::MatrixXd median_filter_freq(const Eigen::MatrixXd& magnitude, int kernel) {
  check_kernel(kernel);
  Eigen::MatrixXd out(magnitude.rows(), magnitude.cols());
  std::vector<double> line(static_cast<std::size_t>(magnitude.rows())), scratch, filtered;
  for (Eigen::Index t = 0; t < magnitude.cols(); ++t) {
    for (Eigen::Index f = 0; f < magnitude.rows(); ++f) line[static_cast<std::size_t>(f)] = magnitude(f, t);
    running_median(line, kernel, scratch, filtered);
    for (Eigen::Index f = 0; f < magnitude.rows(); ++f) out(f, t) = filtered[static_cast<std::size_t>(f)];
  }
  return out;
}

SoftMasks soft_masks(const Eigen::MatrixXd& harmonic_enhanced, const Eigen::MatrixXd& percussive_enhanced,
                     double power) {
  SoftMasks masks;
  masks.harmonic.resize(harmonic_enhanced.rows(), harmonic_enhanced.cols());
  masks.percussive.resize(harmonic_enhanced.rows(), harmonic_enhanced.cols());
  for (Eigen::Index t = 0; t < harmonic_enhanced.cols(); ++t) {
    for (Eigen::Index f = 0; f < harmonic_enhanced.rows(); ++f) {
      const double h = std::pow(harmonic_enhanced(f, t), power);
      const double p = std::pow(percussive_enhanced(f, t), power);
      const double total = h + p;
      const double mh = total > 0.0 ? h / total : 0.5;
      masks.harmonic(f, t) = mh;
      masks.percussive(f, t) = 1.0 - mh;
    }
  }
  return masks;
}

HpssResult hpss(const Spectrogram& spec, int kernel_time, int kernel_freq) {
  check_kernel(kernel_time);
  check_kernel(kernel_freq);
  const Eigen::MatrixXd mag = spec.magnitude();
  const SoftMasks masks = soft_masks(median_filter_time(mag, kernel_time), median_filter_freq(mag, kernel_freq));

  HpssResult result;
  result.harmonic = mag.cwiseProduct(masks.harmonic);
  result.percussive = mag.cwiseProduct(masks.percussive);
  result.phase.resize(spec.bins(), spec.frames());
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    for (Eigen::Index f = 0; f < spec.bins(); ++f) {
      const auto v = spec.values(f, t);
      result.phase(f, t) = mag(f, t) > 0.0 ? v / mag(f, t) : std::complex<double>(1.0, 0.0);
    }
  }
  return result;
}

}  // namespace drumloop::spectral
