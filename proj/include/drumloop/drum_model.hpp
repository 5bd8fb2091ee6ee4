#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "drumloop/consensus.hpp"
#include "drumloop/corpus.hpp"

namespace drumloop::model {

inline constexpr int kInputDim = static_cast<int>(kEmbeddingDim);  // 768
inline constexpr int kHiddenDim = 400;
inline constexpr int kOutputDim = static_cast<int>(kRhythmDim);  // 129
inline constexpr int kPatternDims = kOutputDim - 1;               // 128
inline constexpr int kKeptBeats = 32;                             // top quartile of 128
inline constexpr double kDefaultTempoScale = 1.0 / 200.0;

// Row-vector convention: h = relu(x * w1 + b1), y = h * w2 + b2.
struct ModelParams {
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(kInputDim, kHiddenDim);
  Eigen::RowVectorXd b1 = Eigen::RowVectorXd::Zero(kHiddenDim);
  Eigen::MatrixXd w2 = Eigen::MatrixXd::Zero(kHiddenDim, kOutputDim);
  Eigen::RowVectorXd b2 = Eigen::RowVectorXd::Zero(kOutputDim);

  bool all_finite() const;
  bool has_expected_shapes() const;
  std::size_t parameter_count() const;
  bool operator==(const ModelParams& other) const;
};

// How the top-32 output activation is differentiated during training.
// Subgradient: masked outputs get zero gradient (the derivative of the
// function actually computed). StraightThrough: masked outputs get the
// gradient they would have if kept.
enum class MaskGradient { Subgradient, StraightThrough };

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 5;
  int max_epochs = 500;
  double huber_delta = 1.0;
  std::uint64_t seed = 7067265;
  int folds = 10;
  int repeats = 3;
  double tempo_scale = kDefaultTempoScale;  // 1.0 trains on raw BPM
  int patience = 50;  // epochs without validation improvement; used only with a validation set
  MaskGradient mask_gradient = MaskGradient::Subgradient;

  void validate() const;  // throws std::invalid_argument
};

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // One bias-corrected update of params with the given gradient.
  void step(ModelParams& params, const ModelParams& gradient, double learning_rate);
};

struct Example {
  EmbeddingVector x;
  RhythmVector target;  // tempo in BPM
};

std::vector<Example> examples_from(std::span<const corpus::DatasetRecord> records);

// He-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
ModelParams init_params(std::uint64_t seed);

// Which of the 128 pattern outputs survive: the 32 largest, ties to the
// lower index.
std::array<bool, kPatternDims> top_pattern_mask(std::span<const double, kPatternDims> pattern);

// Network output with the output activation applied. values[0] is the raw
// tempo unit (BPM * tempo_scale). Throws NumericError on non-finite values.
RhythmVector forward(const ModelParams& params, const EmbeddingVector& x);

double huber(double residual, double delta);

// Mean Huber over 129 dims. pred and target carry tempo in BPM; the tempo
// residual is taken after multiplying both by tempo_scale.
double huber_loss(const RhythmVector& pred, const RhythmVector& target, double delta, double tempo_scale = 1.0);

// BPM-space view of a forward() output.
RhythmVector to_bpm(const RhythmVector& network_output, double tempo_scale);

struct LossAndGradient {
  double loss = 0.0;
  ModelParams gradient;
};

// Mean batch loss and its gradient. ReLU derivative at 0 is 0.
LossAndGradient loss_and_gradient(const ModelParams& params, std::span<const Example> batch,
                                  double delta, double tempo_scale,
                                  MaskGradient mode = MaskGradient::Subgradient);

double dataset_loss(const ModelParams& params, std::span<const Example> data, double delta, double tempo_scale);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;        // mean training loss per epoch
  std::vector<double> validation_history;  // empty without a validation set
  double final_train_loss = 0.0;
  int best_epoch = -1;  // epoch whose params were kept when early stopping
};

// Mini-batch Adam. With a validation set, stops after `patience` epochs
// without improvement and returns the best-validation parameters.
// Throws NumericError naming the epoch and batch on a non-finite loss.
TrainResult train(std::span<const Example> data, const TrainConfig& cfg, std::span<const Example> validation = {});

struct CvRow {
  int repeat = 0;
  int fold = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// `repeats` reshuffles, each split into `folds` contiguous folds.
std::vector<CvRow> cross_validate(std::span<const Example> data, const TrainConfig& cfg);

void write_cv_csv(std::ostream& out, std::span<const CvRow> rows);

// Integer BPM tempo and 0/1 pattern dims.
RhythmVector predict(const ModelParams& params, const EmbeddingVector& x, double tempo_scale);

struct ModelFile {
  ModelParams params;
  std::uint64_t seed = 0;
  double tempo_scale = kDefaultTempoScale;
};

inline constexpr std::uint32_t kModelFileVersion = 1;

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace drumloop::model
