#include "drumloop/drum_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "drumloop/errors.hpp"
#include "drumloop/random.hpp"

namespace drumloop::model {
namespace {

static_assert(std::endian::native == std::endian::little, "model files are written in host byte order");

constexpr char kMagic[8] = {'D', 'R', 'U', 'M', 'N', 'E', 'T', '\0'};

using Matrix = Eigen::MatrixXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void fill_uniform(Matrix& m, Rng& rng, double bound) {
  // Row-major fill order so the layout of the draw sequence does not depend
  // on Eigen's storage order.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  }
}

Matrix stack_inputs(std::span<const Example> batch) {
  Matrix x(static_cast<Eigen::Index>(batch.size()), kInputDim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(batch[i].x.values.data(), kInputDim);
  }
  return x;
}

double huber_slope(double r, double delta) {
  if (std::abs(r) <= delta) return r;
  return r > 0 ? delta : -delta;
}

// Output activation on one row; returns the mask as 0/1 doubles.
Eigen::RowVectorXd output_mask(const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  std::array<double, kPatternDims> pattern{};
  for (int j = 0; j < kPatternDims; ++j) pattern[static_cast<std::size_t>(j)] = y(1 + j);
  const auto keep = top_pattern_mask(pattern);
  Eigen::RowVectorXd mask(kOutputDim);
  mask(0) = 1.0;
  for (int j = 0; j < kPatternDims; ++j) mask(1 + j) = keep[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  return mask;
}

void write_block(std::ostream& out, const Eigen::Ref<const Matrix>& m) {
  const RowMajorMatrix rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

void read_block(std::istream& in, Matrix& m) {
  RowMajorMatrix rm(m.rows(), m.cols());
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) throw IoError("model file is truncated");
  m = rm;
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("model file is truncated");
  return value;
}

}  // namespace

bool ModelParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

bool ModelParams::has_expected_shapes() const {
  return w1.rows() == kInputDim && w1.cols() == kHiddenDim && b1.size() == kHiddenDim && w2.rows() == kHiddenDim &&
         w2.cols() == kOutputDim && b2.size() == kOutputDim;
}

std::size_t ModelParams::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

bool ModelParams::operator==(const ModelParams& other) const {
  return w1 == other.w1 && b1 == other.b1 && w2 == other.w2 && b2 == other.b2;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (folds < 2) throw std::invalid_argument("folds must be at least 2");
  if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
  if (!(huber_delta > 0)) throw std::invalid_argument("huber_delta must be positive");
  if (!(tempo_scale > 0)) throw std::invalid_argument("tempo_scale must be positive");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be non-negative");
  if (!(learning_rate >= 0)) throw std::invalid_argument("learning_rate must be non-negative");
}

void AdamState::step(ModelParams& params, const ModelParams& gradient, double learning_rate) {
  ++step_count;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  const double b1 = beta1;
  const double b2 = beta2;
  const double eps = epsilon;

  auto update = [&](auto p, auto g, auto m, auto v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    p -= learning_rate * (m / c1) / ((v / c2).sqrt() + eps);
  };
  update(params.w1.array(), gradient.w1.array(), first_moment.w1.array(), second_moment.w1.array());
  update(params.b1.array(), gradient.b1.array(), first_moment.b1.array(), second_moment.b1.array());
  update(params.w2.array(), gradient.w2.array(), first_moment.w2.array(), second_moment.w2.array());
  update(params.b2.array(), gradient.b2.array(), first_moment.b2.array(), second_moment.b2.array());
}

std::vector<Example> examples_from(std::span<const corpus::DatasetRecord> records) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.embedding, r.target});
  return out;
}

ModelParams init_params(std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  fill_uniform(p.w1, rng, std::sqrt(6.0 / kInputDim));
  fill_uniform(p.w2, rng, std::sqrt(6.0 / kHiddenDim));
  return p;
}

std::array<bool, kPatternDims> top_pattern_mask(std::span<const double, kPatternDims> pattern) {
  std::array<int, kPatternDims> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return pattern[static_cast<std::size_t>(a)] > pattern[static_cast<std::size_t>(b)];
  });
  std::array<bool, kPatternDims> keep{};
  for (int i = 0; i < kKeptBeats; ++i) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  return keep;
}

RhythmVector forward(const ModelParams& params, const EmbeddingVector& x) {
  const Eigen::Map<const Eigen::RowVectorXd> xv(x.values.data(), kInputDim);
  const Eigen::RowVectorXd h = (xv * params.w1 + params.b1).cwiseMax(0.0);
  Eigen::RowVectorXd y = h * params.w2 + params.b2;
  if (!y.allFinite()) throw NumericError("non-finite value in forward pass");
  y = y.cwiseProduct(output_mask(y));
  RhythmVector out;
  for (int j = 0; j < kOutputDim; ++j) out.values[static_cast<std::size_t>(j)] = y(j);
  return out;
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_loss(const RhythmVector& pred, const RhythmVector& target, double delta, double tempo_scale) {
  double sum = huber(pred.values[0] * tempo_scale - target.values[0] * tempo_scale, delta);
  for (std::size_t j = 1; j < kRhythmDim; ++j) sum += huber(pred.values[j] - target.values[j], delta);
  return sum / static_cast<double>(kRhythmDim);
}

RhythmVector to_bpm(const RhythmVector& network_output, double tempo_scale) {
  RhythmVector v = network_output;
  v.values[0] /= tempo_scale;
  return v;
}

LossAndGradient loss_and_gradient(const ModelParams& params, std::span<const Example> batch, double delta,
                                  double tempo_scale, MaskGradient mode) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Matrix x = stack_inputs(batch);
  const Matrix z1 = (x * params.w1).rowwise() + params.b1;
  const Matrix h = z1.cwiseMax(0.0);
  const Matrix y = (h * params.w2).rowwise() + params.b2;
  if (!y.allFinite()) throw NumericError("non-finite value in forward pass");

  Matrix dy(n, kOutputDim);
  double loss = 0.0;
  const double scale = 1.0 / (static_cast<double>(kOutputDim) * static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd mask = output_mask(y.row(i));
    const auto& target = batch[static_cast<std::size_t>(i)].target.values;
    for (int j = 0; j < kOutputDim; ++j) {
      const double t = j == 0 ? target[0] * tempo_scale : target[static_cast<std::size_t>(j)];
      const double r = y(i, j) * mask(j) - t;
      loss += huber(r, delta);
      if (mode == MaskGradient::StraightThrough && mask(j) == 0.0) {
        dy(i, j) = huber_slope(y(i, j) - t, delta) * scale;
      } else {
        dy(i, j) = mask(j) * huber_slope(r, delta) * scale;
      }
    }
  }

  LossAndGradient out;
  out.loss = loss * scale;
  out.gradient.w2.noalias() = h.transpose() * dy;
  out.gradient.b2 = dy.colwise().sum();
  const Matrix dz1 = (dy * params.w2.transpose()).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
  out.gradient.w1.noalias() = x.transpose() * dz1;
  out.gradient.b1 = dz1.colwise().sum();
  return out;
}

double dataset_loss(const ModelParams& params, std::span<const Example> data, double delta, double tempo_scale) {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : data) sum += huber_loss(to_bpm(forward(params, e.x), tempo_scale), e.target, delta, tempo_scale);
  return sum / static_cast<double>(data.size());
}

TrainResult train(std::span<const Example> data, const TrainConfig& cfg, std::span<const Example> validation) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");

  TrainResult result;
  result.params = init_params(cfg.seed);
  ModelParams& params = result.params;
  AdamState adam;

  const bool early_stop = !validation.empty() && cfg.patience > 0;
  ModelParams best = params;
  double best_val = INFINITY;
  int since_best = 0;

  std::vector<std::size_t> order(data.size());
  std::vector<Example> batch;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      LossAndGradient lg;
      try {
        lg = loss_and_gradient(params, batch, cfg.huber_delta, cfg.tempo_scale, cfg.mask_gradient);
      } catch (const NumericError&) {
        lg.loss = NAN;
      }
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      epoch_loss += lg.loss * static_cast<double>(end - start);
      adam.step(params, lg.gradient, cfg.learning_rate);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));

    if (early_stop) {
      const double val = dataset_loss(params, validation, cfg.huber_delta, cfg.tempo_scale);
      result.validation_history.push_back(val);
      if (val < best_val) {
        best_val = val;
        best = params;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (early_stop && result.best_epoch >= 0) params = best;
  result.final_train_loss = dataset_loss(params, data, cfg.huber_delta, cfg.tempo_scale);
  return result;
}

std::vector<CvRow> cross_validate(std::span<const Example> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() < static_cast<std::size_t>(cfg.folds)) {
    throw std::invalid_argument("dataset has " + std::to_string(data.size()) + " records, fewer than " +
                                std::to_string(cfg.folds) + " folds");
  }
  std::vector<CvRow> rows;
  const std::size_t n = data.size();
  const auto k = static_cast<std::size_t>(cfg.folds);
  for (int repeat = 0; repeat < cfg.repeats; ++repeat) {
    const std::uint64_t repeat_seed = mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(repeat));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(repeat_seed).shuffle(order);

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = repeat_seed;
    for (std::size_t fold = 0; fold < k; ++fold) {
      const std::size_t lo = fold * n / k;
      const std::size_t hi = (fold + 1) * n / k;
      std::vector<Example> train_set;
      std::vector<Example> val_set;
      for (std::size_t i = 0; i < n; ++i) (i >= lo && i < hi ? val_set : train_set).push_back(data[order[i]]);
      const TrainResult tr = train(train_set, fold_cfg, val_set);
      rows.push_back({repeat, static_cast<int>(fold), tr.final_train_loss,
                      dataset_loss(tr.params, val_set, cfg.huber_delta, cfg.tempo_scale)});
    }
  }
  return rows;
}

void write_cv_csv(std::ostream& out, std::span<const CvRow> rows) {
  out << "# drumloop-cv v1\n";
  out << "repeat,fold,train_loss,val_loss\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.repeat << ',' << r.fold << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.train_loss);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.val_loss);
    out << buf << '\n';
  }
}

RhythmVector predict(const ModelParams& params, const EmbeddingVector& x, double tempo_scale) {
  const RhythmVector y = forward(params, x);
  RhythmVector out;
  out.values[0] = std::round(y.values[0] / tempo_scale);
  for (std::size_t j = 1; j < kRhythmDim; ++j) out.values[j] = y.values[j] != 0.0 ? 1.0 : 0.0;
  return out;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  if (!model.params.has_expected_shapes()) throw std::invalid_argument("model parameters have the wrong shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(out, kModelFileVersion);
  write_pod<std::uint32_t>(out, kInputDim);
  write_pod<std::uint32_t>(out, kHiddenDim);
  write_pod<std::uint32_t>(out, kOutputDim);
  write_pod<std::uint64_t>(out, model.seed);
  write_pod<double>(out, model.tempo_scale);
  write_block(out, model.params.w1);
  write_block(out, model.params.b1);
  write_block(out, model.params.w2);
  write_block(out, model.params.b2);
  if (!out) throw IoError("write failed: " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError("not a drumloop model file: " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kModelFileVersion) throw ParseError("unsupported model file version " + std::to_string(version));
  const auto in_dim = read_pod<std::uint32_t>(in);
  const auto hidden = read_pod<std::uint32_t>(in);
  const auto out_dim = read_pod<std::uint32_t>(in);
  if (in_dim != kInputDim || hidden != kHiddenDim || out_dim != kOutputDim) {
    throw ParseError("model shape " + std::to_string(in_dim) + "x" + std::to_string(hidden) + "x" +
                     std::to_string(out_dim) + " does not match 768x400x129");
  }
  ModelFile model;
  model.seed = read_pod<std::uint64_t>(in);
  model.tempo_scale = read_pod<double>(in);
  read_block(in, model.params.w1);
  Matrix b1(1, kHiddenDim);
  read_block(in, b1);
  model.params.b1 = b1;
  read_block(in, model.params.w2);
  Matrix b2(1, kOutputDim);
  read_block(in, b2);
  model.params.b2 = b2;
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in model file");
  if (!model.params.all_finite()) throw ParseError("model file contains non-finite parameters");
  return model;
}

}  // namespace drumloop::model
