#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "drumloop/drum_model.hpp"
#include "drumloop/errors.hpp"
#include "support/gradient_check.hpp"
#include "support/model_fixtures.hpp"
#include "support/temp_dir.hpp"

using namespace drumloop;
using namespace drumloop::model;
using drumloop::testing::random_examples;

namespace {

EmbeddingVector constant_embedding(double v) {
  EmbeddingVector x;
  x.values.fill(v);
  return x;
}

}  // namespace

TEST_CASE("init_params: He-uniform bounds, zero biases, deterministic") {
  const ModelParams p = init_params(42);
  CHECK(p.has_expected_shapes());
  CHECK(p.parameter_count() == 768 * 400 + 400 + 400 * 129 + 129);
  const double b1 = std::sqrt(6.0 / 768.0);
  const double b2 = std::sqrt(6.0 / 400.0);
  CHECK(p.w1.cwiseAbs().maxCoeff() <= b1);
  CHECK(p.w2.cwiseAbs().maxCoeff() <= b2);
  CHECK(p.w1.cwiseAbs().maxCoeff() > 0.99 * b1);
  CHECK(p.w2.cwiseAbs().maxCoeff() > 0.99 * b2);
  CHECK(std::abs(p.w1.mean()) < 0.01 * b1);
  CHECK(p.b1.isZero(0.0));
  CHECK(p.b2.isZero(0.0));
  CHECK(init_params(42) == p);
  CHECK_FALSE(init_params(43) == p);
}

TEST_CASE("forward: zero parameters give a zero vector") {
  const ModelParams p;
  const RhythmVector y = forward(p, constant_embedding(0.3));
  for (double v : y.values) CHECK(v == 0.0);
}

TEST_CASE("forward: ascending pattern pre-activations keep the top 32 indices") {
  ModelParams p;
  p.b2(0) = 0.6;
  for (int j = 0; j < kPatternDims; ++j) p.b2(1 + j) = j;
  const RhythmVector y = forward(p, constant_embedding(1.0));
  CHECK(y.values[0] == doctest::Approx(0.6));
  for (int j = 0; j < kPatternDims; ++j) {
    const double v = y.values[1 + static_cast<std::size_t>(j)];
    if (j >= 96) {
      CHECK(v == j);
    } else {
      CHECK(v == 0.0);
    }
  }
}

TEST_CASE("forward matches a loop reference and keeps exactly 32 pattern outputs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelParams p = init_params(seed);
    p.b1.setConstant(0.01);
    p.b2.setConstant(0.02);
    const EmbeddingVector x = corpus::pseudo_embedding("check", seed);
    const std::vector<double> ref = drumloop::testing::reference_preactivation(p, x);
    std::vector<int> order(kPatternDims);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return ref[1 + static_cast<std::size_t>(a)] > ref[1 + static_cast<std::size_t>(b)]; });
    std::vector<bool> keep(kPatternDims, false);
    for (int k = 0; k < kKeptBeats; ++k) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

    const RhythmVector y = forward(p, x);
    CHECK(y.values[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    int nonzero = 0;
    for (int j = 0; j < kPatternDims; ++j) {
      const double v = y.values[1 + static_cast<std::size_t>(j)];
      if (keep[static_cast<std::size_t>(j)]) {
        CHECK(v == doctest::Approx(ref[1 + static_cast<std::size_t>(j)]).epsilon(1e-12));
      } else {
        CHECK(v == 0.0);
      }
      nonzero += v != 0.0;
    }
    CHECK(nonzero == kKeptBeats);
  }
}

TEST_CASE("top_pattern_mask: ties keep the lower index") {
  std::array<double, kPatternDims> flat{};
  flat.fill(1.0);
  const auto keep = top_pattern_mask(flat);
  for (int j = 0; j < kPatternDims; ++j) CHECK(keep[static_cast<std::size_t>(j)] == (j < kKeptBeats));
}

TEST_CASE("huber values and continuity at delta") {
  CHECK(huber(0.0, 1.0) == 0.0);
  CHECK(huber(0.5, 1.0) == doctest::Approx(0.125));
  CHECK(huber(-2.0, 1.0) == doctest::Approx(1.5));
  const double d = 0.7;
  const double eps = 1e-9;
  CHECK(huber(d - eps, d) == doctest::Approx(huber(d + eps, d)).epsilon(1e-7));
  const double slope_below = (huber(d, d) - huber(d - 1e-6, d)) / 1e-6;
  const double slope_above = (huber(d + 1e-6, d) - huber(d, d)) / 1e-6;
  CHECK(slope_below == doctest::Approx(slope_above).epsilon(1e-5));

  RhythmVector pred;
  RhythmVector target;
  pred.values[5] = 0.5;
  CHECK(huber_loss(pred, target, 1.0) == doctest::Approx(0.125 / 129.0));
  RhythmVector tp;
  RhythmVector tt;
  tp.values[0] = 140.0;
  tt.values[0] = 120.0;
  CHECK(huber_loss(tp, tt, 1.0, 1.0 / 200.0) == doctest::Approx(0.5 * 0.1 * 0.1 / 129.0));
  CHECK(huber_loss(tp, tt, 1.0, 1.0) == doctest::Approx((20.0 - 0.5) / 129.0));
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t point = 0; point < 5; ++point) {
    ModelParams p = init_params(100 + point);
    p.b2(0) = 0.5;
    const auto batch = random_examples(5, 200 + point);
    const auto check = drumloop::testing::check_gradient(p, batch, 1.0, kDefaultTempoScale, 10, point);
    CHECK(check.coordinates >= 30);
    CHECK(check.worst_relative < 1e-4);
  }
}

TEST_CASE("adam: first step moves each parameter by about -lr * sign(g)") {
  ModelParams p;
  ModelParams g;
  g.w1.setConstant(0.3);
  g.b1.setConstant(-2.0);
  g.w2.setConstant(1e-3);
  g.b2.setConstant(-5.0);
  AdamState adam;
  adam.first_moment = ModelParams{};
  adam.second_moment = ModelParams{};
  adam.step(p, g, 0.001);
  CHECK(p.w1(3, 7) == doctest::Approx(-0.001).epsilon(1e-4));
  CHECK(p.b1(0) == doctest::Approx(0.001).epsilon(1e-4));
  CHECK(p.w2(0, 0) == doctest::Approx(-0.001).epsilon(1e-4));
  CHECK(p.b2(128) == doctest::Approx(0.001).epsilon(1e-4));
}

TEST_CASE("train: zero learning rate leaves the initial parameters") {
  const auto data = random_examples(10, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 3;
  const TrainResult r = train(data, cfg);
  CHECK(r.params == init_params(cfg.seed));
  REQUIRE(r.loss_history.size() == 3);
  CHECK(r.loss_history[0] == doctest::Approx(r.loss_history[2]).epsilon(1e-12));
}

TEST_CASE("train is bit-reproducible for a seed") {
  const auto data = random_examples(12, 4);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  const TrainResult a = train(data, cfg);
  const TrainResult b = train(data, cfg);
  CHECK(a.params == b.params);
  CHECK(a.loss_history == b.loss_history);
  cfg.seed += 1;
  CHECK_FALSE(train(data, cfg).params == a.params);
}

TEST_CASE("train reduces the loss on a small set") {
  const auto data = random_examples(10, 5);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  const TrainResult r = train(data, cfg);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(r.params.all_finite());
}

TEST_CASE("train aborts on a non-finite loss") {
  auto data = random_examples(10, 6);
  data[7].target.values[3] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.max_epochs = 2;
  try {
    train(data, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("train rejects bad configuration and empty data") {
  const auto data = random_examples(4, 7);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(std::span<const Example>{}, cfg), std::invalid_argument);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(data, cfg), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(train(data, cfg), std::invalid_argument);
}

TEST_CASE("train with validation stops early and keeps the best epoch") {
  const auto data = random_examples(10, 8);
  const auto val = random_examples(5, 9);
  TrainConfig cfg;
  cfg.max_epochs = 400;
  cfg.patience = 5;
  cfg.learning_rate = 0.01;
  const TrainResult r = train(data, cfg, val);
  CHECK(r.validation_history.size() == r.loss_history.size());
  CHECK(r.loss_history.size() < 400);
  REQUIRE(r.best_epoch >= 0);
  const double best = *std::min_element(r.validation_history.begin(), r.validation_history.end());
  CHECK(r.validation_history[static_cast<std::size_t>(r.best_epoch)] == best);
  CHECK(dataset_loss(r.params, val, cfg.huber_delta, cfg.tempo_scale) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("cross_validate: one row per repeat and fold") {
  const auto data = random_examples(30, 10);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  const auto rows = cross_validate(data, cfg);
  REQUIRE(rows.size() == 30);
  for (int r = 0; r < 3; ++r) {
    for (int f = 0; f < 10; ++f) {
      const CvRow& row = rows[static_cast<std::size_t>(r * 10 + f)];
      CHECK(row.repeat == r);
      CHECK(row.fold == f);
      CHECK(std::isfinite(row.train_loss));
      CHECK(std::isfinite(row.val_loss));
    }
  }
  const auto again = cross_validate(data, cfg);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].train_loss == again[i].train_loss);
    CHECK(rows[i].val_loss == again[i].val_loss);
  }
}

TEST_CASE("cross_validate: identical records give equal train and validation loss") {
  auto data = random_examples(1, 11);
  data.resize(4, data.front());
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.folds = 2;
  cfg.repeats = 1;
  const auto rows = cross_validate(data, cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) CHECK(row.train_loss == doctest::Approx(row.val_loss).epsilon(1e-12));
}

TEST_CASE("cross_validate: more folds than records throws") {
  const auto data = random_examples(5, 12);
  TrainConfig cfg;
  cfg.folds = 6;
  CHECK_THROWS_AS(cross_validate(data, cfg), std::invalid_argument);
}

TEST_CASE("cv csv format") {
  std::vector<CvRow> rows = {{0, 0, 0.5, 0.25}, {0, 1, 0.1, 0.2}};
  std::ostringstream out;
  write_cv_csv(out, rows);
  const std::string s = out.str();
  CHECK(s.rfind("# drumloop-cv v1\nrepeat,fold,train_loss,val_loss\n0,0,0.5,0.25\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}

TEST_CASE("predict rounds tempo and binarises the pattern") {
  ModelParams p;
  p.b2(0) = 0.6051;
  for (int j = 0; j < kPatternDims; ++j) p.b2(1 + j) = j % 7 == 0 ? 2.0 : 0.5;
  const RhythmVector y = predict(p, constant_embedding(0.0), 1.0 / 200.0);
  CHECK(y.values[0] == 121.0);
  int beats = 0;
  for (std::size_t j = 1; j < kRhythmDim; ++j) {
    CHECK((y.values[j] == 0.0 || y.values[j] == 1.0));
    beats += y.values[j] == 1.0;
  }
  CHECK(beats == kKeptBeats);
  const RhythmVector z = predict(ModelParams{}, constant_embedding(0.0), 1.0 / 200.0);
  CHECK(z.values[0] == 0.0);
  for (std::size_t j = 1; j < kRhythmDim; ++j) CHECK(z.values[j] == 0.0);
}

TEST_CASE("straight-through mode differs only at masked outputs") {
  ModelParams p = init_params(21);
  const auto batch = random_examples(5, 22);
  const auto sub = loss_and_gradient(p, batch, 1.0, kDefaultTempoScale, MaskGradient::Subgradient);
  const auto st = loss_and_gradient(p, batch, 1.0, kDefaultTempoScale, MaskGradient::StraightThrough);
  CHECK(sub.loss == st.loss);
  CHECK(sub.gradient.b2(0) == doctest::Approx(st.gradient.b2(0)));
  CHECK_FALSE(sub.gradient.w2 == st.gradient.w2);
}

TEST_CASE("model file round trip and rejection") {
  drumloop::testing::TempDir dir;
  ModelFile m;
  m.params = init_params(31);
  m.params.b2(4) = 0.125;
  m.seed = 31;
  m.tempo_scale = 0.01;
  const auto path = dir / "m.bin";
  save_model(path, m);
  const ModelFile back = load_model(path);
  CHECK(back.params == m.params);
  CHECK(back.seed == 31);
  CHECK(back.tempo_scale == 0.01);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write_bytes = [&](const std::string& b) {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << b;
  };

  std::string wrong_dim = bytes;
  wrong_dim[12] = static_cast<char>(wrong_dim[12] + 1);
  write_bytes(wrong_dim);
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), ParseError);

  std::string magic = bytes;
  magic[0] = 'X';
  write_bytes(magic);
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), ParseError);

  write_bytes(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), Error);

  write_bytes(bytes + "x");
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), ParseError);

  CHECK_THROWS_AS(load_model(dir / "missing.bin"), IoError);
}
