#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "vlbc/classify.hpp"

using namespace vlbc;

namespace {

// Linearly separable blobs: label = [w . x > 0] with a margin of 0.5.
struct Blobs {
  std::vector<FeatureImage> images;
  std::vector<std::uint8_t> labels;
};

Blobs blobs(int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Vector w = standard_normal(dim, rng).normalized();
  Blobs b;
  while (static_cast<int>(b.images.size()) < n) {
    Vector x = standard_normal(dim, rng);
    const double m = w.dot(x);
    if (std::abs(m) < 0.5) continue;
    b.images.push_back(FeatureImage{x});
    b.labels.push_back(m > 0 ? 1 : 0);
  }
  return b;
}

double accuracy(const Classifier& c, const Blobs& b) {
  int hit = 0;
  for (std::size_t i = 0; i < b.images.size(); ++i) hit += predict(c, b.images[i]).label == b.labels[i];
  return static_cast<double>(hit) / static_cast<double>(b.images.size());
}

}  // namespace

TEST_CASE("focal loss at logit zero") {
  const FocalLoss f = focal_loss(0.0, 1, 2.0, 0.25);
  CHECK(f.loss == doctest::Approx(0.0625 * std::log(2.0)).epsilon(1e-12));
  CHECK(f.loss == doctest::Approx(0.043321).epsilon(1e-5));
  // symmetric in the label at logit 0, opposite gradient sign
  CHECK(focal_loss(0.0, 0, 2.0, 0.25).loss == doctest::Approx(f.loss));
  CHECK(f.grad < 0.0);
  CHECK(focal_loss(0.0, 0, 2.0, 0.25).grad > 0.0);
}

TEST_CASE("focal loss with gamma 0 and alpha 1 is cross-entropy") {
  for (double z : {-7.0, -1.3, 0.0, 0.4, 2.5, 9.0}) {
    const double p = 1.0 / (1.0 + std::exp(-z));
    CHECK(focal_loss(z, 1, 0.0, 1.0).loss == doctest::Approx(-std::log(p)).epsilon(1e-10));
    CHECK(focal_loss(z, 0, 0.0, 1.0).loss == doctest::Approx(-std::log(1.0 - p)).epsilon(1e-10));
    CHECK(focal_loss(z, 1, 0.0, 1.0).grad == doctest::Approx(p - 1.0).epsilon(1e-10));
  }
}

TEST_CASE("focal loss stays finite at saturated logits and rejects non-finite input") {
  const FocalLoss f = focal_loss(-800.0, 1, 2.0, 0.25);
  CHECK(std::isfinite(f.loss));
  CHECK(f.loss <= 0.25 * -std::log(1e-12) + 1e-9);
  CHECK_THROWS_AS(focal_loss(std::nan(""), 1, 2.0, 0.25), InputError);
}

TEST_CASE("focal and network gradients match finite differences") {
  CHECK(oracles::focal_gradient_error(500, 1) <= 1e-6);
  CHECK(oracles::classifier_gradient_error(2) <= 1e-4);
  CHECK(oracles::classifier_gradient_error(3) <= 1e-4);
}

TEST_CASE("separable data is learned by both the MLP and the linear scorer") {
  const Blobs tr = blobs(400, 6, 10), te = blobs(400, 6, 10);
  for (int hidden : {0, 16}) {
    TrainConfig cfg{0.05, 60, 16, 0.0, 1.0, WeightMode::uniform, hidden, 3};
    const TrainResult r = train_on_labels(tr.images, tr.labels, {}, cfg);
    CHECK_FALSE(r.constant);
    CHECK(accuracy(r.classifier, te) >= 0.98);
    CHECK(r.loss_trace.size() == 60);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
  }
}

TEST_CASE("zero epochs returns the initialization unchanged") {
  const Blobs tr = blobs(50, 4, 11);
  TrainConfig cfg;
  cfg.epochs = 0;
  const Classifier init = make_classifier(4, 8, 99);
  const TrainResult r = train_on_labels(tr.images, tr.labels, {}, cfg, init);
  CHECK(r.loss_trace.empty());
  CHECK(r.classifier.output_weights == init.output_weights);
  CHECK(r.classifier.hidden_weights == init.hidden_weights);
}

TEST_CASE("a single-class training set gives a flagged constant head") {
  Blobs tr = blobs(30, 4, 12);
  for (auto& l : tr.labels) l = 1;
  const TrainResult r = train_on_labels(tr.images, tr.labels, {}, TrainConfig{});
  CHECK(r.constant);
  for (const auto& x : blobs(20, 4, 13).images) CHECK(predict(r.classifier, x).label == 1);
}

TEST_CASE("training is deterministic in the seed") {
  const Blobs tr = blobs(120, 5, 14);
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = train_on_labels(tr.images, tr.labels, {}, cfg);
  const auto b = train_on_labels(tr.images, tr.labels, {}, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.classifier.output_weights == b.classifier.output_weights);
  cfg.seed = 4;
  CHECK(train_on_labels(tr.images, tr.labels, {}, cfg).loss_trace != a.loss_trace);
}

TEST_CASE("inverse cell weights are N over four times the cell count") {
  std::vector<LabeledSample> d;
  // cells (a,p): (0,0) x5, (0,1) x1, (1,0) x2, (1,1) x2
  auto add = [&](int a, int p, int times) {
    for (int i = 0; i < times; ++i) d.push_back(LabeledSample{FeatureImage{Vector::Zero(2)}, {std::uint8_t(a)}, std::uint8_t(p)});
  };
  add(0, 0, 5);
  add(0, 1, 1);
  add(1, 0, 2);
  add(1, 1, 2);
  const auto w = inverse_cell_weights(d, 0);
  REQUIRE(w.size() == 10);
  CHECK(w[0] == doctest::Approx(10.0 / 20.0));
  CHECK(w[5] == doctest::Approx(10.0 / 4.0));
  CHECK(w[6] == doctest::Approx(10.0 / 8.0));
  double total = 0.0;
  for (double x : w) total += x;
  CHECK(total == doctest::Approx(10.0));  // every cell carries a quarter of the mass
}

TEST_CASE("invalid training configs and inputs are rejected") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.focal_alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(weight_mode_from_string("balanced"), ConfigError);
  std::vector<FeatureImage> none;
  std::vector<std::uint8_t> nolabels;
  CHECK_THROWS_AS(train_on_labels(none, nolabels, {}, TrainConfig{}), InputError);
  const Blobs tr = blobs(10, 4, 15);
  std::vector<std::uint8_t> short_labels(tr.labels.begin(), tr.labels.begin() + 3);
  CHECK_THROWS_AS(train_on_labels(tr.images, short_labels, {}, TrainConfig{}), InputError);
}

TEST_CASE("classifiers round-trip through their text format") {
  for (int hidden : {0, 7}) {
    const Classifier c = make_classifier(5, hidden, 21);
    std::stringstream ss;
    save_classifier(ss, c);
    const Classifier back = load_classifier(ss);
    for (const auto& x : blobs(30, 5, 16).images) CHECK(back.logit(x.values) == doctest::Approx(c.logit(x.values)).epsilon(1e-14));
  }
  std::stringstream bad("vlbc-classifier 2\n");
  CHECK_THROWS_AS(load_classifier(bad), FormatError);
  std::stringstream truncated("vlbc-classifier 1\ninput_dim 3 hidden_width 0\n0.5 0.1\n");
  CHECK_THROWS_AS(load_classifier(truncated), FormatError);
}

TEST_CASE("focal loss vanishes as the true class becomes certain") {
  double prev = focal_loss(0.0, 1, 2.0, 0.25).loss;
  for (double z : {2.0, 5.0, 10.0, 20.0}) {
    const double l = focal_loss(z, 1, 2.0, 0.25).loss;
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-20);
  CHECK(focal_loss(-20.0, 0, 2.0, 0.25).loss < 1e-20);
}

TEST_CASE("inverse weights on the 100/20 table favour the minority five to one") {
  std::vector<LabeledSample> d;
  auto add = [&](int a, int p, int times) {
    for (int i = 0; i < times; ++i) d.push_back(LabeledSample{FeatureImage{Vector::Zero(2)}, {std::uint8_t(a)}, std::uint8_t(p)});
  };
  add(1, 0, 100);
  add(1, 1, 20);
  add(0, 0, 100);
  add(0, 1, 20);
  const auto w = inverse_cell_weights(d, 0);
  CHECK(w[100] / w[0] == doctest::Approx(5.0));
  CHECK(w[239] / w[120] == doctest::Approx(5.0));
}

TEST_CASE("prediction thresholds strictly above one half and is monotone in the logit") {
  Classifier c = make_classifier(3, 0, 1);
  c.output_weights = Vector::Zero(3);
  c.output_bias = 0.0;
  const FeatureImage x{Vector::Ones(3)};
  CHECK(predict(c, x).probability == 0.5);
  CHECK(predict(c, x).label == 0);
  double prev = 0.0;
  for (double b = -30.0; b <= 30.0; b += 0.25) {
    c.output_bias = b;
    const Prediction p = predict(c, x);
    CHECK(p.probability >= prev);
    prev = p.probability;
    CHECK(p.label == (b > 0.0 ? 1 : 0));
  }
  const Classifier m = make_classifier(3, 4, 2);
  CHECK(predict(m, x).probability == predict(m, x).probability);
  CHECK_THROWS_AS(predict(m, FeatureImage{Vector::Ones(4)}), DimensionError);
}
