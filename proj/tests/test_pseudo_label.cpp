#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "vlbc/pseudo_label.hpp"

using namespace vlbc;

namespace {

WorldSpec quiet_world(double noise) {
  WorldConfig wc;
  wc.generator_gain = 0.3;  // close to the linear regime of tanh
  wc.noise_std = noise;
  return make_world(wc);
}

std::vector<LabeledSample> unbiased(const WorldSpec& w, std::size_t n, std::uint64_t seed) {
  return sample_real_dataset(n, BiasSpec{0, 0.0, 0.5, std::nullopt}, w, seed);
}

}  // namespace

TEST_CASE("noise-free near-linear world is labeled almost perfectly") {
  const WorldSpec w = quiet_world(0.0);
  const auto train = unbiased(w, 2000, 1);
  LabelerConfig cfg;
  cfg.training.learning_rate = 0.5;  // the default step underfits this clean a world in 30 epochs
  const PseudoLabeler f = fit_pseudo_labeler(train, cfg);
  REQUIRE(f.heads.size() == 5);
  CHECK(f.num_attributes() == 4);
  for (double acc : f.heldout_accuracy) CHECK(acc >= 0.95);
  for (bool c : f.constant_heads) CHECK_FALSE(c);

  // agreement with ground truth on fresh draws
  const auto test = unbiased(w, 1000, 2);
  std::vector<int> hits(5, 0);
  for (const auto& s : test) {
    const auto y = label_image(f, s.image);
    for (int h = 0; h < 4; ++h) hits[h] += y[h] == s.attributes[h];
    hits[4] += y[4] == s.protected_class;
  }
  for (int h : hits) CHECK(h >= 930);

  // a fresh pool agrees with the oracle about as well as the held-out split
  const auto pool = pseudo_label_pool(sample_synthetic_pool(1000, BiasSpec{0, 0.0, 0.5, std::nullopt}, w, 3), f);
  std::vector<int> agree(5, 0);
  for (const auto& item : pool) {
    const auto truth = ground_truth_labels(item.code, w);
    for (int h = 0; h < 5; ++h) agree[h] += item.labels[h] == truth[h];
  }
  for (int h = 0; h < 5; ++h) CHECK(agree[h] / 1000.0 >= f.heldout_accuracy[h] - 0.03);
}

TEST_CASE("fully random labels give chance-level held-out accuracy") {
  // One head fit to coin flips is some arbitrary hyperplane whose agreement
  // with the truth varies a lot, so average over heads and seeds.
  const WorldSpec w = quiet_world(0.0);
  const auto train = unbiased(w, 2000, 3);
  LabelerConfig cfg;
  cfg.noise_rate = 0.5;
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    cfg.seed = 100 + s;
    cfg.training.seed = 200 + s;
    for (double acc : fit_pseudo_labeler(train, cfg).heldout_accuracy) mean += acc / 30.0;
  }
  CHECK(mean > 0.45);
  CHECK(mean < 0.55);
}

TEST_CASE("moderate label noise costs little accuracy against clean held-out labels") {
  const WorldSpec w = quiet_world(0.0);
  const auto train = unbiased(w, 2000, 4);
  LabelerConfig cfg;
  cfg.noise_rate = 0.1;
  cfg.training.learning_rate = 0.5;
  const PseudoLabeler f = fit_pseudo_labeler(train, cfg);
  CHECK(f.noise_rate == 0.1);
  for (double acc : f.heldout_accuracy) CHECK(acc >= 0.9);
}

TEST_CASE("a single protected class yields a flagged constant head") {
  const WorldSpec w = quiet_world(0.1);
  auto train = unbiased(w, 300, 5);
  for (auto& s : train) s.protected_class = 0;
  const PseudoLabeler f = fit_pseudo_labeler(train, LabelerConfig{});
  CHECK(f.constant_heads.back());
  for (const auto& s : unbiased(w, 50, 6)) CHECK(label_image(f, s.image).back() == 0);
}

TEST_CASE("pool annotation carries codes and images through") {
  const WorldSpec w = quiet_world(0.1);
  const PseudoLabeler f = fit_pseudo_labeler(unbiased(w, 500, 7), LabelerConfig{});
  const auto pool = sample_synthetic_pool(40, BiasSpec{0, 0.0, 0.5, std::nullopt}, w, 8);
  const auto items = pseudo_label_pool(pool, f);
  REQUIRE(items.size() == pool.size());
  CHECK(pseudo_label_pool(std::span<const PoolItem>{}, f).empty());
  // labels depend on the image only: a reversed pool gets reversed labels
  const std::vector<PoolItem> reversed(pool.rbegin(), pool.rend());
  const auto again = pseudo_label_pool(reversed, f);
  for (std::size_t i = 0; i < items.size(); ++i) CHECK(again[items.size() - 1 - i].labels == items[i].labels);
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(items[i].code.values == pool[i].code.values);
    CHECK(items[i].image.values == pool[i].image.values);
    CHECK(items[i].labels == label_image(f, pool[i].image));
  }
}

TEST_CASE("the filter partitions its input by predicted protected class") {
  const WorldSpec w = quiet_world(0.1);
  const PseudoLabeler f = fit_pseudo_labeler(unbiased(w, 800, 9), LabelerConfig{});
  const auto batch = unbiased(w, 300, 10);
  const FilterResult to1 = filter_augmented(batch, f, 1);
  const FilterResult to0 = filter_augmented(batch, f, 0);
  CHECK(to1.kept.size() + to1.discarded.size() == batch.size());
  CHECK(to1.kept.size() == to0.discarded.size());
  for (const auto& s : to1.kept) CHECK(label_image(f, s.image).back() == 1);
  for (const auto& s : to1.discarded) CHECK(label_image(f, s.image).back() == 0);
  CHECK(filter_augmented(std::span<const LabeledSample>{}, f, 1).kept.empty());
}

TEST_CASE("fitting is deterministic and validates its config") {
  const WorldSpec w = quiet_world(0.2);
  const auto train = unbiased(w, 400, 11);
  const PseudoLabeler a = fit_pseudo_labeler(train, LabelerConfig{});
  const PseudoLabeler b = fit_pseudo_labeler(train, LabelerConfig{});
  CHECK(a.heldout_accuracy == b.heldout_accuracy);
  for (std::size_t h = 0; h < a.heads.size(); ++h) CHECK(a.heads[h].output_weights == b.heads[h].output_weights);

  LabelerConfig bad;
  bad.noise_rate = 0.6;
  CHECK_THROWS_AS(fit_pseudo_labeler(train, bad), ConfigError);
  bad = LabelerConfig{};
  bad.heldout_fraction = 1.0;
  CHECK_THROWS_AS(fit_pseudo_labeler(train, bad), ConfigError);
  CHECK_THROWS_AS(fit_pseudo_labeler(std::span<const LabeledSample>{}, LabelerConfig{}), InputError);
}

TEST_CASE("labelers round-trip through their text format") {
  const WorldSpec w = quiet_world(0.2);
  const PseudoLabeler f = fit_pseudo_labeler(unbiased(w, 300, 12), LabelerConfig{});
  std::stringstream ss;
  save_labeler(ss, f);
  const PseudoLabeler back = load_labeler(ss);
  CHECK(back.heldout_accuracy == f.heldout_accuracy);
  CHECK(back.constant_heads == f.constant_heads);
  for (const auto& s : unbiased(w, 100, 13)) CHECK(label_image(back, s.image) == label_image(f, s.image));
  std::stringstream bad("vlbc-labeler 1\nheads 1 noise_rate 0\n");
  CHECK_THROWS_AS(load_labeler(bad), FormatError);
}

TEST_CASE("walks that stop short of the threshold are what the filter discards") {
  // Source-class codes pushed along the protected direction by a fixed
  // amount; the oracle says which ones cross, the filter should agree.
  const WorldSpec w = quiet_world(0.0);
  LabelerConfig cfg;
  cfg.training.learning_rate = 0.5;
  const PseudoLabeler f = fit_pseudo_labeler(unbiased(w, 3000, 20), cfg);
  const int dir = w.protected_direction(0);
  const Vector u = w.directions.row(dir).transpose();

  Rng rng(21);
  std::vector<SemanticCode> sources;
  while (sources.size() < 1000) {
    SemanticCode c = sample_code(w, rng);
    if (ground_truth_labels(c, w).back() == 0) sources.push_back(c);
  }
  // step length that leaves 30% of the sources below the threshold
  std::vector<double> gaps;
  for (const auto& c : sources) gaps.push_back(w.thresholds[dir] - projection(c, w, dir));
  std::sort(gaps.begin(), gaps.end());
  const double step = gaps[700];

  std::vector<LabeledSample> aug;
  int stuck = 0;
  for (const auto& c : sources) {
    const SemanticCode moved{c.values + step * u};
    stuck += ground_truth_labels(moved, w).back() == 0;
    aug.push_back(LabeledSample{generate(moved, w), ground_truth_labels(moved, w), 1, Origin::augmented});
    aug.back().attributes.pop_back();
  }
  CHECK(stuck / 1000.0 == doctest::Approx(0.3).epsilon(0.01 / 0.3));
  const FilterResult r = filter_augmented(aug, f, 1);
  CHECK(r.discarded.size() / 1000.0 == doctest::Approx(0.3).epsilon(0.05 / 0.3));
}
