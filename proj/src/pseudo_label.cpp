#include "vlbc/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>

namespace vlbc {

void LabelerConfig::validate() const {
  training.validate();
  if (!(heldout_fraction > 0.0) || heldout_fraction >= 1.0) throw ConfigError("heldout_fraction must lie in (0, 1)");
  if (noise_rate < 0.0 || noise_rate > 0.5) throw ConfigError("labeler noise_rate must lie in [0, 0.5]");
}

PseudoLabeler fit_pseudo_labeler(std::span<const LabeledSample> train, const LabelerConfig& config) {
  config.validate();
  if (train.empty()) throw InputError("fit_pseudo_labeler: empty training set");
  const int m = static_cast<int>(train.front().attributes.size());

  Rng split_rng = make_rng(config.seed, "labeler-split");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng);
  auto n_held = static_cast<std::size_t>(std::floor(config.heldout_fraction * static_cast<double>(train.size())));
  if (train.size() >= 2) n_held = std::clamp<std::size_t>(n_held, 1, train.size() - 1);
  else n_held = 0;
  const std::span<const std::size_t> held(order.data(), n_held);
  const std::span<const std::size_t> fit(order.data() + n_held, order.size() - n_held);

  std::vector<FeatureImage> images;
  images.reserve(fit.size());
  for (auto i : fit) images.push_back(train[i].image);

  auto label_of = [](const LabeledSample& s, int head, int m_attrs) -> std::uint8_t {
    return head < m_attrs ? s.attributes[head] : s.protected_class;
  };

  PseudoLabeler f;
  f.noise_rate = config.noise_rate;
  for (int head = 0; head <= m; ++head) {
    Rng noise_rng = make_rng(config.seed, "labeler-noise", static_cast<std::uint64_t>(head));
    std::bernoulli_distribution flip(config.noise_rate);
    std::vector<std::uint8_t> labels;
    labels.reserve(fit.size());
    for (auto i : fit) {
      std::uint8_t y = label_of(train[i], head, m);
      if (config.noise_rate > 0.0 && flip(noise_rng)) y = 1 - y;
      labels.push_back(y);
    }
    TrainConfig tc = config.training;
    tc.seed = derive_seed(config.training.seed, tag_of("labeler-head"), static_cast<std::uint64_t>(head));
    TrainResult r = train_on_labels(images, labels, {}, tc);

    double correct = 0.0;
    for (auto i : held) correct += predict(r.classifier, train[i].image).label == label_of(train[i], head, m);
    f.heldout_accuracy.push_back(held.empty() ? 0.0 : correct / static_cast<double>(held.size()));
    f.constant_heads.push_back(r.constant);
    f.heads.push_back(std::move(r.classifier));
  }
  return f;
}

std::vector<std::uint8_t> label_image(const PseudoLabeler& f, const FeatureImage& image) {
  std::vector<std::uint8_t> labels;
  labels.reserve(f.heads.size());
  for (const auto& head : f.heads) labels.push_back(static_cast<std::uint8_t>(predict(head, image).label));
  return labels;
}

std::vector<AnnotatedItem> pseudo_label_pool(std::span<const PoolItem> pool, const PseudoLabeler& f) {
  std::vector<AnnotatedItem> out;
  out.reserve(pool.size());
  for (const auto& item : pool) out.push_back(AnnotatedItem{item.code, item.image, label_image(f, item.image)});
  return out;
}

FilterResult filter_augmented(std::span<const LabeledSample> augmented, const PseudoLabeler& f, int target_protected) {
  FilterResult r;
  for (const auto& s : augmented) {
    if (predict(f.protected_head(), s.image).label == target_protected) r.kept.push_back(s);
    else r.discarded.push_back(s);
  }
  return r;
}

void save_labeler(std::ostream& out, const PseudoLabeler& f) {
  out << "vlbc-labeler 1\n" << std::setprecision(17);
  out << "heads " << f.heads.size() << " noise_rate " << f.noise_rate << "\n";
  for (std::size_t h = 0; h < f.heads.size(); ++h) {
    out << "head " << h << " constant " << (f.constant_heads[h] ? 1 : 0) << " heldout_accuracy "
        << f.heldout_accuracy[h] << "\n";
    save_classifier(out, f.heads[h]);
  }
}

PseudoLabeler load_labeler(std::istream& in) {
  std::string magic, k1, k2;
  int version = 0;
  std::size_t count = 0;
  PseudoLabeler f;
  if (!(in >> magic >> version) || magic != "vlbc-labeler" || version != 1) {
    throw FormatError("not a version-1 labeler file");
  }
  if (!(in >> k1 >> count >> k2 >> f.noise_rate) || k1 != "heads" || k2 != "noise_rate" || count < 2) {
    throw FormatError("malformed labeler header");
  }
  for (std::size_t h = 0; h < count; ++h) {
    std::string tag, kc, ka;
    std::size_t index = 0;
    int constant = 0;
    double acc = 0.0;
    if (!(in >> tag >> index >> kc >> constant >> ka >> acc) || tag != "head" || index != h) {
      throw FormatError("malformed labeler head");
    }
    f.constant_heads.push_back(constant != 0);
    f.heldout_accuracy.push_back(acc);
    f.heads.push_back(load_classifier(in));
  }
  return f;
}

}  // namespace vlbc
