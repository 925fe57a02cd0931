#pragma once

// The labeling network f: M attribute heads plus one protected-characteristic
// head, fit on a clean split and used to annotate and filter synthetic data.

#include <iosfwd>
#include <span>
#include <vector>

#include "vlbc/classify.hpp"

namespace vlbc {

struct PseudoLabeler {
  std::vector<Classifier> heads;        // M attribute heads, then the protected head
  std::vector<bool> constant_heads;     // head saw a single class at fit time
  std::vector<double> heldout_accuracy; // per head, on clean held-out labels
  double noise_rate = 0.0;              // symmetric label noise applied at fit time

  int num_attributes() const { return static_cast<int>(heads.size()) - 1; }
  const Classifier& protected_head() const { return heads.back(); }
};

struct LabelerConfig {
  TrainConfig training{0.05, 30, 16, 0.0, 1.0, WeightMode::uniform, 0, 13};
  double heldout_fraction = 0.2;
  double noise_rate = 0.0;  // kappa in [0, 0.5]
  std::uint64_t seed = 17;

  void validate() const;
};

PseudoLabeler fit_pseudo_labeler(std::span<const LabeledSample> train, const LabelerConfig& config);

/// M + 1 hard labels (attributes, then protected) for one image.
std::vector<std::uint8_t> label_image(const PseudoLabeler& f, const FeatureImage& image);

struct AnnotatedItem {
  SemanticCode code;
  FeatureImage image;
  std::vector<std::uint8_t> labels;  // M + 1
};

std::vector<AnnotatedItem> pseudo_label_pool(std::span<const PoolItem> pool, const PseudoLabeler& f);

struct FilterResult {
  std::vector<LabeledSample> kept;
  std::vector<LabeledSample> discarded;
};

/// Keeps samples whose predicted protected class equals `target_protected`.
FilterResult filter_augmented(std::span<const LabeledSample> augmented, const PseudoLabeler& f, int target_protected);

void save_labeler(std::ostream& out, const PseudoLabeler& f);
PseudoLabeler load_labeler(std::istream& in);

}  // namespace vlbc
