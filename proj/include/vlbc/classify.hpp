#pragma once

// Downstream binary classifier: one tanh hidden layer (or a plain linear
// scorer when hidden_width == 0), trained with minibatch SGD on focal loss.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlbc/synth_world.hpp"

namespace vlbc {

struct FocalLoss {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d logit
};

/// p = sigmoid(logit); p_t = p for label 1 else 1 - p;
/// loss = -alpha (1 - p_t)^gamma ln p_t, with p_t clamped to >= 1e-12.
FocalLoss focal_loss(double logit, int label, double gamma, double alpha);

struct Classifier {
  int input_dim = 0;
  int hidden_width = 0;
  Matrix hidden_weights;  // h x d (empty when linear)
  Vector hidden_bias;     // h
  Vector output_weights;  // h, or d when linear
  double output_bias = 0.0;

  double logit(const Vector& x) const;
};

Classifier make_classifier(int input_dim, int hidden_width, std::uint64_t seed);

struct ClassifierGradient {
  double loss = 0.0;  // weighted mean focal loss over the rows
  Matrix hidden_weights;
  Vector hidden_bias;
  Vector output_weights;
  double output_bias = 0.0;
};

/// Weighted mean focal loss over `rows` (indices into images/labels/weights)
/// and its gradient with respect to every parameter. Empty weights = uniform.
ClassifierGradient loss_gradient(const Classifier& clf, std::span<const FeatureImage> images,
                                 std::span<const std::uint8_t> labels, std::span<const double> weights,
                                 std::span<const std::size_t> rows, double gamma, double alpha);

enum class WeightMode { uniform, inverse_cell_frequency };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 8;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  WeightMode weight_mode = WeightMode::uniform;
  int hidden_width = 32;
  std::uint64_t seed = 3;

  void validate() const;
};

struct TrainResult {
  Classifier classifier;
  std::vector<double> loss_trace;  // mean weighted focal loss per epoch
  bool constant = false;           // only one class was present
};

/// Low-level trainer on explicit labels and per-sample weights (empty = uniform).
TrainResult train_on_labels(std::span<const FeatureImage> images, std::span<const std::uint8_t> labels,
                            std::span<const double> weights, const TrainConfig& config,
                            const std::optional<Classifier>& init = std::nullopt);

/// Trains on `attribute_index` of the dataset. With `init` set this is a fine-tune.
TrainResult train(std::span<const LabeledSample> dataset, int attribute_index, const TrainConfig& config,
                  const std::optional<Classifier>& init = std::nullopt);

/// Per-sample weights N / (4 * count(cell)) over (attribute, protected) cells.
std::vector<double> inverse_cell_weights(std::span<const LabeledSample> dataset, int attribute_index);

struct Prediction {
  int label = 0;
  double probability = 0.0;
};

/// label = 1 iff probability > 0.5
Prediction predict(const Classifier& clf, const FeatureImage& image);

void save_classifier(std::ostream& out, const Classifier& clf);
Classifier load_classifier(std::istream& in);

}  // namespace vlbc
