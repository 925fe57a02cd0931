#include "vlbc/classify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>

namespace vlbc {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

constexpr double kMinProb = 1e-12;
constexpr double kConstantLogit = 10.0;

}  // namespace

FocalLoss focal_loss(double logit, int label, double gamma, double alpha) {
  if (!std::isfinite(logit)) throw InputError("focal_loss: logit must be finite");
  // ln p_t = -softplus(-z) for label 1, -softplus(z) for label 0
  const double sign = label == 1 ? 1.0 : -1.0;
  const double log_pt = std::max(-softplus(-sign * logit), std::log(kMinProb));
  const double pt = std::exp(log_pt);
  const double one_minus = 1.0 - pt;
  const double modulator = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
  FocalLoss out;
  out.loss = -alpha * modulator * log_pt;
  // dL/dz = alpha * sign * (1 - p_t)^gamma * (gamma * p_t * ln p_t - (1 - p_t))
  out.grad = alpha * sign * modulator * (gamma * pt * log_pt - one_minus);
  return out;
}

double Classifier::logit(const Vector& x) const {
  require_dim(x.size(), input_dim, "classifier");
  if (hidden_width == 0) return output_weights.dot(x) + output_bias;
  const Vector h = (hidden_weights * x + hidden_bias).array().tanh().matrix();
  return output_weights.dot(h) + output_bias;
}

Classifier make_classifier(int input_dim, int hidden_width, std::uint64_t seed) {
  if (input_dim < 1 || hidden_width < 0) throw ConfigError("classifier dimensions must be positive");
  Rng rng = make_rng(seed, "classifier-init");
  Classifier c;
  c.input_dim = input_dim;
  c.hidden_width = hidden_width;
  if (hidden_width == 0) {
    c.output_weights = Vector::Zero(input_dim);
    return c;
  }
  c.hidden_weights.resize(hidden_width, input_dim);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (int r = 0; r < hidden_width; ++r) c.hidden_weights.row(r) = s1 * standard_normal(input_dim, rng).transpose();
  c.hidden_bias = Vector::Zero(hidden_width);
  c.output_weights = standard_normal(hidden_width, rng) / std::sqrt(static_cast<double>(hidden_width));
  return c;
}

std::string to_string(WeightMode mode) {
  return mode == WeightMode::uniform ? "uniform" : "inverse_cell_frequency";
}

WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "uniform") return WeightMode::uniform;
  if (name == "inverse_cell_frequency") return WeightMode::inverse_cell_frequency;
  throw ConfigError("unknown weight mode '" + name + "'");
}

ClassifierGradient loss_gradient(const Classifier& c, std::span<const FeatureImage> images,
                                 std::span<const std::uint8_t> labels, std::span<const double> weights,
                                 std::span<const std::size_t> rows, double gamma, double alpha) {
  if (rows.empty()) throw InputError("loss_gradient: no rows");
  const bool linear = c.hidden_width == 0;
  const int h = c.hidden_width;
  ClassifierGradient g;
  if (!linear) {
    g.hidden_weights.setZero(h, c.input_dim);
    g.hidden_bias.setZero(h);
  }
  g.output_weights.setZero(c.output_weights.size());
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  Vector hidden(h);
  for (std::size_t idx : rows) {
    const Vector& x = images[idx].values;
    require_dim(x.size(), c.input_dim, "loss_gradient");
    const double w = weights.empty() ? 1.0 : weights[idx];
    double z;
    if (linear) {
      z = c.output_weights.dot(x) + c.output_bias;
    } else {
      hidden = (c.hidden_weights * x + c.hidden_bias).array().tanh().matrix();
      z = c.output_weights.dot(hidden) + c.output_bias;
    }
    const FocalLoss fl = focal_loss(z, labels[idx], gamma, alpha);
    g.loss += w * fl.loss * inv_b;
    const double dz = w * fl.grad * inv_b;
    g.output_bias += dz;
    if (linear) {
      g.output_weights += dz * x;
    } else {
      g.output_weights += dz * hidden;
      const Vector dpre = (dz * c.output_weights.array() * (1.0 - hidden.array().square())).matrix();
      g.hidden_bias += dpre;
      g.hidden_weights.noalias() += dpre * x.transpose();
    }
  }
  return g;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (focal_gamma < 0.0) throw ConfigError("focal gamma must be non-negative");
  if (!(focal_alpha > 0.0) || focal_alpha > 1.0) throw ConfigError("focal alpha must lie in (0, 1]");
  if (hidden_width < 0) throw ConfigError("hidden_width must be non-negative");
}

TrainResult train_on_labels(std::span<const FeatureImage> images, std::span<const std::uint8_t> labels,
                            std::span<const double> weights, const TrainConfig& config,
                            const std::optional<Classifier>& init) {
  config.validate();
  if (images.empty()) throw InputError("train: empty dataset");
  if (labels.size() != images.size()) throw InputError("train: one label per image required");
  if (!weights.empty() && weights.size() != images.size()) throw InputError("train: one weight per image required");
  const int dim = static_cast<int>(images.front().values.size());

  TrainResult result;
  result.classifier = init ? *init : make_classifier(dim, config.hidden_width, config.seed);
  Classifier& c = result.classifier;
  require_dim(dim, c.input_dim, "train");

  const auto positives = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    result.constant = true;
    c.hidden_weights.setZero();
    c.hidden_bias.setZero();
    c.output_weights.setZero();
    c.output_bias = positives == 0 ? -kConstantLogit : kConstantLogit;
    return result;
  }

  Rng rng = make_rng(config.seed, "classifier-sgd");
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const bool linear = c.hidden_width == 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto rows = std::span<const std::size_t>(order).subspan(start, stop - start);
      const ClassifierGradient g =
          loss_gradient(c, images, labels, weights, rows, config.focal_gamma, config.focal_alpha);
      epoch_loss += g.loss * static_cast<double>(rows.size());
      c.output_weights -= config.learning_rate * g.output_weights;
      c.output_bias -= config.learning_rate * g.output_bias;
      if (!linear) {
        c.hidden_weights -= config.learning_rate * g.hidden_weights;
        c.hidden_bias -= config.learning_rate * g.hidden_bias;
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(images.size()));
  }
  return result;
}

std::vector<double> inverse_cell_weights(std::span<const LabeledSample> dataset, int attribute_index) {
  std::array<std::array<std::size_t, 2>, 2> counts{};
  for (const auto& s : dataset) ++counts[s.attributes.at(attribute_index)][s.protected_class];
  std::vector<double> weights;
  weights.reserve(dataset.size());
  const double n = static_cast<double>(dataset.size());
  for (const auto& s : dataset) {
    weights.push_back(n / (4.0 * static_cast<double>(counts[s.attributes[attribute_index]][s.protected_class])));
  }
  return weights;
}

TrainResult train(std::span<const LabeledSample> dataset, int attribute_index, const TrainConfig& config,
                  const std::optional<Classifier>& init) {
  if (dataset.empty()) throw InputError("train: empty dataset");
  if (attribute_index < 0 || attribute_index >= static_cast<int>(dataset.front().attributes.size())) {
    throw InputError("train: attribute_index out of range");
  }
  std::vector<FeatureImage> images;
  std::vector<std::uint8_t> labels;
  images.reserve(dataset.size());
  labels.reserve(dataset.size());
  for (const auto& s : dataset) {
    images.push_back(s.image);
    labels.push_back(s.attributes[attribute_index]);
  }
  std::vector<double> weights;
  if (config.weight_mode == WeightMode::inverse_cell_frequency) weights = inverse_cell_weights(dataset, attribute_index);
  return train_on_labels(images, labels, weights, config, init);
}

Prediction predict(const Classifier& clf, const FeatureImage& image) {
  const double z = clf.logit(image.values);
  Prediction p;
  p.probability = 1.0 / (1.0 + std::exp(-z));
  p.label = p.probability > 0.5 ? 1 : 0;
  return p;
}

void save_classifier(std::ostream& out, const Classifier& clf) {
  out << "vlbc-classifier 1\n";
  out << "input_dim " << clf.input_dim << " hidden_width " << clf.hidden_width << "\n";
  out << std::setprecision(17);
  for (int r = 0; r < clf.hidden_width; ++r) {
    out << clf.hidden_bias[r];
    for (int c = 0; c < clf.input_dim; ++c) out << ' ' << clf.hidden_weights(r, c);
    out << '\n';
  }
  for (Eigen::Index i = 0; i < clf.output_weights.size(); ++i) out << (i ? " " : "") << clf.output_weights[i];
  out << '\n' << clf.output_bias << '\n';
}

Classifier load_classifier(std::istream& in) {
  std::string magic, k1, k2;
  int version = 0;
  Classifier c;
  if (!(in >> magic >> version) || magic != "vlbc-classifier" || version != 1) {
    throw FormatError("not a version-1 classifier file");
  }
  if (!(in >> k1 >> c.input_dim >> k2 >> c.hidden_width) || k1 != "input_dim" || k2 != "hidden_width" ||
      c.input_dim < 1 || c.hidden_width < 0) {
    throw FormatError("malformed classifier header");
  }
  const int h = c.hidden_width;
  c.hidden_weights.resize(h, c.input_dim);
  c.hidden_bias.resize(h);
  for (int r = 0; r < h; ++r) {
    if (!(in >> c.hidden_bias[r])) throw FormatError("truncated classifier");
    for (int col = 0; col < c.input_dim; ++col) {
      if (!(in >> c.hidden_weights(r, col))) throw FormatError("truncated classifier");
    }
  }
  c.output_weights.resize(h == 0 ? c.input_dim : h);
  for (Eigen::Index i = 0; i < c.output_weights.size(); ++i) {
    if (!(in >> c.output_weights[i])) throw FormatError("truncated classifier");
  }
  if (!(in >> c.output_bias)) throw FormatError("truncated classifier");
  return c;
}

}  // namespace vlbc
