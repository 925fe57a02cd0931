#pragma once

// Synthetic generative world: a seeded smooth generator from a semantic
// space S to feature space, half-space attribute semantics in S, and
// samplers for biased real datasets and synthetic pools.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlbc/common.hpp"

namespace vlbc {

struct SemanticCode {
  Vector values;
};

struct FeatureImage {
  Vector values;
};

enum class Origin { real, synthetic, augmented };

std::string to_string(Origin origin);
Origin origin_from_string(const std::string& tag);

struct LabeledSample {
  FeatureImage image;
  std::vector<std::uint8_t> attributes;  // M task attributes
  std::uint8_t protected_class = 0;
  Origin origin = Origin::real;
};

/// Declarative description of a world; `make_world` materializes it.
struct WorldConfig {
  int code_dim = 16;
  int feature_dim = 32;
  int num_attributes = 4;
  int num_protected = 1;
  double box_radius = 6.0;
  double generator_gain = 0.6;   // mixing entries ~ N(0, gain^2 / code_dim)
  double generator_bias = 0.0;   // pre-activation offsets ~ N(0, bias^2)
  double noise_std = 0.3;        // observation noise added to emitted images
  std::vector<double> thresholds;  // M + P entries; empty means all zero
  std::uint64_t seed = 1;
};

/// Materialized world. Directions are rows: the M task attributes first,
/// then the P protected characteristics.
struct WorldSpec {
  WorldConfig config;
  Matrix directions;  // (M+P) x d_s, unit norm, mutually orthogonal
  Vector thresholds;  // M+P
  Matrix mixing;      // d_x x d_s
  Vector offset;      // d_x

  int code_dim() const { return static_cast<int>(mixing.cols()); }
  int feature_dim() const { return static_cast<int>(mixing.rows()); }
  int num_attributes() const { return config.num_attributes; }
  int num_protected() const { return static_cast<int>(directions.rows()) - config.num_attributes; }
  int protected_direction(int k) const { return config.num_attributes + k; }
};

WorldSpec make_world(const WorldConfig& config);

/// x = tanh(mixing * s + offset). Deterministic and smooth.
FeatureImage generate(const SemanticCode& code, const WorldSpec& world);

/// d generate / d s at `code` (feature_dim x code_dim).
Matrix generator_jacobian(const SemanticCode& code, const WorldSpec& world);

/// Global Lipschitz constant of `generate`: the spectral norm of the mixing map
/// (tanh is 1-Lipschitz).
double generator_lipschitz(const WorldSpec& world);

/// label_j = 1 iff <code, direction_j> > threshold_j (ties are 0). Returns M+P bits.
std::vector<std::uint8_t> ground_truth_labels(const SemanticCode& code, const WorldSpec& world);

double projection(const SemanticCode& code, const WorldSpec& world, int direction_index);

/// Radially rescales codes whose norm exceeds `radius`.
SemanticCode clamp_to_box(SemanticCode code, double radius);

/// Draws s ~ N(0, I) clamped to the box radius.
SemanticCode sample_code(const WorldSpec& world, Rng& rng);

/// generate(code) plus the world's observation noise.
FeatureImage observe(const SemanticCode& code, const WorldSpec& world, Rng& rng);

/// Fraction of sampler codes on the positive side of a direction's threshold.
double natural_rate(const WorldSpec& world, int direction_index);

struct BiasSpec {
  int attribute_index = 0;
  double correlation = 0.0;      // rho in [-1, 1]
  double group_imbalance = 0.5;  // pi: fraction with protected = 1
  std::optional<double> attribute_rate;  // P(a = 1); defaults to the natural rate
};

/// Joint probabilities of the 2x2 (attribute, protected) cells, indexed [a][p].
using CellTable = std::array<std::array<double, 2>, 2>;

/// Solves the cell probabilities for (rho, pi, q). Throws ConfigError when the
/// combination violates the Frechet bounds.
CellTable solve_cells(const BiasSpec& bias, const WorldSpec& world);

struct RealDraw {
  std::vector<SemanticCode> codes;
  std::vector<LabeledSample> samples;
};

/// Biased real dataset with the latent codes it was generated from.
RealDraw sample_real_draw(std::size_t n, const BiasSpec& bias, const WorldSpec& world,
                          std::uint64_t seed);

std::vector<LabeledSample> sample_real_dataset(std::size_t n, const BiasSpec& bias,
                                               const WorldSpec& world, std::uint64_t seed);

struct PoolItem {
  SemanticCode code;
  FeatureImage image;
};

std::vector<PoolItem> sample_synthetic_pool(std::size_t n, const BiasSpec& pool_bias,
                                            const WorldSpec& world, std::uint64_t seed);

}  // namespace vlbc
