#pragma once

// Surrogate vision-language space: a normalized affine image encoder and
// semantic dipoles whose poles are anchored on prototype images. Each
// dipole induces a pole-to-pole vector field in embedding space.

#include <string>
#include <utility>
#include <vector>

#include "vlbc/synth_world.hpp"

namespace vlbc {

struct Embedding {
  Vector values;
};

/// e = normalize(weights * x + offset)
struct ImageEncoder {
  Matrix weights;  // d_e x d_x
  Vector offset;   // d_e
  std::uint64_t seed = 0;

  int embedding_dim() const { return static_cast<int>(weights.rows()); }
  int feature_dim() const { return static_cast<int>(weights.cols()); }
};

struct EncoderConfig {
  int embedding_dim = 24;
  double offset_scale = 0.5;  // |offset| relative to the typical |weights * x|
  std::uint64_t seed = 11;
};

ImageEncoder make_encoder(const EncoderConfig& config, int feature_dim);

Embedding encode(const FeatureImage& image, const ImageEncoder& encoder);

/// Pulls a cotangent on the embedding back to feature space (vector-Jacobian product).
Vector encode_vjp(const FeatureImage& image, const ImageEncoder& encoder, const Vector& cotangent);

/// Lipschitz bound of `encode` on the segment between two images:
/// 2 |W|_2 / (|W x1 + c| + |W x2 + c|) (Dunkl-Williams for the normalization).
double encoder_lipschitz_bound(const ImageEncoder& encoder, const FeatureImage& a, const FeatureImage& b);

struct SemanticDipole {
  std::string name;
  Embedding negative_pole;
  Embedding positive_pole;
  std::pair<std::string, std::string> prompts;  // (negative, positive), metadata only
  int protected_index = 0;
  double scale = 3.0;
  double gamma = 0.0;  // 0 until assigned
};

struct DipoleSpec {
  std::string name;
  std::string prompt_negative;
  std::string prompt_positive;
  int protected_index = 0;
  double scale = 3.0;
  double gamma = 0.0;  // <= 0 selects the median heuristic
};

/// Poles are encode(generate(-/+ scale * direction_k)). Rejects out-of-range k
/// and degenerate poles (cosine > 0.999). Unset bandwidths get the median heuristic.
std::vector<SemanticDipole> make_dipoles(const WorldSpec& world, const ImageEncoder& encoder,
                                         const std::vector<DipoleSpec>& specs);

/// 1 / (2 * median pairwise squared distance among all pole embeddings).
double median_heuristic_gamma(const std::vector<SemanticDipole>& dipoles);

/// exp(-g |e - positive|^2) - exp(-g |e - negative|^2)
double dipole_potential(const SemanticDipole& dipole, const Vector& e, double gamma);

struct FieldValue {
  Vector direction;
  bool zero_gradient = false;
};

/// Normalized gradient of `dipole_potential`.
FieldValue dipole_field(const SemanticDipole& dipole, const Embedding& e, double gamma);

double cosine(const Vector& a, const Vector& b);

}  // namespace vlbc
