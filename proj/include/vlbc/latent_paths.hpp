#pragma once

// Trainable RBF-warped vector fields in the semantic space. Each field is the
// normalized gradient of a sum of Gaussian bumps; traversing it edits one
// protected characteristic. Fields are trained so that the embedding-space
// motion they induce aligns with their dipole's field and not with the
// other dipoles' (InfoNCE over dipoles).

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vlbc/synth_world.hpp"
#include "vlbc/vl_embedding.hpp"

namespace vlbc {

struct WarpingField {
  Matrix supports;   // Q x d_s
  Vector weights;    // Q
  Vector bandwidths; // Q, all > 0

  int num_supports() const { return static_cast<int>(supports.rows()); }
  int code_dim() const { return static_cast<int>(supports.cols()); }
};

/// Random field: supports ~ spread * N(0, I), unit-length Gaussian weights, fixed bandwidth.
WarpingField make_random_field(int code_dim, int num_supports, double bandwidth, double spread, Rng& rng);

void validate(const WarpingField& field);

/// sum_i weights_i * exp(-bandwidth_i |s - q_i|^2)
double field_potential(const WarpingField& field, const Vector& s);

/// Normalized gradient of `field_potential`; zero vector + flag at stationary points.
FieldValue field_at(const WarpingField& field, const SemanticCode& code);

enum class TraversalDirection { toward_positive, toward_negative };

struct TraversalPolicy {
  double epsilon = 0.2;
  int steps_min = 3;
  int steps_max = 8;
  TraversalDirection direction = TraversalDirection::toward_positive;

  void validate() const;
  double signed_step() const { return direction == TraversalDirection::toward_positive ? epsilon : -epsilon; }
};

struct TraversalResult {
  SemanticCode code;
  int steps_used = 0;
  bool stalled = false;  // a zero-gradient point stopped the walk early
};

/// Applies `steps` updates s <- clamp(s + signed_step * field_at(s)). The returned
/// trajectory starts with the input code; it is shorter when a stationary point is hit.
std::vector<SemanticCode> traverse_trajectory(const SemanticCode& code, const WarpingField& field,
                                              double signed_step, int steps, double box_radius);

/// Draws E uniformly from [steps_min, steps_max] and walks E steps.
TraversalResult traverse(const SemanticCode& code, const WarpingField& field, const TraversalPolicy& policy,
                         double box_radius, Rng& rng);

struct PathTrainingConfig {
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 0.05;
  double step = 0.2;          // traversal step used inside the loss
  double temperature = 0.1;
  int train_codes = 512;
  int num_supports = 8;
  double init_spread = 2.0;
  std::uint64_t seed = 5;

  void validate() const;
};

struct PathLoss {
  double loss = 0.0;
  // Gradients, one entry per field; empty unless requested.
  std::vector<Matrix> d_supports;
  std::vector<Vector> d_weights;
};

/// Contrastive path loss over a batch of codes:
///   L = -(1/B) sum_s sum_k log softmax_j( cos(de_k(s), d_j(e_s)) / tau )[k]
/// with de_k(s) = encode(G(s + step * field_k(s))) - encode(G(s)). For a single
/// dipole the softmax is identically 1, so L = -(1/B) sum_s cos(de_1, d_1) / tau instead.
PathLoss path_loss(const std::vector<WarpingField>& fields, const std::vector<SemanticDipole>& dipoles,
                   const WorldSpec& world, const ImageEncoder& encoder, std::span<const SemanticCode> codes,
                   double step, double temperature, bool with_gradient);

using CodeSampler = std::function<SemanticCode(Rng&)>;

struct PathTrainingResult {
  std::vector<double> loss_trace;  // full training-set loss after each epoch
  double initial_loss = 0.0;
};

/// Minibatch gradient descent on supports and weights (bandwidths fixed); the
/// step size decays linearly from learning_rate to a tenth of it.
/// Weights are renormalized to unit length after each step; the field is
/// invariant to their overall scale.
PathTrainingResult train_paths(std::vector<WarpingField>& fields, const std::vector<SemanticDipole>& dipoles,
                               const WorldSpec& world, const ImageEncoder& encoder,
                               const PathTrainingConfig& config, const CodeSampler& sampler);

struct AlignmentStats {
  std::vector<double> own;         // mean cos(de_k, d_k), per field
  std::vector<double> best_other;  // mean max_{j != k} cos(de_k, d_j), per field
  double margin = 0.0;             // min_k (own_k - best_other_k)
};

AlignmentStats alignment(const std::vector<WarpingField>& fields, const std::vector<SemanticDipole>& dipoles,
                         const WorldSpec& world, const ImageEncoder& encoder, std::span<const SemanticCode> codes,
                         double step);

void save_fields(std::ostream& out, const std::vector<WarpingField>& fields, const std::string& gamma_policy);
std::vector<WarpingField> load_fields(std::istream& in);

}  // namespace vlbc
