#include "vlbc/vl_embedding.hpp"

#include <algorithm>
#include <cmath>

namespace vlbc {

ImageEncoder make_encoder(const EncoderConfig& config, int feature_dim) {
  if (config.embedding_dim < 2) throw ConfigError("embedding_dim must be at least 2");
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  Rng rng = make_rng(config.seed, "encoder");
  ImageEncoder encoder;
  encoder.seed = config.seed;
  encoder.weights.resize(config.embedding_dim, feature_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (int r = 0; r < config.embedding_dim; ++r) {
    encoder.weights.row(r) = scale * standard_normal(feature_dim, rng).transpose();
  }
  const Vector dir = standard_normal(config.embedding_dim, rng);
  encoder.offset = config.offset_scale * dir / dir.norm();
  return encoder;
}

Embedding encode(const FeatureImage& image, const ImageEncoder& encoder) {
  require_dim(image.values.size(), encoder.feature_dim(), "encode");
  Vector y = encoder.weights * image.values + encoder.offset;
  const double norm = y.norm();
  if (norm == 0.0) throw InputError("encode: image maps onto the origin of embedding space");
  return Embedding{y / norm};
}

Vector encode_vjp(const FeatureImage& image, const ImageEncoder& encoder, const Vector& cotangent) {
  require_dim(image.values.size(), encoder.feature_dim(), "encode_vjp");
  const Vector y = encoder.weights * image.values + encoder.offset;
  const double norm = y.norm();
  const Vector e = y / norm;
  // d(y/|y|)/dy = (I - e e^T) / |y|, symmetric
  const Vector dy = (cotangent - e * e.dot(cotangent)) / norm;
  return encoder.weights.transpose() * dy;
}

double encoder_lipschitz_bound(const ImageEncoder& encoder, const FeatureImage& a, const FeatureImage& b) {
  Eigen::JacobiSVD<Matrix> svd(encoder.weights);
  const double op_norm = svd.singularValues()(0);
  const double ya = (encoder.weights * a.values + encoder.offset).norm();
  const double yb = (encoder.weights * b.values + encoder.offset).norm();
  return 2.0 * op_norm / (ya + yb);
}

double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double median_heuristic_gamma(const std::vector<SemanticDipole>& dipoles) {
  std::vector<const Vector*> poles;
  for (const auto& d : dipoles) {
    poles.push_back(&d.negative_pole.values);
    poles.push_back(&d.positive_pole.values);
  }
  std::vector<double> sq;
  for (std::size_t i = 0; i < poles.size(); ++i) {
    for (std::size_t j = i + 1; j < poles.size(); ++j) sq.push_back((*poles[i] - *poles[j]).squaredNorm());
  }
  if (sq.empty()) throw InputError("median heuristic needs at least one dipole");
  std::sort(sq.begin(), sq.end());
  const std::size_t n = sq.size();
  const double median = n % 2 == 1 ? sq[n / 2] : 0.5 * (sq[n / 2 - 1] + sq[n / 2]);
  if (median <= 0.0) throw InputError("median heuristic: poles coincide");
  return 1.0 / (2.0 * median);
}

std::vector<SemanticDipole> make_dipoles(const WorldSpec& world, const ImageEncoder& encoder,
                                         const std::vector<DipoleSpec>& specs) {
  std::vector<SemanticDipole> dipoles;
  for (const auto& spec : specs) {
    if (spec.protected_index < 0 || spec.protected_index >= world.num_protected()) {
      throw ConfigError("dipole '" + spec.name + "' references protected characteristic " +
                        std::to_string(spec.protected_index) + " which the world does not have");
    }
    if (spec.scale <= 0.0) throw ConfigError("dipole scale must be positive");
    const Vector dir = world.directions.row(world.protected_direction(spec.protected_index)).transpose();
    SemanticDipole d;
    d.name = spec.name;
    d.prompts = {spec.prompt_negative, spec.prompt_positive};
    d.protected_index = spec.protected_index;
    d.scale = spec.scale;
    d.gamma = spec.gamma;
    d.negative_pole = encode(generate(SemanticCode{-spec.scale * dir}, world), encoder);
    d.positive_pole = encode(generate(SemanticCode{spec.scale * dir}, world), encoder);
    if (cosine(d.negative_pole.values, d.positive_pole.values) > 0.999) {
      throw ConfigError("dipole '" + spec.name + "' is degenerate: poles nearly coincide");
    }
    dipoles.push_back(std::move(d));
  }
  if (!dipoles.empty()) {
    double fallback = 0.0;
    for (auto& d : dipoles) {
      if (d.gamma <= 0.0) {
        if (fallback == 0.0) fallback = median_heuristic_gamma(dipoles);
        d.gamma = fallback;
      }
    }
  }
  return dipoles;
}

double dipole_potential(const SemanticDipole& dipole, const Vector& e, double gamma) {
  return std::exp(-gamma * (e - dipole.positive_pole.values).squaredNorm()) -
         std::exp(-gamma * (e - dipole.negative_pole.values).squaredNorm());
}

FieldValue dipole_field(const SemanticDipole& dipole, const Embedding& e, double gamma) {
  if (!(gamma > 0.0)) throw InputError("dipole_field: gamma must be positive");
  require_dim(e.values.size(), dipole.positive_pole.values.size(), "dipole_field");
  const Vector to_pos = e.values - dipole.positive_pole.values;
  const Vector to_neg = e.values - dipole.negative_pole.values;
  const double wp = std::exp(-gamma * to_pos.squaredNorm());
  const double wn = std::exp(-gamma * to_neg.squaredNorm());
  const Vector grad = -2.0 * gamma * wp * to_pos + 2.0 * gamma * wn * to_neg;
  const double norm = grad.norm();
  if (norm < 1e-14) return FieldValue{Vector::Zero(grad.size()), true};
  return FieldValue{grad / norm, false};
}

}  // namespace vlbc
