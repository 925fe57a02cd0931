#include "vlbc/latent_paths.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

namespace vlbc {

namespace {

constexpr double kZeroGradient = 1e-12;

Vector potential_gradient(const WarpingField& field, const Vector& s) {
  Vector g = Vector::Zero(s.size());
  for (int i = 0; i < field.num_supports(); ++i) {
    const Vector u = s - field.supports.row(i).transpose();
    const double gamma = field.bandwidths[i];
    g += field.weights[i] * (-2.0 * gamma) * std::exp(-gamma * u.squaredNorm()) * u;
  }
  return g;
}

}  // namespace

WarpingField make_random_field(int code_dim, int num_supports, double bandwidth, double spread, Rng& rng) {
  if (num_supports < 1) throw ConfigError("a warping field needs at least one support");
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
  WarpingField f;
  f.supports.resize(num_supports, code_dim);
  for (int i = 0; i < num_supports; ++i) f.supports.row(i) = spread * standard_normal(code_dim, rng).transpose();
  f.weights = standard_normal(num_supports, rng);
  f.weights /= f.weights.norm();
  f.bandwidths = Vector::Constant(num_supports, bandwidth);
  return f;
}

void validate(const WarpingField& field) {
  if (field.num_supports() < 1) throw ConfigError("a warping field needs at least one support");
  if (field.weights.size() != field.num_supports() || field.bandwidths.size() != field.num_supports()) {
    throw ConfigError("warping field arrays disagree on the support count");
  }
  if ((field.bandwidths.array() <= 0.0).any()) throw ConfigError("warping field bandwidths must be positive");
}

double field_potential(const WarpingField& field, const Vector& s) {
  require_dim(s.size(), field.code_dim(), "field_potential");
  double phi = 0.0;
  for (int i = 0; i < field.num_supports(); ++i) {
    phi += field.weights[i] *
           std::exp(-field.bandwidths[i] * (s - field.supports.row(i).transpose()).squaredNorm());
  }
  return phi;
}

FieldValue field_at(const WarpingField& field, const SemanticCode& code) {
  require_dim(code.values.size(), field.code_dim(), "field_at");
  const Vector g = potential_gradient(field, code.values);
  const double norm = g.norm();
  if (norm < kZeroGradient) return FieldValue{Vector::Zero(g.size()), true};
  return FieldValue{g / norm, false};
}

void TraversalPolicy::validate() const {
  if (steps_min < 1 || steps_max < steps_min) {
    throw ConfigError("traversal policy needs 1 <= steps_min <= steps_max");
  }
  if (epsilon == 0.0 || !std::isfinite(epsilon)) throw ConfigError("traversal epsilon must be finite and nonzero");
}

std::vector<SemanticCode> traverse_trajectory(const SemanticCode& code, const WarpingField& field,
                                              double signed_step, int steps, double box_radius) {
  std::vector<SemanticCode> path{code};
  path.reserve(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t < steps; ++t) {
    const FieldValue dir = field_at(field, path.back());
    if (dir.zero_gradient) break;
    path.push_back(clamp_to_box(SemanticCode{path.back().values + signed_step * dir.direction}, box_radius));
  }
  return path;
}

TraversalResult traverse(const SemanticCode& code, const WarpingField& field, const TraversalPolicy& policy,
                         double box_radius, Rng& rng) {
  policy.validate();
  std::uniform_int_distribution<int> pick(policy.steps_min, policy.steps_max);
  const int steps = pick(rng);
  auto path = traverse_trajectory(code, field, policy.signed_step(), steps, box_radius);
  TraversalResult result;
  result.steps_used = static_cast<int>(path.size()) - 1;
  result.stalled = result.steps_used < steps;
  result.code = std::move(path.back());
  return result;
}

void PathTrainingConfig::validate() const {
  if (epochs < 0 || batch_size < 1 || train_codes < 1) throw ConfigError("path training sizes must be positive");
  if (!(step > 0.0)) throw ConfigError("path training step must be positive");
  if (!(temperature > 0.0)) throw ConfigError("path training temperature must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("path training learning rate must be positive");
  if (num_supports < 1) throw ConfigError("a warping field needs at least one support");
}

namespace {

// d cos(a, d) / d a
Vector cosine_grad(const Vector& a, const Vector& d, double cos_ad) {
  const double na = a.norm();
  return d / (na * d.norm()) - cos_ad * a / (na * na);
}

struct FieldForward {
  bool active = false;
  Vector u_grad;    // unnormalized potential gradient g
  double g_norm = 0.0;
  Vector zeta;      // g / |g|
  FeatureImage image_after;
  Vector delta_e;
};

}  // namespace

PathLoss path_loss(const std::vector<WarpingField>& fields, const std::vector<SemanticDipole>& dipoles,
                   const WorldSpec& world, const ImageEncoder& encoder, std::span<const SemanticCode> codes,
                   double step, double temperature, bool with_gradient) {
  const std::size_t k_count = fields.size();
  if (k_count == 0 || k_count != dipoles.size()) throw InputError("path_loss needs one field per dipole");
  if (codes.empty()) throw InputError("path_loss needs at least one code");

  PathLoss out;
  if (with_gradient) {
    for (const auto& f : fields) {
      out.d_supports.push_back(Matrix::Zero(f.supports.rows(), f.supports.cols()));
      out.d_weights.push_back(Vector::Zero(f.weights.size()));
    }
  }
  const double inv_b = 1.0 / static_cast<double>(codes.size());

  std::vector<FieldForward> fwd(k_count);
  std::vector<Vector> targets(k_count);
  Matrix cos_kj(k_count, k_count);
  for (const auto& code : codes) {
    const Vector& s = code.values;
    const Embedding e0 = encode(generate(code, world), encoder);
    for (std::size_t j = 0; j < k_count; ++j) {
      targets[j] = dipole_field(dipoles[j], e0, dipoles[j].gamma).direction;
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      FieldForward& f = fwd[k];
      f.u_grad = potential_gradient(fields[k], s);
      f.g_norm = f.u_grad.norm();
      f.active = f.g_norm >= kZeroGradient;
      if (!f.active) continue;
      f.zeta = f.u_grad / f.g_norm;
      f.image_after = generate(SemanticCode{s + step * f.zeta}, world);
      f.delta_e = encode(f.image_after, encoder).values - e0.values;
      if (f.delta_e.norm() < 1e-300) f.active = false;
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t j = 0; j < k_count; ++j) {
        const bool ok = fwd[k].active && targets[j].norm() > 0.0;
        cos_kj(k, j) = ok ? cosine(fwd[k].delta_e, targets[j]) : 0.0;
      }
    }

    // dL/dcos_kj for this code
    Matrix dcos = Matrix::Zero(k_count, k_count);
    if (k_count == 1) {
      out.loss += -cos_kj(0, 0) / temperature * inv_b;
      dcos(0, 0) = -1.0 / temperature * inv_b;
    } else {
      for (std::size_t k = 0; k < k_count; ++k) {
        const Vector logits = cos_kj.row(k).transpose() / temperature;
        const double mx = logits.maxCoeff();
        const Vector ex = (logits.array() - mx).exp().matrix();
        const double z = ex.sum();
        out.loss += (-logits[k] + mx + std::log(z)) * inv_b;
        for (std::size_t j = 0; j < k_count; ++j) {
          dcos(k, j) = ((ex[j] / z) - (j == k ? 1.0 : 0.0)) / temperature * inv_b;
        }
      }
    }
    if (!with_gradient) continue;

    for (std::size_t k = 0; k < k_count; ++k) {
      const FieldForward& f = fwd[k];
      if (!f.active) continue;
      Vector d_delta = Vector::Zero(f.delta_e.size());
      for (std::size_t j = 0; j < k_count; ++j) {
        if (dcos(k, j) == 0.0 || targets[j].norm() == 0.0) continue;
        d_delta += dcos(k, j) * cosine_grad(f.delta_e, targets[j], cos_kj(k, j));
      }
      // back through encode and generate at s' = s + step * zeta
      const Vector dx = encode_vjp(f.image_after, encoder, d_delta);
      const Vector dpre = (dx.array() * (1.0 - f.image_after.values.array().square())).matrix();
      const Vector d_zeta = step * (world.mixing.transpose() * dpre);
      const Vector dg = (d_zeta - f.zeta * f.zeta.dot(d_zeta)) / f.g_norm;

      const WarpingField& field = fields[k];
      for (int i = 0; i < field.num_supports(); ++i) {
        const Vector u = s - field.supports.row(i).transpose();
        const double gamma = field.bandwidths[i];
        const double w = std::exp(-gamma * u.squaredNorm());
        const double u_dg = u.dot(dg);
        out.d_weights[k][i] += -2.0 * gamma * w * u_dg;
        const double c = field.weights[i] * (-2.0 * gamma) * w;
        out.d_supports[k].row(i) += (c * (-dg + 2.0 * gamma * u * u_dg)).transpose();
      }
    }
  }
  return out;
}

PathTrainingResult train_paths(std::vector<WarpingField>& fields, const std::vector<SemanticDipole>& dipoles,
                               const WorldSpec& world, const ImageEncoder& encoder,
                               const PathTrainingConfig& config, const CodeSampler& sampler) {
  config.validate();
  if (fields.empty() || fields.size() != dipoles.size()) {
    throw InputError("train_paths needs K >= 1 fields and one dipole per field");
  }
  for (const auto& f : fields) {
    validate(f);
    require_dim(f.code_dim(), world.code_dim(), "train_paths field");
  }

  Rng rng = make_rng(config.seed, "path-training");
  std::vector<SemanticCode> codes;
  codes.reserve(static_cast<std::size_t>(config.train_codes));
  for (int i = 0; i < config.train_codes; ++i) codes.push_back(sampler(rng));

  PathTrainingResult result;
  result.initial_loss = path_loss(fields, dipoles, world, encoder, codes, config.step, config.temperature, false).loss;

  std::vector<std::size_t> order(codes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<SemanticCode> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // linear decay to 10% of the base rate over the run
    const double progress = config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1) : 0.0;
    const double lr = config.learning_rate * (1.0 - 0.9 * progress);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(codes[order[i]]);
      const PathLoss grad =
          path_loss(fields, dipoles, world, encoder, batch, config.step, config.temperature, true);
      for (std::size_t k = 0; k < fields.size(); ++k) {
        fields[k].supports -= lr * grad.d_supports[k];
        fields[k].weights -= lr * grad.d_weights[k];
        const double norm = fields[k].weights.norm();
        if (norm > 0.0) fields[k].weights /= norm;
      }
    }
    result.loss_trace.push_back(
        path_loss(fields, dipoles, world, encoder, codes, config.step, config.temperature, false).loss);
  }
  return result;
}

AlignmentStats alignment(const std::vector<WarpingField>& fields, const std::vector<SemanticDipole>& dipoles,
                         const WorldSpec& world, const ImageEncoder& encoder, std::span<const SemanticCode> codes,
                         double step) {
  const std::size_t k_count = fields.size();
  if (k_count == 0 || k_count != dipoles.size()) throw InputError("alignment needs one field per dipole");
  if (codes.empty()) throw InputError("alignment needs at least one code");
  AlignmentStats stats;
  stats.own.assign(k_count, 0.0);
  stats.best_other.assign(k_count, 0.0);
  for (const auto& code : codes) {
    const Embedding e0 = encode(generate(code, world), encoder);
    std::vector<Vector> targets;
    for (const auto& d : dipoles) targets.push_back(dipole_field(d, e0, d.gamma).direction);
    for (std::size_t k = 0; k < k_count; ++k) {
      const FieldValue z = field_at(fields[k], code);
      Vector delta = Vector::Zero(e0.values.size());
      if (!z.zero_gradient) {
        delta = encode(generate(SemanticCode{code.values + step * z.direction}, world), encoder).values - e0.values;
      }
      stats.own[k] += cosine(delta, targets[k]);
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k_count; ++j) {
        if (j != k) best = std::max(best, cosine(delta, targets[j]));
      }
      stats.best_other[k] += k_count > 1 ? best : 0.0;
    }
  }
  const double n = static_cast<double>(codes.size());
  stats.margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < k_count; ++k) {
    stats.own[k] /= n;
    stats.best_other[k] /= n;
    stats.margin = std::min(stats.margin, stats.own[k] - stats.best_other[k]);
  }
  return stats;
}

void save_fields(std::ostream& out, const std::vector<WarpingField>& fields, const std::string& gamma_policy) {
  if (fields.empty()) throw InputError("save_fields: nothing to save");
  out << "vlbc-warping-fields 1\n";
  out << "K " << fields.size() << " Q " << fields.front().num_supports() << " d_s " << fields.front().code_dim()
      << " gamma_policy " << gamma_policy << "\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const auto& f = fields[k];
    if (f.num_supports() != fields.front().num_supports() || f.code_dim() != fields.front().code_dim()) {
      throw InputError("save_fields: fields must share Q and d_s");
    }
    out << "field " << k << "\n";
    for (int i = 0; i < f.num_supports(); ++i) {
      out << f.weights[i] << ' ' << f.bandwidths[i];
      for (int c = 0; c < f.code_dim(); ++c) out << ' ' << f.supports(i, c);
      out << '\n';
    }
  }
}

std::vector<WarpingField> load_fields(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "vlbc-warping-fields" || version != 1) {
    throw FormatError("not a version-1 warping field file");
  }
  std::string key_k, key_q, key_d, key_g, policy;
  std::size_t k_count = 0;
  int q = 0, d = 0;
  if (!(in >> key_k >> k_count >> key_q >> q >> key_d >> d >> key_g >> policy) || key_k != "K" || key_q != "Q" ||
      key_d != "d_s" || key_g != "gamma_policy" || q < 1 || d < 1) {
    throw FormatError("malformed warping field header");
  }
  std::vector<WarpingField> fields;
  for (std::size_t k = 0; k < k_count; ++k) {
    std::string tag;
    std::size_t index = 0;
    if (!(in >> tag >> index) || tag != "field" || index != k) throw FormatError("malformed field block");
    WarpingField f;
    f.supports.resize(q, d);
    f.weights.resize(q);
    f.bandwidths.resize(q);
    for (int i = 0; i < q; ++i) {
      if (!(in >> f.weights[i] >> f.bandwidths[i])) throw FormatError("truncated field block");
      for (int c = 0; c < d; ++c) {
        if (!(in >> f.supports(i, c))) throw FormatError("truncated field block");
      }
    }
    validate(f);
    fields.push_back(std::move(f));
  }
  return fields;
}

}  // namespace vlbc
