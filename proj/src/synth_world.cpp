#include "vlbc/synth_world.hpp"

#include <cmath>

namespace vlbc {

std::string to_string(Origin origin) {
  switch (origin) {
    case Origin::real: return "real";
    case Origin::synthetic: return "synthetic";
    case Origin::augmented: return "augmented";
  }
  return "real";
}

Origin origin_from_string(const std::string& tag) {
  if (tag == "real") return Origin::real;
  if (tag == "synthetic") return Origin::synthetic;
  if (tag == "augmented") return Origin::augmented;
  throw FormatError("unknown origin tag '" + tag + "'");
}

WorldSpec make_world(const WorldConfig& config) {
  const int ds = config.code_dim;
  const int dx = config.feature_dim;
  const int m = config.num_attributes;
  const int p = config.num_protected;
  if (ds < 1 || dx < 1) throw ConfigError("world dimensions must be positive");
  if (m < 1 || p < 1) throw ConfigError("world needs at least one attribute and one protected characteristic");
  if (m + p > ds) throw ConfigError("attribute + protected count exceeds code dimension");
  if (config.box_radius <= 0.0) throw ConfigError("box_radius must be positive");
  if (config.noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (!config.thresholds.empty() && static_cast<int>(config.thresholds.size()) != m + p) {
    throw ConfigError("thresholds must list one value per attribute and protected characteristic");
  }

  Rng rng = make_rng(config.seed, "world");
  WorldSpec world;
  world.config = config;

  // Gram-Schmidt on Gaussian draws: pairwise cosine is exactly zero.
  world.directions.resize(m + p, ds);
  for (int j = 0; j < m + p; ++j) {
    for (;;) {
      Vector v = standard_normal(ds, rng);
      for (int i = 0; i < j; ++i) {
        const Vector prev = world.directions.row(i).transpose();
        v -= v.dot(prev) * prev;
      }
      const double norm = v.norm();
      if (norm > 1e-6) {
        world.directions.row(j) = (v / norm).transpose();
        break;
      }
    }
  }

  world.thresholds = Vector::Zero(m + p);
  for (std::size_t j = 0; j < config.thresholds.size(); ++j) world.thresholds[j] = config.thresholds[j];

  world.mixing.resize(dx, ds);
  const double scale = config.generator_gain / std::sqrt(static_cast<double>(ds));
  for (int r = 0; r < dx; ++r) world.mixing.row(r) = scale * standard_normal(ds, rng).transpose();
  world.offset = config.generator_bias * standard_normal(dx, rng);
  return world;
}

FeatureImage generate(const SemanticCode& code, const WorldSpec& world) {
  require_dim(code.values.size(), world.code_dim(), "generate");
  Vector pre = world.mixing * code.values + world.offset;
  return FeatureImage{pre.array().tanh().matrix()};
}

Matrix generator_jacobian(const SemanticCode& code, const WorldSpec& world) {
  require_dim(code.values.size(), world.code_dim(), "generator_jacobian");
  const Vector x = (world.mixing * code.values + world.offset).array().tanh().matrix();
  const Vector slope = (1.0 - x.array().square()).matrix();
  return slope.asDiagonal() * world.mixing;
}

double generator_lipschitz(const WorldSpec& world) {
  Eigen::JacobiSVD<Matrix> svd(world.mixing);
  return svd.singularValues()(0);
}

double projection(const SemanticCode& code, const WorldSpec& world, int direction_index) {
  require_dim(code.values.size(), world.code_dim(), "projection");
  return world.directions.row(direction_index).dot(code.values);
}

std::vector<std::uint8_t> ground_truth_labels(const SemanticCode& code, const WorldSpec& world) {
  require_dim(code.values.size(), world.code_dim(), "ground_truth_labels");
  const Vector proj = world.directions * code.values;
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(proj.size()));
  for (Eigen::Index j = 0; j < proj.size(); ++j) labels[j] = proj[j] > world.thresholds[j] ? 1 : 0;
  return labels;
}

SemanticCode clamp_to_box(SemanticCode code, double radius) {
  const double norm = code.values.norm();
  if (norm > radius) code.values *= radius / norm;
  return code;
}

SemanticCode sample_code(const WorldSpec& world, Rng& rng) {
  return clamp_to_box(SemanticCode{standard_normal(world.code_dim(), rng)}, world.config.box_radius);
}

FeatureImage observe(const SemanticCode& code, const WorldSpec& world, Rng& rng) {
  FeatureImage image = generate(code, world);
  if (world.config.noise_std > 0.0) image.values += world.config.noise_std * standard_normal(image.values.size(), rng);
  return image;
}

double natural_rate(const WorldSpec& world, int direction_index) {
  return 0.5 * std::erfc(world.thresholds[direction_index] / std::sqrt(2.0));
}

CellTable solve_cells(const BiasSpec& bias, const WorldSpec& world) {
  if (bias.attribute_index < 0 || bias.attribute_index >= world.num_attributes()) {
    throw ConfigError("bias attribute_index out of range");
  }
  if (bias.correlation < -1.0 || bias.correlation > 1.0) throw ConfigError("correlation must lie in [-1, 1]");
  if (bias.group_imbalance <= 0.0 || bias.group_imbalance >= 1.0) {
    throw ConfigError("group_imbalance must lie in (0, 1)");
  }
  const double q = bias.attribute_rate.value_or(natural_rate(world, bias.attribute_index));
  if (q <= 0.0 || q >= 1.0) throw ConfigError("attribute rate must lie in (0, 1)");
  const double pi = bias.group_imbalance;

  const double p11 = pi * q + bias.correlation * std::sqrt(pi * (1.0 - pi) * q * (1.0 - q));
  CellTable cells{};
  cells[1][1] = p11;
  cells[1][0] = q - p11;
  cells[0][1] = pi - p11;
  cells[0][0] = 1.0 - q - pi + p11;
  constexpr double tol = 1e-12;
  for (auto& row : cells) {
    for (double& c : row) {
      if (c < -tol) {
        throw ConfigError("infeasible bias: correlation " + std::to_string(bias.correlation) +
                          " with group_imbalance " + std::to_string(pi) + " and attribute rate " +
                          std::to_string(q) + " violates the Frechet bounds");
      }
      c = std::max(c, 0.0);
    }
  }
  return cells;
}

namespace {

constexpr int kMaxRejections = 200000;

// Rejection-samples a code into the requested (attribute, protected) cell.
SemanticCode code_in_cell(const WorldSpec& world, int attribute_direction, int a, int p, Rng& rng) {
  const int protected_direction = world.protected_direction(0);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    SemanticCode code = sample_code(world, rng);
    const int la = projection(code, world, attribute_direction) > world.thresholds[attribute_direction];
    const int lp = projection(code, world, protected_direction) > world.thresholds[protected_direction];
    if (la == a && lp == p) return code;
  }
  throw ConfigError("cell (a=" + std::to_string(a) + ", p=" + std::to_string(p) +
                    ") unreachable under the code sampler");
}

std::vector<SemanticCode> sample_biased_codes(std::size_t n, const BiasSpec& bias, const WorldSpec& world,
                                              Rng& rng) {
  if (n == 0) throw InputError("sample size must be at least 1");
  const CellTable cells = solve_cells(bias, world);
  std::discrete_distribution<int> pick({cells[0][0], cells[0][1], cells[1][0], cells[1][1]});
  std::vector<SemanticCode> codes;
  codes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cell = pick(rng);
    codes.push_back(code_in_cell(world, bias.attribute_index, cell / 2, cell % 2, rng));
  }
  return codes;
}

}  // namespace

RealDraw sample_real_draw(std::size_t n, const BiasSpec& bias, const WorldSpec& world, std::uint64_t seed) {
  Rng code_rng = make_rng(seed, "real-codes");
  Rng noise_rng = make_rng(seed, "real-noise");
  RealDraw draw;
  draw.codes = sample_biased_codes(n, bias, world, code_rng);
  draw.samples.reserve(n);
  const int m = world.num_attributes();
  for (const auto& code : draw.codes) {
    const auto labels = ground_truth_labels(code, world);
    LabeledSample sample;
    sample.image = observe(code, world, noise_rng);
    sample.attributes.assign(labels.begin(), labels.begin() + m);
    sample.protected_class = labels[world.protected_direction(0)];
    sample.origin = Origin::real;
    draw.samples.push_back(std::move(sample));
  }
  return draw;
}

std::vector<LabeledSample> sample_real_dataset(std::size_t n, const BiasSpec& bias, const WorldSpec& world,
                                               std::uint64_t seed) {
  return sample_real_draw(n, bias, world, seed).samples;
}

std::vector<PoolItem> sample_synthetic_pool(std::size_t n, const BiasSpec& pool_bias, const WorldSpec& world,
                                            std::uint64_t seed) {
  Rng code_rng = make_rng(seed, "pool-codes");
  Rng noise_rng = make_rng(seed, "pool-noise");
  auto codes = sample_biased_codes(n, pool_bias, world, code_rng);
  std::vector<PoolItem> pool;
  pool.reserve(n);
  for (auto& code : codes) {
    FeatureImage image = observe(code, world, noise_rng);
    pool.push_back(PoolItem{std::move(code), std::move(image)});
  }
  return pool;
}

}  // namespace vlbc
