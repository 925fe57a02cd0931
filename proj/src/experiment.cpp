#include "vlbc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vlbc/dataset_io.hpp"

namespace vlbc {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Method method) {
  switch (method) {
    case Method::baseline: return "baseline";
    case Method::baseline_sampling: return "baseline_sampling";
    case Method::weighting: return "weighting";
    case Method::vlbc_minus: return "vlbc_minus";
    case Method::vlbc_minus_nofilter: return "vlbc_minus_nofilter";
    case Method::vlbc_plus: return "vlbc_plus";
  }
  return "baseline";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::baseline, Method::baseline_sampling, Method::weighting, Method::vlbc_minus,
                   Method::vlbc_minus_nofilter, Method::vlbc_plus}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

// ---------------------------------------------------------------------------
// configuration

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.world.thresholds = {0.8416212335729143, 0.0, 0.0, 0.0, 0.0};  // attribute 0 positive for 20% of codes
  c.bias.attribute_index = 0;
  c.bias.correlation = 0.8;
  c.bias.group_imbalance = 0.2;
  c.dipoles = {DipoleSpec{"skin_color", "A pale skin face.", "A black face.", 0, 3.0, 0.0}};
  // Unit-variance codes: with 0.2 x 8 steps about 11% of the source class sits beyond reach.
  c.traversal.epsilon = 0.5;
  c.baseline_training = TrainConfig{1e-3, 100, 8, 2.0, 0.25, WeightMode::uniform, 32, 3};
  c.finetune_training = TrainConfig{1e-4, 50, 8, 2.0, 0.25, WeightMode::uniform, 32, 4};
  c.methods = {Method::baseline, Method::vlbc_minus, Method::vlbc_minus_nofilter};
  c.seeds = {0, 1, 2};
  return c;
}

std::size_t ExperimentConfig::effective_test_size() const {
  if (test_size > 0) return test_size;
  return static_cast<std::size_t>(std::llround(static_cast<double>(train_size) * 3.0 / 7.0));
}

BiasSpec ExperimentConfig::pool_bias() const {
  BiasSpec b = bias;
  b.correlation = pool.correlation;
  b.group_imbalance = pool.group_imbalance;
  return b;
}

BiasSpec ExperimentConfig::test_bias() const {
  BiasSpec b = bias;
  b.correlation = 0.0;
  b.group_imbalance = 0.5;
  return b;
}

void ExperimentConfig::validate() const {
  const WorldSpec w = make_world(world);
  solve_cells(bias, w);
  solve_cells(pool_bias(), w);
  solve_cells(test_bias(), w);
  if (train_size == 0 || labeler_size < 2 || pool.size == 0) throw ConfigError("dataset sizes must be positive");
  if (dipoles.empty()) throw ConfigError("at least one dipole is required");
  bool has_zero = false;
  for (const auto& d : dipoles) {
    if (d.protected_index < 0 || d.protected_index >= world.num_protected) {
      throw ConfigError("dipole '" + d.name + "' references a protected characteristic the world does not have");
    }
    has_zero |= d.protected_index == 0;
  }
  if (!has_zero) throw ConfigError("a dipole for protected characteristic 0 is required for traversal");
  if (encoder.embedding_dim < 2) throw ConfigError("embedding_dim must be at least 2");
  paths.validate();
  traversal.validate();
  labeler.validate();
  baseline_training.validate();
  finetune_training.validate();
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
}

namespace {

json train_to_json(const TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate}, {"epochs", t.epochs},
              {"batch_size", t.batch_size},       {"focal_gamma", t.focal_gamma},
              {"focal_alpha", t.focal_alpha},     {"weight_mode", to_string(t.weight_mode)},
              {"hidden_width", t.hidden_width},   {"seed", t.seed}};
}

TrainConfig train_from_json(const json& j, TrainConfig t) {
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.focal_gamma = j.value("focal_gamma", t.focal_gamma);
  t.focal_alpha = j.value("focal_alpha", t.focal_alpha);
  if (j.contains("weight_mode")) t.weight_mode = weight_mode_from_string(j.at("weight_mode").get<std::string>());
  t.hidden_width = j.value("hidden_width", t.hidden_width);
  t.seed = j.value("seed", t.seed);
  return t;
}

std::string direction_name(TraversalDirection d) {
  return d == TraversalDirection::toward_positive ? "toward_positive" : "toward_negative";
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["world"] = {{"code_dim", c.world.code_dim},
                {"feature_dim", c.world.feature_dim},
                {"num_attributes", c.world.num_attributes},
                {"num_protected", c.world.num_protected},
                {"box_radius", c.world.box_radius},
                {"generator_gain", c.world.generator_gain},
                {"generator_bias", c.world.generator_bias},
                {"noise_std", c.world.noise_std},
                {"thresholds", c.world.thresholds},
                {"seed", c.world.seed}};
  j["encoder"] = {{"embedding_dim", c.encoder.embedding_dim},
                  {"offset_scale", c.encoder.offset_scale},
                  {"seed", c.encoder.seed}};
  j["bias"] = {{"attribute_index", c.bias.attribute_index},
               {"correlation", c.bias.correlation},
               {"group_imbalance", c.bias.group_imbalance}};
  if (c.bias.attribute_rate) j["bias"]["attribute_rate"] = *c.bias.attribute_rate;
  j["train_size"] = c.train_size;
  j["test_size"] = c.test_size;
  j["labeler_size"] = c.labeler_size;
  j["pool"] = {{"size", c.pool.size}, {"correlation", c.pool.correlation}, {"group_imbalance", c.pool.group_imbalance}};
  j["dipoles"] = json::array();
  for (const auto& d : c.dipoles) {
    j["dipoles"].push_back({{"name", d.name},
                            {"prompt_negative", d.prompt_negative},
                            {"prompt_positive", d.prompt_positive},
                            {"k", d.protected_index},
                            {"scale", d.scale},
                            {"gamma", d.gamma}});
  }
  j["paths"] = {{"epochs", c.paths.epochs},
                {"batch_size", c.paths.batch_size},
                {"learning_rate", c.paths.learning_rate},
                {"step", c.paths.step},
                {"temperature", c.paths.temperature},
                {"train_codes", c.paths.train_codes},
                {"num_supports", c.paths.num_supports},
                {"init_spread", c.paths.init_spread},
                {"seed", c.paths.seed}};
  j["traversal"] = {{"epsilon", c.traversal.epsilon},
                    {"steps_min", c.traversal.steps_min},
                    {"steps_max", c.traversal.steps_max},
                    {"direction", direction_name(c.traversal.direction)}};
  j["labeler"] = {{"training", train_to_json(c.labeler.training)},
                  {"heldout_fraction", c.labeler.heldout_fraction},
                  {"noise_rate", c.labeler.noise_rate},
                  {"seed", c.labeler.seed}};
  j["baseline_training"] = train_to_json(c.baseline_training);
  j["finetune_training"] = train_to_json(c.finetune_training);
  j["methods"] = json::array();
  for (Method m : c.methods) j["methods"].push_back(to_string(m));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& input) {
  const json& j = input.contains("config") && input.at("config").is_object() ? input.at("config") : input;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c = ExperimentConfig::defaults();
  try {
    if (j.contains("world")) {
      const json& w = j.at("world");
      c.world.code_dim = w.value("code_dim", c.world.code_dim);
      c.world.feature_dim = w.value("feature_dim", c.world.feature_dim);
      c.world.num_attributes = w.value("num_attributes", c.world.num_attributes);
      c.world.num_protected = w.value("num_protected", c.world.num_protected);
      c.world.box_radius = w.value("box_radius", c.world.box_radius);
      c.world.generator_gain = w.value("generator_gain", c.world.generator_gain);
      c.world.generator_bias = w.value("generator_bias", c.world.generator_bias);
      c.world.noise_std = w.value("noise_std", c.world.noise_std);
      c.world.thresholds = w.value("thresholds", c.world.thresholds);
      c.world.seed = w.value("seed", c.world.seed);
      if (!w.contains("thresholds") &&
          static_cast<int>(c.world.thresholds.size()) != c.world.num_attributes + c.world.num_protected) {
        c.world.thresholds.clear();
      }
    }
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      c.encoder.embedding_dim = e.value("embedding_dim", c.encoder.embedding_dim);
      c.encoder.offset_scale = e.value("offset_scale", c.encoder.offset_scale);
      c.encoder.seed = e.value("seed", c.encoder.seed);
    }
    if (j.contains("bias")) {
      const json& b = j.at("bias");
      c.bias.attribute_index = b.value("attribute_index", c.bias.attribute_index);
      c.bias.correlation = b.value("correlation", c.bias.correlation);
      c.bias.group_imbalance = b.value("group_imbalance", c.bias.group_imbalance);
      if (b.contains("attribute_rate") && !b.at("attribute_rate").is_null()) {
        c.bias.attribute_rate = b.at("attribute_rate").get<double>();
      }
    }
    c.train_size = j.value("train_size", c.train_size);
    c.test_size = j.value("test_size", c.test_size);
    c.labeler_size = j.value("labeler_size", c.labeler_size);
    if (j.contains("pool")) {
      const json& p = j.at("pool");
      c.pool.size = p.value("size", c.pool.size);
      c.pool.correlation = p.value("correlation", c.pool.correlation);
      c.pool.group_imbalance = p.value("group_imbalance", c.pool.group_imbalance);
    }
    if (j.contains("dipoles")) {
      c.dipoles.clear();
      for (const auto& d : j.at("dipoles")) {
        DipoleSpec s;
        s.name = d.value("name", std::string("dipole"));
        s.prompt_negative = d.value("prompt_negative", std::string());
        s.prompt_positive = d.value("prompt_positive", std::string());
        s.protected_index = d.value("k", 0);
        s.scale = d.value("scale", 3.0);
        s.gamma = d.value("gamma", 0.0);
        c.dipoles.push_back(s);
      }
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      c.paths.epochs = p.value("epochs", c.paths.epochs);
      c.paths.batch_size = p.value("batch_size", c.paths.batch_size);
      c.paths.learning_rate = p.value("learning_rate", c.paths.learning_rate);
      c.paths.step = p.value("step", c.paths.step);
      c.paths.temperature = p.value("temperature", c.paths.temperature);
      c.paths.train_codes = p.value("train_codes", c.paths.train_codes);
      c.paths.num_supports = p.value("num_supports", c.paths.num_supports);
      c.paths.init_spread = p.value("init_spread", c.paths.init_spread);
      c.paths.seed = p.value("seed", c.paths.seed);
    }
    if (j.contains("traversal")) {
      const json& t = j.at("traversal");
      c.traversal.epsilon = t.value("epsilon", c.traversal.epsilon);
      c.traversal.steps_min = t.value("steps_min", c.traversal.steps_min);
      c.traversal.steps_max = t.value("steps_max", c.traversal.steps_max);
      const std::string dir = t.value("direction", direction_name(c.traversal.direction));
      if (dir == "toward_positive") c.traversal.direction = TraversalDirection::toward_positive;
      else if (dir == "toward_negative") c.traversal.direction = TraversalDirection::toward_negative;
      else throw ConfigError("unknown traversal direction '" + dir + "'");
    }
    if (j.contains("labeler")) {
      const json& l = j.at("labeler");
      if (l.contains("training")) c.labeler.training = train_from_json(l.at("training"), c.labeler.training);
      c.labeler.heldout_fraction = l.value("heldout_fraction", c.labeler.heldout_fraction);
      c.labeler.noise_rate = l.value("noise_rate", c.labeler.noise_rate);
      c.labeler.seed = l.value("seed", c.labeler.seed);
    }
    if (j.contains("baseline_training")) c.baseline_training = train_from_json(j.at("baseline_training"), c.baseline_training);
    if (j.contains("finetune_training")) c.finetune_training = train_from_json(j.at("finetune_training"), c.finetune_training);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    }
    if (j.contains("method")) c.methods = {method_from_string(j.at("method").get<std::string>())};
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// per-seed pipeline

namespace {

std::uint64_t sub_seed(std::uint64_t seed, const char* purpose, std::uint64_t base = 0) {
  return derive_seed(seed, tag_of(purpose), base);
}

}  // namespace

TrainResult train_baseline(const ExperimentConfig& config, std::uint64_t seed, std::span<const LabeledSample> train_set) {
  TrainConfig tc = config.baseline_training;
  tc.seed = sub_seed(seed, "baseline", tc.seed);
  return train(train_set, config.bias.attribute_index, tc);
}

SeedContext prepare_seed(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  SeedContext ctx;
  ctx.seed = seed;
  ctx.world = make_world(config.world);
  ctx.encoder = make_encoder(config.encoder, ctx.world.feature_dim());

  ctx.train = sample_real_dataset(config.train_size, config.bias, ctx.world, sub_seed(seed, "train-set"));
  ctx.test = sample_real_dataset(config.effective_test_size(), config.test_bias(), ctx.world, sub_seed(seed, "test-set"));
  const auto labeler_set =
      sample_real_dataset(config.labeler_size, config.test_bias(), ctx.world, sub_seed(seed, "labeler-set"));

  LabelerConfig lc = config.labeler;
  lc.seed = sub_seed(seed, "labeler", lc.seed);
  ctx.labeler = fit_pseudo_labeler(labeler_set, lc);

  const auto pool = sample_synthetic_pool(config.pool.size, config.pool_bias(), ctx.world, sub_seed(seed, "pool"));
  ctx.pool = pseudo_label_pool(pool, ctx.labeler);

  ctx.dipoles = make_dipoles(ctx.world, ctx.encoder, config.dipoles);
  PathTrainingConfig pc = config.paths;
  pc.seed = sub_seed(seed, "paths", pc.seed);
  const double bandwidth = 1.0 / static_cast<double>(ctx.world.code_dim());
  for (std::size_t k = 0; k < ctx.dipoles.size(); ++k) {
    Rng init = make_rng(pc.seed, "field-init", k);
    ctx.fields.push_back(make_random_field(ctx.world.code_dim(), pc.num_supports, bandwidth, pc.init_spread, init));
  }
  const WorldSpec& world = ctx.world;
  ctx.path_training = train_paths(ctx.fields, ctx.dipoles, ctx.world, ctx.encoder, pc,
                                  [&world](Rng& rng) { return sample_code(world, rng); });

  ctx.baseline = train_baseline(config, seed, ctx.train);
  ctx.stats = compute_stats(ctx.train, config.bias.attribute_index);
  return ctx;
}

namespace {

// Field used for traversal: the one whose dipole edits protected characteristic 0.
std::size_t traversal_field(const SeedContext& ctx) {
  for (std::size_t k = 0; k < ctx.dipoles.size(); ++k) {
    if (ctx.dipoles[k].protected_index == 0) return k;
  }
  throw ConfigError("no dipole for protected characteristic 0");
}

}  // namespace

MethodOutcome run_method(const ExperimentConfig& config, const SeedContext& ctx, Method method) {
  const int attr = config.bias.attribute_index;
  MethodOutcome out;
  out.method = method;
  if (method == Method::baseline) {
    out.report = evaluate_suite(ctx.baseline.classifier, ctx.test, attr);
    return out;
  }
  TrainConfig ft = config.finetune_training;
  ft.seed = sub_seed(ctx.seed, "finetune", ft.seed);
  if (method == Method::weighting) {
    ft.weight_mode = WeightMode::inverse_cell_frequency;
    out.finetune = train(ctx.train, attr, ft, ctx.baseline.classifier);
    out.report = evaluate_suite(out.finetune->classifier, ctx.test, attr);
    return out;
  }

  AugmentationPlan plan;
  AugmentOptions options;
  options.seed = sub_seed(ctx.seed, "augment");
  switch (method) {
    case Method::baseline_sampling:
      plan = plan_sample_only(ctx.stats);
      options.filtering = false;
      break;
    case Method::vlbc_minus: plan = plan_mitigation(ctx.stats); break;
    case Method::vlbc_minus_nofilter:
      plan = plan_mitigation(ctx.stats);
      options.filtering = false;
      break;
    case Method::vlbc_plus: plan = plan_amplification(ctx.stats); break;
    default: break;
  }
  out.plan = plan;
  const std::size_t k = traversal_field(ctx);
  out.augment = select_and_augment(plan, ctx.pool, std::span<const WarpingField>(&ctx.fields[k], 1), 0,
                                   config.traversal, ctx.labeler, ctx.world, options);
  const auto merged = merge(ctx.train, out.augment->samples);
  out.finetune = train(merged, attr, ft, ctx.baseline.classifier);
  out.report = evaluate_suite(out.finetune->classifier, ctx.test, attr);
  return out;
}

// ---------------------------------------------------------------------------
// output

namespace {

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "--"; }

class RunWriter {
 public:
  explicit RunWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void write(const fs::path& relative, const std::string& content) {
    const fs::path full = root_ / relative;
    fs::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary);
    if (!out) throw InputError("cannot write " + full.string());
    out << content;
    artifacts_.push_back(relative.generic_string());
  }

  template <typename Fn>
  void write_with(const fs::path& relative, Fn&& fn) {
    std::ostringstream ss;
    fn(ss);
    write(relative, ss.str());
  }

  void write_manifest(const ExperimentConfig& config, const std::string& command, const json& extra) {
    json m;
    m["format"] = "vlbc-manifest";
    m["version"] = 1;
    m["command"] = command;
    m["config"] = to_json(config);
    m["seeds"] = config.seeds;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    m["artifacts"] = artifacts_;
    std::ofstream out(root_ / "manifest.json", std::ios::binary);
    out << m.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::vector<std::string> artifacts_;
};

std::string loss_csv(const std::vector<double>& trace) {
  std::string s = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) s += std::to_string(i + 1) + "," + fmt(trace[i], "%.10g") + "\n";
  return s;
}

json stats_json(const DatasetStats& st) {
  return json{{"attribute_index", st.attribute_index},
              {"counts", {{"a0_p0", st.counts[0][0]}, {"a0_p1", st.counts[0][1]}, {"a1_p0", st.counts[1][0]},
                          {"a1_p1", st.counts[1][1]}}},
              {"total", st.total},
              {"minority_protected", st.minority_protected},
              {"tie", st.tie},
              {"deficits", {st.deficits[0], st.deficits[1]}}};
}

json report_json(const FairnessReport& r) {
  auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
  return json{{"accuracy", r.accuracy},        {"f1", r.f1},
              {"f1_defined", r.f1_defined},    {"acc_diff", opt(r.acc_diff)},
              {"delta_A", opt(r.delta_a)},     {"delta_M", opt(r.delta_m)},
              {"gap_defined", r.gap_defined},  {"group_sizes", r.group_sizes}};
}

std::string task_name(const ExperimentConfig& config) { return "attr" + std::to_string(config.bias.attribute_index); }

}  // namespace

std::string results_csv_header() {
  return "task,method,seed,accuracy,f1,acc_diff,delta_A,delta_M,n_p0,n_p1,augmented,shortfall";
}

std::string results_csv_row(const ResultRow& r) {
  return r.task + "," + r.method + "," + std::to_string(r.seed) + "," + fmt(r.report.accuracy) + "," +
         fmt(r.report.f1) + "," + fmt_opt(r.report.acc_diff) + "," + fmt_opt(r.report.delta_a) + "," +
         fmt_opt(r.report.delta_m) + "," + std::to_string(r.report.group_sizes[0]) + "," +
         std::to_string(r.report.group_sizes[1]) + "," + std::to_string(r.augmented) + "," +
         std::to_string(r.shortfall);
}

namespace {

void write_seed_artifacts(RunWriter& out, const ExperimentConfig& config, const SeedContext& ctx) {
  const fs::path dir = "seed_" + std::to_string(ctx.seed);
  out.write_with(dir / "baseline_weights.txt", [&](std::ostream& s) { save_classifier(s, ctx.baseline.classifier); });
  out.write(dir / "baseline_loss.csv", loss_csv(ctx.baseline.loss_trace));
  out.write_with(dir / "fields.txt", [&](std::ostream& s) { save_fields(s, ctx.fields, "fixed_inverse_code_dim"); });
  out.write(dir / "path_loss.csv", loss_csv(ctx.path_training.loss_trace));
  out.write_with(dir / "labeler.txt", [&](std::ostream& s) { save_labeler(s, ctx.labeler); });
  out.write(dir / "stats.json", stats_json(ctx.stats).dump(2) + "\n");
  (void)config;
}

ResultRow write_method_artifacts(RunWriter& out, const ExperimentConfig& config, const SeedContext& ctx,
                                 const MethodOutcome& mo) {
  const fs::path dir = fs::path("seed_" + std::to_string(ctx.seed)) / to_string(mo.method);
  ResultRow row{task_name(config), to_string(mo.method), ctx.seed, mo.report, 0, 0};
  out.write(dir / "report.json", report_json(mo.report).dump(2) + "\n");
  if (mo.plan) {
    const auto& p = *mo.plan;
    out.write(dir / "plan.json", json{{"mode", to_string(p.mode)},
                                      {"attribute_index", p.attribute_index},
                                      {"quotas", p.quotas},
                                      {"source_protected", p.source_protected},
                                      {"target_protected", p.target_protected}}
                                     .dump(2) + "\n");
  }
  if (mo.augment) {
    const auto& a = *mo.augment;
    row.augmented = a.samples.size();
    row.shortfall = a.total_shortfall();
    out.write(dir / "shortfall.json", json{{"shortfall", a.shortfall},
                                           {"eligible", a.eligible},
                                           {"produced", a.samples.size()},
                                           {"discarded", a.discarded},
                                           {"traversals_stalled", a.traversals_stalled}}
                                          .dump(2) + "\n");
    out.write_with(dir / "augmented.txt", [&](std::ostream& s) {
      write_dataset(s, a.samples, ctx.world.feature_dim(), ctx.world.num_attributes());
    });
  }
  if (mo.finetune) {
    out.write(dir / "finetune_loss.csv", loss_csv(mo.finetune->loss_trace));
    out.write_with(dir / "weights.txt", [&](std::ostream& s) { save_classifier(s, mo.finetune->classifier); });
  }
  return row;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  RunWriter out(config.output_dir);
  std::vector<ResultRow> rows;
  for (std::uint64_t seed : config.seeds) {
    const SeedContext ctx = prepare_seed(config, seed);
    write_seed_artifacts(out, config, ctx);
    for (Method m : config.methods) rows.push_back(write_method_artifacts(out, config, ctx, run_method(config, ctx, m)));
  }
  std::string csv = results_csv_header() + "\n";
  for (const auto& r : rows) csv += results_csv_row(r) + "\n";
  out.write("results.csv", csv);
  out.write_manifest(config, "run", json::object());
  return rows;
}

// ---------------------------------------------------------------------------
// ablation

std::string sweep_point_label(double fraction) { return fmt(fraction, "%.2f"); }

std::vector<LabeledSample> subsample_minority(std::span<const LabeledSample> data, int attribute_index,
                                              double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("ablation fractions must lie in (0, 1]");
  const DatasetStats st = compute_stats(data, attribute_index);
  const int minority = st.minority_protected;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].protected_class == minority) members.push_back(i);
  }
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size()) - 1e-9));
  if (keep == 0) throw ConfigError("fraction " + fmt(fraction) + " leaves the minority cell empty");
  Rng rng = make_rng(seed, "ablation-subsample");
  std::shuffle(members.begin(), members.end(), rng);
  std::vector<bool> drop(data.size(), false);
  for (std::size_t i = keep; i < members.size(); ++i) drop[members[i]] = true;
  std::vector<LabeledSample> out;
  out.reserve(data.size() - (members.size() - keep));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!drop[i]) out.push_back(data[i]);
  }
  return out;
}

std::vector<SweepRow> run_ablation(const ExperimentConfig& config, const std::vector<double>& fractions) {
  config.validate();
  if (fractions.empty()) throw ConfigError("ablation needs at least one fraction");
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) throw ConfigError("ablation fractions must lie in (0, 1]");
  }
  RunWriter out(config.output_dir);
  std::vector<SweepRow> rows;
  std::vector<ResultRow> final_rows;
  for (std::uint64_t seed : config.seeds) {
    const SeedContext ctx = prepare_seed(config, seed);
    write_seed_artifacts(out, config, ctx);
    std::vector<std::pair<std::string, FairnessReport>> points;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      const double f = fractions[i];
      FairnessReport rep;
      if (f == 1.0) {
        rep = evaluate_suite(ctx.baseline.classifier, ctx.test, config.bias.attribute_index);
      } else {
        const auto sub = subsample_minority(ctx.train, config.bias.attribute_index, f, sub_seed(seed, "ablation", i));
        const TrainResult tr = train_baseline(config, seed, sub);
        rep = evaluate_suite(tr.classifier, ctx.test, config.bias.attribute_index);
      }
      points.emplace_back(sweep_point_label(f), rep);
    }
    for (Method m : config.methods) {
      for (const auto& [label, rep] : points) rows.push_back(SweepRow{to_string(m), label, seed, rep.accuracy, rep.acc_diff});
      const MethodOutcome mo = run_method(config, ctx, m);
      final_rows.push_back(write_method_artifacts(out, config, ctx, mo));
      rows.push_back(SweepRow{to_string(m), "1.0+aug", seed, mo.report.accuracy, mo.report.acc_diff});
    }
  }
  std::string csv = "method,point,seed,accuracy,acc_diff\n";
  for (const auto& r : rows) {
    csv += r.method + "," + r.point + "," + std::to_string(r.seed) + "," + fmt(r.accuracy) + "," + fmt_opt(r.acc_diff) + "\n";
  }
  out.write("ablation.csv", csv);
  std::string results = results_csv_header() + "\n";
  for (const auto& r : final_rows) results += results_csv_row(r) + "\n";
  out.write("results.csv", results);
  out.write_manifest(config, "ablate", json{{"fractions", fractions}});
  return rows;
}

// ---------------------------------------------------------------------------
// report

namespace {

std::optional<double> parse_opt(const std::string& cell) {
  if (cell == "--" || cell.empty()) return std::nullopt;
  return std::stod(cell);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<fs::path>& result_files) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<FairnessReport>> groups;
  for (const auto& file : result_files) {
    std::istringstream in(read_file(file));
    std::string line;
    if (!std::getline(in, line) || line != results_csv_header()) {
      throw FormatError(file.string() + " is not a results.csv file");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() < 8) throw FormatError(file.string() + ": short row");
      FairnessReport r;
      r.accuracy = std::stod(cells[3]);
      r.f1 = std::stod(cells[4]);
      r.acc_diff = parse_opt(cells[5]);
      r.delta_a = parse_opt(cells[6]);
      r.delta_m = parse_opt(cells[7]);
      const auto key = std::make_pair(cells[0], cells[1]);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(r);
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) out.push_back(SummaryRow{key.first, key.second, aggregate(groups[key])});
  return out;
}

}  // namespace vlbc
