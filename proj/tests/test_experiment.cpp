#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vlbc/experiment.hpp"

using namespace vlbc;
namespace fs = std::filesystem;

namespace {

// Reference protocol at a size that runs in seconds.
ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.train_size = 1400;
  c.labeler_size = 1000;
  c.pool.size = 4000;
  c.paths.epochs = 8;
  c.paths.train_codes = 128;
  c.baseline_training.epochs = 8;
  c.finetune_training.epochs = 4;
  c.seeds = {0};
  c.output_dir = out.string();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vlbc_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("method names round-trip") {
  for (Method m : {Method::baseline, Method::baseline_sampling, Method::weighting, Method::vlbc_minus,
                   Method::vlbc_minus_nofilter, Method::vlbc_plus}) {
    CHECK(method_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(method_from_string("vlbc"), ConfigError);
}

TEST_CASE("defaults validate and survive a JSON round trip") {
  const ExperimentConfig c = ExperimentConfig::defaults();
  c.validate();
  CHECK(c.effective_test_size() == static_cast<std::size_t>(std::lround(c.train_size * 3.0 / 7.0)));
  CHECK(c.test_bias().correlation == 0.0);
  CHECK(c.test_bias().group_imbalance == 0.5);
  const nlohmann::json j = to_json(c);
  CHECK(to_json(config_from_json(j)) == j);
  // a manifest wrapping the config is accepted too
  CHECK(to_json(config_from_json(nlohmann::json{{"format", "vlbc-manifest"}, {"config", j}})) == j);
}

TEST_CASE("partial JSON keeps defaults and bad values are config errors") {
  const ExperimentConfig c = config_from_json(nlohmann::json{{"train_size", 321}});
  CHECK(c.train_size == 321);
  CHECK(c.seeds == ExperimentConfig::defaults().seeds);

  ExperimentConfig bad = ExperimentConfig::defaults();
  bad.dipoles.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig::defaults();
  bad.bias.correlation = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig::defaults();
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"methods", {"nope"}}}), ConfigError);
  CHECK_THROWS(load_config(scratch("missing") / "none.json"));
}

TEST_CASE("seed preparation and methods") {
  const ExperimentConfig c = small_config(scratch("methods"));
  const SeedContext ctx = prepare_seed(c, 0);
  CHECK(ctx.train.size() == c.train_size);
  CHECK(ctx.test.size() == c.effective_test_size());
  CHECK(ctx.fields.size() == c.dipoles.size());
  CHECK(ctx.path_training.loss_trace.size() == static_cast<std::size_t>(c.paths.epochs));

  SUBCASE("preparation is deterministic") {
    const SeedContext again = prepare_seed(c, 0);
    CHECK(again.baseline.classifier.output_weights == ctx.baseline.classifier.output_weights);
    CHECK(again.fields[0].supports == ctx.fields[0].supports);
    CHECK(prepare_seed(c, 1).baseline.classifier.output_weights != ctx.baseline.classifier.output_weights);
  }

  SUBCASE("baseline evaluates the baseline without augmentation") {
    const MethodOutcome b = run_method(c, ctx, Method::baseline);
    CHECK_FALSE(b.plan.has_value());
    CHECK_FALSE(b.augment.has_value());
    CHECK_FALSE(b.finetune.has_value());
    const FairnessReport direct = evaluate_suite(ctx.baseline.classifier, ctx.test, c.bias.attribute_index);
    CHECK(b.report.accuracy == direct.accuracy);
  }

  SUBCASE("mitigation plans from the real-set statistics and fine-tunes") {
    const MethodOutcome m = run_method(c, ctx, Method::vlbc_minus);
    REQUIRE(m.plan.has_value());
    CHECK(m.plan->mode == PlanMode::mitigate);
    CHECK(m.plan->quotas == ctx.stats.deficits);
    REQUIRE(m.augment.has_value());
    REQUIRE(m.finetune.has_value());
    CHECK(m.finetune->loss_trace.size() == static_cast<std::size_t>(c.finetune_training.epochs));
    for (const auto& s : m.augment->samples) CHECK(s.protected_class == ctx.stats.minority_protected);
    // deterministic given the context
    CHECK(run_method(c, ctx, Method::vlbc_minus).report.accuracy == m.report.accuracy);
  }

  SUBCASE("without the filter nothing is discarded") {
    const MethodOutcome m = run_method(c, ctx, Method::vlbc_minus_nofilter);
    REQUIRE(m.augment.has_value());
    CHECK(m.augment->discarded == 0);
    CHECK(m.augment->samples.size() + m.augment->total_shortfall() == m.plan->quotas[0] + m.plan->quotas[1]);
  }

  SUBCASE("amplification targets the majority class") {
    const MethodOutcome m = run_method(c, ctx, Method::vlbc_plus);
    REQUIRE(m.plan.has_value());
    CHECK(m.plan->mode == PlanMode::amplify);
    CHECK(m.plan->target_protected == ctx.stats.majority_protected());
  }

  SUBCASE("sampling and weighting baselines") {
    const MethodOutcome s = run_method(c, ctx, Method::baseline_sampling);
    REQUIRE(s.plan.has_value());
    CHECK(s.plan->mode == PlanMode::sample_only);
    for (const auto& x : s.augment->samples) CHECK(x.origin == Origin::synthetic);
    const MethodOutcome w = run_method(c, ctx, Method::weighting);
    CHECK_FALSE(w.augment.has_value());
    CHECK(w.finetune.has_value());
  }
}

TEST_CASE("minority subsampling keeps ceil(f * n) minority samples in order") {
  const ExperimentConfig c = small_config(scratch("sub"));
  const auto train = sample_real_dataset(1000, c.bias, make_world(c.world), 3);
  const auto st = compute_stats(train, 0);
  const std::size_t minority = st.protected_total(st.minority_protected);
  for (double f : {0.2, 0.5, 1.0}) {
    const auto sub = subsample_minority(train, 0, f, 9);
    const auto s2 = compute_stats(sub, 0);
    CHECK(s2.protected_total(st.minority_protected) == static_cast<std::size_t>(std::ceil(f * minority - 1e-9)));
    CHECK(s2.protected_total(st.majority_protected()) == st.protected_total(st.majority_protected()));
  }
  CHECK(subsample_minority(train, 0, 1.0, 9).size() == train.size());
  CHECK_THROWS_AS(subsample_minority(train, 0, 0.0, 9), ConfigError);
  CHECK(sweep_point_label(0.2) == "0.20");
}

TEST_CASE("a run directory is complete, listed in its manifest and reproducible") {
  const fs::path dir = scratch("run");
  ExperimentConfig c = small_config(dir);
  c.methods = {Method::baseline, Method::vlbc_minus};
  const auto rows = run_experiment(c);
  CHECK(rows.size() == 2);

  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest.at("format") == "vlbc-manifest");
  CHECK(manifest.at("command") == "run");
  for (const auto& a : manifest.at("artifacts")) CHECK(fs::exists(dir / a.get<std::string>()));
  CHECK(fs::exists(dir / "seed_0" / "baseline_weights.txt"));
  CHECK(fs::exists(dir / "seed_0" / "vlbc_minus" / "plan.json"));

  const auto csv = lines(dir / "results.csv");
  REQUIRE(csv.size() == 3);
  CHECK(csv[0] == results_csv_header());
  CHECK(csv[1].rfind("attr0,baseline,0,", 0) == 0);

  // rerun from the manifest into a second directory
  const fs::path dir2 = scratch("rerun");
  ExperimentConfig again = load_config(dir / "manifest.json");
  again.output_dir = dir2.string();
  run_experiment(again);
  CHECK(read_file(dir2 / "results.csv") == read_file(dir / "results.csv"));
  CHECK(read_file(dir2 / "seed_0" / "vlbc_minus" / "weights.txt") ==
        read_file(dir / "seed_0" / "vlbc_minus" / "weights.txt"));

  const auto summary = summarize({dir / "results.csv", dir2 / "results.csv"});
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].method == "baseline");
  CHECK(summary[0].aggregate.accuracy.count == 2);
  CHECK(summary[0].aggregate.accuracy.stddev == doctest::Approx(0.0));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("the ablation writes one row per fraction plus the augmented point") {
  const fs::path dir = scratch("ablate");
  ExperimentConfig c = small_config(dir);
  c.methods = {Method::vlbc_minus};
  const auto rows = run_ablation(c, {0.5, 1.0});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].point == "0.50");
  CHECK(rows[1].point == "1.00");
  CHECK(rows[2].point == "1.0+aug");
  // the 1.0 point is the plain baseline of the same seed
  const SeedContext ctx = prepare_seed(c, 0);
  const FairnessReport base = run_method(c, ctx, Method::baseline).report;
  CHECK(rows[1].accuracy == base.accuracy);
  CHECK(*rows[1].acc_diff == *base.acc_diff);
  CHECK(rows[2].accuracy == run_method(c, ctx, Method::vlbc_minus).report.accuracy);
  CHECK(lines(dir / "ablation.csv").size() == 4);
  CHECK(nlohmann::json::parse(read_file(dir / "manifest.json")).at("fractions").size() == 2);
  CHECK_THROWS_AS(run_ablation(c, {}), ConfigError);
  CHECK_THROWS_AS(run_ablation(c, {1.5}), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("every method fine-tunes from the same baseline weights") {
  const fs::path a = scratch("iso_a"), b = scratch("iso_b");
  ExperimentConfig ca = small_config(a), cb = small_config(b);
  ca.methods = {Method::weighting};
  cb.methods = {Method::vlbc_plus, Method::baseline_sampling};
  run_experiment(ca);
  run_experiment(cb);
  CHECK(read_file(a / "seed_0" / "baseline_weights.txt") == read_file(b / "seed_0" / "baseline_weights.txt"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("the shipped reference config is the built-in default") {
  ExperimentConfig shipped = load_config(fs::path(VLBC_SOURCE_DIR) / "configs" / "reference.json");
  ExperimentConfig builtin = ExperimentConfig::defaults();
  builtin.output_dir = shipped.output_dir;
  CHECK(to_json(shipped) == to_json(builtin));
}
