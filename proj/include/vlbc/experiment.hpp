#pragma once

// Experiment harness: baseline training, per-method training sets and
// fine-tuning, evaluation on an unbiased held-out set, ablation sweeps over
// the minority-class fraction, and run directories with a manifest.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlbc/bias_control.hpp"
#include "vlbc/fairness_eval.hpp"

namespace vlbc {

enum class Method { baseline, baseline_sampling, weighting, vlbc_minus, vlbc_minus_nofilter, vlbc_plus };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct PoolConfig {
  std::size_t size = 20000;
  double correlation = 0.0;
  double group_imbalance = 0.5;
};

struct ExperimentConfig {
  WorldConfig world;
  EncoderConfig encoder;
  BiasSpec bias;
  std::size_t train_size = 10000;
  std::size_t test_size = 0;  // 0: 30/70 of train_size
  std::size_t labeler_size = 5000;
  PoolConfig pool;
  std::vector<DipoleSpec> dipoles;
  PathTrainingConfig paths;
  TraversalPolicy traversal;
  LabelerConfig labeler;
  TrainConfig baseline_training;
  TrainConfig finetune_training;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "runs/default";

  /// Reference world and protocol defaults.
  static ExperimentConfig defaults();

  std::size_t effective_test_size() const;
  BiasSpec pool_bias() const;
  BiasSpec test_bias() const;

  /// Checks every component invariant; throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);

/// Missing keys keep their defaults. Accepts a run manifest as well (uses its "config").
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Everything shared by the methods of one seed.
struct SeedContext {
  std::uint64_t seed = 0;
  WorldSpec world;
  ImageEncoder encoder;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  PseudoLabeler labeler;
  std::vector<AnnotatedItem> pool;
  std::vector<SemanticDipole> dipoles;
  std::vector<WarpingField> fields;
  PathTrainingResult path_training;
  TrainResult baseline;
  DatasetStats stats;
};

/// Builds world, datasets, labeler, pool and paths, then trains the baseline on `train`.
SeedContext prepare_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Trains the baseline-regime classifier (from scratch) on a training set.
TrainResult train_baseline(const ExperimentConfig& config, std::uint64_t seed, std::span<const LabeledSample> train);

struct MethodOutcome {
  Method method = Method::baseline;
  FairnessReport report;
  std::optional<AugmentationPlan> plan;
  std::optional<AugmentResult> augment;
  std::optional<TrainResult> finetune;
};

MethodOutcome run_method(const ExperimentConfig& config, const SeedContext& ctx, Method method);

struct ResultRow {
  std::string task;
  std::string method;
  std::uint64_t seed = 0;
  FairnessReport report;
  std::size_t augmented = 0;
  std::size_t shortfall = 0;
};

std::string results_csv_header();
std::string results_csv_row(const ResultRow& row);

/// Runs every configured (seed, method) and writes the run directory. Returns the rows of results.csv.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

struct SweepRow {
  std::string method;
  std::string point;  // fraction, or "1.0+aug"
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::optional<double> acc_diff;
};

std::string sweep_point_label(double fraction);

/// Keeps ceil(fraction * |minority|) minority-class samples, chosen uniformly; order preserved.
std::vector<LabeledSample> subsample_minority(std::span<const LabeledSample> data, int attribute_index,
                                              double fraction, std::uint64_t seed);

/// Minority-fraction sweep. Fraction points train the baseline regime on the
/// subsampled real set; the final "1.0+aug" point is each method's full run.
std::vector<SweepRow> run_ablation(const ExperimentConfig& config, const std::vector<double>& fractions);

struct SummaryRow {
  std::string task;
  std::string method;
  AggregateReport aggregate;
};

/// Mean / population std across seeds for each (task, method) in results.csv files.
std::vector<SummaryRow> summarize(const std::vector<std::filesystem::path>& result_files);

std::string read_file(const std::filesystem::path& path);

}  // namespace vlbc
