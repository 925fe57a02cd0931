#pragma once

// Accuracy, f1, signed accuracy difference between protected groups, and
// mean / max disparity of equal opportunity. All values are percentages.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlbc/classify.hpp"

namespace vlbc {

struct EvalRecord {
  int truth = 0;
  int predicted = 0;
  int protected_class = 0;
};

struct FairnessReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  bool f1_defined = true;
  std::optional<double> acc_diff;  // acc(p=0) - acc(p=1); empty when a group is empty
  std::optional<double> delta_a;   // mean over defined per-class gaps
  std::optional<double> delta_m;   // max over defined per-class gaps
  std::array<bool, 2> gap_defined{};  // per true class
  std::array<std::size_t, 2> group_sizes{};
};

FairnessReport evaluate(std::span<const EvalRecord> records);

/// evaluate() over predict() of `clf` on the test set.
FairnessReport evaluate_suite(const Classifier& clf, std::span<const LabeledSample> test, int attribute_index);

std::vector<EvalRecord> make_records(const Classifier& clf, std::span<const LabeledSample> test, int attribute_index);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

/// Mean and population std over the values that are present.
MeanStd aggregate(std::span<const std::optional<double>> values);

struct AggregateReport {
  MeanStd accuracy, f1, acc_diff, abs_acc_diff, delta_a, delta_m;
};

AggregateReport aggregate(std::span<const FairnessReport> reports);

}  // namespace vlbc
