#pragma once

// Dataset statistics, augmentation planning (mitigate / amplify / sample-only)
// and the selection + traversal step that assembles the augmented set X_a.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "vlbc/latent_paths.hpp"
#include "vlbc/pseudo_label.hpp"

namespace vlbc {

/// 2x2 table of counts indexed [attribute value][protected value].
using CountTable = std::array<std::array<std::size_t, 2>, 2>;

struct DatasetStats {
  int attribute_index = 0;
  CountTable counts{};
  std::size_t total = 0;
  int minority_protected = 1;
  bool tie = false;                      // protected totals were equal
  std::array<std::size_t, 2> deficits{};  // per attribute value: majority cell - minority cell, floored at 0

  int majority_protected() const { return 1 - minority_protected; }
  std::size_t protected_total(int p) const { return counts[0][p] + counts[1][p]; }
};

DatasetStats compute_stats(std::span<const LabeledSample> dataset, int attribute_index);

enum class PlanMode { mitigate, amplify, sample_only };

std::string to_string(PlanMode mode);

struct AugmentationPlan {
  PlanMode mode = PlanMode::mitigate;
  int attribute_index = 0;
  std::array<std::size_t, 2> quotas{};  // per attribute value
  int source_protected = 0;             // class edited from
  int target_protected = 1;             // class edited into

  bool empty() const { return quotas[0] == 0 && quotas[1] == 0; }
  void validate() const;
};

/// Fill the minority cells up to the majority cells, editing majority-class images.
AugmentationPlan plan_mitigation(const DatasetStats& stats);

/// Double the majority cells, editing minority-class images.
AugmentationPlan plan_amplification(const DatasetStats& stats);

/// Same quotas as mitigation, filled with unedited minority-class pool images.
AugmentationPlan plan_sample_only(const DatasetStats& stats);

struct AugmentOptions {
  bool filtering = true;
  std::uint64_t seed = 0;
};

struct AugmentResult {
  std::vector<LabeledSample> samples;
  std::array<std::size_t, 2> shortfall{};  // per attribute value
  std::array<std::size_t, 2> eligible{};   // eligible pool items per attribute value
  std::size_t discarded = 0;               // removed by the filter
  std::size_t traversals_stalled = 0;

  std::size_t total_shortfall() const { return shortfall[0] + shortfall[1]; }
};

/// Picks pool items pseudo-labeled (attribute value, source class) uniformly
/// without replacement, traverses each toward the target class with
/// `fields[protected_index]`, regenerates the image and relabels it as the
/// target class, keeping the pseudo attribute labels. With filtering, items
/// the labeler does not see as the target class are dropped and replaced from
/// the remaining pool. Unfilled quota is reported as shortfall.
AugmentResult select_and_augment(const AugmentationPlan& plan, std::span<const AnnotatedItem> pool,
                                 std::span<const WarpingField> fields, int protected_index,
                                 const TraversalPolicy& policy, const PseudoLabeler& f, const WorldSpec& world,
                                 const AugmentOptions& options);

std::vector<LabeledSample> merge(std::span<const LabeledSample> real, std::span<const LabeledSample> augmented);

}  // namespace vlbc
