#include "vlbc/bias_control.hpp"

#include <algorithm>

namespace vlbc {

DatasetStats compute_stats(std::span<const LabeledSample> dataset, int attribute_index) {
  if (dataset.empty()) throw InputError("compute_stats: empty dataset");
  DatasetStats st;
  st.attribute_index = attribute_index;
  for (const auto& s : dataset) {
    if (attribute_index < 0 || attribute_index >= static_cast<int>(s.attributes.size())) {
      throw InputError("compute_stats: attribute_index out of range");
    }
    ++st.counts[s.attributes[attribute_index]][s.protected_class];
  }
  st.total = dataset.size();
  const std::size_t p0 = st.protected_total(0);
  const std::size_t p1 = st.protected_total(1);
  st.tie = p0 == p1;
  st.minority_protected = p0 < p1 ? 0 : 1;
  const int lo = st.minority_protected;
  const int hi = st.majority_protected();
  for (int a = 0; a < 2; ++a) {
    st.deficits[a] = st.counts[a][hi] > st.counts[a][lo] ? st.counts[a][hi] - st.counts[a][lo] : 0;
  }
  return st;
}

std::string to_string(PlanMode mode) {
  switch (mode) {
    case PlanMode::mitigate: return "mitigate";
    case PlanMode::amplify: return "amplify";
    case PlanMode::sample_only: return "sample_only";
  }
  return "mitigate";
}

void AugmentationPlan::validate() const {
  if (source_protected < 0 || source_protected > 1 || target_protected < 0 || target_protected > 1) {
    throw ConfigError("plan protected classes must be bits");
  }
  const bool same = source_protected == target_protected;
  if (mode == PlanMode::sample_only && !same) throw ConfigError("sample_only plans keep the protected class");
  if (mode != PlanMode::sample_only && same) throw ConfigError("editing plans must change the protected class");
}

AugmentationPlan plan_mitigation(const DatasetStats& stats) {
  AugmentationPlan plan;
  plan.mode = PlanMode::mitigate;
  plan.attribute_index = stats.attribute_index;
  plan.quotas = stats.deficits;
  plan.source_protected = stats.majority_protected();
  plan.target_protected = stats.minority_protected;
  return plan;
}

AugmentationPlan plan_amplification(const DatasetStats& stats) {
  AugmentationPlan plan;
  plan.mode = PlanMode::amplify;
  plan.attribute_index = stats.attribute_index;
  const int hi = stats.majority_protected();
  plan.quotas = {stats.counts[0][hi], stats.counts[1][hi]};
  plan.source_protected = stats.minority_protected;
  plan.target_protected = hi;
  return plan;
}

AugmentationPlan plan_sample_only(const DatasetStats& stats) {
  AugmentationPlan plan;
  plan.mode = PlanMode::sample_only;
  plan.attribute_index = stats.attribute_index;
  plan.quotas = stats.deficits;
  plan.source_protected = stats.minority_protected;
  plan.target_protected = stats.minority_protected;
  return plan;
}

AugmentResult select_and_augment(const AugmentationPlan& plan, std::span<const AnnotatedItem> pool,
                                 std::span<const WarpingField> fields, int protected_index,
                                 const TraversalPolicy& policy, const PseudoLabeler& f, const WorldSpec& world,
                                 const AugmentOptions& options) {
  plan.validate();
  const int m = f.num_attributes();
  if (plan.attribute_index < 0 || plan.attribute_index >= m) {
    throw InputError("select_and_augment: plan attribute is not covered by the labeler");
  }
  const bool edit = plan.mode != PlanMode::sample_only;
  const WarpingField* field = nullptr;
  if (edit) {
    if (protected_index < 0 || protected_index >= static_cast<int>(fields.size())) {
      throw InputError("select_and_augment: no trained field for protected characteristic " +
                       std::to_string(protected_index));
    }
    field = &fields[protected_index];
    policy.validate();
  }
  TraversalPolicy walk = policy;
  walk.direction = plan.target_protected == 1 ? TraversalDirection::toward_positive
                                              : TraversalDirection::toward_negative;

  AugmentResult result;
  for (int a = 0; a < 2; ++a) {
    const std::size_t quota = plan.quotas[a];
    if (quota == 0) continue;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& labels = pool[i].labels;
      if (static_cast<int>(labels.size()) != m + 1) {
        throw InputError("select_and_augment: pool labels do not match the labeler heads");
      }
      if (labels[plan.attribute_index] == a && labels[m] == plan.source_protected) eligible.push_back(i);
    }
    result.eligible[a] = eligible.size();
    Rng select_rng = make_rng(options.seed, "augment-select", static_cast<std::uint64_t>(a));
    std::shuffle(eligible.begin(), eligible.end(), select_rng);

    std::size_t produced = 0;
    for (std::size_t idx : eligible) {
      if (produced == quota) break;
      const AnnotatedItem& item = pool[idx];
      LabeledSample sample;
      sample.attributes.assign(item.labels.begin(), item.labels.begin() + m);
      sample.protected_class = static_cast<std::uint8_t>(plan.target_protected);
      if (edit) {
        Rng walk_rng = make_rng(options.seed, "augment-traverse", idx);
        Rng noise_rng = make_rng(options.seed, "augment-noise", idx);
        const TraversalResult moved = traverse(item.code, *field, walk, world.config.box_radius, walk_rng);
        if (moved.stalled) ++result.traversals_stalled;
        sample.image = observe(moved.code, world, noise_rng);
        sample.origin = Origin::augmented;
        if (options.filtering && predict(f.protected_head(), sample.image).label != plan.target_protected) {
          ++result.discarded;
          continue;
        }
      } else {
        sample.image = item.image;
        sample.origin = Origin::synthetic;
      }
      result.samples.push_back(std::move(sample));
      ++produced;
    }
    result.shortfall[a] = quota - produced;
  }
  return result;
}

std::vector<LabeledSample> merge(std::span<const LabeledSample> real, std::span<const LabeledSample> augmented) {
  std::vector<LabeledSample> out(real.begin(), real.end());
  out.insert(out.end(), augmented.begin(), augmented.end());
  return out;
}

}  // namespace vlbc
