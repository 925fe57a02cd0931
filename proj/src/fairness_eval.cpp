#include "vlbc/fairness_eval.hpp"

#include <algorithm>
#include <cmath>

namespace vlbc {

FairnessReport evaluate(std::span<const EvalRecord> records) {
  if (records.empty()) throw InputError("evaluate: no records");
  // counts[p][y][yhat]
  std::size_t counts[2][2][2] = {};
  for (const auto& r : records) {
    if ((r.truth | r.predicted | r.protected_class) & ~1) throw InputError("evaluate: records must hold bits");
    ++counts[r.protected_class][r.truth][r.predicted];
  }
  FairnessReport rep;
  std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
  for (int p = 0; p < 2; ++p) {
    correct += counts[p][0][0] + counts[p][1][1];
    tp += counts[p][1][1];
    fp += counts[p][0][1];
    fn += counts[p][1][0];
    rep.group_sizes[p] = counts[p][0][0] + counts[p][0][1] + counts[p][1][0] + counts[p][1][1];
  }
  const double n = static_cast<double>(records.size());
  rep.accuracy = 100.0 * static_cast<double>(correct) / n;

  if (tp == 0) {
    rep.f1 = 0.0;
    rep.f1_defined = false;  // precision and recall both zero or undefined
  } else {
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    rep.f1 = 100.0 * 2.0 * precision * recall / (precision + recall);
  }

  if (rep.group_sizes[0] > 0 && rep.group_sizes[1] > 0) {
    double acc[2];
    for (int p = 0; p < 2; ++p) {
      acc[p] = 100.0 * static_cast<double>(counts[p][0][0] + counts[p][1][1]) / static_cast<double>(rep.group_sizes[p]);
    }
    rep.acc_diff = acc[0] - acc[1];
  }

  std::vector<double> gaps;
  for (int y = 0; y < 2; ++y) {
    const std::size_t m0 = counts[0][y][0] + counts[0][y][1];
    const std::size_t m1 = counts[1][y][0] + counts[1][y][1];
    rep.gap_defined[y] = m0 > 0 && m1 > 0;
    if (!rep.gap_defined[y]) continue;
    const double r0 = static_cast<double>(counts[0][y][y]) / static_cast<double>(m0);
    const double r1 = static_cast<double>(counts[1][y][y]) / static_cast<double>(m1);
    gaps.push_back(100.0 * std::abs(r0 - r1));
  }
  if (!gaps.empty()) {
    double sum = 0.0;
    for (double g : gaps) sum += g;
    rep.delta_a = sum / static_cast<double>(gaps.size());
    rep.delta_m = *std::max_element(gaps.begin(), gaps.end());
  }
  return rep;
}

std::vector<EvalRecord> make_records(const Classifier& clf, std::span<const LabeledSample> test, int attribute_index) {
  std::vector<EvalRecord> records;
  records.reserve(test.size());
  for (const auto& s : test) {
    records.push_back(EvalRecord{s.attributes.at(attribute_index), predict(clf, s.image).label, s.protected_class});
  }
  return records;
}

FairnessReport evaluate_suite(const Classifier& clf, std::span<const LabeledSample> test, int attribute_index) {
  return evaluate(make_records(clf, test, attribute_index));
}

MeanStd aggregate(std::span<const std::optional<double>> values) {
  MeanStd out;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++out.count;
  }
  if (out.count == 0) return out;
  out.mean = sum / static_cast<double>(out.count);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - out.mean) * (*v - out.mean);
  }
  out.stddev = std::sqrt(ss / static_cast<double>(out.count));
  return out;
}

AggregateReport aggregate(std::span<const FairnessReport> reports) {
  std::vector<std::optional<double>> acc, f1, diff, abs_diff, da, dm;
  for (const auto& r : reports) {
    acc.emplace_back(r.accuracy);
    f1.emplace_back(r.f1);
    diff.push_back(r.acc_diff);
    abs_diff.push_back(r.acc_diff ? std::optional<double>(std::abs(*r.acc_diff)) : std::nullopt);
    da.push_back(r.delta_a);
    dm.push_back(r.delta_m);
  }
  return AggregateReport{aggregate(acc), aggregate(f1), aggregate(diff), aggregate(abs_diff), aggregate(da),
                         aggregate(dm)};
}

}  // namespace vlbc
