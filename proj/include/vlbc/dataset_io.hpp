#pragma once

// Line-delimited dataset records:
//   header:  vlbc-dataset 1 d_x <d_x> M <M>
//   record:  <d_x features, fixed 9 decimals> <M attribute bits> <protected bit> <origin tag>

#include <iosfwd>
#include <span>
#include <vector>

#include "vlbc/synth_world.hpp"

namespace vlbc {

void write_dataset(std::ostream& out, std::span<const LabeledSample> samples, int feature_dim, int num_attributes);
std::vector<LabeledSample> read_dataset(std::istream& in);

}  // namespace vlbc
