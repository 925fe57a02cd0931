#include "vlbc/dataset_io.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace vlbc {

void write_dataset(std::ostream& out, std::span<const LabeledSample> samples, int feature_dim, int num_attributes) {
  out << "vlbc-dataset 1 d_x " << feature_dim << " M " << num_attributes << "\n";
  char buf[64];
  for (const auto& s : samples) {
    require_dim(s.image.values.size(), feature_dim, "write_dataset");
    if (static_cast<int>(s.attributes.size()) != num_attributes) throw DimensionError("write_dataset: attribute count");
    std::string line;
    for (Eigen::Index i = 0; i < s.image.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9f ", s.image.values[i]);
      line += buf;
    }
    for (auto a : s.attributes) {
      line += static_cast<char>('0' + a);
      line += ' ';
    }
    line += static_cast<char>('0' + s.protected_class);
    line += ' ';
    line += to_string(s.origin);
    out << line << '\n';
  }
}

std::vector<LabeledSample> read_dataset(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("dataset: missing header");
  std::istringstream hs(header);
  std::string magic, kd, km;
  int version = 0, dx = 0, m = 0;
  if (!(hs >> magic >> version >> kd >> dx >> km >> m) || magic != "vlbc-dataset" || version != 1 || kd != "d_x" ||
      km != "M" || dx < 1 || m < 0) {
    throw FormatError("dataset: malformed header");
  }
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    LabeledSample s;
    s.image.values.resize(dx);
    for (int i = 0; i < dx; ++i) {
      if (!(ls >> s.image.values[i])) throw FormatError("dataset line " + std::to_string(lineno) + ": features");
    }
    auto read_bit = [&](const char* what) -> std::uint8_t {
      int b = -1;
      if (!(ls >> b) || (b != 0 && b != 1)) {
        throw FormatError("dataset line " + std::to_string(lineno) + ": " + what + " must be 0 or 1");
      }
      return static_cast<std::uint8_t>(b);
    };
    for (int j = 0; j < m; ++j) s.attributes.push_back(read_bit("attribute"));
    s.protected_class = read_bit("protected");
    std::string tag;
    if (!(ls >> tag)) throw FormatError("dataset line " + std::to_string(lineno) + ": origin");
    s.origin = origin_from_string(tag);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace vlbc
