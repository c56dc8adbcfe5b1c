#pragma once

#include <vector>

#include "robglm/types.hpp"

namespace testdata {

// Hospital length-of-stay counts, shifted down by one so the support starts
// at zero.  Three grossly long stays (114, 197, 373 after the shift) act as
// natural outliers.
inline robglm::Dataset los_data(bool drop_outliers = false) {
  const std::vector<long> value = {1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 115, 198, 374};
  const std::vector<long> freq = {2, 6, 5, 5, 4, 2, 2, 1, 1, 1, 1, 1, 1};
  std::vector<double> y;
  for (size_t i = 0; i < value.size(); ++i) {
    if (drop_outliers && value[i] > 100) continue;
    for (long k = 0; k < freq[i]; ++k) y.push_back(static_cast<double>(value[i] - 1));
  }
  robglm::Dataset d;
  d.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  d.X = Eigen::MatrixXd::Ones(d.y.size(), 1);
  return d;
}

}  // namespace testdata
