#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssai/date.hpp"

namespace ssai {

/// Per-(date, ticker) ranking score. NaN marks an unscored cell.
struct CompositeScore {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  Eigen::MatrixXd values;
  std::string provenance;

  std::optional<std::size_t> row_of(const Date& d) const;
};

}  // namespace ssai
