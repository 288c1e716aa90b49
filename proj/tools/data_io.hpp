#ifndef GPESMC_TOOLS_DATA_IO_HPP
#define GPESMC_TOOLS_DATA_IO_HPP

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpesmc/models.hpp"

namespace gpesmc::cli {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSet {
  std::vector<Observation> observations;
  std::optional<std::vector<double>> latent;  // hidden column x, when present
};

/// Shortest text that reads back to the same double.
[[nodiscard]] std::string format_number(double x);

/// CSV with header `k,y` or `k,y,x`; times must be 0, 1, ..., n.
[[nodiscard]] DataSet read_data_csv(std::istream& in, const std::string& source = "data");
[[nodiscard]] DataSet read_data_csv(const std::string& path);
void write_data_csv(std::ostream& out, const DataSet& data);

}  // namespace gpesmc::cli

#endif  // GPESMC_TOOLS_DATA_IO_HPP
