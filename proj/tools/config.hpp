#ifndef GPESMC_TOOLS_CONFIG_HPP
#define GPESMC_TOOLS_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpesmc::cli {

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSection {
  std::string name = "log_growth";
  std::optional<std::vector<double>> theta_star;  // simulation parameter
  std::optional<double> x0;                       // initial latent state for simulation
  double sigma_eps = 0.1;
  bool operator==(const ModelSection&) const = default;
};

struct GpeSection {
  int max_rejection_attempts = 10000;
  int max_bisection_depth = 6;
  double max_expected_points = 1000.0;
  double layer_zeta = 0.5;
  bool operator==(const GpeSection&) const = default;
};

struct SimulateSection {
  int n = 200;
  double step = 1e-3;
  bool include_latent = false;
  std::string output = "data.csv";
  bool operator==(const SimulateSection&) const = default;
};

struct InferSection {
  std::string data = "data.csv";
  std::optional<std::vector<double>> theta0;
  int iterations = 15;
  std::int64_t initial_particles = 100;
  std::optional<int> lag;
  int alpha = 1;
  int alpha_bar = 1;
  std::string proposal;  // empty: the model's default
  std::string selection = "multinomial";
  double nm_x_tolerance = 1e-4;
  double nm_f_tolerance = 1e-4;
  int nm_max_evaluations = 0;
  std::string trace = "trace.csv";
  std::string summary = "summary.json";
  bool operator==(const InferSection&) const = default;
};

struct SmoothSection {
  std::string data;  // empty: infer.data
  std::string method = "ffbs";  // or "fixed_lag"
  std::optional<std::vector<double>> theta;
  std::int64_t particles = 1000;
  std::optional<int> lag;
  int draws = 100;
  std::string output = "smoothed.csv";
  bool operator==(const SmoothSection&) const = default;
};

struct GpeCheckSection {
  std::optional<std::vector<double>> theta;
  double x = 0.0;
  double x_end = 0.0;
  double t = 1.0;
  int draws = 1000;
  std::string coordinates = "original";  // or "transformed"
  bool operator==(const GpeCheckSection&) const = default;
};

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  ModelSection model;
  GpeSection gpe;
  SimulateSection simulate;
  InferSection infer;
  SmoothSection smooth;
  GpeCheckSection gpe_check;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses TOML text; unknown keys are errors. Throws ConfigError.
[[nodiscard]] ExperimentConfig parse_config(std::string_view text, std::string_view source = "config");
[[nodiscard]] ExperimentConfig load_config(const std::string& path);
/// TOML text that parses back to the same configuration.
[[nodiscard]] std::string to_toml(const ExperimentConfig& config);

/// Checks names and parameter domains against the model registry. Throws ConfigError.
void check_references(const ExperimentConfig& config);

}  // namespace gpesmc::cli

#endif  // GPESMC_TOOLS_CONFIG_HPP
