#pragma once

// Flat key = value run configuration shared by the dssm subcommands.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dssm/dssm.hpp"

namespace dssm::cli {

struct RunConfig {
  DSSMConfig model;
  // obs_dim and likelihood default to "auto": taken from the training data.
  bool obs_dim_auto = true;
  bool likelihood_auto = true;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string train_data;
  std::string out_dir = ".";

  // Fills the auto fields from a dataset; throws on an explicit mismatch.
  void resolve_data(const data::SequenceDataset& ds);
  // Every problem found, empty when the config is usable.
  std::vector<std::string> problems() const;
  LstmBaselineConfig baseline() const { return {model.obs_dim, model.hidden_dim, model.lstm_layers}; }
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

// '#' starts a comment; blank lines are ignored. Unknown keys, malformed
// values and failed validation are collected and thrown together.
RunConfig parse_run_config(std::string_view text, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});

// Every key with its effective value, in a fixed order.
std::string format_run_config(const RunConfig& config);
void write_run_config(const std::filesystem::path& path, const RunConfig& config);

std::vector<std::string> run_config_keys();

}  // namespace dssm::cli
