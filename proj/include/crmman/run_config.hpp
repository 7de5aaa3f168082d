#pragma once

// Flat key=value run configuration layered as file < environment < flags.
// Every key has a default; unknown keys are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crmman/data_pipeline.hpp"
#include "crmman/model.hpp"
#include "crmman/scorer_trainer.hpp"
#include "crmman/synthetic.hpp"

namespace crmman {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

class RunConfig {
 public:
  inline static const char* kEnvPrefix = "CRMMAN_";

  RunConfig();

  /// Every known key in canonical order.
  static const std::vector<ConfigKey>& keys();
  static bool known(const std::string& key);

  /// Throws ConfigError naming the key when it is unknown.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Comma-separated unsigned integers.
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  /// "key=value" lines; blank lines and lines starting with '#' are skipped.
  void load_text(const std::string& text, const std::string& origin = "config");
  void load_file(const std::filesystem::path& path);
  /// CRMMAN_<KEY> variables (key upper-cased) from the process environment.
  void apply_environment();
  void apply_environment(const std::map<std::string, std::string>& env);

  /// All keys in canonical order, one "key=value" line each.
  std::string to_text() const;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  data::SplitConfig split_config() const;
  data::RatingsSchema ratings_schema() const;
  synth::SyntheticSpec synthetic_spec() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Settings sized for the planted synthetic dataset, applied on top of the
/// defaults by `crmman synth` configs and the acceptance runs.
std::string desk_scale_overrides();

}  // namespace crmman
