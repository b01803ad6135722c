#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gtnet/data.hpp"
#include "gtnet/model_config.hpp"

namespace gtnet::cli {

/// Bad flags, unknown keys, malformed values. Maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string profile = "modelnet40";
  model::ModelConfig model;

  // "synth" generates data from `synth`; anything else is a dataset root laid
  // out as <root>/<split>/<class>/<item>.(txt|gpc).
  std::string dataset = "synth";
  data::SynthSpec synth;
  std::size_t synth_test_clouds_per_class = 8;
  std::size_t num_points = 0;  // resample every cloud to this size; 0 keeps N
  bool normalize = true;
  bool augment = false;
  data::AugmentConfig augmentation;

  std::filesystem::path out_dir = "runs/default";
  std::optional<std::filesystem::path> checkpoint;
  int log_every = 1;
  bool deterministic = false;
  std::size_t threads = 0;  // 0: hardware concurrency, capped by GTNET_THREADS
  double stop_at_train_accuracy = 0.0;  // > 0 stops once train OA reaches it
  std::vector<std::string> ablate_axes{"transformer", "aggregation", "k", "encoding", "residual"};
  std::size_t export_limit = 0;  // 0 exports every cloud
};

std::vector<std::string> profile_names();
/// Throws UsageError for an unknown profile.
RunConfig profile_defaults(std::string_view name);

/// Applies one `key = value` setting. Model keys are delegated to the model
/// config; `seed` sets both the model and synthetic-data seeds.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Line-oriented `key = value` text; `#` starts a comment. A `profile` line
/// selects the base defaults, which every other line then overrides,
/// regardless of position. `profile_override` replaces the file's profile.
RunConfig parse_config(std::string_view text, const std::optional<std::string>& profile_override = std::nullopt,
                       const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path,
                      const std::optional<std::string>& profile_override = std::nullopt);

std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& config);

/// Worker count after the deterministic flag and the GTNET_THREADS cap.
std::size_t effective_threads(const RunConfig& config);

}  // namespace gtnet::cli
