#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtnet/model.hpp"

namespace gtnet::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'G', 'T', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct ParameterEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;  // bytes from the start of the blob section
  std::uint64_t length = 0;  // bytes
};

struct CheckpointManifest {
  int format_version = kCheckpointVersion;
  ModelConfig config;
  std::vector<ParameterEntry> parameters;
};

/// File layout:
///   "GTNCKPT1" | u64 LE manifest byte length | manifest text | blob
/// The manifest is `key = value` text with [config] and [parameters]
/// sections; each parameter line is `name<TAB>shape<TAB>offset<TAB>length`.
/// The blob holds little-endian float32 values in table order.
void save_checkpoint(const GTNet& model, const std::filesystem::path& path);

/// Loads a model. When `expected` is given, refuses checkpoints whose
/// architecture differs, naming the first mismatch.
std::unique_ptr<GTNet> load_checkpoint(const std::filesystem::path& path,
                                       const std::optional<ModelConfig>& expected = std::nullopt);

/// Reads only the manifest.
CheckpointManifest read_manifest(const std::filesystem::path& path);

}  // namespace gtnet::model
