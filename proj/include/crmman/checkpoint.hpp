#pragma once

// Versioned binary container for a trained model. The byte layout is
// described in docs/checkpoint_format.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "crmman/autodiff.hpp"

namespace crmman {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kInitVectorsTensor = "const.init_vectors";

struct Checkpoint {
  /// Serialized run configuration (key=value lines).
  std::string config_text;
  std::uint64_t epoch = 0;
  /// Validation metrics of the stored epoch, in insertion order.
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> item_ids;
  ad::ParameterStore params;
  /// Fixed structural node initialization; empty when unused.
  ad::Tensor init_vectors;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws IoError on a truncated or foreign buffer.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace crmman
