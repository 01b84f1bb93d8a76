#pragma once

#include <filesystem>
#include <optional>

#include "spurious/model.hpp"

namespace spurious {

struct Checkpoint {
  ExtractorParams params;
  double tau = 5.0;
  int epoch = 0;
  // Present for ERM models, which predict through their head instead of
  // training-set centroids.
  std::optional<LinearHead> head;
  HeadMode head_mode = HeadMode::kLinear;
};

// Versioned little-endian binary: magic "SPXCKPT\0", u32 version, the layer
// dimensions, every weight and bias in row-major order, tau, the epoch tag
// and an optional head block. save -> load -> save is byte-identical.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spurious
