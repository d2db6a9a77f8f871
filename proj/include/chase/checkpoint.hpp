#pragma once

#include <string>

#include "chase/train.hpp"

namespace chase {

inline constexpr const char* kCheckpointFormat = "chase-ckpt-v1";

// Self-describing JSON checkpoint: format tag, config snapshot, metric-name
// universe, threshold, every parameter tensor with its shape, and the
// training history. Loading verifies the format tag and all tensor shapes.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);  // throws CheckpointError

} // namespace chase
