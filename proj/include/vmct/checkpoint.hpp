#pragma once

// Checkpoint file (VMCK): magic "VMCK", u32 version=1, u32 length-prefixed
// JSON block holding the ArchConfig and mode, u32 tensor count, then per
// tensor: u16 name length + UTF-8 name, u8 rank, u32 dims, f32 little-endian
// values. Trainable parameters come first in canonical order, then BN running
// stats under reserved ".running_mean"/".running_var" name suffixes.

#include <string>

#include "vmct/network.hpp"

namespace vmct {

void save_checkpoint(UnifiedModel& model, const std::string& path);
UnifiedModel load_checkpoint(const std::string& path);

// Closed-form serialized size in bytes for a model (used by tests and the
// profiler's model-size row).
std::size_t checkpoint_byte_size(UnifiedModel& model);

}  // namespace vmct
