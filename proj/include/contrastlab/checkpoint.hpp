#pragma once

#include <string>

#include "contrastlab/config.hpp"
#include "contrastlab/model.hpp"

namespace contrastlab {

// A checkpoint is two files sharing a stem:
//   <stem>.bin   "CLABCKPT", u32 version, u64 tensor count, then per tensor
//                u64 element count and that many little-endian doubles.
//                Parameters come first in Model::parameters() order, then
//                buffers in Model::buffers() order.
//   <stem>.json  {"format", "model", "epoch", "run_id", "blob",
//                 "parameter_count", "tensors": [{"name", "shape"}]}
inline constexpr const char* kCheckpointFormat = "contrastlab-checkpoint-v1";

struct CheckpointInfo {
  ModelSpec spec;
  int epoch = 0;
  std::string run_id;
  std::string sidecar_path;
  std::string blob_path;
};

// Writes <dir>/<stem>.bin and <dir>/<stem>.json; returns the sidecar path.
std::string save_checkpoint(Model& model, int epoch, const std::string& run_id, const std::string& dir,
                            const std::string& stem);

CheckpointInfo read_checkpoint_info(const std::string& sidecar_path);

// Rebuilds the model described by the sidecar and fills its tensors.
// Throws DataIntegrityError when the blob does not match the spec.
Model load_checkpoint(const std::string& sidecar_path, CheckpointInfo* info = nullptr);

}  // namespace contrastlab
