#pragma once

#include <string>

#include "fslam/map/scene_map.hpp"

namespace fslam {

// Binary map dump, little-endian: "SPLF" magic, u32 version, u32 feature
// dim, u64 count, then per Gaussian f32 mean[3], log_scale[3], quat[4]
// (w,x,y,z), opacity_logit, color[3], feature[D]. Round-trips bit-exactly.
void save_checkpoint(const SceneMap& map, const std::string& path);
SceneMap load_checkpoint(const std::string& path);

}  // namespace fslam
