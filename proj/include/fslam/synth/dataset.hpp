#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fslam/core/types.hpp"
#include "fslam/io/trajectory.hpp"

namespace fslam {

// Dataset directory layout:
//   color/%06d.png      8-bit RGB
//   depth/%06d.png      16-bit grayscale, depth_scale units per scene unit
//   feature/%06d.bin    "FEAT" magic, u32 H, W, D, then f32 H*W*D
//   label/%06d.png      8-bit class ids, 255 = invalid
//   groundtruth.txt     TUM trajectory (camera-to-world)
//   class_embeddings.bin  FEAT container, H = classes, W = 1
//   manifest.txt        key=value
struct DatasetManifest {
    int frame_count = 0;
    CameraIntrinsics intrinsics;
    double depth_scale = 5000.0;
    int feature_dim = 0;
    std::vector<std::string> class_names;
    double depth_noise_sigma = 0.0;
    std::uint64_t seed = 0;
    std::string trajectory_kind = "orbit";
};

void write_feature_bin(const std::string& path, const ImageF& image);
ImageF read_feature_bin(const std::string& path);

// Writes the full dataset. Poses are world-to-camera in memory and stored in
// TUM camera-to-world form on disk.
void write_dataset(const std::vector<Frame>& frames, const std::vector<Pose>& poses,
                   const Eigen::MatrixXd& embeddings, const DatasetManifest& manifest,
                   const std::string& dir);

// Manifest, trajectory and embeddings up front; frames on demand.
class DatasetReader {
public:
    explicit DatasetReader(const std::string& dir);

    const DatasetManifest& manifest() const { return manifest_; }
    const Trajectory& groundtruth() const { return groundtruth_; }
    const Eigen::MatrixXd& embeddings() const { return embeddings_; }
    int size() const { return manifest_.frame_count; }

    Frame read_frame(int index) const;

private:
    std::string dir_;
    DatasetManifest manifest_;
    Trajectory groundtruth_;
    Eigen::MatrixXd embeddings_;
};

// Eager convenience wrapper around DatasetReader.
void read_dataset(const std::string& dir, std::vector<Frame>& frames, Trajectory& poses,
                  DatasetManifest& manifest, Eigen::MatrixXd& embeddings);

}  // namespace fslam
