#include "fslam/synth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fslam/io/png_io.hpp"

namespace fs = std::filesystem;

namespace fslam {

namespace {

constexpr char kFeatMagic[4] = {'F', 'E', 'A', 'T'};

std::string frame_path(const std::string& dir, const char* sub, int index, const char* ext) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.%s", index, ext);
    return (fs::path(dir) / sub / name).string();
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

}  // namespace

void write_feature_bin(const std::string& path, const ImageF& image) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("dataset: cannot open " + path + " for writing");
    const std::uint32_t h = image.height, w = image.width, d = image.channels;
    out.write(kFeatMagic, 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(image.data.data()),
              static_cast<std::streamsize>(image.data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

ImageF read_feature_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    char magic[4];
    std::uint32_t h, w, d;
    if (!in.read(magic, 4) || std::memcmp(magic, kFeatMagic, 4) != 0)
        throw std::runtime_error("dataset: bad magic in " + path);
    if (!in.read(reinterpret_cast<char*>(&h), 4) || !in.read(reinterpret_cast<char*>(&w), 4) ||
        !in.read(reinterpret_cast<char*>(&d), 4))
        throw std::runtime_error("dataset: truncated header in " + path);
    ImageF out(static_cast<int>(w), static_cast<int>(h), static_cast<int>(d));
    if (!in.read(reinterpret_cast<char*>(out.data.data()),
                 static_cast<std::streamsize>(out.data.size() * sizeof(float))))
        throw std::runtime_error("dataset: truncated data in " + path);
    return out;
}

namespace {

void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("dataset: cannot open " + path + " for writing");
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "format_version=1\n"
                  "frame_count=%d\n"
                  "width=%d\nheight=%d\n"
                  "fx=%.17g\nfy=%.17g\ncx=%.17g\ncy=%.17g\n"
                  "near=%.17g\nfar=%.17g\n"
                  "depth_scale=%.17g\n"
                  "feature_dim=%d\n"
                  "depth_noise_sigma=%.17g\n"
                  "seed=%llu\n",
                  m.frame_count, m.intrinsics.width, m.intrinsics.height, m.intrinsics.fx,
                  m.intrinsics.fy, m.intrinsics.cx, m.intrinsics.cy, m.intrinsics.near_plane,
                  m.intrinsics.far_plane, m.depth_scale, m.feature_dim, m.depth_noise_sigma,
                  static_cast<unsigned long long>(m.seed));
    out << buf;
    out << "trajectory=" << m.trajectory_kind << "\n";
    out << "class_names=" << join(m.class_names, ',') << "\n";
    if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("dataset: malformed manifest line in " + path + ": " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end())
            throw std::runtime_error("dataset: manifest key '" + key + "' missing in " + path);
        return it->second;
    };

    DatasetManifest m;
    m.frame_count = std::stoi(need("frame_count"));
    m.intrinsics.width = std::stoi(need("width"));
    m.intrinsics.height = std::stoi(need("height"));
    m.intrinsics.fx = std::stod(need("fx"));
    m.intrinsics.fy = std::stod(need("fy"));
    m.intrinsics.cx = std::stod(need("cx"));
    m.intrinsics.cy = std::stod(need("cy"));
    m.intrinsics.near_plane = std::stod(need("near"));
    m.intrinsics.far_plane = std::stod(need("far"));
    m.depth_scale = std::stod(need("depth_scale"));
    m.feature_dim = std::stoi(need("feature_dim"));
    m.depth_noise_sigma = std::stod(need("depth_noise_sigma"));
    m.seed = std::stoull(need("seed"));
    m.trajectory_kind = need("trajectory");
    m.class_names = split(need("class_names"), ',');
    return m;
}

}  // namespace

void write_dataset(const std::vector<Frame>& frames, const std::vector<Pose>& poses,
                   const Eigen::MatrixXd& embeddings, const DatasetManifest& manifest,
                   const std::string& dir) {
    if (frames.size() != poses.size())
        throw std::invalid_argument("write_dataset: frame/pose count mismatch");

    for (const char* sub : {"color", "depth", "feature", "label"})
        fs::create_directories(fs::path(dir) / sub);

    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Frame& f = frames[i];
        const int w = f.color.width, h = f.color.height;

        ImageU8 color(w, h, 3);
        for (std::size_t p = 0; p < f.color.data.size(); ++p)
            color.data[p] = static_cast<std::uint8_t>(
                std::clamp(std::lround(f.color.data[p] * 255.0f), 0L, 255L));
        write_png_u8(frame_path(dir, "color", static_cast<int>(i), "png"), color);

        ImageU16 depth(w, h, 1);
        for (std::size_t p = 0; p < f.depth.data.size(); ++p)
            depth.data[p] = static_cast<std::uint16_t>(
                std::clamp(std::lround(f.depth.data[p] * manifest.depth_scale), 0L, 65535L));
        write_png_u16(frame_path(dir, "depth", static_cast<int>(i), "png"), depth);

        write_feature_bin(frame_path(dir, "feature", static_cast<int>(i), "bin"), f.feature);

        ImageU8 label = f.label.empty() ? ImageU8(w, h, 1, kInvalidLabel) : f.label;
        write_png_u8(frame_path(dir, "label", static_cast<int>(i), "png"), label);
    }

    Trajectory traj(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) traj[i] = {frames[i].timestamp, poses[i]};
    write_trajectory_tum(traj, (fs::path(dir) / "groundtruth.txt").string());

    ImageF emb(1, static_cast<int>(embeddings.rows()), static_cast<int>(embeddings.cols()));
    for (int c = 0; c < embeddings.rows(); ++c)
        for (int k = 0; k < embeddings.cols(); ++k)
            emb.at(0, c, k) = static_cast<float>(embeddings(c, k));
    write_feature_bin((fs::path(dir) / "class_embeddings.bin").string(), emb);

    write_manifest(manifest, (fs::path(dir) / "manifest.txt").string());
}

DatasetReader::DatasetReader(const std::string& dir) : dir_(dir) {
    manifest_ = read_manifest((fs::path(dir) / "manifest.txt").string());
    groundtruth_ = read_trajectory_tum((fs::path(dir) / "groundtruth.txt").string());
    const ImageF emb = read_feature_bin((fs::path(dir) / "class_embeddings.bin").string());
    embeddings_.resize(emb.height, emb.channels);
    for (int c = 0; c < emb.height; ++c)
        for (int k = 0; k < emb.channels; ++k) embeddings_(c, k) = emb.at(0, c, k);
    if (static_cast<int>(manifest_.class_names.size()) != emb.height)
        throw std::runtime_error("dataset: class_names count disagrees with class_embeddings.bin in " +
                                 dir);
}

Frame DatasetReader::read_frame(int index) const {
    if (index < 0 || index >= manifest_.frame_count)
        throw std::out_of_range("dataset: frame index " + std::to_string(index) + " out of range");

    Frame f;
    f.timestamp = index < static_cast<int>(groundtruth_.size()) ? groundtruth_[index].timestamp
                                                                : index / 30.0;

    const ImageU8 color = read_png_u8(frame_path(dir_, "color", index, "png"));
    f.color = ImageF(color.width, color.height, 3);
    for (std::size_t p = 0; p < color.data.size(); ++p)
        f.color.data[p] = static_cast<float>(color.data[p]) / 255.0f;

    const ImageU16 depth = read_png_u16(frame_path(dir_, "depth", index, "png"));
    f.depth = ImageF(depth.width, depth.height, 1);
    for (std::size_t p = 0; p < depth.data.size(); ++p)
        f.depth.data[p] = static_cast<float>(depth.data[p] / manifest_.depth_scale);

    f.feature = read_feature_bin(frame_path(dir_, "feature", index, "bin"));
    f.label = read_png_u8(frame_path(dir_, "label", index, "png"));

    if (f.depth.width != f.color.width || f.feature.width != f.color.width ||
        f.label.width != f.color.width || f.depth.height != f.color.height ||
        f.feature.height != f.color.height || f.label.height != f.color.height)
        throw std::runtime_error("dataset: inconsistent image sizes for frame " +
                                 std::to_string(index));
    return f;
}

void read_dataset(const std::string& dir, std::vector<Frame>& frames, Trajectory& poses,
                  DatasetManifest& manifest, Eigen::MatrixXd& embeddings) {
    const DatasetReader reader(dir);
    manifest = reader.manifest();
    poses = reader.groundtruth();
    embeddings = reader.embeddings();
    frames.clear();
    frames.reserve(reader.size());
    for (int i = 0; i < reader.size(); ++i) frames.push_back(reader.read_frame(i));
}

}  // namespace fslam
