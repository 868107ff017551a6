#include "fslam/map/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fslam {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'F'};
constexpr std::uint32_t kVersion = 1;

void write_f32(std::vector<char>& buf, float v) {
    char raw[4];
    std::memcpy(raw, &v, 4);
    buf.insert(buf.end(), raw, raw + 4);
}

template <typename T>
void write_pod(std::vector<char>& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.insert(buf.end(), raw, raw + sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw std::runtime_error("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void save_checkpoint(const SceneMap& map, const std::string& path) {
    std::vector<char> buf;
    buf.reserve(16 + map.size() * (14 + map.feature_dim) * 4);
    buf.insert(buf.end(), kMagic, kMagic + 4);
    write_pod<std::uint32_t>(buf, kVersion);
    write_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(map.feature_dim));
    write_pod<std::uint64_t>(buf, static_cast<std::uint64_t>(map.size()));

    for (const Gaussian3D& g : map.gaussians) {
        for (int i = 0; i < 3; ++i) write_f32(buf, static_cast<float>(g.mean[i]));
        for (int i = 0; i < 3; ++i) write_f32(buf, static_cast<float>(g.log_scale[i]));
        write_f32(buf, static_cast<float>(g.rotation.w()));
        write_f32(buf, static_cast<float>(g.rotation.x()));
        write_f32(buf, static_cast<float>(g.rotation.y()));
        write_f32(buf, static_cast<float>(g.rotation.z()));
        write_f32(buf, static_cast<float>(g.opacity_logit));
        for (int i = 0; i < 3; ++i) write_f32(buf, static_cast<float>(g.color[i]));
        for (int i = 0; i < map.feature_dim; ++i) write_f32(buf, static_cast<float>(g.feature[i]));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

SceneMap load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                                 " in " + path);
    const auto dim = read_pod<std::uint32_t>(in, path);
    const auto count = read_pod<std::uint64_t>(in, path);

    SceneMap map;
    map.feature_dim = static_cast<int>(dim);
    map.gaussians.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Gaussian3D g;
        for (int k = 0; k < 3; ++k) g.mean[k] = read_pod<float>(in, path);
        for (int k = 0; k < 3; ++k) g.log_scale[k] = read_pod<float>(in, path);
        const float qw = read_pod<float>(in, path);
        const float qx = read_pod<float>(in, path);
        const float qy = read_pod<float>(in, path);
        const float qz = read_pod<float>(in, path);
        g.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
        g.opacity_logit = read_pod<float>(in, path);
        for (int k = 0; k < 3; ++k) g.color[k] = read_pod<float>(in, path);
        g.feature.resize(dim);
        for (std::uint32_t k = 0; k < dim; ++k) g.feature[k] = read_pod<float>(in, path);
        map.gaussians.push_back(std::move(g));
    }
    return map;
}

}  // namespace fslam
