#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fslam {

// Dense row-major raster, H x W x C. Channel index varies fastest.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

    bool empty() const { return data.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    std::size_t offset(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    T& at(int x, int y, int c = 0) { return data[offset(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data[offset(x, y, c)]; }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;

template <typename To, typename From>
Image<To> image_cast(const Image<From>& src) {
    Image<To> out(src.width, src.height, src.channels);
    for (std::size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<To>(src.data[i]);
    return out;
}

}  // namespace fslam
