#include "fslam/io/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace fslam {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

void write_png(const std::string& path, int width, int height, int channels, int bit_depth,
               const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("png: cannot open for writing", path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail("png: allocation failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("png: write error", path);
    }

    png_init_io(png, fp.get());
    const int color_type = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // in-memory data is little-endian
    png_write_image(png, const_cast<png_bytep*>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct PngReadState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadState() { png_destroy_read_struct(&png, &info, nullptr); }
};

void read_png(const std::string& path, int expect_bit_depth, int& width, int& height, int& channels,
              std::vector<std::uint8_t>& bytes) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("png: cannot open", path);

    PngReadState st;
    st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    st.info = st.png ? png_create_info_struct(st.png) : nullptr;
    if (!st.png || !st.info) fail("png: allocation failed", path);
    if (setjmp(png_jmpbuf(st.png))) fail("png: corrupt file", path);

    png_init_io(st.png, fp.get());
    png_read_info(st.png, st.info);

    width = static_cast<int>(png_get_image_width(st.png, st.info));
    height = static_cast<int>(png_get_image_height(st.png, st.info));
    const int bit_depth = png_get_bit_depth(st.png, st.info);
    const int color_type = png_get_color_type(st.png, st.info);
    if (bit_depth != expect_bit_depth)
        fail("png: unexpected bit depth " + std::to_string(bit_depth), path);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(st.png);
    if (bit_depth == 16) png_set_swap(st.png);
    png_read_update_info(st.png, st.info);

    channels = static_cast<int>(png_get_channels(st.png, st.info));
    const std::size_t row_bytes = png_get_rowbytes(st.png, st.info);
    bytes.resize(row_bytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = bytes.data() + y * row_bytes;
    png_read_image(st.png, rows.data());
    png_read_end(st.png, nullptr);
}

}  // namespace

void write_png_u8(const std::string& path, const ImageU8& image) {
    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y)
        rows[y] = const_cast<png_bytep>(image.data.data() +
                                        static_cast<std::size_t>(y) * image.width * image.channels);
    write_png(path, image.width, image.height, image.channels, 8, rows);
}

ImageU8 read_png_u8(const std::string& path) {
    int w, h, c;
    std::vector<std::uint8_t> bytes;
    read_png(path, 8, w, h, c, bytes);
    ImageU8 out(w, h, c);
    out.data.assign(bytes.begin(), bytes.end());
    return out;
}

void write_png_u16(const std::string& path, const ImageU16& image) {
    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y)
        rows[y] = reinterpret_cast<png_bytep>(
            const_cast<std::uint16_t*>(image.data.data() + static_cast<std::size_t>(y) * image.width));
    write_png(path, image.width, image.height, 1, 16, rows);
}

ImageU16 read_png_u16(const std::string& path) {
    int w, h, c;
    std::vector<std::uint8_t> bytes;
    read_png(path, 16, w, h, c, bytes);
    if (c != 1) fail("png: expected single channel", path);
    ImageU16 out(w, h, 1);
    std::memcpy(out.data.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace fslam
