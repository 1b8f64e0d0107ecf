#include "atlas/png.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>

namespace atlas::png {

namespace {

// libpng reports errors by longjmp; the message is parked in the error pointer.
void on_error(png_structp ptr, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(ptr));
    if (err) *err = msg;
    png_longjmp(ptr, 1);
}
void on_warning(png_structp, png_const_charp) {}

struct Reader {
    std::string_view data;
    std::size_t pos = 0;
};

void read_fn(png_structp ptr, png_bytep out, png_size_t len) {
    auto* r = static_cast<Reader*>(png_get_io_ptr(ptr));
    if (r->pos + len > r->data.size()) png_error(ptr, "truncated data");
    std::memcpy(out, r->data.data() + r->pos, len);
    r->pos += len;
}

void write_fn(png_structp ptr, png_bytep in, png_size_t len) {
    static_cast<std::string*>(png_get_io_ptr(ptr))->append(reinterpret_cast<const char*>(in), len);
}

void flush_fn(png_structp) {}

bool write_rows(png_structp ptr, png_infop info, const Image& img, std::string* out) {
    if (setjmp(png_jmpbuf(ptr))) return false;
    const std::size_t stride = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    png_set_write_fn(ptr, out, write_fn, flush_fn);
    png_set_IHDR(ptr, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(ptr, 6);
    png_write_info(ptr, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(ptr, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * stride));
    png_write_end(ptr, nullptr);
    return true;
}

bool read_header(png_structp ptr, png_infop info, Reader* reader, Image* img, std::size_t* stride) {
    if (setjmp(png_jmpbuf(ptr))) return false;
    png_set_read_fn(ptr, reader, read_fn);
    png_read_info(ptr, info);
    const auto color = png_get_color_type(ptr, info);
    const auto depth = png_get_bit_depth(ptr, info);
    if (depth == 16) png_set_strip_16(ptr);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ptr);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ptr);
    if (png_get_valid(ptr, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ptr);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(ptr);
    png_set_interlace_handling(ptr);
    png_read_update_info(ptr, info);
    img->width = static_cast<int>(png_get_image_width(ptr, info));
    img->height = static_cast<int>(png_get_image_height(ptr, info));
    img->channels = png_get_channels(ptr, info);
    *stride = png_get_rowbytes(ptr, info);
    return true;
}

bool read_body(png_structp ptr, png_bytep* rows) {
    if (setjmp(png_jmpbuf(ptr))) return false;
    png_read_image(ptr, rows);
    png_read_end(ptr, nullptr);
    return true;
}

}  // namespace

std::string encode(const Image& img) {
    if (img.width <= 0 || img.height <= 0 || (img.channels != 3 && img.channels != 4))
        throw PngError("png: bad image shape");
    const std::size_t stride = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    if (img.pixels.size() != stride * static_cast<std::size_t>(img.height)) throw PngError("png: pixel buffer size");

    std::string err;
    png_structp ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
    if (!ptr) throw PngError("png: out of memory");
    png_infop info = png_create_info_struct(ptr);
    std::string out;
    const bool ok = info && write_rows(ptr, info, img, &out);
    png_destroy_write_struct(&ptr, &info);
    if (!ok) throw PngError("png: " + (err.empty() ? std::string("encode failed") : err));
    return out;
}

Image decode(std::string_view bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
        throw PngError("png: not a PNG stream");
    std::string err;
    png_structp ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
    if (!ptr) throw PngError("png: out of memory");
    png_infop info = png_create_info_struct(ptr);
    Reader reader{bytes, 0};
    Image img;
    std::size_t stride = 0;
    bool ok = info && read_header(ptr, info, &reader, &img, &stride);
    if (ok && img.channels != 3 && img.channels != 4) {
        err = "unsupported channel layout";
        ok = false;
    }
    if (ok) {
        img.pixels.resize(stride * static_cast<std::size_t>(img.height));
        std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
        for (int y = 0; y < img.height; ++y)
            rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * stride;
        ok = read_body(ptr, rows.data());
    }
    png_destroy_read_struct(&ptr, &info, nullptr);
    if (!ok) throw PngError("png: " + (err.empty() ? std::string("decode failed") : err));
    return img;
}

}  // namespace atlas::png
