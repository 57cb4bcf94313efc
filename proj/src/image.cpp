#include "odg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "odg/common.hpp"

namespace odg {

namespace {

unsigned char to_u8(double v) {
    const double s = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<unsigned char>(std::lround(s));
}

struct PngReadCtx {
    const std::vector<unsigned char>* bytes;
    size_t pos;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t n) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + n > ctx->bytes->size()) png_error(png, "short read");
    std::memcpy(out, ctx->bytes->data() + ctx->pos, n);
    ctx->pos += n;
}

void png_write_fn(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void png_flush_fn(png_structp) {}

Image decode_ppm(const std::vector<unsigned char>& bytes) {
    // binary P6 only
    size_t pos = 2;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_ws();
        int v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw RuntimeFailure("ppm: malformed header");
        return v;
    };
    const int w = read_int();
    const int h = read_int();
    const int maxv = read_int();
    ++pos;  // single whitespace after maxval
    if (maxv != 255) throw RuntimeFailure("ppm: only maxval 255 supported");
    if (bytes.size() - pos < static_cast<size_t>(w) * h * 3) throw RuntimeFailure("ppm: truncated");
    Image img(h, w);
    for (size_t i = 0; i < static_cast<size_t>(w) * h * 3; ++i)
        img.px[i] = bytes[pos + i] / 255.0;
    return img;
}

std::vector<unsigned char> encode_ppm(const Image& img) {
    std::string header = "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + img.px.size());
    for (double v : img.px) out.push_back(to_u8(v));
    return out;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open file: " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw RuntimeFailure("png: create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw RuntimeFailure("png: create_info_struct failed");
    }
    std::vector<unsigned char> out;
    std::vector<unsigned char> rowbuf(static_cast<size_t>(img.w) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeFailure("png: encode failed");
    }
    png_set_write_fn(png, &out, png_write_fn, png_flush_fn);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                rowbuf[static_cast<size_t>(x) * 3 + c] = to_u8(img.at(y, x, c));
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw RuntimeFailure("png: bad signature");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw RuntimeFailure("png: create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw RuntimeFailure("png: create_info_struct failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw RuntimeFailure("png: decode failed");
    }
    PngReadCtx ctx{&bytes, 0};
    png_set_read_fn(png, &ctx, png_read_fn);
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    // normalize every variant to 8-bit RGB
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * static_cast<size_t>(h));
    row_ptrs.resize(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) row_ptrs[static_cast<size_t>(y)] = pixels.data() + stride * y;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = pixels[stride * y + static_cast<size_t>(x) * 3 + c] / 255.0;
    return img;
}

Image read_image(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    throw RuntimeFailure("unsupported image format: " + path);
}

void write_image(const Image& img, const std::string& path) {
    std::vector<unsigned char> bytes;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm")
        bytes = encode_ppm(img);
    else
        bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (img.h == out_h && img.w == out_w) return img;
    Image out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        double sy = (y + 0.5) * img.h / out_h - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(img.h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double ty = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            double sx = (x + 0.5) * img.w / out_w - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(img.w - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double tx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = (1 - ty) * ((1 - tx) * img.at(y0, x0, c) + tx * img.at(y0, x1, c)) +
                                  ty * ((1 - tx) * img.at(y1, x0, c) + tx * img.at(y1, x1, c));
            }
        }
    }
    return out;
}

void clamp01(Image& img) {
    for (auto& v : img.px) v = std::clamp(v, 0.0, 1.0);
}

uint64_t image_checksum(const Image& img) {
    uint64_t h = fnv1a(&img.h, sizeof(img.h));
    h = fnv1a(&img.w, sizeof(img.w), h);
    return fnv1a(img.px.data(), img.px.size() * sizeof(double), h);
}

}  // namespace odg
