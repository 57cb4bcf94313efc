#pragma once

#include <string>
#include <vector>

namespace odg {

// Interleaved RGB image with double pixels in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<double> px;  // h*w*3, row-major, RGB

    Image() = default;
    Image(int height, int width, double fill = 0.0)
        : h(height), w(width), px(static_cast<size_t>(height) * width * 3, fill) {}

    double& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    bool empty() const { return px.empty(); }
};

// PNG (8-bit, via libpng) and binary PPM. Chosen by file extension on write;
// sniffed by magic bytes on read.
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

std::vector<unsigned char> encode_png(const Image& img);
Image decode_png(const std::vector<unsigned char>& bytes);

Image resize_bilinear(const Image& img, int out_h, int out_w);

void clamp01(Image& img);

uint64_t image_checksum(const Image& img);

}  // namespace odg
