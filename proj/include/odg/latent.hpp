#pragma once

#include <array>
#include <string>
#include <vector>

#include "odg/encoders.hpp"
#include "odg/prompt_state.hpp"
#include "odg/tensor.hpp"

namespace odg {

// Text-space prompt differential: F_t(P_dom,cls) - F_t(P_dom).
struct DifferentialVector {
    Tensor vector;  // d_t
    std::string class_name;
};

// Four stride-2 transpose-conv stages with ReLU, then bilinear resize to the
// image plane. The d_t differential seeds a zero-padded square grid.
struct Upsampler {
    std::array<Tensor, 4> weights;  // [Cin,Cout,4,4] each
    std::array<Tensor, 4> biases;
    int seed_grid = 0;

    static Upsampler init(int d_t, std::array<int, 3> widths, uint64_t seed);
    Tensor forward(const Tensor& differential, int out_h, int out_w) const;
    std::vector<Tensor> trainables() const;
};

// Single convolution folding the upsampled map into the image: 4 -> 3 channels.
struct FuseProjector {
    Tensor weight;  // [3,4,k,k]
    Tensor bias;    // [3]
    int kernel = 1;

    static FuseProjector init(uint64_t seed, int kernel = 1);
    Tensor forward(const Tensor& image_hwc, const Tensor& map_1hw) const;
    std::vector<Tensor> trainables() const;
};

DifferentialVector differential(const EncoderBackend& backend, const PromptState& state,
                                const Image& image, const std::string& class_name);

Tensor upsample(const Upsampler& ups, const DifferentialVector& dv, int out_h, int out_w);

Tensor fuse(const FuseProjector& proj, const Tensor& image_hwc, const Tensor& map_1hw);

Tensor latent_embed(const EncoderBackend& backend, const PromptState& state, const Upsampler& ups,
                    const FuseProjector& proj, const Image& image, const std::string& class_name);

}  // namespace odg
