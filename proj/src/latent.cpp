#include "odg/latent.hpp"

#include <cmath>

#include "odg/common.hpp"
#include "odg/rng.hpp"

namespace odg {

Upsampler Upsampler::init(int d_t, std::array<int, 3> widths, uint64_t seed) {
    Upsampler ups;
    ups.seed_grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d_t))));
    Rng rng(Rng::seed_mix(seed, 0x0B5A));
    const std::array<int, 5> chans = {1, widths[0], widths[1], widths[2], 1};
    for (int l = 0; l < 4; ++l) {
        const int cin = chans[static_cast<size_t>(l)];
        const int cout = chans[static_cast<size_t>(l) + 1];
        const double s = std::sqrt(2.0 / (cin * 16.0));
        ups.weights[static_cast<size_t>(l)] =
            Tensor::param({cin, cout, 4, 4}, rng.normal_vec(static_cast<size_t>(cin) * cout * 16, s));
        // small positive bias keeps pre-activations off the ReLU kink at init
        ups.biases[static_cast<size_t>(l)] =
            Tensor::param({cout}, std::vector<double>(static_cast<size_t>(cout), 0.02));
    }
    return ups;
}

Tensor Upsampler::forward(const Tensor& diff, int out_h, int out_w) const {
    Tensor x = embed_grid(diff, seed_grid);
    for (int l = 0; l < 4; ++l)
        x = relu(conv_transpose2d_param(x, weights[static_cast<size_t>(l)],
                                        biases[static_cast<size_t>(l)], 4, 2, 1));
    return bilinear_resize(x, out_h, out_w);
}

std::vector<Tensor> Upsampler::trainables() const {
    std::vector<Tensor> out;
    for (const auto& w : weights) out.push_back(w);
    for (const auto& b : biases) out.push_back(b);
    return out;
}

FuseProjector FuseProjector::init(uint64_t seed, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("fuse projector: kernel must be odd");
    FuseProjector proj;
    proj.kernel = kernel;
    Rng rng(Rng::seed_mix(seed, 0xF05E));
    std::vector<double> w(static_cast<size_t>(3) * 4 * kernel * kernel);
    for (auto& v : w) v = 0.05 * rng.normal();
    // start near the identity on the RGB channels so the latent image opens
    // close to the raw image
    const int center = kernel / 2;
    for (int c = 0; c < 3; ++c)
        w[((static_cast<size_t>(c) * 4 + c) * kernel + center) * kernel + center] += 1.0;
    proj.weight = Tensor::param({3, 4, kernel, kernel}, std::move(w));
    proj.bias = Tensor::param({3}, {0.0, 0.0, 0.0});
    return proj;
}

Tensor FuseProjector::forward(const Tensor& image_hwc, const Tensor& map_1hw) const {
    if (image_hwc.shape().size() != 3 || image_hwc.shape()[2] != 3)
        throw std::invalid_argument("fuse: image must be [H,W,3]");
    if (map_1hw.shape().size() != 3 || map_1hw.shape()[0] != 1)
        throw std::invalid_argument("fuse: map must be [1,H,W]");
    if (image_hwc.shape()[0] != map_1hw.shape()[1] || image_hwc.shape()[1] != map_1hw.shape()[2])
        throw std::invalid_argument("fuse: image and map spatial dims differ");
    Tensor stacked = concat_channels(hwc_to_chw(image_hwc), map_1hw);
    Tensor out = conv2d_param(stacked, weight, bias, kernel, kernel / 2);
    return chw_to_hwc(out);
}

std::vector<Tensor> FuseProjector::trainables() const { return {weight, bias}; }

DifferentialVector differential(const EncoderBackend& backend, const PromptState& state,
                                const Image& image, const std::string& class_name) {
    const VisualOutput vo = backend.visual_encode(image);
    const DomainToken dt = domain_token(state, vo);
    Tensor t_cls = backend.text_encode(compose_dom_cls(state, dt, class_name));
    Tensor t_dom = backend.text_encode(compose_dom(state, dt));
    return {sub(t_cls, t_dom), class_name};
}

Tensor upsample(const Upsampler& ups, const DifferentialVector& dv, int out_h, int out_w) {
    return ups.forward(dv.vector, out_h, out_w);
}

Tensor fuse(const FuseProjector& proj, const Tensor& image_hwc, const Tensor& map_1hw) {
    return proj.forward(image_hwc, map_1hw);
}

Tensor latent_embed(const EncoderBackend& backend, const PromptState& state, const Upsampler& ups,
                    const FuseProjector& proj, const Image& image, const std::string& class_name) {
    const DifferentialVector dv = differential(backend, state, image, class_name);
    const Tensor img = image_to_tensor(image);
    const Tensor map = ups.forward(dv.vector, image.h, image.w);
    const Tensor latent = proj.forward(img, map);
    return backend.visual_encode(latent).embedding;
}

}  // namespace odg
