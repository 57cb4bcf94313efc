#pragma once

#include <optional>
#include <string>
#include <vector>

#include "odg/datasets.hpp"
#include "odg/encoders.hpp"
#include "odg/latent.hpp"
#include "odg/prompt_state.hpp"

namespace odg {

struct ModelConfig {
    double tau = 0.01;
    bool use_sem = true;
    bool use_xhat = true;     // false: classify F_v(x) directly, no latent fusion
    bool manual_xhat = false;  // differential replaced by the static class-name embedding
};

// The trainable assembly around a frozen backend: prompt state plus the two
// latent-space projectors.
struct Model {
    std::shared_ptr<EncoderBackend> backend;
    PromptState prompts;
    Upsampler upsampler;
    FuseProjector fuser;
    ModelConfig cfg;

    std::vector<Tensor> trainables() const;

    // Single-image forward over all candidate classes in prompts.class_order.
    struct ImageForward {
        Tensor logits;                    // [K], cosine/tau per class
        std::vector<Tensor> differentials;  // per class; empty when !use_xhat
    };
    ImageForward forward_image(const Image& img) const;
};

Model build_model(std::shared_ptr<EncoderBackend> backend, const SplitSpec& split,
                  const ModelConfig& cfg, PromptInit init_mode, uint64_t seed,
                  int context_len_cls, int context_len_dom, DomTokenPosition position,
                  std::array<int, 3> upsampler_widths, int fuse_kernel);

}  // namespace odg
