#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "odg/image.hpp"
#include "odg/tensor.hpp"

namespace odg {

struct VisualOutput {
    Tensor embedding;   // pooled, d_v
    Tensor token_mean;  // mu over final-layer patch tokens, d_v
    Tensor token_std;   // population std over patch tokens, d_v
};

// Ordered token-embedding sequence fed to the text encoder.
using TokenSequence = std::vector<Tensor>;

// Frozen dual-encoder contract. Weights are immutable after construction;
// both encodes are deterministic and differentiable with respect to their
// inputs (gradients pass through the frozen maps, never into them).
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual int d_v() const = 0;
    virtual int d_tok() const = 0;
    virtual int d_t() const = 0;
    virtual int max_context() const = 0;
    virtual std::string name() const = 0;

    virtual VisualOutput visual_encode(const Tensor& image_hwc) const = 0;
    virtual Tensor text_encode(const TokenSequence& seq) const = 0;

    // Fixed name/phrase embedding table entry (the mock's stand-in for a
    // tokenizer + embedding lookup). Deterministic per backend.
    virtual std::vector<double> embed_token_text(const std::string& text) const = 0;

    // Digest of every frozen parameter; must not change across training.
    virtual uint64_t param_hash() const = 0;

    VisualOutput visual_encode(const Image& img) const;
};

std::shared_ptr<EncoderBackend> make_mock_backend(uint64_t seed, int d_v, int d_tok, int d_t,
                                                  int n_patch_tokens);

// Descriptor-driven construction: {"backend": "mock"|..., dims, seed, ...}.
// Additional backends (a real pretrained CLIP adapter, for one) plug in via
// the factory registry; nothing in this library requires them.
using BackendFactory =
    std::function<std::shared_ptr<EncoderBackend>(const nlohmann::json& descriptor)>;
void register_backend_factory(const std::string& name, BackendFactory factory);
std::shared_ptr<EncoderBackend> make_backend(const nlohmann::json& descriptor);

Tensor image_to_tensor(const Image& img);

}  // namespace odg
