#include "odg/model.hpp"

#include "odg/common.hpp"

namespace odg {

std::vector<Tensor> Model::trainables() const {
    std::vector<Tensor> out = prompts.trainables();
    for (const auto& t : upsampler.trainables()) out.push_back(t);
    for (const auto& t : fuser.trainables()) out.push_back(t);
    return out;
}

Model::ImageForward Model::forward_image(const Image& img) const {
    if (cfg.tau <= 0.0) throw ConfigError("model: tau must be > 0");
    const Tensor img_t = image_to_tensor(img);
    const VisualOutput vo = backend->visual_encode(img_t);
    const DomainToken dt = domain_token(prompts, vo);
    const Tensor t_dom = backend->text_encode(compose_dom(prompts, dt));

    ImageForward fwd;
    std::vector<Tensor> sims;
    sims.reserve(prompts.class_order.size());
    for (const auto& cls : prompts.class_order) {
        const Tensor t_cls = backend->text_encode(compose_dom_cls(prompts, dt, cls));
        Tensor visual;
        if (cfg.use_xhat) {
            Tensor diff;
            if (cfg.manual_xhat) {
                // static per-class vector from the bare class-name embedding;
                // constant by construction (no learnable inputs)
                TokenSequence name_only{Tensor::from({backend->d_tok()}, prompts.class_table.at(cls))};
                diff = backend->text_encode(name_only);
            } else {
                diff = sub(t_cls, t_dom);
            }
            fwd.differentials.push_back(diff);
            const Tensor map = upsampler.forward(diff, img.h, img.w);
            const Tensor latent = fuser.forward(img_t, map);
            visual = backend->visual_encode(latent).embedding;
        } else {
            visual = vo.embedding;
        }
        sims.push_back(cosine_sim(t_cls, visual));
    }
    fwd.logits = scale(stack_scalars(sims), 1.0 / cfg.tau);
    return fwd;
}

Model build_model(std::shared_ptr<EncoderBackend> backend, const SplitSpec& split,
                  const ModelConfig& cfg, PromptInit init_mode, uint64_t seed,
                  int context_len_cls, int context_len_dom, DomTokenPosition position,
                  std::array<int, 3> upsampler_widths, int fuse_kernel) {
    Model model;
    model.backend = backend;
    model.cfg = cfg;
    model.prompts = init_prompt_state(*backend, "Image of a", split.augmented_labels, init_mode,
                                      seed, context_len_cls, context_len_dom, position);
    model.upsampler = Upsampler::init(backend->d_t(), upsampler_widths, seed);
    model.fuser = FuseProjector::init(seed, fuse_kernel);
    return model;
}

}  // namespace odg
