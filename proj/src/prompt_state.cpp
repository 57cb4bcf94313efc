#include "odg/prompt_state.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "odg/common.hpp"
#include "odg/rng.hpp"

namespace odg {

DomTokenPosition dom_token_position_from(const std::string& name) {
    if (name == "front") return DomTokenPosition::kFront;
    if (name == "middle") return DomTokenPosition::kMiddle;
    if (name == "end") return DomTokenPosition::kEnd;
    throw ConfigError("dom_token_position must be front|middle|end, got '" + name + "'");
}

std::string to_string(DomTokenPosition pos) {
    switch (pos) {
        case DomTokenPosition::kFront: return "front";
        case DomTokenPosition::kMiddle: return "middle";
        default: return "end";
    }
}

DomainToken domain_token(const PromptState& state, const VisualOutput& vo) {
    const int in_dim = state.dom_w.shape()[1];
    if (static_cast<int>(vo.token_mean.size() + vo.token_std.size()) != in_dim)
        throw std::invalid_argument("domain_token: visual stats dim does not match projector");
    Tensor stats = concat({vo.token_mean, vo.token_std});
    return DomainToken{linear_param(state.dom_w, state.dom_b, stats)};
}

namespace {

// Inserts the dom token into a context at the configured position; `tail`
// (the class token) stays at the back when present.
TokenSequence place_tokens(const PromptState& state, const Tensor& ctx_matrix,
                           const DomainToken& dt, const Tensor* tail) {
    const int n_ctx = ctx_matrix.shape()[0];
    std::vector<Tensor> ctx;
    ctx.reserve(static_cast<size_t>(n_ctx));
    for (int i = 0; i < n_ctx; ++i) ctx.push_back(row(ctx_matrix, i));

    TokenSequence seq;
    switch (state.position) {
        case DomTokenPosition::kFront:
            seq.push_back(dt.vector);
            for (auto& t : ctx) seq.push_back(t);
            if (tail) seq.push_back(*tail);
            break;
        case DomTokenPosition::kMiddle: {
            const int half = n_ctx / 2;
            for (int i = 0; i < half; ++i) seq.push_back(ctx[static_cast<size_t>(i)]);
            seq.push_back(dt.vector);
            for (int i = half; i < n_ctx; ++i) seq.push_back(ctx[static_cast<size_t>(i)]);
            if (tail) seq.push_back(*tail);
            break;
        }
        case DomTokenPosition::kEnd:
            for (auto& t : ctx) seq.push_back(t);
            if (tail) seq.push_back(*tail);
            seq.push_back(dt.vector);
            break;
    }
    return seq;
}

}  // namespace

TokenSequence compose_dom_cls(const PromptState& state, const DomainToken& dt,
                              const std::string& class_name) {
    auto it = state.class_table.find(class_name);
    if (it == state.class_table.end())
        throw std::invalid_argument("compose_dom_cls: unknown class name '" + class_name + "'");
    Tensor cls = Tensor::from({static_cast<int>(it->second.size())}, it->second);
    return place_tokens(state, state.nu, dt, &cls);
}

TokenSequence compose_dom(const PromptState& state, const DomainToken& dt) {
    return place_tokens(state, state.omega, dt, nullptr);
}

PromptState init_prompt_state(const EncoderBackend& backend, const std::string& phrase,
                              const std::vector<std::string>& class_names, PromptInit init_mode,
                              uint64_t seed, int context_len_cls, int context_len_dom,
                              DomTokenPosition position) {
    if (context_len_cls < 1 || context_len_dom < 1)
        throw ConfigError("init_prompt_state: context lengths must be >= 1");
    {
        std::set<std::string> uniq(class_names.begin(), class_names.end());
        if (uniq.size() != class_names.size())
            throw ConfigError("init_prompt_state: duplicate class names");
    }

    const int d_tok = backend.d_tok();
    PromptState state;
    state.position = position;
    state.class_order = class_names;
    for (const auto& name : class_names) state.class_table[name] = backend.embed_token_text(name);

    auto fill_context = [&](int rows, uint64_t salt) {
        std::vector<double> data(static_cast<size_t>(rows) * d_tok);
        if (init_mode == PromptInit::kPhrase) {
            std::vector<std::vector<double>> words;
            std::istringstream iss(phrase);
            std::string word;
            while (iss >> word) words.push_back(backend.embed_token_text(word));
            if (words.empty()) throw ConfigError("init_prompt_state: empty phrase");
            for (int r = 0; r < rows; ++r) {
                const auto& w = words[static_cast<size_t>(r) % words.size()];
                std::copy(w.begin(), w.end(), data.begin() + static_cast<size_t>(r) * d_tok);
            }
        } else {
            Rng rng(Rng::seed_mix(seed, salt));
            for (auto& v : data) v = rng.normal();
        }
        return data;
    };

    state.nu = Tensor::param({context_len_cls, d_tok}, fill_context(context_len_cls, 0x6A7551));
    state.omega = Tensor::param({context_len_dom, d_tok}, fill_context(context_len_dom, 0x6A7552));

    Rng wrng(Rng::seed_mix(seed, 0xD0117));
    const int in_dim = 2 * backend.d_v();
    state.dom_w = Tensor::param({d_tok, in_dim}, wrng.normal_vec(static_cast<size_t>(d_tok) * in_dim,
                                                                 0.2 / std::sqrt(in_dim)));
    state.dom_b = Tensor::param({d_tok}, std::vector<double>(static_cast<size_t>(d_tok), 0.0));
    return state;
}

}  // namespace odg
