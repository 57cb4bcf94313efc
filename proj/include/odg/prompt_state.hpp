#pragma once

#include <map>
#include <string>
#include <vector>

#include "odg/encoders.hpp"
#include "odg/tensor.hpp"

namespace odg {

enum class DomTokenPosition { kFront, kMiddle, kEnd };

DomTokenPosition dom_token_position_from(const std::string& name);
std::string to_string(DomTokenPosition pos);

struct DomainToken {
    Tensor vector;  // d_tok
};

// Learnable prompt state: generic contexts nu (class prompt) and omega
// (domain prompt), the domain projector, and the fixed class-name token
// table covering Y_aug.
struct PromptState {
    Tensor nu;     // [M, d_tok]
    Tensor omega;  // [N, d_tok]
    Tensor dom_w;  // [d_tok, 2*d_v]
    Tensor dom_b;  // [d_tok]
    std::map<std::string, std::vector<double>> class_table;
    std::vector<std::string> class_order;  // Y_aug; "unknown" last
    DomTokenPosition position = DomTokenPosition::kFront;

    int context_len_cls() const { return nu.shape()[0]; }
    int context_len_dom() const { return omega.shape()[0]; }
    std::vector<Tensor> trainables() const { return {nu, omega, dom_w, dom_b}; }
};

// dom_x = F_dom([mu; sigma])
DomainToken domain_token(const PromptState& state, const VisualOutput& vo);

// [dom, nu_1..nu_M, cls] (position switch moves the dom token)
TokenSequence compose_dom_cls(const PromptState& state, const DomainToken& dt,
                              const std::string& class_name);

// [dom, omega_1..omega_N]; class independent
TokenSequence compose_dom(const PromptState& state, const DomainToken& dt);

enum class PromptInit { kPhrase, kGaussian };

PromptState init_prompt_state(const EncoderBackend& backend, const std::string& phrase,
                              const std::vector<std::string>& class_names, PromptInit init_mode,
                              uint64_t seed, int context_len_cls = 4, int context_len_dom = 4,
                              DomTokenPosition position = DomTokenPosition::kFront);

}  // namespace odg
