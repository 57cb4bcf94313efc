#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace odg {

// Reverse-mode autodiff over dense double tensors. Small and dynamic: every
// forward pass builds a fresh graph of shared nodes, backward() walks it once.
// Frozen encoder weights stay outside the graph as plain arrays (see
// linear_const / conv ops taking raw weight spans), so gradients can flow
// *through* a frozen map without ever reaching its parameters.

struct TensorData;
using TensorPtr = std::shared_ptr<TensorData>;

struct TensorData {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;  // sized lazily by backward()
    bool requires_grad = false;
    std::vector<TensorPtr> parents;
    std::function<void()> backprop;  // reads this->grad, accumulates into parents
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorPtr p) : p_(std::move(p)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor from(std::vector<int> shape, std::vector<double> values);
    static Tensor scalar(double v);
    // Trainable leaf: persists across steps, participates in backward().
    static Tensor param(std::vector<int> shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(p_); }
    const std::vector<int>& shape() const { return p_->shape; }
    size_t size() const { return p_->val.size(); }
    const std::vector<double>& values() const { return p_->val; }
    std::vector<double>& values() { return p_->val; }
    const std::vector<double>& grad() const { return p_->grad; }
    std::vector<double>& grad() { return p_->grad; }
    bool requires_grad() const { return p_->requires_grad; }
    double item() const;

    void zero_grad();
    // Backward from a scalar root; seeds d(root)/d(root) = 1.
    void backward();

    TensorPtr node() const { return p_; }
    TensorData* raw() const { return p_.get(); }

private:
    TensorPtr p_;
};

// Scoped switch that disables graph construction (inference paths). Forward
// arithmetic is identical with or without the guard.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_const(const Tensor& a, double c);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs_t(const Tensor& a);

// ---- reductions / scalars ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_all(const std::vector<Tensor>& xs);   // n-ary add of scalars
Tensor mean_all(const std::vector<Tensor>& xs);
Tensor dot(const Tensor& a, const Tensor& b);
// cos(a, b) with denominator clamped at 1e-12.
Tensor cosine_sim(const Tensor& a, const Tensor& b);
Tensor pick(const Tensor& a, int index);
Tensor stack_scalars(const std::vector<Tensor>& xs);
Tensor neg(const Tensor& a);

// log softmax over a 1-D tensor, max-subtracted.
Tensor log_softmax(const Tensor& logits);

// ---- vectors / rows ----
Tensor concat(const std::vector<Tensor>& xs);              // 1-D concat
Tensor row(const Tensor& m, int r);                        // view of row r of [R,C]
Tensor stack_rows(const std::vector<Tensor>& rows);        // L x d from d-vectors
Tensor mean_rows(const Tensor& m);                         // [R,C] -> [C]
Tensor std_rows(const Tensor& m);                          // population std, [R,C] -> [C]
Tensor center_rows(const Tensor& m);                       // subtract each row's own mean
Tensor weighted_row_sum(const Tensor& m, const std::vector<double>& w);

// y = W x + b with frozen (untracked) weights; W is row-major [out,in].
Tensor linear_const(const std::vector<double>& W, const std::vector<double>& b,
                    int out_dim, int in_dim, const Tensor& x);
// Same applied to every row of [L,in] -> [L,out].
Tensor rows_linear_const(const std::vector<double>& W, const std::vector<double>& b,
                         int out_dim, int in_dim, const Tensor& m);
// Adds a frozen per-row offset table [L*d] to [L,d].
Tensor rows_add_const(const Tensor& m, const std::vector<double>& table);
// Broadcast-adds a d-vector to every row of [L,d].
Tensor rows_add_vec(const Tensor& m, const Tensor& v);
// y = W x + b with trainable W [out,in] and b [out].
Tensor linear_param(const Tensor& W, const Tensor& b, const Tensor& x);

// ---- images (channel-last [H,W,3] and channel-first [C,H,W]) ----
Tensor area_pool(const Tensor& img_hwc, int out_h, int out_w);
Tensor patchify(const Tensor& img_hwc, int patch);         // -> [n_patches, 3*patch*patch]
Tensor hwc_to_chw(const Tensor& img_hwc);
Tensor chw_to_hwc(const Tensor& img_chw);
Tensor concat_channels(const Tensor& a_chw, const Tensor& b_chw);
// Places the first g*g entries of a d-vector on a [1,g,g] grid, zero padded.
Tensor embed_grid(const Tensor& v, int g);
Tensor conv2d_param(const Tensor& x_chw, const Tensor& W, const Tensor& b,
                    int kernel, int pad);                  // stride 1; W is [Cout,Cin,k,k]
Tensor conv_transpose2d_param(const Tensor& x_chw, const Tensor& W, const Tensor& b,
                              int kernel, int stride, int pad);  // W is [Cin,Cout,k,k]
Tensor bilinear_resize(const Tensor& x_chw, int out_h, int out_w);

}  // namespace odg
