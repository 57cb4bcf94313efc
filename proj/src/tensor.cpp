#include "odg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace odg {

namespace {

thread_local bool g_grad_enabled = true;

size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

void ensure_grad(TensorData* t) {
    if (t->grad.size() != t->val.size()) t->grad.assign(t->val.size(), 0.0);
}

TensorPtr make_node(std::vector<int> shape, std::vector<double> val,
                    std::vector<TensorPtr> parents) {
    auto n = std::make_shared<TensorData>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
        }
        if (n->requires_grad) n->parents = std::move(parents);
    }
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int> shape) {
    size_t n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (numel(shape) != values.size()) throw std::invalid_argument("Tensor::from: size mismatch");
    auto n = std::make_shared<TensorData>();
    n->shape = std::move(shape);
    n->val = std::move(values);
    return Tensor(n);
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::param(std::vector<int> shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.node()->requires_grad = true;
    return t;
}

double Tensor::item() const {
    if (p_->val.size() != 1) throw std::logic_error("item() on non-scalar");
    return p_->val[0];
}

void Tensor::zero_grad() { p_->grad.assign(p_->val.size(), 0.0); }

void Tensor::backward() {
    if (p_->val.size() != 1) throw std::logic_error("backward() needs a scalar root");
    // Post-order DFS, then replay in reverse.
    std::vector<TensorData*> order;
    std::unordered_set<TensorData*> visited;
    std::vector<std::pair<TensorData*, size_t>> stack;
    stack.emplace_back(p_.get(), 0);
    visited.insert(p_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorData* next = node->parents[idx++].get();
            if (visited.insert(next).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    ensure_grad(p_.get());
    p_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop();
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
    auto out = make_node(a.shape(), std::move(v), {a.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        TensorData* pb = b.raw();
        out->backprop = [o, pa, pb] {
            if (pa->requires_grad) {
                ensure_grad(pa);
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] += o->grad[i];
            }
        };
    }
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    auto out = make_node(a.shape(), std::move(v), {a.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        TensorData* pb = b.raw();
        out->backprop = [o, pa, pb] {
            if (pa->requires_grad) {
                ensure_grad(pa);
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] -= o->grad[i];
            }
        };
    }
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
    auto out = make_node(a.shape(), std::move(v), {a.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        TensorData* pb = b.raw();
        out->backprop = [o, pa, pb] {
            if (pa->requires_grad) {
                ensure_grad(pa);
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * pb->val[i];
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] += o->grad[i] * pa->val[i];
            }
        };
    }
    return Tensor(out);
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * s;
    auto out = make_node(a.shape(), std::move(v), {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa, s] {
            ensure_grad(pa);
            for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * s;
        };
    }
    return Tensor(out);
}

Tensor add_const(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + c;
    auto out = make_node(a.shape(), std::move(v), {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa] {
            ensure_grad(pa);
            for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
        };
    }
    return Tensor(out);
}

Tensor tanh_t(const Tensor& a) {
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.values()[i]);
    auto out = make_node(a.shape(), std::move(v), {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa] {
            ensure_grad(pa);
            for (size_t i = 0; i < o->grad.size(); ++i)
                pa->grad[i] += o->grad[i] * (1.0 - o->val[i] * o->val[i]);
        };
    }
    return Tensor(out);
}

Tensor relu(const Tensor& a) {
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    auto out = make_node(a.shape(), std::move(v), {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa] {
            ensure_grad(pa);
            for (size_t i = 0; i < o->grad.size(); ++i)
                if (pa->val[i] > 0.0) pa->grad[i] += o->grad[i];
        };
    }
    return Tensor(out);
}

Tensor abs_t(const Tensor& a) {
    std::vector<double> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(a.values()[i]);
    auto out = make_node(a.shape(), std::move(v), {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa] {
            ensure_grad(pa);
            for (size_t i = 0; i < o->grad.size(); ++i) {
                if (pa->val[i] > 0.0)
                    pa->grad[i] += o->grad[i];
                else if (pa->val[i] < 0.0)
                    pa->grad[i] -= o->grad[i];
            }
        };
    }
    return Tensor(out);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// reductions / scalars
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.values()) s += x;
    auto out = make_node({1}, {s}, {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa] {
            ensure_grad(pa);
            for (auto& g : pa->grad) g += o->grad[0];
        };
    }
    return Tensor(out);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_all(const std::vector<Tensor>& xs) {
    if (xs.empty()) return Tensor::scalar(0.0);
    double s = 0.0;
    std::vector<TensorPtr> parents;
    parents.reserve(xs.size());
    for (const auto& x : xs) {
        s += x.item();
        parents.push_back(x.node());
    }
    auto out = make_node({1}, {s}, std::move(parents));
    if (out->requires_grad) {
        TensorData* o = out.get();
        out->backprop = [o] {
            for (auto& p : o->parents) {
                if (!p->requires_grad) continue;
                ensure_grad(p.get());
                p->grad[0] += o->grad[0];
            }
        };
    }
    return Tensor(out);
}

Tensor mean_all(const std::vector<Tensor>& xs) {
    if (xs.empty()) return Tensor::scalar(0.0);
    return scale(sum_all(xs), 1.0 / static_cast<double>(xs.size()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    auto out = make_node({1}, {s}, {a.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        TensorData* pb = b.raw();
        out->backprop = [o, pa, pb] {
            const double g = o->grad[0];
            if (pa->requires_grad) {
                ensure_grad(pa);
                for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g * pb->val[i];
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (size_t i = 0; i < pb->grad.size(); ++i) pb->grad[i] += g * pa->val[i];
            }
        };
    }
    return Tensor(out);
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "cosine_sim");
    constexpr double kEps = 1e-12;
    double d = 0.0, na2 = 0.0, nb2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        d += a.values()[i] * b.values()[i];
        na2 += a.values()[i] * a.values()[i];
        nb2 += b.values()[i] * b.values()[i];
    }
    const double na = std::sqrt(na2);
    const double nb = std::sqrt(nb2);
    const double denom = std::max(na * nb, kEps);
    const double c = d / denom;
    auto out = make_node({1}, {c}, {a.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        TensorData* pb = b.raw();
        const bool degenerate = na * nb < kEps;
        out->backprop = [o, pa, pb, na, nb, c, degenerate] {
            if (degenerate) return;
            const double g = o->grad[0];
            if (pa->requires_grad) {
                ensure_grad(pa);
                for (size_t i = 0; i < pa->grad.size(); ++i)
                    pa->grad[i] += g * (pb->val[i] / (na * nb) - c * pa->val[i] / (na * na));
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (size_t i = 0; i < pb->grad.size(); ++i)
                    pb->grad[i] += g * (pa->val[i] / (na * nb) - c * pb->val[i] / (nb * nb));
            }
        };
    }
    return Tensor(out);
}

Tensor pick(const Tensor& a, int index) {
    if (index < 0 || static_cast<size_t>(index) >= a.size())
        throw std::out_of_range("pick: index out of range");
    auto out = make_node({1}, {a.values()[static_cast<size_t>(index)]}, {a.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a.raw();
        out->backprop = [o, pa, index] {
            ensure_grad(pa);
            pa->grad[static_cast<size_t>(index)] += o->grad[0];
        };
    }
    return Tensor(out);
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
    std::vector<double> v(xs.size());
    std::vector<TensorPtr> parents;
    parents.reserve(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        v[i] = xs[i].item();
        parents.push_back(xs[i].node());
    }
    auto out = make_node({static_cast<int>(xs.size())}, std::move(v), std::move(parents));
    if (out->requires_grad) {
        TensorData* o = out.get();
        out->backprop = [o] {
            for (size_t i = 0; i < o->parents.size(); ++i) {
                TensorData* p = o->parents[i].get();
                if (!p->requires_grad) continue;
                ensure_grad(p);
                p->grad[0] += o->grad[i];
            }
        };
    }
    return Tensor(out);
}

Tensor log_softmax(const Tensor& logits) {
    const auto& l = logits.values();
    const double m = *std::max_element(l.begin(), l.end());
    double z = 0.0;
    for (double x : l) z += std::exp(x - m);
    const double lse = m + std::log(z);
    std::vector<double> v(l.size()), p(l.size());
    for (size_t i = 0; i < l.size(); ++i) {
        v[i] = l[i] - lse;
        p[i] = std::exp(v[i]);
    }
    auto out = make_node(logits.shape(), std::move(v), {logits.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = logits.raw();
        out->backprop = [o, pa, p = std::move(p)] {
            ensure_grad(pa);
            double gsum = 0.0;
            for (double g : o->grad) gsum += g;
            for (size_t i = 0; i < pa->grad.size(); ++i)
                pa->grad[i] += o->grad[i] - p[i] * gsum;
        };
    }
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// vectors / rows
// ---------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& xs) {
    size_t total = 0;
    for (const auto& x : xs) total += x.size();
    std::vector<double> v;
    v.reserve(total);
    std::vector<TensorPtr> parents;
    parents.reserve(xs.size());
    for (const auto& x : xs) {
        v.insert(v.end(), x.values().begin(), x.values().end());
        parents.push_back(x.node());
    }
    auto out = make_node({static_cast<int>(total)}, std::move(v), std::move(parents));
    if (out->requires_grad) {
        TensorData* o = out.get();
        out->backprop = [o] {
            size_t off = 0;
            for (auto& pp : o->parents) {
                TensorData* p = pp.get();
                if (p->requires_grad) {
                    ensure_grad(p);
                    for (size_t i = 0; i < p->val.size(); ++i) p->grad[i] += o->grad[off + i];
                }
                off += p->val.size();
            }
        };
    }
    return Tensor(out);
}

Tensor row(const Tensor& m, int r) {
    if (m.shape().size() != 2) throw std::invalid_argument("row: expects [R,C]");
    const int rows = m.shape()[0], cols = m.shape()[1];
    if (r < 0 || r >= rows) throw std::out_of_range("row: index out of range");
    std::vector<double> v(m.values().begin() + static_cast<size_t>(r) * cols,
                          m.values().begin() + static_cast<size_t>(r + 1) * cols);
    auto out = make_node({cols}, std::move(v), {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        out->backprop = [o, pm, r, cols] {
            ensure_grad(pm);
            for (int c = 0; c < cols; ++c)
                pm->grad[static_cast<size_t>(r) * cols + c] += o->grad[c];
        };
    }
    return Tensor(out);
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    const int d = static_cast<int>(rows[0].size());
    std::vector<double> v;
    v.reserve(rows.size() * static_cast<size_t>(d));
    std::vector<TensorPtr> parents;
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != d) throw std::invalid_argument("stack_rows: ragged rows");
        v.insert(v.end(), r.values().begin(), r.values().end());
        parents.push_back(r.node());
    }
    auto out = make_node({static_cast<int>(rows.size()), d}, std::move(v), std::move(parents));
    if (out->requires_grad) {
        TensorData* o = out.get();
        out->backprop = [o, d] {
            for (size_t r = 0; r < o->parents.size(); ++r) {
                TensorData* p = o->parents[r].get();
                if (!p->requires_grad) continue;
                ensure_grad(p);
                for (int c = 0; c < d; ++c)
                    p->grad[c] += o->grad[r * static_cast<size_t>(d) + c];
            }
        };
    }
    return Tensor(out);
}

Tensor mean_rows(const Tensor& m) {
    if (m.shape().size() != 2) throw std::invalid_argument("mean_rows: expects [R,C]");
    const int rows = m.shape()[0], cols = m.shape()[1];
    std::vector<double> v(cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) v[c] += m.values()[static_cast<size_t>(r) * cols + c];
    for (auto& x : v) x /= rows;
    auto out = make_node({cols}, std::move(v), {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        out->backprop = [o, pm, rows, cols] {
            ensure_grad(pm);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    pm->grad[static_cast<size_t>(r) * cols + c] += o->grad[c] / rows;
        };
    }
    return Tensor(out);
}

Tensor std_rows(const Tensor& m) {
    if (m.shape().size() != 2) throw std::invalid_argument("std_rows: expects [R,C]");
    const int rows = m.shape()[0], cols = m.shape()[1];
    std::vector<double> mu(cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) mu[c] += m.values()[static_cast<size_t>(r) * cols + c];
    for (auto& x : mu) x /= rows;
    std::vector<double> sigma(cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double d = m.values()[static_cast<size_t>(r) * cols + c] - mu[c];
            sigma[c] += d * d;
        }
    for (auto& x : sigma) x = std::sqrt(x / rows);  // population convention
    auto out = make_node({cols}, sigma, {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        out->backprop = [o, pm, mu = std::move(mu), rows, cols] {
            ensure_grad(pm);
            for (int c = 0; c < cols; ++c) {
                const double s = o->val[c];
                if (s < 1e-12) continue;  // flat at sigma == 0
                const double g = o->grad[c] / (rows * s);
                for (int r = 0; r < rows; ++r) {
                    const size_t i = static_cast<size_t>(r) * cols + c;
                    pm->grad[i] += g * (pm->val[i] - mu[c]);
                }
            }
        };
    }
    return Tensor(out);
}

Tensor center_rows(const Tensor& m) {
    if (m.shape().size() != 2) throw std::invalid_argument("center_rows: expects [R,C]");
    const int rows = m.shape()[0], cols = m.shape()[1];
    std::vector<double> v(m.size());
    for (int r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (int c = 0; c < cols; ++c) mu += m.values()[static_cast<size_t>(r) * cols + c];
        mu /= cols;
        for (int c = 0; c < cols; ++c)
            v[static_cast<size_t>(r) * cols + c] = m.values()[static_cast<size_t>(r) * cols + c] - mu;
    }
    auto out = make_node(m.shape(), std::move(v), {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        out->backprop = [o, pm, rows, cols] {
            ensure_grad(pm);
            for (int r = 0; r < rows; ++r) {
                double gmu = 0.0;
                for (int c = 0; c < cols; ++c) gmu += o->grad[static_cast<size_t>(r) * cols + c];
                gmu /= cols;
                for (int c = 0; c < cols; ++c)
                    pm->grad[static_cast<size_t>(r) * cols + c] +=
                        o->grad[static_cast<size_t>(r) * cols + c] - gmu;
            }
        };
    }
    return Tensor(out);
}

Tensor weighted_row_sum(const Tensor& m, const std::vector<double>& w) {
    if (m.shape().size() != 2) throw std::invalid_argument("weighted_row_sum: expects [R,C]");
    const int rows = m.shape()[0], cols = m.shape()[1];
    if (static_cast<int>(w.size()) != rows)
        throw std::invalid_argument("weighted_row_sum: weight count != rows");
    std::vector<double> v(cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            v[c] += w[static_cast<size_t>(r)] * m.values()[static_cast<size_t>(r) * cols + c];
    auto out = make_node({cols}, std::move(v), {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        out->backprop = [o, pm, w, rows, cols] {
            ensure_grad(pm);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    pm->grad[static_cast<size_t>(r) * cols + c] += w[static_cast<size_t>(r)] * o->grad[c];
        };
    }
    return Tensor(out);
}

Tensor linear_const(const std::vector<double>& W, const std::vector<double>& b,
                    int out_dim, int in_dim, const Tensor& x) {
    if (static_cast<int>(x.size()) != in_dim)
        throw std::invalid_argument("linear_const: input dim mismatch");
    std::vector<double> v(out_dim);
    for (int o = 0; o < out_dim; ++o) {
        double s = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
        const double* wr = &W[static_cast<size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) s += wr[i] * x.values()[static_cast<size_t>(i)];
        v[static_cast<size_t>(o)] = s;
    }
    auto out = make_node({out_dim}, std::move(v), {x.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* px = x.raw();
        const double* Wp = W.data();  // frozen weights outlive the graph
        out->backprop = [o, px, Wp, out_dim, in_dim] {
            ensure_grad(px);
            for (int r = 0; r < out_dim; ++r) {
                const double g = o->grad[static_cast<size_t>(r)];
                const double* wr = Wp + static_cast<size_t>(r) * in_dim;
                for (int i = 0; i < in_dim; ++i) px->grad[static_cast<size_t>(i)] += g * wr[i];
            }
        };
    }
    return Tensor(out);
}

Tensor rows_linear_const(const std::vector<double>& W, const std::vector<double>& b,
                         int out_dim, int in_dim, const Tensor& m) {
    if (m.shape().size() != 2 || m.shape()[1] != in_dim)
        throw std::invalid_argument("rows_linear_const: shape mismatch");
    const int rows = m.shape()[0];
    std::vector<double> v(static_cast<size_t>(rows) * out_dim);
    for (int r = 0; r < rows; ++r) {
        const double* xr = &m.values()[static_cast<size_t>(r) * in_dim];
        for (int o = 0; o < out_dim; ++o) {
            double s = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
            const double* wr = &W[static_cast<size_t>(o) * in_dim];
            for (int i = 0; i < in_dim; ++i) s += wr[i] * xr[i];
            v[static_cast<size_t>(r) * out_dim + o] = s;
        }
    }
    auto out = make_node({rows, out_dim}, std::move(v), {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        const double* Wp = W.data();
        out->backprop = [o, pm, Wp, rows, out_dim, in_dim] {
            ensure_grad(pm);
            for (int r = 0; r < rows; ++r) {
                const double* gr = &o->grad[static_cast<size_t>(r) * out_dim];
                double* xr = &pm->grad[static_cast<size_t>(r) * in_dim];
                for (int oo = 0; oo < out_dim; ++oo) {
                    const double g = gr[oo];
                    const double* wr = Wp + static_cast<size_t>(oo) * in_dim;
                    for (int i = 0; i < in_dim; ++i) xr[i] += g * wr[i];
                }
            }
        };
    }
    return Tensor(out);
}

Tensor rows_add_const(const Tensor& m, const std::vector<double>& table) {
    if (m.size() > table.size()) throw std::invalid_argument("rows_add_const: table too small");
    std::vector<double> v(m.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = m.values()[i] + table[i];
    auto out = make_node(m.shape(), std::move(v), {m.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        out->backprop = [o, pm] {
            ensure_grad(pm);
            for (size_t i = 0; i < o->grad.size(); ++i) pm->grad[i] += o->grad[i];
        };
    }
    return Tensor(out);
}

Tensor rows_add_vec(const Tensor& m, const Tensor& v) {
    if (m.shape().size() != 2 || m.shape()[1] != static_cast<int>(v.size()))
        throw std::invalid_argument("rows_add_vec: shape mismatch");
    const int rows = m.shape()[0], cols = m.shape()[1];
    std::vector<double> out_v(m.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out_v[static_cast<size_t>(r) * cols + c] =
                m.values()[static_cast<size_t>(r) * cols + c] + v.values()[static_cast<size_t>(c)];
    auto out = make_node(m.shape(), std::move(out_v), {m.node(), v.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pm = m.raw();
        TensorData* pv = v.raw();
        out->backprop = [o, pm, pv, rows, cols] {
            if (pm->requires_grad) {
                ensure_grad(pm);
                for (size_t i = 0; i < o->grad.size(); ++i) pm->grad[i] += o->grad[i];
            }
            if (pv->requires_grad) {
                ensure_grad(pv);
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        pv->grad[static_cast<size_t>(c)] += o->grad[static_cast<size_t>(r) * cols + c];
            }
        };
    }
    return Tensor(out);
}

Tensor linear_param(const Tensor& W, const Tensor& b, const Tensor& x) {
    if (W.shape().size() != 2) throw std::invalid_argument("linear_param: W must be [out,in]");
    const int out_dim = W.shape()[0], in_dim = W.shape()[1];
    if (static_cast<int>(x.size()) != in_dim || static_cast<int>(b.size()) != out_dim)
        throw std::invalid_argument("linear_param: dim mismatch");
    std::vector<double> v(out_dim);
    for (int o = 0; o < out_dim; ++o) {
        double s = b.values()[static_cast<size_t>(o)];
        const double* wr = &W.values()[static_cast<size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) s += wr[i] * x.values()[static_cast<size_t>(i)];
        v[static_cast<size_t>(o)] = s;
    }
    auto out = make_node({out_dim}, std::move(v), {W.node(), b.node(), x.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pW = W.raw();
        TensorData* pb = b.raw();
        TensorData* px = x.raw();
        out->backprop = [o, pW, pb, px, out_dim, in_dim] {
            if (pW->requires_grad) {
                ensure_grad(pW);
                for (int r = 0; r < out_dim; ++r) {
                    const double g = o->grad[static_cast<size_t>(r)];
                    double* wr = &pW->grad[static_cast<size_t>(r) * in_dim];
                    for (int i = 0; i < in_dim; ++i) wr[i] += g * px->val[static_cast<size_t>(i)];
                }
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (int r = 0; r < out_dim; ++r) pb->grad[static_cast<size_t>(r)] += o->grad[static_cast<size_t>(r)];
            }
            if (px->requires_grad) {
                ensure_grad(px);
                for (int r = 0; r < out_dim; ++r) {
                    const double g = o->grad[static_cast<size_t>(r)];
                    const double* wr = &pW->val[static_cast<size_t>(r) * in_dim];
                    for (int i = 0; i < in_dim; ++i) px->grad[static_cast<size_t>(i)] += g * wr[i];
                }
            }
        };
    }
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// images
// ---------------------------------------------------------------------------

Tensor area_pool(const Tensor& img_hwc, int out_h, int out_w) {
    if (img_hwc.shape().size() != 3 || img_hwc.shape()[2] != 3)
        throw std::invalid_argument("area_pool: expects [H,W,3]");
    const int h = img_hwc.shape()[0], w = img_hwc.shape()[1];
    // gather per output cell over its covered block (>= 1 pixel, so both
    // down- and upscaling stay well defined)
    auto block = [](int o, int out_n, int in_n, int& lo, int& hi) {
        lo = o * in_n / out_n;
        hi = std::max(lo + 1, (o + 1) * in_n / out_n);
    };
    std::vector<double> v(static_cast<size_t>(out_h) * out_w * 3, 0.0);
    for (int oy = 0; oy < out_h; ++oy) {
        int y0, y1;
        block(oy, out_h, h, y0, y1);
        for (int ox = 0; ox < out_w; ++ox) {
            int x0, x1;
            block(ox, out_w, w, x0, x1);
            const double n = static_cast<double>(y1 - y0) * (x1 - x0);
            const size_t dst = (static_cast<size_t>(oy) * out_w + ox) * 3;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const size_t src = (static_cast<size_t>(y) * w + x) * 3;
                    for (int c = 0; c < 3; ++c) v[dst + c] += img_hwc.values()[src + c] / n;
                }
        }
    }
    auto out = make_node({out_h, out_w, 3}, std::move(v), {img_hwc.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pi = img_hwc.raw();
        out->backprop = [o, pi, h, w, out_h, out_w, block] {
            ensure_grad(pi);
            for (int oy = 0; oy < out_h; ++oy) {
                int y0, y1;
                block(oy, out_h, h, y0, y1);
                for (int ox = 0; ox < out_w; ++ox) {
                    int x0, x1;
                    block(ox, out_w, w, x0, x1);
                    const double n = static_cast<double>(y1 - y0) * (x1 - x0);
                    const size_t dst = (static_cast<size_t>(oy) * out_w + ox) * 3;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) {
                            const size_t src = (static_cast<size_t>(y) * w + x) * 3;
                            for (int c = 0; c < 3; ++c) pi->grad[src + c] += o->grad[dst + c] / n;
                        }
                }
            }
        };
    }
    return Tensor(out);
}

Tensor patchify(const Tensor& img_hwc, int patch) {
    const int h = img_hwc.shape()[0], w = img_hwc.shape()[1];
    if (h % patch != 0 || w % patch != 0)
        throw std::invalid_argument("patchify: dims not divisible by patch");
    const int gy = h / patch, gx = w / patch;
    const int pd = 3 * patch * patch;
    std::vector<double> v(static_cast<size_t>(gy) * gx * pd);
    size_t k = 0;
    for (int py = 0; py < gy; ++py)
        for (int px = 0; px < gx; ++px)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int c = 0; c < 3; ++c)
                        v[k++] = img_hwc.values()[((static_cast<size_t>(py * patch + dy)) * w +
                                                   (px * patch + dx)) * 3 + c];
    auto out = make_node({gy * gx, pd}, std::move(v), {img_hwc.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pi = img_hwc.raw();
        out->backprop = [o, pi, gy, gx, patch, w] {
            ensure_grad(pi);
            size_t k = 0;
            for (int py = 0; py < gy; ++py)
                for (int px = 0; px < gx; ++px)
                    for (int dy = 0; dy < patch; ++dy)
                        for (int dx = 0; dx < patch; ++dx)
                            for (int c = 0; c < 3; ++c)
                                pi->grad[((static_cast<size_t>(py * patch + dy)) * w +
                                          (px * patch + dx)) * 3 + c] += o->grad[k++];
        };
    }
    return Tensor(out);
}

Tensor hwc_to_chw(const Tensor& img_hwc) {
    const int h = img_hwc.shape()[0], w = img_hwc.shape()[1], ch = img_hwc.shape()[2];
    std::vector<double> v(img_hwc.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                v[(static_cast<size_t>(c) * h + y) * w + x] =
                    img_hwc.values()[(static_cast<size_t>(y) * w + x) * ch + c];
    auto out = make_node({ch, h, w}, std::move(v), {img_hwc.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pi = img_hwc.raw();
        out->backprop = [o, pi, h, w, ch] {
            ensure_grad(pi);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < ch; ++c)
                        pi->grad[(static_cast<size_t>(y) * w + x) * ch + c] +=
                            o->grad[(static_cast<size_t>(c) * h + y) * w + x];
        };
    }
    return Tensor(out);
}

Tensor chw_to_hwc(const Tensor& img_chw) {
    const int ch = img_chw.shape()[0], h = img_chw.shape()[1], w = img_chw.shape()[2];
    std::vector<double> v(img_chw.size());
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                v[(static_cast<size_t>(y) * w + x) * ch + c] =
                    img_chw.values()[(static_cast<size_t>(c) * h + y) * w + x];
    auto out = make_node({h, w, ch}, std::move(v), {img_chw.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pi = img_chw.raw();
        out->backprop = [o, pi, h, w, ch] {
            ensure_grad(pi);
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        pi->grad[(static_cast<size_t>(c) * h + y) * w + x] +=
                            o->grad[(static_cast<size_t>(y) * w + x) * ch + c];
        };
    }
    return Tensor(out);
}

Tensor concat_channels(const Tensor& a_chw, const Tensor& b_chw) {
    const int ca = a_chw.shape()[0], h = a_chw.shape()[1], w = a_chw.shape()[2];
    const int cb = b_chw.shape()[0];
    if (b_chw.shape()[1] != h || b_chw.shape()[2] != w)
        throw std::invalid_argument("concat_channels: spatial dims differ");
    std::vector<double> v;
    v.reserve(a_chw.size() + b_chw.size());
    v.insert(v.end(), a_chw.values().begin(), a_chw.values().end());
    v.insert(v.end(), b_chw.values().begin(), b_chw.values().end());
    auto out = make_node({ca + cb, h, w}, std::move(v), {a_chw.node(), b_chw.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pa = a_chw.raw();
        TensorData* pb = b_chw.raw();
        out->backprop = [o, pa, pb] {
            const size_t na = pa->val.size();
            if (pa->requires_grad) {
                ensure_grad(pa);
                for (size_t i = 0; i < na; ++i) pa->grad[i] += o->grad[i];
            }
            if (pb->requires_grad) {
                ensure_grad(pb);
                for (size_t i = 0; i < pb->val.size(); ++i) pb->grad[i] += o->grad[na + i];
            }
        };
    }
    return Tensor(out);
}

Tensor embed_grid(const Tensor& v, int g) {
    const size_t d = v.size();
    if (d > static_cast<size_t>(g) * g) throw std::invalid_argument("embed_grid: grid too small");
    std::vector<double> out_v(static_cast<size_t>(g) * g, 0.0);
    std::copy(v.values().begin(), v.values().end(), out_v.begin());
    auto out = make_node({1, g, g}, std::move(out_v), {v.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* pv = v.raw();
        out->backprop = [o, pv, d] {
            ensure_grad(pv);
            for (size_t i = 0; i < d; ++i) pv->grad[i] += o->grad[i];
        };
    }
    return Tensor(out);
}

Tensor conv2d_param(const Tensor& x_chw, const Tensor& W, const Tensor& b, int kernel, int pad) {
    const int cin = x_chw.shape()[0], h = x_chw.shape()[1], w = x_chw.shape()[2];
    const int cout = W.shape()[0];
    if (W.shape()[1] != cin || W.shape()[2] != kernel || W.shape()[3] != kernel)
        throw std::invalid_argument("conv2d_param: weight shape mismatch");
    const int oh = h + 2 * pad - kernel + 1;
    const int ow = w + 2 * pad - kernel + 1;
    auto xi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * h + y) * w + x; };
    auto wi = [&](int co, int ci, int dy, int dx) {
        return ((static_cast<size_t>(co) * cin + ci) * kernel + dy) * kernel + dx;
    };
    std::vector<double> v(static_cast<size_t>(cout) * oh * ow);
    for (int co = 0; co < cout; ++co)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = b.values()[static_cast<size_t>(co)];
                for (int ci = 0; ci < cin; ++ci)
                    for (int dy = 0; dy < kernel; ++dy) {
                        const int sy = y + dy - pad;
                        if (sy < 0 || sy >= h) continue;
                        for (int dx = 0; dx < kernel; ++dx) {
                            const int sx = x + dx - pad;
                            if (sx < 0 || sx >= w) continue;
                            s += W.values()[wi(co, ci, dy, dx)] * x_chw.values()[xi(ci, sy, sx)];
                        }
                    }
                v[(static_cast<size_t>(co) * oh + y) * ow + x] = s;
            }
    auto out = make_node({cout, oh, ow}, std::move(v), {x_chw.node(), W.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* px = x_chw.raw();
        TensorData* pW = W.raw();
        TensorData* pb = b.raw();
        out->backprop = [o, px, pW, pb, cin, cout, h, w, oh, ow, kernel, pad] {
            auto xi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * h + y) * w + x; };
            auto wi = [&](int co, int ci, int dy, int dx) {
                return ((static_cast<size_t>(co) * cin + ci) * kernel + dy) * kernel + dx;
            };
            const bool gx = px->requires_grad, gw = pW->requires_grad, gb = pb->requires_grad;
            if (gx) ensure_grad(px);
            if (gw) ensure_grad(pW);
            if (gb) ensure_grad(pb);
            for (int co = 0; co < cout; ++co)
                for (int y = 0; y < oh; ++y)
                    for (int x = 0; x < ow; ++x) {
                        const double g = o->grad[(static_cast<size_t>(co) * oh + y) * ow + x];
                        if (g == 0.0) continue;
                        if (gb) pb->grad[static_cast<size_t>(co)] += g;
                        for (int ci = 0; ci < cin; ++ci)
                            for (int dy = 0; dy < kernel; ++dy) {
                                const int sy = y + dy - pad;
                                if (sy < 0 || sy >= h) continue;
                                for (int dx = 0; dx < kernel; ++dx) {
                                    const int sx = x + dx - pad;
                                    if (sx < 0 || sx >= w) continue;
                                    if (gw) pW->grad[wi(co, ci, dy, dx)] += g * px->val[xi(ci, sy, sx)];
                                    if (gx) px->grad[xi(ci, sy, sx)] += g * pW->val[wi(co, ci, dy, dx)];
                                }
                            }
                    }
        };
    }
    return Tensor(out);
}

Tensor conv_transpose2d_param(const Tensor& x_chw, const Tensor& W, const Tensor& b,
                              int kernel, int stride, int pad) {
    const int cin = x_chw.shape()[0], h = x_chw.shape()[1], w = x_chw.shape()[2];
    if (W.shape()[0] != cin || W.shape()[2] != kernel || W.shape()[3] != kernel)
        throw std::invalid_argument("conv_transpose2d_param: weight shape mismatch");
    const int cout = W.shape()[1];
    const int oh = (h - 1) * stride - 2 * pad + kernel;
    const int ow = (w - 1) * stride - 2 * pad + kernel;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv_transpose2d_param: empty output");
    auto xi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * h + y) * w + x; };
    auto oi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * oh + y) * ow + x; };
    auto wi = [&](int ci, int co, int dy, int dx) {
        return ((static_cast<size_t>(ci) * cout + co) * kernel + dy) * kernel + dx;
    };
    std::vector<double> v(static_cast<size_t>(cout) * oh * ow, 0.0);
    for (int co = 0; co < cout; ++co) {
        const double bias = b.values()[static_cast<size_t>(co)];
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) v[oi(co, y, x)] = bias;
    }
    for (int ci = 0; ci < cin; ++ci)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                const double xv = x_chw.values()[xi(ci, iy, ix)];
                for (int co = 0; co < cout; ++co)
                    for (int dy = 0; dy < kernel; ++dy) {
                        const int oy = iy * stride - pad + dy;
                        if (oy < 0 || oy >= oh) continue;
                        for (int dx = 0; dx < kernel; ++dx) {
                            const int ox = ix * stride - pad + dx;
                            if (ox < 0 || ox >= ow) continue;
                            v[oi(co, oy, ox)] += xv * W.values()[wi(ci, co, dy, dx)];
                        }
                    }
            }
    auto out = make_node({cout, oh, ow}, std::move(v), {x_chw.node(), W.node(), b.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* px = x_chw.raw();
        TensorData* pW = W.raw();
        TensorData* pb = b.raw();
        out->backprop = [o, px, pW, pb, cin, cout, h, w, oh, ow, kernel, stride, pad] {
            auto xi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * h + y) * w + x; };
            auto oi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * oh + y) * ow + x; };
            auto wi = [&](int ci, int co, int dy, int dx) {
                return ((static_cast<size_t>(ci) * cout + co) * kernel + dy) * kernel + dx;
            };
            const bool gx = px->requires_grad, gw = pW->requires_grad, gb = pb->requires_grad;
            if (gx) ensure_grad(px);
            if (gw) ensure_grad(pW);
            if (gb) ensure_grad(pb);
            if (gb) {
                for (int co = 0; co < cout; ++co) {
                    double s = 0.0;
                    for (int y = 0; y < oh; ++y)
                        for (int x = 0; x < ow; ++x) s += o->grad[oi(co, y, x)];
                    pb->grad[static_cast<size_t>(co)] += s;
                }
            }
            for (int ci = 0; ci < cin; ++ci)
                for (int iy = 0; iy < h; ++iy)
                    for (int ix = 0; ix < w; ++ix) {
                        const double xv = px->val[xi(ci, iy, ix)];
                        double xg = 0.0;
                        for (int co = 0; co < cout; ++co)
                            for (int dy = 0; dy < kernel; ++dy) {
                                const int oy = iy * stride - pad + dy;
                                if (oy < 0 || oy >= oh) continue;
                                for (int dx = 0; dx < kernel; ++dx) {
                                    const int ox = ix * stride - pad + dx;
                                    if (ox < 0 || ox >= ow) continue;
                                    const double g = o->grad[oi(co, oy, ox)];
                                    if (gw) pW->grad[wi(ci, co, dy, dx)] += g * xv;
                                    xg += g * pW->val[wi(ci, co, dy, dx)];
                                }
                            }
                        if (gx) px->grad[xi(ci, iy, ix)] += xg;
                    }
        };
    }
    return Tensor(out);
}

Tensor bilinear_resize(const Tensor& x_chw, int out_h, int out_w) {
    const int ch = x_chw.shape()[0], h = x_chw.shape()[1], w = x_chw.shape()[2];
    std::vector<double> v(static_cast<size_t>(ch) * out_h * out_w);
    // half-pixel centers, clamped at borders
    auto src_coord = [](int dst, int out_n, int in_n) {
        double s = (dst + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
        return s;
    };
    struct Tap { int lo, hi; double t; };
    std::vector<Tap> ty(out_h), tx(out_w);
    for (int y = 0; y < out_h; ++y) {
        double s = src_coord(y, out_h, h);
        s = std::clamp(s, 0.0, static_cast<double>(h - 1));
        ty[y] = {static_cast<int>(s), std::min(static_cast<int>(s) + 1, h - 1), s - static_cast<int>(s)};
    }
    for (int x = 0; x < out_w; ++x) {
        double s = src_coord(x, out_w, w);
        s = std::clamp(s, 0.0, static_cast<double>(w - 1));
        tx[x] = {static_cast<int>(s), std::min(static_cast<int>(s) + 1, w - 1), s - static_cast<int>(s)};
    }
    auto xi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * h + y) * w + x; };
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                const auto& ay = ty[y];
                const auto& ax = tx[x];
                const double v00 = x_chw.values()[xi(c, ay.lo, ax.lo)];
                const double v01 = x_chw.values()[xi(c, ay.lo, ax.hi)];
                const double v10 = x_chw.values()[xi(c, ay.hi, ax.lo)];
                const double v11 = x_chw.values()[xi(c, ay.hi, ax.hi)];
                v[(static_cast<size_t>(c) * out_h + y) * out_w + x] =
                    (1 - ay.t) * ((1 - ax.t) * v00 + ax.t * v01) +
                    ay.t * ((1 - ax.t) * v10 + ax.t * v11);
            }
    auto out = make_node({ch, out_h, out_w}, std::move(v), {x_chw.node()});
    if (out->requires_grad) {
        TensorData* o = out.get();
        TensorData* px = x_chw.raw();
        out->backprop = [o, px, ch, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)] {
            ensure_grad(px);
            auto xi = [&](int c, int y, int x) { return (static_cast<size_t>(c) * h + y) * w + x; };
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < out_h; ++y)
                    for (int x = 0; x < out_w; ++x) {
                        const auto& ay = ty[y];
                        const auto& ax = tx[x];
                        const double g = o->grad[(static_cast<size_t>(c) * out_h + y) * out_w + x];
                        px->grad[xi(c, ay.lo, ax.lo)] += g * (1 - ay.t) * (1 - ax.t);
                        px->grad[xi(c, ay.lo, ax.hi)] += g * (1 - ay.t) * ax.t;
                        px->grad[xi(c, ay.hi, ax.lo)] += g * ay.t * (1 - ax.t);
                        px->grad[xi(c, ay.hi, ax.hi)] += g * ay.t * ax.t;
                    }
        };
    }
    return Tensor(out);
}

}  // namespace odg
