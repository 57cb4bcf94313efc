#include "odg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "odg/common.hpp"

namespace odg {

int Posterior::argmax() const {
    int best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

std::vector<double> softmax_from_logits(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

Posterior class_posterior(const Model& model, const Image& image) {
    NoGradGuard eval;
    const auto fwd = model.forward_image(image);
    return Posterior{softmax_from_logits(fwd.logits.values())};
}

std::vector<ItemForward> forward_batch(const Model& model, const TrainBatch& batch) {
    if (batch.size() == 0) throw ConfigError("forward_batch: empty batch");
    const int n_classes = static_cast<int>(model.prompts.class_order.size());
    std::vector<ItemForward> items;
    items.reserve(batch.size());
    auto run = [&](const Image& img, int label, const std::string& domain) {
        if (label < 0 || label >= n_classes)
            throw RuntimeFailure("forward_batch: label index outside Y_aug");
        auto fwd = model.forward_image(img);
        ItemForward item;
        item.logits = fwd.logits;
        if (!fwd.differentials.empty())
            item.true_diff = fwd.differentials[static_cast<size_t>(label)];
        item.label = label;
        item.domain = domain;
        items.push_back(std::move(item));
    };
    for (const auto& r : batch.real) run(r.sample.image, r.label_index, r.sample.domain);
    for (const auto& o : batch.open) run(o.image, o.label_index, o.pseudo_domain);
    return items;
}

Tensor loss_con_from(const std::vector<ItemForward>& items) {
    std::vector<Tensor> nlls;
    nlls.reserve(items.size());
    for (const auto& item : items)
        nlls.push_back(neg(pick(log_softmax(item.logits), item.label)));
    return mean_all(nlls);
}

Tensor loss_sem_from(const std::vector<ItemForward>& items, int* n_pairs) {
    std::vector<Tensor> pair_terms;
    for (size_t i = 0; i < items.size(); ++i) {
        if (!items[i].true_diff.defined()) continue;
        for (size_t j = i + 1; j < items.size(); ++j) {
            if (!items[j].true_diff.defined()) continue;
            if (items[i].label != items[j].label) continue;
            if (items[i].domain == items[j].domain) continue;
            Tensor c = cosine_sim(abs_t(items[i].true_diff), abs_t(items[j].true_diff));
            pair_terms.push_back(add_const(neg(c), 1.0));
        }
    }
    if (n_pairs) *n_pairs = static_cast<int>(pair_terms.size());
    if (pair_terms.empty()) return Tensor::scalar(0.0);
    return mean_all(pair_terms);
}

double loss_con(const Model& model, const TrainBatch& batch) {
    NoGradGuard eval;
    return loss_con_from(forward_batch(model, batch)).item();
}

double loss_sem(const Model& model, const TrainBatch& batch) {
    NoGradGuard eval;
    return loss_sem_from(forward_batch(model, batch)).item();
}

TotalLoss total_loss(const Model& model, const TrainBatch& batch) {
    const auto items = forward_batch(model, batch);
    TotalLoss out;
    Tensor con = loss_con_from(items);
    out.report.l_con = con.item();
    if (model.cfg.use_sem && model.cfg.use_xhat) {
        Tensor sem = loss_sem_from(items, &out.report.n_sem_pairs);
        out.root = add(con, sem);
        out.report.l_sem = sem.item();
    } else {
        out.root = con;
        out.report.l_sem = 0.0;
        out.report.n_sem_pairs = 0;
    }
    out.report.total = out.report.l_con + out.report.l_sem;
    return out;
}

}  // namespace odg
