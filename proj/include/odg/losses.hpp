#pragma once

#include <vector>

#include "odg/datasets.hpp"
#include "odg/model.hpp"

namespace odg {

struct Posterior {
    std::vector<double> probs;  // ordered like SplitSpec.augmented_labels
    int argmax() const;         // ties break toward the lowest index
};

struct LossReport {
    double l_con = 0.0;
    double l_sem = 0.0;
    double total = 0.0;
    int n_sem_pairs = 0;
};

// Numerically stabilized softmax (max subtraction), shared by every
// posterior consumer.
std::vector<double> softmax_from_logits(const std::vector<double>& logits);

Posterior class_posterior(const Model& model, const Image& image);

// Differentiable per-item forward shared by both losses so total_loss pays
// for one pass over the batch.
struct ItemForward {
    Tensor logits;
    Tensor true_diff;  // undefined when differentials are disabled
    int label = 0;
    std::string domain;
};
std::vector<ItemForward> forward_batch(const Model& model, const TrainBatch& batch);

Tensor loss_con_from(const std::vector<ItemForward>& items);
Tensor loss_sem_from(const std::vector<ItemForward>& items, int* n_pairs = nullptr);

double loss_con(const Model& model, const TrainBatch& batch);
double loss_sem(const Model& model, const TrainBatch& batch);

// l_con + l_sem with unit weights; returns the scalar graph root for the
// optimizer plus the plain-number report.
struct TotalLoss {
    Tensor root;
    LossReport report;
};
TotalLoss total_loss(const Model& model, const TrainBatch& batch);

}  // namespace odg
