#pragma once

#include "twoshot/autodiff/graph.hpp"
#include "twoshot/autodiff/parameter_set.hpp"
#include "twoshot/model/segmenter.hpp"

#include <vector>

namespace twoshot::losses {

using model::ProbMap;
using video::LabelMap;

struct LossConfig {
    double tau1 = 0.9;
    bool use_mean_teacher = true;
    double alpha = 0.995;
    // Divide the unsupervised loss by the gated pixel count instead of H*W*N2.
    bool normalize_by_gated = false;
};

void validate(const LossConfig& cfg);

// Mean over frames and pixels of -log P[target]. Returns a constant 0 when
// preds is empty.
template <typename T>
ad::Tensor<T> supervised_loss(ad::Graph<T>& g, const std::vector<ad::Tensor<T>>& preds,
                              const std::vector<LabelMap>& targets);

template <typename T>
struct UnsupervisedLoss {
    ad::Tensor<T> loss;
    double masked_fraction = 0;  // gated pixels / all unlabeled pixels
};

// Confidence-gated cross-entropy against the labeler's argmax. Targets and
// gates come from `labeler` (constants); gradient flows into `student` only.
template <typename T>
UnsupervisedLoss<T> unsupervised_loss(ad::Graph<T>& g, const std::vector<ad::Tensor<T>>& student,
                                      const std::vector<ProbMap>& labeler, double tau1, bool normalize_by_gated = false);

template <typename T>
struct LossBreakdown {
    ad::Tensor<T> loss_s;
    ad::Tensor<T> loss_u;
    double masked_fraction = 0;
    int n1 = 0;
    int n2 = 0;
};

// L = L_S + L_U; rejects n1 = n2 = 0.
template <typename T>
ad::Tensor<T> combined_loss(ad::Graph<T>& g, const LossBreakdown<T>& parts);

// teacher <- alpha * teacher + (1 - alpha) * student, in place.
template <typename T>
void ema_update(ad::ParameterSet<T>& teacher, const ad::ParameterSet<T>& student, double alpha);

}  // namespace twoshot::losses
