#include "twoshot/losses/semisup.hpp"

#include "twoshot/autodiff/ops.hpp"

#include <stdexcept>
#include <string>

namespace twoshot::losses {

using ad::Graph;
using ad::Tensor;

void validate(const LossConfig& cfg) {
    if (!(cfg.tau1 > 0.0 && cfg.tau1 <= 1.0)) throw std::invalid_argument("tau1 must be in (0, 1]");
    if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("alpha must be in [0, 1)");
}

namespace {

std::size_t spatial_size(const Tensor<float>& t) { return t.dim(2) * t.dim(3); }
std::size_t spatial_size(const Tensor<double>& t) { return t.dim(2) * t.dim(3); }

}  // namespace

template <typename T>
Tensor<T> supervised_loss(Graph<T>& g, const std::vector<Tensor<T>>& preds, const std::vector<LabelMap>& targets) {
    if (preds.size() != targets.size()) throw std::invalid_argument("supervised_loss: preds/targets count mismatch");
    if (preds.empty()) return Tensor<T>::scalar(T{0});
    Tensor<T> total;
    std::size_t hw = 0;
    for (std::size_t n = 0; n < preds.size(); ++n) {
        const auto& p = preds[n];
        hw = spatial_size(p);
        if (targets[n].size() != hw) throw std::invalid_argument("supervised_loss: target shape mismatch");
        const std::vector<int> labels(targets[n].values.begin(), targets[n].values.end());
        auto s = ad::sum(g, ad::log(g, ad::gather_labels(g, p, std::span<const int>(labels))));
        total = total.defined() ? ad::add(g, total, s) : s;
    }
    return ad::scalar_mul(g, total, static_cast<T>(-1.0 / static_cast<double>(hw * preds.size())));
}

template <typename T>
UnsupervisedLoss<T> unsupervised_loss(Graph<T>& g, const std::vector<Tensor<T>>& student,
                                      const std::vector<ProbMap>& labeler, double tau1, bool normalize_by_gated) {
    if (student.size() != labeler.size()) throw std::invalid_argument("unsupervised_loss: student/labeler count mismatch");
    UnsupervisedLoss<T> out;
    if (student.empty()) {
        out.loss = Tensor<T>::scalar(T{0});
        return out;
    }
    Tensor<T> total;
    std::size_t gated = 0, pixels = 0;
    for (std::size_t n = 0; n < student.size(); ++n) {
        const auto& s = student[n];
        const auto& lab = labeler[n];
        const std::size_t hw = spatial_size(s);
        if (lab.pixels() != hw || static_cast<std::size_t>(lab.classes) != s.dim(1)) {
            throw std::invalid_argument("unsupervised_loss: labeler/student shape mismatch");
        }
        pixels += hw;
        std::vector<int> targets(hw);
        std::vector<T> gate(hw, T{0});
        std::size_t frame_gated = 0;
        for (std::size_t i = 0; i < hw; ++i) {
            targets[i] = lab.argmax(i);
            if (static_cast<double>(lab.max_confidence(i)) >= tau1) {
                gate[i] = T{1};
                ++frame_gated;
            }
        }
        gated += frame_gated;
        if (frame_gated == 0) continue;
        auto logp = ad::log(g, ad::gather_labels(g, s, std::span<const int>(targets)));
        auto weighted = ad::sum(g, ad::mul(g, logp, Tensor<T>(logp.shape(), std::move(gate))));
        total = total.defined() ? ad::add(g, total, weighted) : weighted;
    }
    out.masked_fraction = static_cast<double>(gated) / static_cast<double>(pixels);
    if (gated == 0) {
        out.loss = Tensor<T>::scalar(T{0});
        return out;
    }
    const double denom = normalize_by_gated ? static_cast<double>(gated) : static_cast<double>(pixels);
    out.loss = ad::scalar_mul(g, total, static_cast<T>(-1.0 / denom));
    return out;
}

template <typename T>
Tensor<T> combined_loss(Graph<T>& g, const LossBreakdown<T>& parts) {
    if (parts.n1 <= 0 && parts.n2 <= 0) throw std::invalid_argument("combined_loss: no supervised or unsupervised frames");
    if (parts.n2 <= 0) return parts.loss_s;
    if (parts.n1 <= 0) return parts.loss_u;
    return ad::add(g, parts.loss_s, parts.loss_u);
}

template <typename T>
void ema_update(ad::ParameterSet<T>& teacher, const ad::ParameterSet<T>& student, double alpha) {
    if (!teacher.matches(student)) throw std::invalid_argument("ema_update: teacher and student parameters differ");
    const T a = static_cast<T>(alpha);
    const T b = static_cast<T>(1.0 - alpha);
    auto it = student.begin();
    for (auto& [name, t] : teacher) {
        auto dst = t.mutable_data();
        auto src = it->second.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a * dst[i] + b * src[i];
        ++it;
    }
}

#define TWOSHOT_INSTANTIATE_LOSSES(T)                                                                                  \
    template Tensor<T> supervised_loss(Graph<T>&, const std::vector<Tensor<T>>&, const std::vector<LabelMap>&);       \
    template UnsupervisedLoss<T> unsupervised_loss(Graph<T>&, const std::vector<Tensor<T>>&,                          \
                                                   const std::vector<ProbMap>&, double, bool);                       \
    template Tensor<T> combined_loss(Graph<T>&, const LossBreakdown<T>&);                                             \
    template void ema_update(ad::ParameterSet<T>&, const ad::ParameterSet<T>&, double);

TWOSHOT_INSTANTIATE_LOSSES(float)
TWOSHOT_INSTANTIATE_LOSSES(double)

#undef TWOSHOT_INSTANTIATE_LOSSES

}  // namespace twoshot::losses
