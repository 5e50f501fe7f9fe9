#include "twoshot/pipeline/trainer.hpp"

#include "twoshot/autodiff/ops.hpp"
#include "twoshot/losses/semisup.hpp"
#include "twoshot/model/segmenter.hpp"
#include "twoshot/pipeline/augment.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace twoshot::pipeline {

using ad::Graph;
using ad::Tensor;

Optimizer::Optimizer(const RunConfig& cfg, const ad::ParameterSet<float>& params)
    : kind_(cfg.optimizer), lr_(cfg.learning_rate), momentum_(cfg.momentum) {
    for (const auto& [name, t] : params) {
        m_.emplace_back(t.numel(), 0.0f);
        if (kind_ == OptimizerKind::adam) v_.emplace_back(t.numel(), 0.0f);
    }
}

void Optimizer::step(ad::ParameterSet<float>& params) {
    ++steps_;
    std::size_t k = 0;
    const double b1 = momentum_, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (auto& [name, t] : params) {
        auto& m = m_[k];
        if (!t.has_grad()) {
            ++k;
            continue;
        }
        const auto g = t.grad();
        auto w = t.mutable_data();
        if (kind_ == OptimizerKind::sgd_momentum) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = static_cast<float>(momentum_) * m[i] + g[i];
                w[i] -= static_cast<float>(lr_) * m[i];
            }
        } else {
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
                v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
                const double mh = m[i] / c1, vh = v[i] / c2;
                w[i] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + eps));
            }
        }
        ++k;
    }
}

namespace {

struct Window {
    double loss_s = 0, loss_u = 0, masked = 0;
    int triplets = 0, unlabeled_triplets = 0;
};

std::string triplet_text(const std::string& id, const Triplet& t) {
    std::ostringstream os;
    os << id << " (" << t.frames[0] << "," << t.frames[1] << "," << t.frames[2] << ")";
    return os.str();
}

}  // namespace

TrainResult train(const RunConfig& cfg, Phase phase, const std::vector<video::VideoClip>& clips,
                  const video::ShotSplit& split, const ad::ParameterSet<float>* init, bank::PseudoLabelBank* bank) {
    validate(cfg);
    if (clips.empty()) throw std::invalid_argument("train: no training videos");
    if (phase == Phase::phase2 && !bank) throw std::invalid_argument("train: phase 2 needs a pseudo-label bank");
    for (const auto& c : clips) {
        if (c.num_objects > cfg.model.max_objects) {
            throw std::invalid_argument("train: video '" + c.id + "' has more objects than max_objects");
        }
        if (phase != Phase::oracle && !split.count(c.id)) throw std::invalid_argument("train: split lacks '" + c.id + "'");
        if (phase == Phase::phase2) {
            const auto& vb = bank->video(c.id);
            if (static_cast<int>(vb.frames.size()) != c.frames()) {
                throw std::invalid_argument("train: bank entry for '" + c.id + "' is incomplete");
            }
        }
    }

    Rng rng(cfg.seed);
    const std::uint64_t init_seed = rng.next();
    TrainResult result;
    result.student = init ? init->clone() : model::init_parameters(cfg.model, init_seed);
    result.student.set_requires_grad(true);
    const bool mean_teacher = phase == Phase::phase1 && cfg.use_mean_teacher;
    if (mean_teacher) {
        result.teacher = result.student.clone();
        result.teacher->set_requires_grad(false);
    }
    model::Segmenter<float> student(cfg.model, result.student);
    std::optional<model::Segmenter<float>> teacher;
    if (mean_teacher) teacher.emplace(cfg.model, *result.teacher);
    Optimizer opt(cfg, result.student);
    const bank::BankUpdateRule rule{cfg.tau2};
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
    const std::vector<int> no_labels;

    Window win;
    for (long it = 0; it < cfg.iterations; ++it) {
        const int K = curriculum_k(it, cfg.iterations, cfg.k_start, cfg.k_end);
        result.student.zero_grad();
        struct Pending {
            std::string id;
            int frame;
            model::ProbMap probs;
        };
        std::vector<Pending> updates;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& clip = clips[rng.index(clips.size())];
            const auto& labeled = phase == Phase::oracle ? no_labels : split.at(clip.id);
            const auto trip = sample_triplet(clip.frames(), labeled, phase, K, rng);
            result.relaxed_triplets += trip.relaxed;

            const auto& m1_src = phase == Phase::phase2 ? bank->video(clip.id).frames[static_cast<std::size_t>(trip.frames[0])].labels
                                                        : clip.labels[static_cast<std::size_t>(trip.frames[0])];
            const auto aug = cfg.augment ? Augmentation::sample(rng, clip.height == clip.width) : Augmentation::identity();
            const auto view = augment_frames(clip, trip.frames, aug);
            const auto m1 = augment_labels(m1_src, aug);
            Graph<float> g(true);
            const auto f1 = model::frame_tensor<float>(view, 0);
            const auto f2 = model::frame_tensor<float>(view, 1);
            const auto f3 = model::frame_tensor<float>(view, 2);
            const auto out = student.forward_triplet(g, f1, f2, f3, m1, clip.num_objects);
            const std::array<Tensor<float>, 2> preds{out.second, out.third};

            std::array<model::ProbMap, 2> labeler;
            const bool any_unlabeled = !trip.labeled[1] || !trip.labeled[2];
            if (any_unlabeled) {
                if (teacher) {
                    Graph<float> tg(false);
                    const auto t_out = teacher->forward_triplet(tg, f1, f2, f3, m1, clip.num_objects);
                    labeler = {model::to_probmap(t_out.second), model::to_probmap(t_out.third)};
                } else {
                    labeler = {model::to_probmap(out.second), model::to_probmap(out.third)};
                }
            }

            std::vector<Tensor<float>> sup_p, unsup_p;
            std::vector<video::LabelMap> sup_t;
            std::vector<model::ProbMap> unsup_l;
            for (int s = 1; s <= 2; ++s) {
                const auto idx = static_cast<std::size_t>(s - 1);
                if (trip.labeled[static_cast<std::size_t>(s)]) {
                    sup_p.push_back(preds[idx]);
                    sup_t.push_back(view.labels[static_cast<std::size_t>(s)]);
                } else {
                    unsup_p.push_back(preds[idx]);
                    unsup_l.push_back(labeler[idx]);
                    if (phase == Phase::phase2 && cfg.update_bank) {
                        updates.push_back({clip.id, trip.frames[static_cast<std::size_t>(s)], restore_probmap(model::to_probmap(preds[idx]), aug)});
                    }
                }
            }
            losses::LossBreakdown<float> parts;
            parts.n1 = static_cast<int>(sup_p.size());
            parts.n2 = static_cast<int>(unsup_p.size());
            parts.loss_s = losses::supervised_loss(g, sup_p, sup_t);
            auto unsup = losses::unsupervised_loss(g, unsup_p, unsup_l, cfg.tau1, cfg.normalize_by_gated);
            parts.loss_u = unsup.loss;
            parts.masked_fraction = unsup.masked_fraction;
            const auto total = losses::combined_loss(g, parts);
            const double ls = parts.loss_s.item(), lu = parts.loss_u.item();
            if (!std::isfinite(total.item())) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "non-finite loss at iteration %ld: loss_s=%g loss_u=%g triplet ", it, ls, lu);
                throw NumericError(buf + triplet_text(clip.id, trip));
            }
            if (total.requires_grad()) g.backward(ad::scalar_mul(g, total, inv_batch));

            win.loss_s += ls;
            win.loss_u += lu;
            ++win.triplets;
            if (parts.n2 > 0) {
                win.masked += parts.masked_fraction;
                ++win.unlabeled_triplets;
            }
        }
        opt.step(result.student);
        if (teacher) losses::ema_update(*result.teacher, result.student, cfg.alpha);
        for (const auto& u : updates) {
            result.bank_pixels_changed += static_cast<long>(bank::dynamic_update(*bank, u.id, u.frame, u.probs, rule));
        }

        if (it % cfg.log_every == 0 || it == cfg.iterations - 1) {
            LogRow row;
            row.iteration = it;
            row.loss_s = win.loss_s / win.triplets;
            row.loss_u = win.loss_u / win.triplets;
            row.masked_fraction = win.unlabeled_triplets ? win.masked / win.unlabeled_triplets : 0.0;
            row.k = K;
            result.log.push_back(row);
            win = Window{};
        }
    }
    result.student.set_requires_grad(false);
    return result;
}

std::string log_csv(const std::vector<LogRow>& rows) {
    std::ostringstream os;
    os << "iteration,loss_s,loss_u,masked_fraction,K\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%.6f,%d\n", r.iteration, r.loss_s, r.loss_u, r.masked_fraction, r.k);
        os << buf;
    }
    return os.str();
}

}  // namespace twoshot::pipeline
