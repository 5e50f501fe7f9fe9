#pragma once

#include "twoshot/autodiff/parameter_set.hpp"
#include "twoshot/bank/label_bank.hpp"
#include "twoshot/pipeline/config.hpp"
#include "twoshot/pipeline/sampler.hpp"
#include "twoshot/video/synth_video.hpp"

#include <optional>
#include <string>
#include <vector>

namespace twoshot::pipeline {

// In-place first-order optimizer over a ParameterSet's accumulated gradients.
class Optimizer {
public:
    Optimizer(const RunConfig& cfg, const ad::ParameterSet<float>& params);
    void step(ad::ParameterSet<float>& params);

private:
    OptimizerKind kind_;
    double lr_;
    double momentum_;
    long steps_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

struct LogRow {
    long iteration = 0;
    double loss_s = 0;
    double loss_u = 0;
    double masked_fraction = 0;
    int k = 0;
};

struct TrainResult {
    ad::ParameterSet<float> student;
    std::optional<ad::ParameterSet<float>> teacher;
    std::vector<LogRow> log;
    long relaxed_triplets = 0;
    long bank_pixels_changed = 0;
};

// Phase 1 and the baselines take `clips` with full labels but read only the
// split's frames (the oracle reads every frame). Phase 2 needs `bank` and
// updates it in place when cfg.update_bank is set. `init` overrides the
// seeded initialization.
TrainResult train(const RunConfig& cfg, Phase phase, const std::vector<video::VideoClip>& clips,
                  const video::ShotSplit& split, const ad::ParameterSet<float>* init = nullptr,
                  bank::PseudoLabelBank* bank = nullptr);

std::string log_csv(const std::vector<LogRow>& rows);

}  // namespace twoshot::pipeline
