#pragma once

#include "twoshot/bank/label_bank.hpp"
#include "twoshot/metrics/vos_metrics.hpp"
#include "twoshot/pipeline/trainer.hpp"

#include <cstdint>
#include <vector>

namespace twoshot::pipeline {

// In-memory version of what gen-data and split write to disk.
struct ExperimentData {
    std::vector<video::VideoClip> train;
    std::vector<video::VideoClip> validation;
    video::ShotSplit split;
};

ExperimentData make_experiment_data(const RunConfig& cfg, std::uint64_t split_seed);

// Parameters phase 1 hands on: the teacher when one was trained and
// `prefer_teacher` is set, the student otherwise.
const ad::ParameterSet<float>& phase1_output(const TrainResult& phase1, bool prefer_teacher);

bank::PseudoLabelBank build_bank_with(const model::ModelConfig& model, const ad::ParameterSet<float>& params,
                                      const ExperimentData& data, bank::InferenceMode mode,
                                      bank::BuildStats* stats = nullptr);

// Phase 2 starting from `phase1_params` unless cfg.phase2_from_scratch.
TrainResult run_phase2(const RunConfig& cfg, const ExperimentData& data, const ad::ParameterSet<float>& phase1_params,
                       bank::PseudoLabelBank& bank);

metrics::EvalResult evaluate_on_validation(const RunConfig& cfg, const ad::ParameterSet<float>& params,
                                           const ExperimentData& data);

}  // namespace twoshot::pipeline
