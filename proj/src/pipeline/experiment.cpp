#include "twoshot/pipeline/experiment.hpp"

#include "twoshot/pipeline/evaluation.hpp"

namespace twoshot::pipeline {

ExperimentData make_experiment_data(const RunConfig& cfg, std::uint64_t split_seed) {
    validate(cfg);
    auto all = video::make_dataset(cfg.n_videos, cfg.data_seed);
    auto part = video::partition_dataset(all, cfg.val_every);
    ExperimentData data;
    data.split = video::make_two_shot_split(part.train, split_seed, cfg.n_shots);
    data.train = std::move(part.train);
    data.validation = std::move(part.validation);
    return data;
}

const ad::ParameterSet<float>& phase1_output(const TrainResult& phase1, bool prefer_teacher) {
    return prefer_teacher && phase1.teacher ? *phase1.teacher : phase1.student;
}

bank::PseudoLabelBank build_bank_with(const model::ModelConfig& model, const ad::ParameterSet<float>& params,
                                      const ExperimentData& data, bank::InferenceMode mode, bank::BuildStats* stats) {
    const model::Segmenter<float> net(model, params);
    return bank::build_bank(data.train, data.split, mode, directional_predictor(net), stats);
}

TrainResult run_phase2(const RunConfig& cfg, const ExperimentData& data, const ad::ParameterSet<float>& phase1_params,
                       bank::PseudoLabelBank& bank) {
    return train(cfg, Phase::phase2, data.train, data.split, cfg.phase2_from_scratch ? nullptr : &phase1_params, &bank);
}

metrics::EvalResult evaluate_on_validation(const RunConfig& cfg, const ad::ParameterSet<float>& params,
                                           const ExperimentData& data) {
    return evaluate_model(cfg.model, params, data.validation);
}

}  // namespace twoshot::pipeline
