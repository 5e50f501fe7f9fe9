#pragma once

#include "twoshot/bank/label_bank.hpp"
#include "twoshot/metrics/vos_metrics.hpp"
#include "twoshot/model/segmenter.hpp"

#include <string>
#include <vector>

namespace twoshot::pipeline {

// Forward propagation from frame 0, hard masks.
metrics::SequencePredictor sequence_predictor(const model::Segmenter<float>& net);
bank::DirectionalPredictor directional_predictor(const model::Segmenter<float>& net);

metrics::EvalResult evaluate_model(const model::ModelConfig& cfg, const ad::ParameterSet<float>& params,
                                   const std::vector<video::VideoClip>& clips);

struct ReportRow {
    std::string run;
    double j = 0;
    double f = 0;
    double g = 0;
};

// Reads the aggregate row of an evaluation CSV; run is the file stem unless given.
ReportRow read_eval_summary(const std::string& csv_path, const std::string& run = "");
std::string report_markdown(const std::vector<ReportRow>& rows);
std::string report_csv(const std::vector<ReportRow>& rows);

void write_text(const std::string& path, const std::string& text);

}  // namespace twoshot::pipeline
