#pragma once

#include "twoshot/model/segmenter.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace twoshot::pipeline {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when training produces a non-finite loss.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OptimizerKind { sgd_momentum, adam };

struct RunConfig {
    std::string data_dir = "data";
    std::string split_path;  // empty: <data_dir>/split.txt
    std::string checkpoint;  // input checkpoint for build-bank, phase-2 init, eval, pca-vis
    std::string bank_path;   // input bank for phase-2
    std::string out_dir = "out";

    std::uint64_t seed = 1;
    std::uint64_t data_seed = 2024;
    int n_videos = 50;
    int val_every = 5;
    int n_shots = 2;

    double tau1 = 0.9;
    double tau2 = 0.99;
    double alpha = 0.995;
    bool use_mean_teacher = true;
    bool normalize_by_gated = false;
    int k_start = 5;
    int k_end = 25;

    int iterations = 3000;
    int batch_size = 4;
    double learning_rate = 0.002;
    double momentum = 0.9;
    OptimizerKind optimizer = OptimizerKind::adam;
    int log_every = 50;
    bool augment = true;  // random flips and palette changes per training triplet

    bool update_bank = true;
    bool phase2_from_scratch = false;
    bool bank_from_teacher = true;
    std::string bank_mode = "bidirectional";

    int pca_frames = 4;

    model::ModelConfig model;
};

void validate(const RunConfig& cfg);

// Applies one key=value setting; unknown keys and malformed values raise ConfigError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat "key = value" lines, '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
std::string format_config(const RunConfig& cfg);

std::string split_file(const RunConfig& cfg);

}  // namespace twoshot::pipeline
