#pragma once

#include "twoshot/autodiff/parameter_set.hpp"
#include "twoshot/model/segmenter.hpp"
#include "twoshot/pipeline/sampler.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace twoshot::pipeline {

struct Checkpoint {
    std::uint64_t iteration = 0;
    std::uint8_t phase = 0;  // Phase value, 0 for untrained
    ad::ParameterSet<float> params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Channel counts recovered from parameter shapes; max_objects is not stored.
model::ModelConfig infer_model_config(const ad::ParameterSet<float>& params, int max_objects);

}  // namespace twoshot::pipeline
