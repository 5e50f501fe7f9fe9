#pragma once

#include "twoshot/autodiff/graph.hpp"
#include "twoshot/autodiff/parameter_set.hpp"
#include "twoshot/autodiff/tensor.hpp"
#include "twoshot/video/synth_video.hpp"

#include <cstdint>
#include <vector>

namespace twoshot::model {

using video::LabelMap;

struct ModelConfig {
    int key_channels = 8;
    int value_channels = 8;
    int hidden_channels = 16;
    int max_objects = 3;

    bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& cfg);

// Named parameter shapes for cfg; names are stable across versions of the
// checkpoint format.
std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const ModelConfig& cfg);
ad::ParameterSet<float> init_parameters(const ModelConfig& cfg, std::uint64_t seed);

// Per-pixel class probabilities, classes = 1 + number of objects, planar.
struct ProbMap {
    int classes = 0;
    int height = 0;
    int width = 0;
    std::vector<float> p;

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    float at(int c, std::size_t pixel) const { return p[static_cast<std::size_t>(c) * pixels() + pixel]; }
    float max_confidence(std::size_t pixel) const;
    int argmax(std::size_t pixel) const;
    LabelMap hard_labels() const;

    static ProbMap uniform(int classes, int height, int width);
    static ProbMap one_hot(const LabelMap& labels, int classes);
};

template <typename T>
ProbMap to_probmap(const ad::Tensor<T>& probs);

enum class MaskSource : std::uint8_t { ground_truth, pseudo, predicted };

template <typename T>
struct FrameFeatures {
    ad::Tensor<T> key;        // [1,Ck,H/4,W/4]
    ad::Tensor<T> deep;       // [1,hidden,H/4,W/4]
    ad::Tensor<T> skip_half;  // [1,hidden,H/2,W/2]
    ad::Tensor<T> skip_full;  // [1,hidden,H,W]
};

template <typename T>
struct MemoryEntry {
    ad::Tensor<T> key;                  // [1,Ck,h,w]
    std::vector<ad::Tensor<T>> values;  // one [1,Cv,h,w] per object
    int frame = -1;
    MaskSource source = MaskSource::ground_truth;
};

template <typename T>
struct TripletOutput {
    ad::Tensor<T> second;  // [1,1+K,H,W]
    ad::Tensor<T> third;
};

enum class Direction { forward, backward };

struct SequencePrediction {
    std::vector<int> frames;  // visiting order
    std::vector<ProbMap> probs;
};

// Frame image [1,3,H,W], centered around zero.
template <typename T>
ad::Tensor<T> frame_tensor(const video::VideoClip& clip, int t);

// Memory-matching segmenter: key encoder over frames, value encoder over
// frame features plus per-object mask planes, affinity readout and a
// per-object decoder with skip connections. Objects share all weights; the
// background logit is fixed at zero before the softmax across objects.
template <typename T>
class Segmenter {
public:
    Segmenter(ModelConfig cfg, const ad::ParameterSet<T>& params);

    const ModelConfig& config() const { return cfg_; }

    FrameFeatures<T> encode_frame(ad::Graph<T>& g, const ad::Tensor<T>& frame) const;

    // mask_planes: per object [1,2,H,W] (own object, other objects).
    std::vector<ad::Tensor<T>> encode_values(ad::Graph<T>& g, const FrameFeatures<T>& features,
                                             const std::vector<ad::Tensor<T>>& mask_planes) const;

    MemoryEntry<T> encode_memory(ad::Graph<T>& g, const FrameFeatures<T>& features,
                                 const std::vector<ad::Tensor<T>>& mask_planes, int frame, MaskSource source) const;

    // Softmax over every location of every entry of -|k_q - k_m|^2 / sqrt(Ck);
    // returns one [1,Cv,h,w] readout per object.
    std::vector<ad::Tensor<T>> memory_read(ad::Graph<T>& g, const ad::Tensor<T>& query_key,
                                           const std::vector<MemoryEntry<T>>& memory) const;

    // Per-object logits aggregated into a [1,1+K,H,W] probability tensor.
    ad::Tensor<T> decode(ad::Graph<T>& g, const FrameFeatures<T>& query,
                         const std::vector<ad::Tensor<T>>& reads) const;

    ad::Tensor<T> segment(ad::Graph<T>& g, const FrameFeatures<T>& query, const std::vector<MemoryEntry<T>>& memory) const;

    // P2 from memory {f1,m1}; P3 from {f1,m1} plus f2 with its soft predicted mask.
    TripletOutput<T> forward_triplet(ad::Graph<T>& g, const ad::Tensor<T>& f1, const ad::Tensor<T>& f2,
                                     const ad::Tensor<T>& f3, const LabelMap& m1, int num_objects) const;

    // Sequential inference from reference r in one direction. Memory holds the
    // reference entry and the previous processed frame with its hard mask.
    SequencePrediction predict_sequence(const video::VideoClip& clip, int reference, const LabelMap& reference_mask,
                                        Direction direction, int num_objects) const;

private:
    ad::Tensor<T> conv(ad::Graph<T>& g, const ad::Tensor<T>& x, const std::string& name) const;

    ModelConfig cfg_;
    const ad::ParameterSet<T>* params_;
};

// Per-object [1,2,H,W] planes (own, others) from a hard label map.
template <typename T>
std::vector<ad::Tensor<T>> hard_mask_planes(const LabelMap& labels, int num_objects, int max_objects);

// Same from a differentiable probability tensor [1,1+K,H,W].
template <typename T>
std::vector<ad::Tensor<T>> soft_mask_planes(ad::Graph<T>& g, const ad::Tensor<T>& probs, int num_objects);

extern template class Segmenter<float>;
extern template class Segmenter<double>;

}  // namespace twoshot::model
