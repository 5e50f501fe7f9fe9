#include "twoshot/model/segmenter.hpp"

#include "twoshot/autodiff/ops.hpp"
#include "twoshot/util/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace twoshot::model {

using ad::Graph;
using ad::Shape;
using ad::Tensor;

void validate(const ModelConfig& cfg) {
    if (cfg.key_channels < 2 || cfg.value_channels < 2 || cfg.hidden_channels < 2) {
        throw std::invalid_argument("model config: channel counts must be >= 2");
    }
    if (cfg.max_objects < 1 || cfg.max_objects > 255) throw std::invalid_argument("model config: max_objects out of range");
}

namespace {

std::size_t refine_channels(const ModelConfig& cfg) {
    return static_cast<std::size_t>(std::max(2, cfg.hidden_channels / 2));
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
    validate(cfg);
    const auto h = static_cast<std::size_t>(cfg.hidden_channels);
    const auto ck = static_cast<std::size_t>(cfg.key_channels);
    const auto cv = static_cast<std::size_t>(cfg.value_channels);
    const auto hr = refine_channels(cfg);
    std::vector<std::pair<std::string, Shape>> layout;
    auto conv = [&](const std::string& name, std::size_t out, std::size_t in) {
        layout.emplace_back(name + ".weight", Shape{out, in, 3, 3});
        layout.emplace_back(name + ".bias", Shape{out});
    };
    conv("key_enc.conv1", h, 3);
    conv("key_enc.conv2", h, h);
    conv("key_enc.conv3", h, h);
    conv("key_enc.proj", ck, h);
    conv("value_enc.conv1", h, h + 2);
    conv("value_enc.proj", cv, h);
    conv("decoder.fuse", h, cv + ck);
    conv("decoder.up_half", h, 2 * h);
    conv("decoder.up_full", hr, 2 * h);
    conv("decoder.logit", 1, hr);
    return layout;
}

ad::ParameterSet<float> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ad::ParameterSet<float> params;
    for (const auto& [name, shape] : parameter_layout(cfg)) {
        std::vector<float> v(ad::shape_numel(shape), 0.0f);
        if (shape.size() == 4) {
            const double fan_in = static_cast<double>(shape[1] * 9);
            const bool linear_out = name.starts_with("key_enc.proj") || name.starts_with("value_enc.proj") ||
                                    name.starts_with("decoder.logit");
            const double stddev = std::sqrt((linear_out ? 1.0 : 2.0) / fan_in);
            for (auto& x : v) x = static_cast<float>(stddev * rng.normal());
        }
        params.add(name, Tensor<float>(shape, std::move(v), true));
    }
    return params;
}

float ProbMap::max_confidence(std::size_t pixel) const {
    float best = at(0, pixel);
    for (int c = 1; c < classes; ++c) best = std::max(best, at(c, pixel));
    return best;
}

int ProbMap::argmax(std::size_t pixel) const {
    int best = 0;
    for (int c = 1; c < classes; ++c) {
        if (at(c, pixel) > at(best, pixel)) best = c;
    }
    return best;
}

LabelMap ProbMap::hard_labels() const {
    LabelMap m(height, width);
    for (std::size_t i = 0; i < pixels(); ++i) m.values[i] = static_cast<std::uint8_t>(argmax(i));
    return m;
}

ProbMap ProbMap::uniform(int classes, int height, int width) {
    ProbMap m{classes, height, width, {}};
    m.p.assign(static_cast<std::size_t>(classes) * height * width, 1.0f / static_cast<float>(classes));
    return m;
}

ProbMap ProbMap::one_hot(const LabelMap& labels, int classes) {
    ProbMap m{classes, labels.height, labels.width, {}};
    m.p.assign(static_cast<std::size_t>(classes) * labels.size(), 0.0f);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels.values[i] >= classes) throw std::invalid_argument("ProbMap::one_hot: label exceeds class count");
        m.p[labels.values[i] * labels.size() + i] = 1.0f;
    }
    return m;
}

template <typename T>
ProbMap to_probmap(const Tensor<T>& probs) {
    if (probs.rank() != 4 || probs.dim(0) != 1) {
        throw std::invalid_argument("to_probmap: expected [1,C,H,W], got " + ad::shape_string(probs.shape()));
    }
    ProbMap m{static_cast<int>(probs.dim(1)), static_cast<int>(probs.dim(2)), static_cast<int>(probs.dim(3)), {}};
    m.p.assign(probs.data().begin(), probs.data().end());
    return m;
}

template <typename T>
Tensor<T> frame_tensor(const video::VideoClip& clip, int t) {
    auto chw = clip.frame_chw(t);
    std::vector<T> v(chw.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(chw[i]) - T(0.5);
    return Tensor<T>({1, 3, static_cast<std::size_t>(clip.height), static_cast<std::size_t>(clip.width)}, std::move(v));
}

template <typename T>
std::vector<Tensor<T>> hard_mask_planes(const LabelMap& labels, int num_objects, int max_objects) {
    if (num_objects > max_objects) {
        throw std::invalid_argument("mask has " + std::to_string(num_objects) + " objects, model supports " +
                                    std::to_string(max_objects));
    }
    const std::size_t n = labels.size();
    for (auto v : labels.values) {
        if (v > num_objects) {
            throw std::invalid_argument("mask object id " + std::to_string(v) + " exceeds object count " +
                                        std::to_string(num_objects));
        }
    }
    std::vector<Tensor<T>> planes;
    for (int k = 1; k <= num_objects; ++k) {
        std::vector<T> v(2 * n, T{0});
        for (std::size_t i = 0; i < n; ++i) {
            const int id = labels.values[i];
            if (id == k) {
                v[i] = T{1};
            } else if (id != 0) {
                v[n + i] = T{1};
            }
        }
        planes.emplace_back(Shape{1, 2, static_cast<std::size_t>(labels.height), static_cast<std::size_t>(labels.width)},
                            std::move(v));
    }
    return planes;
}

template <typename T>
std::vector<Tensor<T>> soft_mask_planes(Graph<T>& g, const Tensor<T>& probs, int num_objects) {
    const std::size_t n = probs.dim(2) * probs.dim(3);
    const Shape plane{1, 1, probs.dim(2), probs.dim(3)};
    const std::vector<int> bg_idx(n, 0);
    auto bg = ad::gather_labels(g, probs, std::span<const int>(bg_idx));
    auto fg_total = ad::sub(g, Tensor<T>::full(plane, T{1}), bg);
    std::vector<Tensor<T>> planes;
    for (int k = 1; k <= num_objects; ++k) {
        const std::vector<int> idx(n, k);
        auto own = ad::gather_labels(g, probs, std::span<const int>(idx));
        auto others = ad::sub(g, fg_total, own);
        planes.push_back(ad::concat_channels(g, {own, others}));
    }
    return planes;
}

template <typename T>
Segmenter<T>::Segmenter(ModelConfig cfg, const ad::ParameterSet<T>& params) : cfg_(cfg), params_(&params) {
    for (const auto& [name, shape] : parameter_layout(cfg_)) {
        if (!params.contains(name) || params.at(name).shape() != shape) {
            throw std::invalid_argument("segmenter: parameter '" + name + "' missing or mis-shaped");
        }
    }
}

template <typename T>
Tensor<T> Segmenter<T>::conv(Graph<T>& g, const Tensor<T>& x, const std::string& name) const {
    return ad::conv2d_3x3_pad1(g, x, params_->at(name + ".weight"), params_->at(name + ".bias"));
}

template <typename T>
FrameFeatures<T> Segmenter<T>::encode_frame(Graph<T>& g, const Tensor<T>& frame) const {
    if (frame.rank() != 4 || frame.dim(1) != 3 || frame.dim(2) % 4 || frame.dim(3) % 4) {
        throw std::invalid_argument("encode: frame must be [1,3,H,W] with H,W divisible by 4, got " +
                                    ad::shape_string(frame.shape()));
    }
    FrameFeatures<T> f;
    f.skip_full = ad::relu(g, conv(g, frame, "key_enc.conv1"));
    f.skip_half = ad::relu(g, conv(g, ad::avgpool2(g, f.skip_full), "key_enc.conv2"));
    f.deep = ad::relu(g, conv(g, ad::avgpool2(g, f.skip_half), "key_enc.conv3"));
    f.key = conv(g, f.deep, "key_enc.proj");
    return f;
}

template <typename T>
std::vector<Tensor<T>> Segmenter<T>::encode_values(Graph<T>& g, const FrameFeatures<T>& features,
                                                   const std::vector<Tensor<T>>& mask_planes) const {
    if (static_cast<int>(mask_planes.size()) > cfg_.max_objects) {
        throw std::invalid_argument("encode: " + std::to_string(mask_planes.size()) + " objects exceed max_objects " +
                                    std::to_string(cfg_.max_objects));
    }
    std::vector<Tensor<T>> values;
    for (const auto& planes : mask_planes) {
        auto pooled = ad::avgpool2(g, ad::avgpool2(g, planes));
        auto hidden = ad::relu(g, conv(g, ad::concat_channels(g, {features.deep, pooled}), "value_enc.conv1"));
        values.push_back(conv(g, hidden, "value_enc.proj"));
    }
    return values;
}

template <typename T>
MemoryEntry<T> Segmenter<T>::encode_memory(Graph<T>& g, const FrameFeatures<T>& features,
                                           const std::vector<Tensor<T>>& mask_planes, int frame,
                                           MaskSource source) const {
    return MemoryEntry<T>{features.key, encode_values(g, features, mask_planes), frame, source};
}

template <typename T>
std::vector<Tensor<T>> Segmenter<T>::memory_read(Graph<T>& g, const Tensor<T>& query_key,
                                                 const std::vector<MemoryEntry<T>>& memory) const {
    if (memory.empty()) throw std::invalid_argument("memory_read: empty memory");
    const std::size_t ck = query_key.dim(1), h = query_key.dim(2), w = query_key.dim(3);
    const std::size_t q = h * w;
    const std::size_t objects = memory.front().values.size();

    std::vector<Tensor<T>> keys;
    std::size_t m = 0;
    for (const auto& e : memory) {
        if (e.key.shape() != query_key.shape() || e.values.size() != objects) {
            throw std::invalid_argument("memory_read: inconsistent memory entry for frame " + std::to_string(e.frame));
        }
        keys.push_back(ad::reshape(g, e.key, {ck, q}));
        m += q;
    }
    auto mem_keys = keys.size() == 1 ? keys[0] : ad::concat_channels(g, keys);
    auto logits = ad::neg_sq_l2_affinity(g, mem_keys, ad::reshape(g, query_key, {ck, q}),
                                         static_cast<T>(1.0 / std::sqrt(static_cast<double>(ck))));
    auto affinity = ad::reshape(g, ad::channel_softmax(g, ad::reshape(g, logits, {1, m, q})), {m, q});

    std::vector<Tensor<T>> reads;
    for (std::size_t k = 0; k < objects; ++k) {
        std::vector<Tensor<T>> vals;
        std::size_t cv = 0;
        for (const auto& e : memory) {
            cv = e.values[k].dim(1);
            if (e.values[k].dim(2) != h || e.values[k].dim(3) != w) {
                throw std::invalid_argument("memory_read: value/key spatial mismatch");
            }
            vals.push_back(ad::reshape(g, e.values[k], {cv, q}));
        }
        auto mem_vals = vals.size() == 1 ? vals[0] : ad::concat_channels(g, vals);
        reads.push_back(ad::reshape(g, ad::matmul(g, mem_vals, affinity), {1, cv, h, w}));
    }
    return reads;
}

template <typename T>
Tensor<T> Segmenter<T>::decode(Graph<T>& g, const FrameFeatures<T>& query, const std::vector<Tensor<T>>& reads) const {
    const Shape plane{1, 1, query.skip_full.dim(2), query.skip_full.dim(3)};
    std::vector<Tensor<T>> logits{Tensor<T>::zeros(plane)};
    for (const auto& read : reads) {
        auto x = ad::relu(g, conv(g, ad::concat_channels(g, {read, query.key}), "decoder.fuse"));
        x = ad::relu(g, conv(g, ad::concat_channels(g, {ad::upsample2_nearest(g, x), query.skip_half}), "decoder.up_half"));
        x = ad::relu(g, conv(g, ad::concat_channels(g, {ad::upsample2_nearest(g, x), query.skip_full}), "decoder.up_full"));
        logits.push_back(conv(g, x, "decoder.logit"));
    }
    return ad::channel_softmax(g, ad::concat_channels(g, logits));
}

template <typename T>
Tensor<T> Segmenter<T>::segment(Graph<T>& g, const FrameFeatures<T>& query, const std::vector<MemoryEntry<T>>& memory) const {
    return decode(g, query, memory_read(g, query.key, memory));
}

template <typename T>
TripletOutput<T> Segmenter<T>::forward_triplet(Graph<T>& g, const Tensor<T>& f1, const Tensor<T>& f2,
                                               const Tensor<T>& f3, const LabelMap& m1, int num_objects) const {
    auto e1 = encode_frame(g, f1);
    auto e2 = encode_frame(g, f2);
    auto e3 = encode_frame(g, f3);
    std::vector<MemoryEntry<T>> memory{
        encode_memory(g, e1, hard_mask_planes<T>(m1, num_objects, cfg_.max_objects), 0, MaskSource::ground_truth)};
    TripletOutput<T> out;
    out.second = segment(g, e2, memory);
    memory.push_back(encode_memory(g, e2, soft_mask_planes(g, out.second, num_objects), 1, MaskSource::predicted));
    out.third = segment(g, e3, memory);
    return out;
}

template <typename T>
SequencePrediction Segmenter<T>::predict_sequence(const video::VideoClip& clip, int reference,
                                                  const LabelMap& reference_mask, Direction direction,
                                                  int num_objects) const {
    if (reference < 0 || reference >= clip.frames()) {
        throw std::out_of_range("predict_sequence: reference " + std::to_string(reference) + " outside [0," +
                                std::to_string(clip.frames()) + ")");
    }
    Graph<T> g(false);
    SequencePrediction out;
    const int step = direction == Direction::forward ? 1 : -1;
    auto ref_features = encode_frame(g, frame_tensor<T>(clip, reference));
    const auto ref_entry = encode_memory(g, ref_features, hard_mask_planes<T>(reference_mask, num_objects, cfg_.max_objects),
                                         reference, MaskSource::ground_truth);
    MemoryEntry<T> previous;
    for (int t = reference + step; t >= 0 && t < clip.frames(); t += step) {
        auto features = encode_frame(g, frame_tensor<T>(clip, t));
        std::vector<MemoryEntry<T>> memory{ref_entry};
        if (previous.key.defined()) memory.push_back(previous);
        auto probs = to_probmap(segment(g, features, memory));
        previous = encode_memory(g, features, hard_mask_planes<T>(probs.hard_labels(), num_objects, cfg_.max_objects), t,
                                 MaskSource::predicted);
        out.frames.push_back(t);
        out.probs.push_back(std::move(probs));
    }
    return out;
}

template class Segmenter<float>;
template class Segmenter<double>;
template ProbMap to_probmap<float>(const Tensor<float>&);
template ProbMap to_probmap<double>(const Tensor<double>&);
template Tensor<float> frame_tensor<float>(const video::VideoClip&, int);
template Tensor<double> frame_tensor<double>(const video::VideoClip&, int);
template std::vector<Tensor<float>> hard_mask_planes<float>(const LabelMap&, int, int);
template std::vector<Tensor<double>> hard_mask_planes<double>(const LabelMap&, int, int);
template std::vector<Tensor<float>> soft_mask_planes<float>(Graph<float>&, const Tensor<float>&, int);
template std::vector<Tensor<double>> soft_mask_planes<double>(Graph<double>&, const Tensor<double>&, int);

}  // namespace twoshot::model
