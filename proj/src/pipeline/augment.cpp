#include "twoshot/pipeline/augment.hpp"

#include <algorithm>

namespace twoshot::pipeline {

Augmentation Augmentation::sample(Rng& rng, bool square) {
    Augmentation a;
    a.flip_x = rng.bernoulli(0.5);
    a.flip_y = rng.bernoulli(0.5);
    a.transpose = square && rng.bernoulli(0.5);
    // Fisher-Yates on three channels
    for (int i = 2; i > 0; --i) std::swap(a.channel_order[static_cast<std::size_t>(i)], a.channel_order[rng.index(static_cast<std::size_t>(i + 1))]);
    for (auto& inv : a.invert) inv = rng.bernoulli(0.5);
    return a;
}

namespace {

// Source pixel (in an H x W grid) for augmented pixel (y, x).
std::size_t source_pixel(const Augmentation& aug, int H, int W, int y, int x) {
    int sy = aug.transpose ? x : y, sx = aug.transpose ? y : x;
    if (aug.flip_y) sy = H - 1 - sy;
    if (aug.flip_x) sx = W - 1 - sx;
    return static_cast<std::size_t>(sy) * W + sx;
}

}  // namespace

video::LabelMap augment_labels(const video::LabelMap& labels, const Augmentation& aug) {
    const int H = labels.height, W = labels.width;
    video::LabelMap out(aug.transpose ? W : H, aug.transpose ? H : W);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) out.at(y, x) = labels.values[source_pixel(aug, H, W, y, x)];
    }
    return out;
}

model::ProbMap restore_probmap(const model::ProbMap& probs, const Augmentation& aug) {
    model::ProbMap out;
    out.classes = probs.classes;
    out.height = aug.transpose ? probs.width : probs.height;
    out.width = aug.transpose ? probs.height : probs.width;
    out.p.assign(probs.p.size(), 0.0f);
    const std::size_t n = probs.pixels();
    for (int y = 0; y < probs.height; ++y) {
        for (int x = 0; x < probs.width; ++x) {
            const std::size_t s = source_pixel(aug, out.height, out.width, y, x);
            const std::size_t d = static_cast<std::size_t>(y) * probs.width + x;
            for (int c = 0; c < probs.classes; ++c) out.p[static_cast<std::size_t>(c) * n + s] = probs.p[static_cast<std::size_t>(c) * n + d];
        }
    }
    return out;
}

video::VideoClip augment_frames(const video::VideoClip& clip, const std::array<int, 3>& frames, const Augmentation& aug) {
    const int H = clip.height, W = clip.width;
    const int oh = aug.transpose ? W : H, ow = aug.transpose ? H : W;
    video::VideoClip out;
    out.id = clip.id;
    out.height = oh;
    out.width = ow;
    out.num_objects = clip.num_objects;
    for (int t : frames) {
        const auto& src_rgb = clip.rgb[static_cast<std::size_t>(t)];
        const auto& src_lab = clip.labels[static_cast<std::size_t>(t)];
        std::vector<std::uint8_t> rgb(static_cast<std::size_t>(oh) * ow * 3);
        video::LabelMap lab(oh, ow);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const std::size_t s = source_pixel(aug, H, W, y, x);
                const std::size_t d = static_cast<std::size_t>(y) * ow + x;
                lab.values[d] = src_lab.values[s];
                for (int c = 0; c < 3; ++c) {
                    const auto v = src_rgb[s * 3 + static_cast<std::size_t>(aug.channel_order[static_cast<std::size_t>(c)])];
                    rgb[d * 3 + static_cast<std::size_t>(c)] = aug.invert[static_cast<std::size_t>(c)] ? static_cast<std::uint8_t>(255 - v) : v;
                }
            }
        }
        out.rgb.push_back(std::move(rgb));
        out.labels.push_back(std::move(lab));
    }
    return out;
}

}  // namespace twoshot::pipeline
