#pragma once

#include "twoshot/model/segmenter.hpp"
#include "twoshot/util/random.hpp"
#include "twoshot/video/synth_video.hpp"

#include <array>
#include <cstdint>

namespace twoshot::pipeline {

// One draw of a label-preserving transform: a symmetry of the square grid
// (transpose only when H == W) and a palette change (channel permutation plus
// per-channel inversion).
struct Augmentation {
    bool flip_x = false;
    bool flip_y = false;
    bool transpose = false;
    std::array<int, 3> channel_order{0, 1, 2};
    std::array<bool, 3> invert{};

    static Augmentation identity() { return {}; }
    static Augmentation sample(Rng& rng, bool square);
};

// A clip holding copies of `frames` (in that order) with the transform
// applied to both pixels and labels.
video::VideoClip augment_frames(const video::VideoClip& clip, const std::array<int, 3>& frames, const Augmentation& aug);

video::LabelMap augment_labels(const video::LabelMap& labels, const Augmentation& aug);

// Maps a prediction made on augmented frames back onto the original grid.
model::ProbMap restore_probmap(const model::ProbMap& probs, const Augmentation& aug);

}  // namespace twoshot::pipeline
