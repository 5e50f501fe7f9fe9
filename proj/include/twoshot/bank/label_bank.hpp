#pragma once

#include "twoshot/model/segmenter.hpp"
#include "twoshot/video/synth_video.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace twoshot::bank {

using video::LabelMap;

enum class Provenance : std::uint8_t { ground_truth = 0, pseudo = 1, updated = 2 };

struct BankFrame {
    LabelMap labels;
    Provenance provenance = Provenance::pseudo;
    int source = 0;  // labeled frame the label was propagated from
    std::uint32_t update_count = 0;

    bool operator==(const BankFrame&) const = default;
};

struct VideoBank {
    std::string id;
    int height = 0;
    int width = 0;
    std::vector<BankFrame> frames;

    bool operator==(const VideoBank&) const = default;
};

struct PseudoLabelBank {
    std::vector<VideoBank> videos;

    const VideoBank& video(const std::string& id) const;
    VideoBank& video(const std::string& id);
    bool contains(const std::string& id) const;
    bool operator==(const PseudoLabelBank&) const = default;
};

enum class InferenceMode { bidirectional, unidirectional };

const char* mode_name(InferenceMode mode);
InferenceMode mode_from_name(const std::string& name);

// Labeled frame closest to t; ties go to the earlier frame.
int nearest_labeled(int t, const std::vector<int>& labeled);

// Hard masks for the frames visited from `reference` in `direction`, in
// visiting order (reference excluded).
using DirectionalPredictor = std::function<std::vector<LabelMap>(const video::VideoClip&, int reference,
                                                                 const LabelMap& reference_mask, model::Direction)>;

struct BuildStats {
    int videos = 0;
    int pseudo_frames = 0;
    int fallback_frames = 0;  // unidirectional mode: copies of the first labeled frame
};

PseudoLabelBank build_bank(const std::vector<video::VideoClip>& clips, const video::ShotSplit& split,
                           InferenceMode mode, const DirectionalPredictor& predict, BuildStats* stats = nullptr);

struct BankUpdateRule {
    double tau2 = 0.99;
};

void validate(const BankUpdateRule& rule);

// Overwrites pixels with max(P) >= tau2 by argmax(P); returns how many labels
// changed value.
std::size_t dynamic_update(PseudoLabelBank& bank, const std::string& video_id, int frame, const model::ProbMap& probs,
                           const BankUpdateRule& rule);

void save_bank(const PseudoLabelBank& bank, const std::string& path);
PseudoLabelBank load_bank(const std::string& path);
std::vector<std::uint8_t> encode_bank(const PseudoLabelBank& bank);
PseudoLabelBank decode_bank(const std::vector<std::uint8_t>& bytes);

struct BankQuality {
    std::map<std::string, double> per_video;
    double mean_j = 0;  // over every (video, object) instance
};

// J of bank labels against full ground truth on frames not labeled in the split.
BankQuality bank_quality(const PseudoLabelBank& bank, const std::vector<video::VideoClip>& clips,
                         const video::ShotSplit& split);

}  // namespace twoshot::bank
