#pragma once

#include "twoshot/video/synth_video.hpp"

#include <functional>
#include <string>
#include <vector>

namespace twoshot::metrics {

using video::LabelMap;

// Intersection over union of the object's binary planes; 1 when both are empty.
double region_j(const LabelMap& pred, const LabelMap& gt, int object_id);

// Boundary F-measure. A boundary pixel is an object pixel with a 4-neighbor
// outside the object or on the image border; boundary pixels match when a
// counterpart lies within Chebyshev distance tolerance_radius.
double contour_f(const LabelMap& pred, const LabelMap& gt, int object_id, int tolerance_radius = 1);

struct FrameScore {
    std::string video_id;
    int object_id = 0;
    int frame = 0;
    double j = 0;
    double f = 0;
};

struct EvalResult {
    std::vector<FrameScore> rows;
    double mean_j = 0;
    double mean_f = 0;
    double g = 0;
};

// Scores averaged per object over frames, then over every object of every video.
EvalResult aggregate(std::vector<FrameScore> rows);

// Hard masks for frames 1..T-1 (in order) given the clip and frame-0 labels.
using SequencePredictor = std::function<std::vector<LabelMap>(const video::VideoClip&, const LabelMap& first_mask)>;

EvalResult evaluate_dataset(const std::vector<video::VideoClip>& clips, const SequencePredictor& predict);

// "video_id,object_id,frame,J,F" rows plus a final "ALL,ALL,ALL,<J>,<F>" row.
std::string eval_csv(const EvalResult& result);
void write_eval_csv(const EvalResult& result, const std::string& path);
std::string summary_line(const EvalResult& result);

}  // namespace twoshot::metrics
