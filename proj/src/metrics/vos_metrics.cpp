#include "twoshot/metrics/vos_metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace twoshot::metrics {

namespace {

void require_same_shape(const LabelMap& a, const LabelMap& b) {
    if (a.height != b.height || a.width != b.width) throw std::invalid_argument("metrics: mask shapes differ");
}

std::vector<std::uint8_t> boundary(const LabelMap& m, int id) {
    std::vector<std::uint8_t> b(m.size(), 0);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.at(y, x) != id) continue;
            const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1 || m.at(y - 1, x) != id ||
                              m.at(y + 1, x) != id || m.at(y, x - 1) != id || m.at(y, x + 1) != id;
            if (edge) b[static_cast<std::size_t>(y) * m.width + x] = 1;
        }
    }
    return b;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& b, int h, int w, int r) {
    std::vector<std::uint8_t> out(b.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!b[static_cast<std::size_t>(y) * w + x]) continue;
            for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
                for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) out[static_cast<std::size_t>(yy) * w + xx] = 1;
            }
        }
    }
    return out;
}

}  // namespace

double region_j(const LabelMap& pred, const LabelMap& gt, int object_id) {
    require_same_shape(pred, gt);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred.values[i] == object_id;
        const bool b = gt.values[i] == object_id;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double contour_f(const LabelMap& pred, const LabelMap& gt, int object_id, int tolerance_radius) {
    require_same_shape(pred, gt);
    const auto bp = boundary(pred, object_id);
    const auto bg = boundary(gt, object_id);
    const auto np = std::count(bp.begin(), bp.end(), 1);
    const auto ng = std::count(bg.begin(), bg.end(), 1);
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;
    const auto near_gt = dilate(bg, gt.height, gt.width, tolerance_radius);
    const auto near_pred = dilate(bp, pred.height, pred.width, tolerance_radius);
    std::size_t hit_p = 0, hit_g = 0;
    for (std::size_t i = 0; i < bp.size(); ++i) {
        hit_p += bp[i] && near_gt[i];
        hit_g += bg[i] && near_pred[i];
    }
    const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
    const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

EvalResult aggregate(std::vector<FrameScore> rows) {
    EvalResult r;
    std::map<std::pair<std::string, int>, std::pair<double, double>> sums;
    std::map<std::pair<std::string, int>, int> counts;
    for (const auto& row : rows) {
        auto& s = sums[{row.video_id, row.object_id}];
        s.first += row.j;
        s.second += row.f;
        ++counts[{row.video_id, row.object_id}];
    }
    for (const auto& [key, s] : sums) {
        const double n = counts[key];
        r.mean_j += s.first / n;
        r.mean_f += s.second / n;
    }
    if (!sums.empty()) {
        r.mean_j /= static_cast<double>(sums.size());
        r.mean_f /= static_cast<double>(sums.size());
    }
    r.g = 0.5 * (r.mean_j + r.mean_f);
    r.rows = std::move(rows);
    return r;
}

EvalResult evaluate_dataset(const std::vector<video::VideoClip>& clips, const SequencePredictor& predict) {
    std::vector<FrameScore> rows;
    for (const auto& clip : clips) {
        if (clip.labels.empty()) throw std::invalid_argument("evaluate_dataset: clip '" + clip.id + "' has no frame-0 labels");
        const auto masks = predict(clip, clip.labels[0]);
        if (static_cast<int>(masks.size()) != clip.frames() - 1) {
            throw std::runtime_error("evaluate_dataset: predictor returned wrong frame count for '" + clip.id + "'");
        }
        for (int k = 1; k <= clip.num_objects; ++k) {
            for (int t = 1; t < clip.frames(); ++t) {
                const auto& pred = masks[static_cast<std::size_t>(t - 1)];
                const auto& gt = clip.labels[static_cast<std::size_t>(t)];
                rows.push_back({clip.id, k, t, region_j(pred, gt, k), contour_f(pred, gt, k)});
            }
        }
    }
    return aggregate(std::move(rows));
}

std::string eval_csv(const EvalResult& result) {
    std::ostringstream os;
    char buf[128];
    os << "video_id,object_id,frame,J,F\n";
    for (const auto& r : result.rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f\n", r.object_id, r.frame, r.j, r.f);
        os << r.video_id << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "ALL,ALL,ALL,%.6f,%.6f\n", result.mean_j, result.mean_f);
    os << buf;
    return os.str();
}

void write_eval_csv(const EvalResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << eval_csv(result);
}

std::string summary_line(const EvalResult& result) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "J=%.4f F=%.4f G=%.4f", result.mean_j, result.mean_f, result.g);
    return buf;
}

}  // namespace twoshot::metrics
