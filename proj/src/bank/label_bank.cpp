#include "twoshot/bank/label_bank.hpp"

#include "twoshot/metrics/vos_metrics.hpp"
#include "twoshot/util/binary_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace twoshot::bank {

namespace {

constexpr std::uint32_t kVersion = 1;

const std::vector<int>& split_entry(const video::ShotSplit& split, const std::string& id) {
    const auto it = split.find(id);
    if (it == split.end()) throw std::invalid_argument("split has no entry for video '" + id + "'");
    return it->second;
}

}  // namespace

const VideoBank& PseudoLabelBank::video(const std::string& id) const {
    for (const auto& v : videos) {
        if (v.id == id) return v;
    }
    throw std::out_of_range("bank has no video '" + id + "'");
}

VideoBank& PseudoLabelBank::video(const std::string& id) {
    return const_cast<VideoBank&>(static_cast<const PseudoLabelBank&>(*this).video(id));
}

bool PseudoLabelBank::contains(const std::string& id) const {
    return std::any_of(videos.begin(), videos.end(), [&](const VideoBank& v) { return v.id == id; });
}

const char* mode_name(InferenceMode mode) {
    return mode == InferenceMode::bidirectional ? "bidirectional" : "unidirectional";
}

InferenceMode mode_from_name(const std::string& name) {
    if (name == "bidirectional") return InferenceMode::bidirectional;
    if (name == "unidirectional") return InferenceMode::unidirectional;
    throw std::invalid_argument("unknown inference mode '" + name + "'");
}

int nearest_labeled(int t, const std::vector<int>& labeled) {
    if (labeled.empty()) throw std::invalid_argument("nearest_labeled: no labeled frames");
    int best = labeled.front();
    for (int r : labeled) {
        const int d = std::abs(t - r), bd = std::abs(t - best);
        if (d < bd || (d == bd && r < best)) best = r;
    }
    return best;
}

PseudoLabelBank build_bank(const std::vector<video::VideoClip>& clips, const video::ShotSplit& split,
                           InferenceMode mode, const DirectionalPredictor& predict, BuildStats* stats) {
    PseudoLabelBank bank;
    BuildStats local;
    for (const auto& clip : clips) {
        auto labeled = split_entry(split, clip.id);
        std::sort(labeled.begin(), labeled.end());
        if (labeled.empty()) throw std::invalid_argument("split entry for '" + clip.id + "' is empty");
        for (int r : labeled) {
            if (r < 0 || r >= clip.frames()) throw std::out_of_range("split frame out of range for '" + clip.id + "'");
        }
        const int T = clip.frames();
        // predictions[r][t]
        std::map<int, std::map<int, LabelMap>> predictions;
        for (int r : labeled) {
            std::vector<model::Direction> dirs{model::Direction::forward};
            if (mode == InferenceMode::bidirectional) dirs.push_back(model::Direction::backward);
            for (auto d : dirs) {
                const auto masks = predict(clip, r, clip.labels[static_cast<std::size_t>(r)], d);
                const int step = d == model::Direction::forward ? 1 : -1;
                const int expected = d == model::Direction::forward ? T - 1 - r : r;
                if (static_cast<int>(masks.size()) != expected) {
                    throw std::runtime_error("build_bank: predictor returned " + std::to_string(masks.size()) +
                                             " masks, expected " + std::to_string(expected));
                }
                for (int k = 0; k < expected; ++k) predictions[r].emplace(r + step * (k + 1), masks[static_cast<std::size_t>(k)]);
            }
        }

        VideoBank vb{clip.id, clip.height, clip.width, {}};
        vb.frames.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            auto& f = vb.frames[static_cast<std::size_t>(t)];
            if (std::binary_search(labeled.begin(), labeled.end(), t)) {
                f = BankFrame{clip.labels[static_cast<std::size_t>(t)], Provenance::ground_truth, t, 0};
                continue;
            }
            ++local.pseudo_frames;
            if (mode == InferenceMode::bidirectional) {
                const int r = nearest_labeled(t, labeled);
                f = BankFrame{predictions.at(r).at(t), Provenance::pseudo, r, 0};
            } else if (t < labeled.front()) {
                const int r = labeled.front();
                f = BankFrame{clip.labels[static_cast<std::size_t>(r)], Provenance::pseudo, r, 0};
                ++local.fallback_frames;
            } else {
                int r = labeled.front();
                for (int l : labeled) {
                    if (l <= t) r = l;
                }
                f = BankFrame{predictions.at(r).at(t), Provenance::pseudo, r, 0};
            }
        }
        bank.videos.push_back(std::move(vb));
        ++local.videos;
    }
    if (stats) *stats = local;
    return bank;
}

void validate(const BankUpdateRule& rule) {
    if (!(rule.tau2 > 0.0 && rule.tau2 <= 1.0)) throw std::invalid_argument("tau2 must be in (0, 1]");
}

std::size_t dynamic_update(PseudoLabelBank& bank, const std::string& video_id, int frame, const model::ProbMap& probs,
                           const BankUpdateRule& rule) {
    auto& vb = bank.video(video_id);
    if (frame < 0 || frame >= static_cast<int>(vb.frames.size())) {
        throw std::out_of_range("dynamic_update: frame " + std::to_string(frame) + " out of range");
    }
    auto& f = vb.frames[static_cast<std::size_t>(frame)];
    if (f.provenance == Provenance::ground_truth) {
        throw std::invalid_argument("dynamic_update: frame " + std::to_string(frame) + " of '" + video_id +
                                    "' is ground truth");
    }
    if (probs.height != vb.height || probs.width != vb.width) throw std::invalid_argument("dynamic_update: shape mismatch");
    std::size_t changed = 0;
    for (std::size_t i = 0; i < probs.pixels(); ++i) {
        if (static_cast<double>(probs.max_confidence(i)) < rule.tau2) continue;
        const auto label = static_cast<std::uint8_t>(probs.argmax(i));
        if (f.labels.values[i] != label) {
            f.labels.values[i] = label;
            ++changed;
        }
    }
    if (changed > 0) {
        ++f.update_count;
        f.provenance = Provenance::updated;
    }
    return changed;
}

std::vector<std::uint8_t> encode_bank(const PseudoLabelBank& bank) {
    BinaryWriter w;
    w.magic("PLBK");
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(bank.videos.size()));
    for (const auto& v : bank.videos) {
        w.str(v.id);
        w.u32(static_cast<std::uint32_t>(v.frames.size()));
        w.u32(static_cast<std::uint32_t>(v.height));
        w.u32(static_cast<std::uint32_t>(v.width));
        for (const auto& f : v.frames) {
            if (f.labels.height != v.height || f.labels.width != v.width) {
                throw std::invalid_argument("save_bank: frame shape differs from video shape in '" + v.id + "'");
            }
            if (f.source < 0 || f.source > std::numeric_limits<std::uint16_t>::max()) {
                throw std::invalid_argument("save_bank: source index out of range");
            }
            w.u8(static_cast<std::uint8_t>(f.provenance));
            w.u16(static_cast<std::uint16_t>(f.source));
            w.u32(f.update_count);
            const auto& px = f.labels.values;
            std::size_t i = 0;
            while (i < px.size()) {
                std::size_t run = 1;
                while (i + run < px.size() && px[i + run] == px[i] && run < 0xFFFF) ++run;
                w.u16(static_cast<std::uint16_t>(run));
                w.u8(px[i]);
                i += run;
            }
        }
    }
    return w.buffer();
}

PseudoLabelBank decode_bank(const std::vector<std::uint8_t>& bytes) {
    BinaryReader r(bytes, "pseudo-label bank");
    r.expect_magic("PLBK");
    const auto version = r.u32();
    if (version != kVersion) r.fail("unsupported bank version " + std::to_string(version));
    PseudoLabelBank bank;
    const auto n = r.u32();
    for (std::uint32_t k = 0; k < n; ++k) {
        VideoBank v;
        v.id = r.str();
        const auto T = r.u32();
        v.height = static_cast<int>(r.u32());
        v.width = static_cast<int>(r.u32());
        if (v.height <= 0 || v.width <= 0 || v.height > 4096 || v.width > 4096) r.fail("bad frame size");
        if (T > 100000) r.fail("bad frame count");
        const std::size_t pixels = static_cast<std::size_t>(v.height) * v.width;
        for (std::uint32_t t = 0; t < T; ++t) {
            BankFrame f;
            const auto prov = r.u8();
            if (prov > 2) r.fail("bad provenance byte " + std::to_string(prov));
            f.provenance = static_cast<Provenance>(prov);
            f.source = r.u16();
            f.update_count = r.u32();
            f.labels = LabelMap(v.height, v.width);
            std::size_t filled = 0;
            while (filled < pixels) {
                const std::size_t run = r.u16();
                const auto label = r.u8();
                if (run == 0) r.fail("zero-length run");
                if (filled + run > pixels) r.fail("run overruns frame");
                std::fill_n(f.labels.values.begin() + static_cast<std::ptrdiff_t>(filled), run, label);
                filled += run;
            }
            v.frames.push_back(std::move(f));
        }
        bank.videos.push_back(std::move(v));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return bank;
}

void save_bank(const PseudoLabelBank& bank, const std::string& path) { write_file_bytes(path, encode_bank(bank)); }

PseudoLabelBank load_bank(const std::string& path) {
    try {
        return decode_bank(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

BankQuality bank_quality(const PseudoLabelBank& bank, const std::vector<video::VideoClip>& clips,
                         const video::ShotSplit& split) {
    BankQuality q;
    double total = 0;
    int instances = 0;
    for (const auto& clip : clips) {
        const auto& vb = bank.video(clip.id);
        const auto& labeled = split_entry(split, clip.id);
        double video_sum = 0;
        int video_n = 0;
        for (int k = 1; k <= clip.num_objects; ++k) {
            double s = 0;
            int n = 0;
            for (int t = 0; t < clip.frames(); ++t) {
                if (std::find(labeled.begin(), labeled.end(), t) != labeled.end()) continue;
                s += metrics::region_j(vb.frames[static_cast<std::size_t>(t)].labels, clip.labels[static_cast<std::size_t>(t)], k);
                ++n;
            }
            if (n == 0) continue;
            video_sum += s / n;
            ++video_n;
        }
        if (video_n == 0) continue;
        q.per_video[clip.id] = video_sum / video_n;
        total += video_sum;
        instances += video_n;
    }
    q.mean_j = instances ? total / instances : 0.0;
    return q;
}

}  // namespace twoshot::bank
