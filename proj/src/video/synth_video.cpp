#include "twoshot/video/synth_video.hpp"

#include "twoshot/util/binary_io.hpp"
#include "twoshot/util/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace twoshot::video {

namespace {

constexpr std::uint32_t kClipVersion = 1;

double reflect(double p, double& v, double hi) {
    p += v;
    if (p < 0) {
        p = -p;
        v = -v;
    }
    if (p > hi) {
        p = 2 * hi - p;
        v = -v;
    }
    return std::clamp(p, 0.0, hi);
}

struct Center {
    double x, y;
};

std::vector<Center> trajectory(const ObjectSpec& o, int frames, int height, int width) {
    std::vector<Center> out;
    double x = o.x, y = o.y, vx = o.vx, vy = o.vy;
    for (int t = 0; t < frames; ++t) {
        if (t > 0) {
            x = reflect(x, vx, width - 1.0);
            y = reflect(y, vy, height - 1.0);
        }
        out.push_back({x, y});
    }
    return out;
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

bool covers(const ObjectSpec& o, Center c, int px, int py) {
    const double dx = px - c.x, dy = py - c.y;
    switch (o.kind) {
        case ShapeKind::disc:
            return dx * dx + dy * dy <= o.size * o.size;
        case ShapeKind::rectangle:
            return std::abs(dx) <= o.size && std::abs(dy) <= o.size * o.aspect;
        case ShapeKind::triangle: {
            const double s = o.size;
            const double ax = c.x, ay = c.y - s;
            const double bx = c.x + s, by = c.y + s;
            const double qx = c.x - s, qy = c.y + s;
            const double e1 = edge(ax, ay, bx, by, px, py);
            const double e2 = edge(bx, by, qx, qy, px, py);
            const double e3 = edge(qx, qy, ax, ay, px, py);
            return (e1 >= 0 && e2 >= 0 && e3 >= 0) || (e1 <= 0 && e2 <= 0 && e3 <= 0);
        }
    }
    return false;
}

// Bilinear value noise, amplitude 1, one field per channel.
std::vector<double> value_noise(Rng& rng, int height, int width, int grid) {
    std::vector<double> knots(static_cast<std::size_t>(grid) * grid);
    for (auto& k : knots) k = rng.uniform(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y) {
        const double gy = static_cast<double>(y) / (height - 1) * (grid - 1);
        const int y0 = std::min(static_cast<int>(gy), grid - 2);
        const double fy = gy - y0;
        for (int x = 0; x < width; ++x) {
            const double gx = static_cast<double>(x) / (width - 1) * (grid - 1);
            const int x0 = std::min(static_cast<int>(gx), grid - 2);
            const double fx = gx - x0;
            auto k = [&](int yy, int xx) { return knots[static_cast<std::size_t>(yy) * grid + xx]; };
            const double top = k(y0, x0) * (1 - fx) + k(y0, x0 + 1) * fx;
            const double bot = k(y0 + 1, x0) * (1 - fx) + k(y0 + 1, x0 + 1) * fx;
            out[static_cast<std::size_t>(y) * width + x] = top * (1 - fy) + bot * fy;
        }
    }
    return out;
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<LabelMap> rasterize(const SceneConfig& cfg) {
    std::vector<std::vector<Center>> paths;
    for (const auto& o : cfg.objects) paths.push_back(trajectory(o, cfg.frames, cfg.height, cfg.width));
    std::vector<LabelMap> labels;
    for (int t = 0; t < cfg.frames; ++t) {
        LabelMap m(cfg.height, cfg.width);
        for (std::size_t k = 0; k < cfg.objects.size(); ++k) {
            const auto c = paths[k][static_cast<std::size_t>(t)];
            for (int y = 0; y < cfg.height; ++y) {
                for (int x = 0; x < cfg.width; ++x) {
                    if (covers(cfg.objects[k], c, x, y)) m.at(y, x) = static_cast<std::uint8_t>(k + 1);
                }
            }
        }
        labels.push_back(std::move(m));
    }
    return labels;
}

double color_distance(const Rgb& a, const Rgb& b) {
    return std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
}

Rgb random_color(Rng& rng) { return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)}; }

}  // namespace

std::vector<float> VideoClip::frame_chw(int t) const {
    const auto& src = rgb.at(static_cast<std::size_t>(t));
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<float> out(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<float>(src[i * 3 + c]) / 255.0f;
    }
    return out;
}

VideoClip generate_video(const SceneConfig& cfg, const std::string& id) {
    if (cfg.height < 16 || cfg.width < 16) {
        throw std::invalid_argument("generate_video: H and W must be >= 16, got " + std::to_string(cfg.height) + "x" +
                                    std::to_string(cfg.width));
    }
    if (cfg.frames < 4) throw std::invalid_argument("generate_video: need at least 4 frames");
    if (cfg.objects.empty() || cfg.objects.size() > 3) {
        throw std::invalid_argument("generate_video: object count must be in 1..3");
    }
    for (const auto& o : cfg.objects) {
        if (!(o.size > 0)) throw std::invalid_argument("generate_video: object size must be positive");
    }

    VideoClip clip;
    clip.id = id;
    clip.height = cfg.height;
    clip.width = cfg.width;
    clip.num_objects = static_cast<int>(cfg.objects.size());
    clip.labels = rasterize(cfg);

    Rng rng(cfg.seed);
    std::array<std::vector<double>, 3> texture;
    for (auto& tex : texture) tex = value_noise(rng, cfg.height, cfg.width, 5);
    const double base[3] = {cfg.background.r, cfg.background.g, cfg.background.b};

    const std::size_t plane = static_cast<std::size_t>(cfg.height) * cfg.width;
    for (int t = 0; t < cfg.frames; ++t) {
        const auto& lab = clip.labels[static_cast<std::size_t>(t)];
        std::vector<std::uint8_t> frame(plane * 3);
        for (std::size_t i = 0; i < plane; ++i) {
            const int id_here = lab.values[i];
            for (int c = 0; c < 3; ++c) {
                double v;
                if (id_here == 0) {
                    v = base[c] + cfg.texture_amplitude * texture[static_cast<std::size_t>(c)][i];
                } else {
                    const auto& col = cfg.objects[static_cast<std::size_t>(id_here - 1)].color;
                    v = c == 0 ? col.r : (c == 1 ? col.g : col.b);
                }
                v += cfg.sensor_noise * rng.uniform(-1.0, 1.0);
                frame[i * 3 + static_cast<std::size_t>(c)] = quantize(v);
            }
        }
        clip.rgb.push_back(std::move(frame));
    }
    return clip;
}

SceneConfig sample_scene(const SceneTemplate& tpl, std::uint64_t seed) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 500; ++attempt) {
        SceneConfig cfg;
        cfg.height = tpl.height;
        cfg.width = tpl.width;
        cfg.frames = tpl.frames;
        cfg.texture_amplitude = tpl.texture_amplitude;
        cfg.sensor_noise = tpl.sensor_noise;
        cfg.allow_occlusion = tpl.allow_occlusion;
        cfg.seed = rng.next();
        cfg.background = random_color(rng);
        const auto n = rng.uniform_int(tpl.min_objects, tpl.max_objects);
        std::vector<Rgb> used{cfg.background};
        for (std::int64_t k = 0; k < n; ++k) {
            ObjectSpec o;
            o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
            o.size = rng.uniform(tpl.min_size, tpl.max_size);
            o.aspect = o.kind == ShapeKind::rectangle ? rng.uniform(0.5, 1.0) : 1.0;
            o.x = rng.uniform(o.size, tpl.width - 1 - o.size);
            o.y = rng.uniform(o.size, tpl.height - 1 - o.size);
            const double speed = rng.uniform(0.0, tpl.max_speed);
            const double angle = rng.uniform(0.0, 6.283185307179586);
            o.vx = speed * std::cos(angle);
            o.vy = speed * std::sin(angle);
            Rgb col = random_color(rng);
            for (int tries = 0; tries < 200; ++tries) {
                bool ok = true;
                for (const auto& u : used) ok = ok && color_distance(col, u) >= tpl.min_color_distance;
                if (ok) break;
                col = random_color(rng);
            }
            o.color = col;
            used.push_back(col);
            cfg.objects.push_back(o);
        }

        // Every object visible in every frame; optionally no overlap at all.
        bool valid = true;
        const auto labels = rasterize(cfg);
        for (const auto& m : labels) {
            std::vector<int> counts(cfg.objects.size() + 1, 0);
            for (auto v : m.values) ++counts[v];
            for (std::size_t k = 1; k < counts.size(); ++k) valid = valid && counts[k] >= tpl.min_visible_pixels;
        }
        if (valid && !tpl.allow_occlusion) {
            for (std::size_t k = 0; k < cfg.objects.size() && valid; ++k) {
                SceneConfig solo = cfg;
                solo.objects = {cfg.objects[k]};
                const auto own = rasterize(solo);
                for (std::size_t t = 0; t < own.size() && valid; ++t) {
                    for (std::size_t i = 0; i < own[t].size(); ++i) {
                        if (own[t].values[i] && labels[t].values[i] != k + 1) {
                            valid = false;
                            break;
                        }
                    }
                }
            }
        }
        if (valid) return cfg;
    }
    throw std::runtime_error("sample_scene: no valid scene after 500 attempts (seed " + std::to_string(seed) + ")");
}

std::vector<VideoClip> make_dataset(int n_videos, std::uint64_t base_seed, const SceneTemplate& tpl) {
    if (n_videos < 1) throw std::invalid_argument("make_dataset: n_videos must be >= 1");
    std::vector<VideoClip> out;
    out.reserve(static_cast<std::size_t>(n_videos));
    for (int i = 0; i < n_videos; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "vid%04d", i);
        out.push_back(generate_video(sample_scene(tpl, base_seed + static_cast<std::uint64_t>(i)), id));
    }
    return out;
}

bool is_validation_index(int index, int val_every) { return val_every > 0 && index % val_every == val_every - 1; }

DatasetPartition partition_dataset(const std::vector<VideoClip>& clips, int val_every) {
    DatasetPartition p;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        (is_validation_index(static_cast<int>(i), val_every) ? p.validation : p.train).push_back(clips[i]);
    }
    return p;
}

ShotSplit make_two_shot_split(const std::vector<VideoClip>& dataset, std::uint64_t seed, int n_shots) {
    if (n_shots < 2) throw std::invalid_argument("make_two_shot_split: need at least 2 shots");
    Rng rng(seed);
    ShotSplit split;
    for (const auto& clip : dataset) {
        const int T = clip.frames();
        if (T < n_shots) throw std::invalid_argument("make_two_shot_split: video '" + clip.id + "' too short");
        std::vector<int> idx(static_cast<std::size_t>(T));
        std::iota(idx.begin(), idx.end(), 0);
        for (int k = 0; k < n_shots; ++k) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(k, T - 1));
            std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
        }
        std::vector<int> chosen(idx.begin(), idx.begin() + n_shots);
        std::sort(chosen.begin(), chosen.end());
        split[clip.id] = std::move(chosen);
    }
    return split;
}

DatasetStats dataset_stats(const std::vector<VideoClip>& dataset, const ShotSplit& split) {
    DatasetStats s;
    for (const auto& clip : dataset) {
        ++s.videos;
        s.frames += clip.frames();
        auto it = split.find(clip.id);
        if (it != split.end()) s.labeled_frames += static_cast<int>(it->second.size());
    }
    s.labeled_fraction = s.frames ? static_cast<double>(s.labeled_frames) / s.frames : 0.0;
    return s;
}

void save_clip(const VideoClip& clip, const std::string& path) {
    BinaryWriter w;
    w.magic("TSVD");
    w.u32(kClipVersion);
    w.u32(static_cast<std::uint32_t>(clip.height));
    w.u32(static_cast<std::uint32_t>(clip.width));
    w.u32(static_cast<std::uint32_t>(clip.frames()));
    w.u32(static_cast<std::uint32_t>(clip.num_objects));
    for (const auto& f : clip.rgb) w.bytes(f.data(), f.size());
    for (const auto& l : clip.labels) w.bytes(l.values.data(), l.values.size());
    write_file_bytes(path, w.buffer());
}

VideoClip load_clip(const std::string& path) {
    BinaryReader r(read_file_bytes(path), path);
    r.expect_magic("TSVD");
    const auto version = r.u32();
    if (version != kClipVersion) r.fail("unsupported version " + std::to_string(version));
    VideoClip clip;
    clip.id = std::filesystem::path(path).stem().string();
    clip.height = static_cast<int>(r.u32());
    clip.width = static_cast<int>(r.u32());
    const auto T = r.u32();
    clip.num_objects = static_cast<int>(r.u32());
    const std::size_t plane = static_cast<std::size_t>(clip.height) * clip.width;
    for (std::uint32_t t = 0; t < T; ++t) {
        const auto* p = r.take(plane * 3);
        clip.rgb.emplace_back(p, p + plane * 3);
    }
    for (std::uint32_t t = 0; t < T; ++t) {
        const auto* p = r.take(plane);
        LabelMap m(clip.height, clip.width);
        std::copy(p, p + plane, m.values.begin());
        for (auto v : m.values) {
            if (v > clip.num_objects) r.fail("label " + std::to_string(v) + " exceeds object count");
        }
        clip.labels.push_back(std::move(m));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return clip;
}

void save_dataset(const std::vector<VideoClip>& clips, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& c : clips) save_clip(c, (std::filesystem::path(dir) / (c.id + ".tsvd")).string());
}

std::vector<VideoClip> load_dataset(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".tsvd") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<VideoClip> out;
    for (const auto& f : files) out.push_back(load_clip(f));
    return out;
}

void save_split(const ShotSplit& split, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& [id, idx] : split) {
        out << id;
        for (int i : idx) out << ' ' << i;
        out << '\n';
    }
}

ShotSplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    ShotSplit split;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id;
        ls >> id;
        std::vector<int> idx;
        int v;
        while (ls >> v) idx.push_back(v);
        if (idx.size() < 2 || !ls.eof() || !std::is_sorted(idx.begin(), idx.end()) ||
            std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
            throw FormatError(path + ": malformed split line " + std::to_string(lineno));
        }
        split[id] = std::move(idx);
    }
    return split;
}

}  // namespace twoshot::video
