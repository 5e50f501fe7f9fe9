#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace twoshot::video {

// Per-pixel object ids, 0 = background, row-major.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;

    LabelMap() = default;
    LabelMap(int h, int w, std::uint8_t fill = 0) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return values.size(); }
    bool operator==(const LabelMap&) const = default;
};

enum class ShapeKind : std::uint8_t { disc, rectangle, triangle };

struct Rgb {
    double r = 0, g = 0, b = 0;
};

struct ObjectSpec {
    ShapeKind kind = ShapeKind::disc;
    double x = 0, y = 0;    // center at frame 0, pixel units
    double vx = 0, vy = 0;  // pixels per frame
    double size = 5;        // radius or half-extent
    double aspect = 1;      // rectangle height / width
    Rgb color;
};

// One video. Object positions bounce off the image border so every center
// stays inside the frame.
struct SceneConfig {
    int height = 32;
    int width = 32;
    int frames = 20;
    std::vector<ObjectSpec> objects;  // later entries occlude earlier ones
    Rgb background{0.5, 0.5, 0.5};
    double texture_amplitude = 0.08;
    double sensor_noise = 0.02;
    bool allow_occlusion = true;
    std::uint64_t seed = 0;  // background texture and sensor noise
};

struct VideoClip {
    std::string id;
    int height = 0;
    int width = 0;
    int num_objects = 0;
    std::vector<std::vector<std::uint8_t>> rgb;  // per frame, HxWx3 interleaved
    std::vector<LabelMap> labels;

    int frames() const { return static_cast<int>(labels.size()); }
    // Planar 3xHxW in [0,1].
    std::vector<float> frame_chw(int t) const;
};

VideoClip generate_video(const SceneConfig& cfg, const std::string& id = "video");

// Ranges make_dataset draws each SceneConfig from.
struct SceneTemplate {
    int height = 32;
    int width = 32;
    int frames = 20;
    int min_objects = 1;
    int max_objects = 2;
    double min_size = 4.0;
    double max_size = 8.0;
    double max_speed = 1.5;
    double min_color_distance = 0.35;
    double texture_amplitude = 0.08;
    double sensor_noise = 0.02;
    bool allow_occlusion = true;
    int min_visible_pixels = 4;
    // Index i is held out for validation when i % val_every == val_every - 1.
    int val_every = 5;
};

// Per-video seed = base_seed + index.
SceneConfig sample_scene(const SceneTemplate& tpl, std::uint64_t seed);
std::vector<VideoClip> make_dataset(int n_videos, std::uint64_t base_seed, const SceneTemplate& tpl = {});

struct DatasetPartition {
    std::vector<VideoClip> train;
    std::vector<VideoClip> validation;
};
bool is_validation_index(int index, int val_every);
DatasetPartition partition_dataset(const std::vector<VideoClip>& clips, int val_every);

// video id -> sorted distinct labeled frame indices.
using ShotSplit = std::map<std::string, std::vector<int>>;

ShotSplit make_two_shot_split(const std::vector<VideoClip>& dataset, std::uint64_t seed, int n_shots = 2);

struct DatasetStats {
    int videos = 0;
    int frames = 0;
    int labeled_frames = 0;
    double labeled_fraction = 0;
};
DatasetStats dataset_stats(const std::vector<VideoClip>& dataset, const ShotSplit& split);

// Persistence: one "<id>.tsvd" file per clip; split as "video_id i j" lines.
void save_clip(const VideoClip& clip, const std::string& path);
VideoClip load_clip(const std::string& path);
void save_dataset(const std::vector<VideoClip>& clips, const std::string& dir);
std::vector<VideoClip> load_dataset(const std::string& dir);
void save_split(const ShotSplit& split, const std::string& path);
ShotSplit load_split(const std::string& path);

}  // namespace twoshot::video
