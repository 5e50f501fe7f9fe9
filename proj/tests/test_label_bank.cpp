#include "twoshot/bank/label_bank.hpp"
#include "twoshot/util/binary_io.hpp"
#include "twoshot/util/random.hpp"

#include "doctest.h"
#include "reference.hpp"

#include <filesystem>
#include <stdexcept>

using namespace twoshot;
using namespace twoshot::bank;
using reference::random_bank;
namespace fs = std::filesystem;

namespace {

// Predicts the true label of every visited frame, so the bank records the
// source while the content stays checkable.
DirectionalPredictor truth_predictor(int* calls = nullptr) {
    return [calls](const video::VideoClip& clip, int r, const LabelMap&, model::Direction d) {
        if (calls) ++*calls;
        std::vector<LabelMap> out;
        const int step = d == model::Direction::forward ? 1 : -1;
        for (int t = r + step; t >= 0 && t < clip.frames(); t += step) out.push_back(clip.labels[static_cast<std::size_t>(t)]);
        return out;
    };
}

// Tags each visited frame with the reference index as a constant label.
DirectionalPredictor tagging_predictor() {
    return [](const video::VideoClip& clip, int r, const LabelMap&, model::Direction d) {
        std::vector<LabelMap> out;
        const int step = d == model::Direction::forward ? 1 : -1;
        for (int t = r + step; t >= 0 && t < clip.frames(); t += step) {
            LabelMap m(clip.height, clip.width);
            std::fill(m.values.begin(), m.values.end(), static_cast<std::uint8_t>(r));
            out.push_back(m);
        }
        return out;
    };
}

video::VideoClip clip_with_frames(int T, const std::string& id = "v") {
    video::SceneTemplate tpl;
    tpl.frames = T;
    tpl.height = 16;
    tpl.width = 16;
    tpl.min_size = 3;
    tpl.max_size = 4;
    auto c = video::make_dataset(1, 7, tpl).front();
    c.id = id;
    return c;
}

}  // namespace

TEST_CASE("nearest labeled frame with ties to the earlier frame") {
    CHECK(nearest_labeled(4, {2, 7}) == 2);
    CHECK(nearest_labeled(0, {2, 7}) == 2);
    CHECK(nearest_labeled(1, {2, 7}) == 2);
    CHECK(nearest_labeled(8, {2, 7}) == 7);
    CHECK(nearest_labeled(9, {2, 7}) == 7);
    CHECK(nearest_labeled(4, {2, 6}) == 2);
    CHECK(nearest_labeled(4, {6, 2}) == 2);
    CHECK(nearest_labeled(5, {2, 6}) == 6);
    CHECK_THROWS_AS(nearest_labeled(1, {}), std::invalid_argument);
}

TEST_CASE("bidirectional build: every frame has an entry from the nearest labeled frame") {
    std::vector<video::VideoClip> clips{clip_with_frames(10, "a"), clip_with_frames(10, "b")};
    video::ShotSplit split{{"a", {2, 7}}, {"b", {4, 6}}};
    BuildStats stats;
    int calls = 0;
    const auto bank = build_bank(clips, split, InferenceMode::bidirectional, truth_predictor(&calls), &stats);
    CHECK(calls == 8);
    CHECK(stats.videos == 2);
    CHECK(stats.pseudo_frames == 16);
    CHECK(stats.fallback_frames == 0);
    for (const auto& clip : clips) {
        const auto& vb = bank.video(clip.id);
        REQUIRE(vb.frames.size() == 10);
        const auto& labeled = split.at(clip.id);
        for (int t = 0; t < 10; ++t) {
            const auto& f = vb.frames[static_cast<std::size_t>(t)];
            CHECK(f.labels == clip.labels[static_cast<std::size_t>(t)]);
            if (t == labeled[0] || t == labeled[1]) {
                CHECK(f.provenance == Provenance::ground_truth);
                continue;
            }
            CHECK(f.provenance == Provenance::pseudo);
            // exhaustive recheck of the nearest rule
            int best = -1;
            for (int r : labeled) {
                if (best < 0 || std::abs(t - r) < std::abs(t - best) || (std::abs(t - r) == std::abs(t - best) && r < best)) best = r;
            }
            CHECK(f.source == best);
        }
    }
    CHECK(bank.video("a").frames[4].source == 2);
    CHECK(bank.video("b").frames[5].source == 4);
    CHECK(bank_quality(bank, clips, split).mean_j == 1.0);
}

TEST_CASE("bidirectional build uses the chosen direction's predictions") {
    std::vector<video::VideoClip> clips{clip_with_frames(10, "a")};
    video::ShotSplit split{{"a", {2, 7}}};
    const auto bank = build_bank(clips, split, InferenceMode::bidirectional, tagging_predictor());
    for (int t : {0, 1, 3, 4}) CHECK(bank.video("a").frames[static_cast<std::size_t>(t)].labels.values[0] == 2);
    for (int t : {5, 6, 8, 9}) CHECK(bank.video("a").frames[static_cast<std::size_t>(t)].labels.values[0] == 7);
}

TEST_CASE("unidirectional build falls back to the first labeled frame before it") {
    std::vector<video::VideoClip> clips{clip_with_frames(10, "a")};
    video::ShotSplit split{{"a", {2, 7}}};
    BuildStats stats;
    int calls = 0;
    auto counting = [&](const video::VideoClip& c, int r, const LabelMap& m, model::Direction d) {
        CHECK(d == model::Direction::forward);
        ++calls;
        return tagging_predictor()(c, r, m, d);
    };
    const auto bank = build_bank(clips, split, InferenceMode::unidirectional, counting, &stats);
    CHECK(calls == 2);
    CHECK(stats.fallback_frames == 2);
    const auto& f = bank.video("a").frames;
    for (int t : {0, 1}) {
        CHECK(f[static_cast<std::size_t>(t)].labels == clips[0].labels[2]);
        CHECK(f[static_cast<std::size_t>(t)].source == 2);
    }
    for (int t : {3, 4, 5, 6}) CHECK(f[static_cast<std::size_t>(t)].labels.values[0] == 2);
    for (int t : {8, 9}) CHECK(f[static_cast<std::size_t>(t)].labels.values[0] == 7);
    for (const auto& fr : f) CHECK(fr.labels.size() == 256);
}

TEST_CASE("build rejects missing split entries and bad predictors") {
    std::vector<video::VideoClip> clips{clip_with_frames(6, "a")};
    CHECK_THROWS_AS(build_bank(clips, {}, InferenceMode::bidirectional, truth_predictor()), std::invalid_argument);
    CHECK_THROWS_AS(build_bank(clips, {{"a", {1, 9}}}, InferenceMode::bidirectional, truth_predictor()), std::out_of_range);
    auto short_predictor = [](const video::VideoClip&, int, const LabelMap&, model::Direction) {
        return std::vector<LabelMap>{};
    };
    CHECK_THROWS_AS(build_bank(clips, {{"a", {1, 3}}}, InferenceMode::bidirectional, short_predictor), std::runtime_error);
}

TEST_CASE("dynamic update gates on tau2 inclusively and protects ground truth") {
    std::vector<video::VideoClip> clips{clip_with_frames(6, "a")};
    video::ShotSplit split{{"a", {0, 3}}};
    auto bank = build_bank(clips, split, InferenceMode::bidirectional, tagging_predictor());
    const BankUpdateRule rule;
    const int K = 2;

    CHECK(dynamic_update(bank, "a", 1, model::ProbMap::uniform(1 + K, 16, 16), rule) == 0);
    CHECK(bank.video("a").frames[1].update_count == 0);
    CHECK(bank.video("a").frames[1].provenance == Provenance::pseudo);

    LabelMap target(16, 16);
    for (std::size_t i = 0; i < target.size(); ++i) target.values[i] = static_cast<std::uint8_t>(i % 3);
    const auto before = bank.video("a").frames[1].labels;
    std::size_t expect_changed = 0;
    for (std::size_t i = 0; i < target.size(); ++i) expect_changed += before.values[i] != target.values[i];
    CHECK(dynamic_update(bank, "a", 1, model::ProbMap::one_hot(target, 3), rule) == expect_changed);
    CHECK(bank.video("a").frames[1].labels == target);
    CHECK(bank.video("a").frames[1].update_count == 1);
    CHECK(bank.video("a").frames[1].provenance == Provenance::updated);
    CHECK(dynamic_update(bank, "a", 1, model::ProbMap::one_hot(target, 3), rule) == 0);
    CHECK(bank.video("a").frames[1].labels == target);
    CHECK(bank.video("a").frames[1].update_count == 1);

    // one pixel exactly at tau2, one just below
    auto p = model::ProbMap::uniform(2, 16, 16);
    const float tau = static_cast<float>(rule.tau2);
    const auto prev = bank.video("a").frames[2].labels;
    const std::size_t at = 5, below = 6;
    p.p[at] = 1.0f - tau;
    p.p[256 + at] = tau;
    p.p[below] = 1.0f - std::nextafter(tau, 0.0f);
    p.p[256 + below] = std::nextafter(tau, 0.0f);
    BankUpdateRule exact{static_cast<double>(tau)};
    dynamic_update(bank, "a", 2, p, exact);
    const auto& after = bank.video("a").frames[2].labels;
    CHECK(after.values[at] == 1);
    for (std::size_t i = 0; i < after.size(); ++i) {
        if (i != at) CHECK(after.values[i] == prev.values[i]);
    }

    CHECK_THROWS_AS(dynamic_update(bank, "a", 0, p, rule), std::invalid_argument);
    CHECK_THROWS_AS(dynamic_update(bank, "a", 3, p, rule), std::invalid_argument);
    CHECK_THROWS_AS(dynamic_update(bank, "zz", 1, p, rule), std::out_of_range);
    CHECK_THROWS_AS(validate(BankUpdateRule{0.0}), std::invalid_argument);
    CHECK_NOTHROW(validate(BankUpdateRule{1.0}));
}

TEST_CASE("bank quality") {
    std::vector<video::VideoClip> clips{clip_with_frames(6, "a")};
    video::ShotSplit split{{"a", {0, 3}}};
    auto bank = build_bank(clips, split, InferenceMode::bidirectional, truth_predictor());
    CHECK(bank_quality(bank, clips, split).mean_j == 1.0);
    for (auto& f : bank.video("a").frames) {
        if (f.provenance != Provenance::ground_truth) std::fill(f.labels.values.begin(), f.labels.values.end(), 0);
    }
    const auto q = bank_quality(bank, clips, split);
    CHECK(q.mean_j == 0.0);
    CHECK(q.per_video.at("a") == 0.0);
}

TEST_CASE("bank persistence round-trips and rejects damaged files") {
    const auto dir = fs::temp_directory_path() / "twoshot_bank_test";
    fs::create_directories(dir);
    const auto path = (dir / "bank.plbk").string();

    save_bank(PseudoLabelBank{}, path);
    CHECK(fs::file_size(path) == 12);
    CHECK(load_bank(path).videos.empty());

    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const auto b = random_bank(rng, i == 0 ? 3 : static_cast<int>(rng.uniform_int(0, 4)));
        save_bank(b, path);
        CHECK(load_bank(path) == b);
    }

    // a long constant frame exercises run splitting at 65535
    PseudoLabelBank big;
    big.videos.push_back({"big", 300, 300, {BankFrame{LabelMap(300, 300), Provenance::pseudo, 1, 2}}});
    CHECK(decode_bank(encode_bank(big)) == big);

    auto bytes = encode_bank(random_bank(rng, 3));
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_bank(bad), FormatError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_bank(bad), FormatError);
    for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{13}}) {
        CHECK_THROWS_AS(decode_bank(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut))),
                        FormatError);
    }

    // run longer than the frame
    BinaryWriter w;
    w.magic("PLBK");
    w.u32(1);
    w.u32(1);
    w.str("v");
    w.u32(1);
    w.u32(2);
    w.u32(2);
    w.u8(1);
    w.u16(0);
    w.u32(0);
    w.u16(5);
    w.u8(1);
    try {
        decode_bank(w.buffer());
        FAIL("overrun accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("at byte") != std::string::npos);
    }
    fs::remove_all(dir);
}
