#include "twoshot/autodiff/gradcheck.hpp"
#include "twoshot/losses/semisup.hpp"
#include "twoshot/model/segmenter.hpp"
#include "twoshot/util/random.hpp"

#include "doctest.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

using namespace twoshot;
using namespace twoshot::model;
using ad::Graph;
using ad::Tensor;

namespace {

ModelConfig small_config() { return ModelConfig{4, 4, 6, 3}; }

ad::ParameterSet<double> double_params(const ModelConfig& cfg, std::uint64_t seed) {
    return ad::parameter_cast<double>(init_parameters(cfg, seed), false);
}

Tensor<double> random_frame(std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(3 * h * w);
    for (auto& x : v) x = rng.uniform(-0.5, 0.5);
    return Tensor<double>({1, 3, h, w}, std::move(v));
}

LabelMap random_labels(int h, int w, int objects, std::uint64_t seed) {
    Rng rng(seed);
    LabelMap m(h, w);
    for (auto& v : m.values) v = static_cast<std::uint8_t>(rng.uniform_int(0, objects));
    return m;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.shape() == b.shape());
    double d = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

void zero_prefix(ad::ParameterSet<double>& params, const std::string& prefix) {
    for (auto& [name, t] : params) {
        if (!name.starts_with(prefix)) continue;
        for (auto& x : t.mutable_data()) x = 0.0;
    }
}

void check_normalized(const Tensor<double>& probs) {
    const auto pm = to_probmap(probs);
    for (std::size_t i = 0; i < pm.pixels(); ++i) {
        double s = 0;
        for (int c = 0; c < pm.classes; ++c) {
            const double v = pm.at(c, i);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
}

video::VideoClip small_clip(std::uint64_t seed) {
    video::SceneTemplate tpl;
    tpl.height = 16;
    tpl.width = 16;
    tpl.frames = 6;
    tpl.min_size = 3;
    tpl.max_size = 4;
    return video::make_dataset(1, seed, tpl).front();
}

}  // namespace

TEST_CASE("parameter layout covers every layer and init is seeded") {
    const auto cfg = small_config();
    const auto a = init_parameters(cfg, 3);
    const auto b = init_parameters(cfg, 3);
    const auto c = init_parameters(cfg, 4);
    CHECK(a.size() == parameter_layout(cfg).size());
    CHECK(a.equals(b));
    CHECK_FALSE(a.equals(c));
    CHECK_THROWS_AS(validate(ModelConfig{1, 4, 4, 2}), std::invalid_argument);
    CHECK_THROWS_AS(validate(ModelConfig{4, 4, 4, 0}), std::invalid_argument);
}

TEST_CASE("encode: identical frames give identical keys, 32x32 maps to 8x8") {
    const auto cfg = small_config();
    const auto params = double_params(cfg, 1);
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto frame = random_frame(32, 32, 9);
    const auto a = net.encode_frame(g, frame);
    const auto b = net.encode_frame(g, frame.clone());
    CHECK(max_abs_diff(a.key, b.key) == 0.0);
    CHECK(a.key.shape() == ad::Shape{1, 4, 8, 8});
    CHECK(a.skip_half.shape() == ad::Shape{1, 6, 16, 16});
    CHECK_THROWS_AS(net.encode_frame(g, random_frame(30, 32, 1)), std::invalid_argument);
}

TEST_CASE("encode: value of all-zero mask differs from all-one mask") {
    const auto cfg = small_config();
    const auto params = double_params(cfg, 2);
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto features = net.encode_frame(g, random_frame(16, 16, 5));
    LabelMap zeros(16, 16), ones(16, 16);
    std::fill(ones.values.begin(), ones.values.end(), 1);
    const auto v0 = net.encode_values(g, features, hard_mask_planes<double>(zeros, 1, cfg.max_objects));
    const auto v1 = net.encode_values(g, features, hard_mask_planes<double>(ones, 1, cfg.max_objects));
    CHECK(v0.front().shape() == ad::Shape{1, 4, 4, 4});
    CHECK(max_abs_diff(v0.front(), v1.front()) > 1e-6);
}

TEST_CASE("encode: object ids beyond the model capacity are rejected") {
    LabelMap m(8, 8);
    m.values[0] = 4;
    CHECK_THROWS_AS(hard_mask_planes<double>(m, 3, 3), std::invalid_argument);
    CHECK_THROWS_AS(hard_mask_planes<double>(m, 4, 3), std::invalid_argument);
    m.values[0] = 2;
    const auto planes = hard_mask_planes<double>(m, 2, 3);
    REQUIRE(planes.size() == 2);
    CHECK(planes[0].data()[64] == 1.0);  // "others" plane of object 1
    CHECK(planes[1].data()[0] == 1.0);
}

TEST_CASE("memory_read: matching key with constant value reads the constant") {
    const auto cfg = small_config();
    const auto params = double_params(cfg, 3);
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto key = random_frame(4, 4, 11);  // reuse as a [1,3,4,4] key; Ck is read from the tensor
    MemoryEntry<double> e{key, {Tensor<double>::full({1, 4, 4, 4}, 0.75)}, 0, MaskSource::ground_truth};
    const auto read = net.memory_read(g, key, {e});
    for (double v : read.front().data()) CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(net.memory_read(g, key, {}), std::invalid_argument);
}

TEST_CASE("memory_read: duplicated and permuted entries leave the readout unchanged") {
    const auto cfg = small_config();
    const auto params = double_params(cfg, 4);
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    Rng rng(17);
    auto random_tensor = [&](ad::Shape s) {
        std::vector<double> v(ad::shape_numel(s));
        for (auto& x : v) x = rng.normal();
        return Tensor<double>(s, std::move(v));
    };
    const ad::Shape ks{1, 4, 3, 3}, vs{1, 4, 3, 3};
    const auto query = random_tensor(ks);
    MemoryEntry<double> a{random_tensor(ks), {random_tensor(vs), random_tensor(vs)}, 0, MaskSource::ground_truth};
    MemoryEntry<double> b{random_tensor(ks), {random_tensor(vs), random_tensor(vs)}, 1, MaskSource::predicted};
    const auto single = net.memory_read(g, query, {a});
    const auto doubled = net.memory_read(g, query, {a, a});
    for (std::size_t k = 0; k < 2; ++k) CHECK(max_abs_diff(single[k], doubled[k]) < 1e-12);
    const auto ab = net.memory_read(g, query, {a, b});
    const auto ba = net.memory_read(g, query, {b, a});
    for (std::size_t k = 0; k < 2; ++k) CHECK(max_abs_diff(ab[k], ba[k]) < 1e-12);
}

TEST_CASE("memory_read: far location is ignored") {
    const auto cfg = small_config();
    const auto params = double_params(cfg, 5);
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto query = Tensor<double>({1, 4, 1, 1}, {0.1, -0.2, 0.3, 0.4});
    const auto far = Tensor<double>({1, 4, 1, 1}, {10.0, 10.0, -10.0, 10.0});
    MemoryEntry<double> near_e{query.clone(), {Tensor<double>::full({1, 4, 1, 1}, 2.0)}, 0, MaskSource::ground_truth};
    MemoryEntry<double> far_e{far, {Tensor<double>::full({1, 4, 1, 1}, -5.0)}, 1, MaskSource::predicted};
    const auto read = net.memory_read(g, query, {near_e, far_e});
    for (double v : read.front().data()) CHECK(std::abs(v - 2.0) < 1e-3);
}

TEST_CASE("forward_triplet: zero decoder weights give a uniform ProbMap") {
    const auto cfg = small_config();
    auto params = double_params(cfg, 6);
    zero_prefix(params, "decoder.logit");
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto f = random_frame(16, 16, 3);
    for (int k = 1; k <= 3; ++k) {
        const auto out = net.forward_triplet(g, f, random_frame(16, 16, 4), random_frame(16, 16, 5),
                                             random_labels(16, 16, k, 7), k);
        CHECK(out.second.shape() == ad::Shape{1, static_cast<std::size_t>(1 + k), 16, 16});
        for (double v : out.second.data()) CHECK(v == doctest::Approx(1.0 / (1 + k)).epsilon(1e-12));
        for (double v : out.third.data()) CHECK(v == doctest::Approx(1.0 / (1 + k)).epsilon(1e-12));
    }
}

TEST_CASE("forward_triplet: identical frames give identical predictions when masks do not enter values") {
    // With mask-dependent values, f2's soft mask differs from m1 and P3 moves;
    // zeroing the mask input channels of the value encoder removes that path.
    const auto cfg = small_config();
    auto params = double_params(cfg, 7);
    auto& w = params.at("value_enc.conv1.weight");
    const std::size_t in = w.dim(1);
    auto wd = w.mutable_data();
    for (std::size_t o = 0; o < w.dim(0); ++o) {
        for (std::size_t c = in - 2; c < in; ++c) {
            for (std::size_t k = 0; k < 9; ++k) wd[(o * in + c) * 9 + k] = 0.0;
        }
    }
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto f = random_frame(16, 16, 8);
    const auto out = net.forward_triplet(g, f, f, f, random_labels(16, 16, 2, 1), 2);
    CHECK(max_abs_diff(out.second, out.third) < 1e-5);
    check_normalized(out.second);

    const auto untouched = double_params(cfg, 7);
    Segmenter<double> full(cfg, untouched);
    const auto a = full.forward_triplet(g, f, f, f, random_labels(16, 16, 2, 1), 2);
    const auto b = full.forward_triplet(g, f, f, f, random_labels(16, 16, 2, 1), 2);
    CHECK(max_abs_diff(a.third, b.third) == 0.0);
}

TEST_CASE("forward_triplet: relabeling objects permutes output channels") {
    const auto cfg = small_config();
    const auto params = double_params(cfg, 8);
    Segmenter<double> net(cfg, params);
    Graph<double> g(false);
    const auto f1 = random_frame(16, 16, 1), f2 = random_frame(16, 16, 2), f3 = random_frame(16, 16, 3);
    const auto m = random_labels(16, 16, 2, 4);
    auto swapped = m;
    for (auto& v : swapped.values) v = v == 0 ? 0 : static_cast<std::uint8_t>(3 - v);
    const auto a = net.forward_triplet(g, f1, f2, f3, m, 2);
    const auto b = net.forward_triplet(g, f1, f2, f3, swapped, 2);
    const std::size_t n = 256;
    for (const auto& [pa, pb] : {std::pair{a.second, b.second}, std::pair{a.third, b.third}}) {
        double d = 0;
        for (std::size_t i = 0; i < n; ++i) {
            d = std::max(d, std::abs(pa.data()[i] - pb.data()[i]));
            d = std::max(d, std::abs(pa.data()[n + i] - pb.data()[2 * n + i]));
            d = std::max(d, std::abs(pa.data()[2 * n + i] - pb.data()[n + i]));
        }
        CHECK(d < 1e-10);
        check_normalized(pa);
    }
}

TEST_CASE("forward_triplet: supervised loss gradient matches central differences") {
    const ModelConfig cfg{2, 2, 2, 2};
    const auto init = double_params(cfg, 21);
    std::vector<std::string> names;
    std::vector<Tensor<double>> leaves;
    for (const auto& [name, t] : init) {
        names.push_back(name);
        leaves.push_back(t.clone());
    }
    const auto f1 = random_frame(8, 8, 1), f2 = random_frame(8, 8, 2), f3 = random_frame(8, 8, 3);
    const auto m1 = random_labels(8, 8, 2, 4), m2 = random_labels(8, 8, 2, 5), m3 = random_labels(8, 8, 2, 6);
    const auto result = ad::gradient_check(leaves, [&](Graph<double>& g) {
        ad::ParameterSet<double> ps;
        for (std::size_t i = 0; i < names.size(); ++i) ps.add(names[i], leaves[i]);
        Segmenter<double> net(cfg, ps);
        const auto out = net.forward_triplet(g, f1, f2, f3, m1, 2);
        return losses::supervised_loss(g, {out.second, out.third}, {m2, m3});
    });
    INFO(result.failure);
    CHECK(result.ok);
    CHECK(result.max_relative_error <= 1e-4);
}

TEST_CASE("predict_sequence: visiting order and range checks") {
    const auto cfg = small_config();
    const auto params = init_parameters(cfg, 9);
    Segmenter<float> net(cfg, params);
    const auto clip = small_clip(3);
    const int T = clip.frames();
    CHECK(net.predict_sequence(clip, T - 1, clip.labels.back(), Direction::forward, clip.num_objects).probs.empty());
    CHECK(net.predict_sequence(clip, 0, clip.labels.front(), Direction::backward, clip.num_objects).probs.empty());
    const int r = 2;
    const auto fwd = net.predict_sequence(clip, r, clip.labels[r], Direction::forward, clip.num_objects);
    const auto bwd = net.predict_sequence(clip, r, clip.labels[r], Direction::backward, clip.num_objects);
    std::vector<int> want_fwd(static_cast<std::size_t>(T - r - 1)), want_bwd;
    std::iota(want_fwd.begin(), want_fwd.end(), r + 1);
    for (int t = r - 1; t >= 0; --t) want_bwd.push_back(t);
    CHECK(fwd.frames == want_fwd);
    CHECK(bwd.frames == want_bwd);
    REQUIRE(fwd.probs.size() == want_fwd.size());
    for (const auto& pm : fwd.probs) {
        CHECK(pm.classes == 1 + clip.num_objects);
        CHECK(pm.height == clip.height);
    }
    CHECK_THROWS_AS(net.predict_sequence(clip, T, clip.labels[0], Direction::forward, clip.num_objects), std::out_of_range);
    CHECK_THROWS_AS(net.predict_sequence(clip, -1, clip.labels[0], Direction::forward, clip.num_objects), std::out_of_range);
}

TEST_CASE("ProbMap helpers") {
    LabelMap m(2, 2);
    m.values = {0, 1, 2, 1};
    const auto oh = ProbMap::one_hot(m, 3);
    CHECK(oh.hard_labels() == m);
    CHECK(oh.max_confidence(2) == 1.0f);
    CHECK_THROWS_AS(ProbMap::one_hot(m, 2), std::invalid_argument);
    const auto u = ProbMap::uniform(4, 2, 2);
    CHECK(u.max_confidence(0) == doctest::Approx(0.25));
    CHECK(u.argmax(0) == 0);
}
