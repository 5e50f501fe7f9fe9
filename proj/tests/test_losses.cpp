#include "twoshot/autodiff/ops.hpp"
#include "twoshot/losses/semisup.hpp"
#include "twoshot/util/random.hpp"

#include "doctest.h"

#include <cmath>
#include <stdexcept>

using namespace twoshot;
using namespace twoshot::losses;
using ad::Graph;
using ad::Tensor;

namespace {

// [1,C,H,W] probabilities from planar values.
Tensor<double> probs(std::size_t c, std::size_t h, std::size_t w, std::vector<double> v, bool grad = false) {
    return Tensor<double>({1, c, h, w}, std::move(v), grad);
}

Tensor<double> random_probs(std::size_t c, std::size_t h, std::size_t w, Rng& rng, bool grad = false) {
    std::vector<double> logits(c * h * w);
    for (auto& x : logits) x = 3.0 * rng.normal();
    Graph<double> g(false);
    auto p = ad::channel_softmax(g, Tensor<double>({1, c, h, w}, std::move(logits)));
    return Tensor<double>(p.shape(), std::vector<double>(p.data().begin(), p.data().end()), grad);
}

model::ProbMap as_probmap(const Tensor<double>& t) { return model::to_probmap(t); }

LabelMap labels(int h, int w, std::vector<std::uint8_t> v) {
    LabelMap m(h, w);
    m.values = std::move(v);
    return m;
}

}  // namespace

TEST_CASE("supervised loss examples") {
    Graph<double> g(false);
    const auto target = labels(1, 2, {1, 0});
    CHECK(supervised_loss(g, {probs(2, 1, 2, {0, 1, 1, 0})}, {target}).item() == 0.0);
    CHECK(supervised_loss(g, {probs(2, 1, 2, {0.5, 0.5, 0.5, 0.5})}, {target}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // target probabilities 0.9, 0.8, 0.7, 0.6 on a 2x2 map
    const auto t4 = labels(2, 2, {0, 1, 0, 1});
    const auto p4 = probs(2, 2, 2, {0.9, 0.2, 0.7, 0.4, 0.1, 0.8, 0.3, 0.6});
    const double expect = -(std::log(0.9) + std::log(0.8) + std::log(0.7) + std::log(0.6)) / 4.0;
    CHECK(std::abs(supervised_loss(g, {p4}, {t4}).item() - expect) <= 1e-6);
    CHECK(std::abs(expect - 0.29900) < 1e-5);
}

TEST_CASE("supervised loss: empty list is exactly zero, mismatches are rejected") {
    Graph<double> g(true);
    CHECK(supervised_loss(g, std::vector<Tensor<double>>{}, {}).item() == 0.0);
    CHECK_THROWS_AS(supervised_loss(g, {probs(2, 1, 2, {0.5, 0.5, 0.5, 0.5})}, {}), std::invalid_argument);
    CHECK_THROWS_AS(supervised_loss(g, {probs(2, 1, 2, {0.5, 0.5, 0.5, 0.5})}, {labels(1, 1, {0})}),
                    std::invalid_argument);
}

TEST_CASE("unsupervised loss examples") {
    Graph<double> g(false);
    const auto oh = probs(2, 1, 2, {1, 0, 0, 1});
    auto r = unsupervised_loss(g, {oh}, {as_probmap(oh)}, 0.9);
    CHECK(r.loss.item() == 0.0);
    CHECK(r.masked_fraction == 1.0);

    r = unsupervised_loss(g, {oh}, {as_probmap(oh)}, 1.0 + 1e-9);
    CHECK(r.loss.item() == 0.0);
    CHECK(r.masked_fraction == 0.0);

    const auto student = probs(2, 1, 1, {0.6, 0.4});
    const auto labeler = probs(2, 1, 1, {0.95, 0.05});
    r = unsupervised_loss(g, {student}, {as_probmap(labeler)}, 0.9);
    CHECK(std::abs(r.loss.item() - (-std::log(0.6))) <= 1e-6);
    CHECK(std::abs(r.loss.item() - 0.5108) < 1e-4);
    CHECK(r.masked_fraction == 1.0);
}

TEST_CASE("unsupervised loss: gated-out pixels stay in the denominator unless asked otherwise") {
    Graph<double> g(false);
    const auto student = probs(2, 1, 2, {0.6, 0.5, 0.4, 0.5});
    const auto labeler = probs(2, 1, 2, {0.95, 0.5, 0.05, 0.5});
    const auto literal = unsupervised_loss(g, {student}, {as_probmap(labeler)}, 0.9);
    CHECK(literal.masked_fraction == 0.5);
    CHECK(literal.loss.item() == doctest::Approx(-std::log(0.6) / 2.0).epsilon(1e-6));
    const auto by_gate = unsupervised_loss(g, {student}, {as_probmap(labeler)}, 0.9, true);
    CHECK(by_gate.loss.item() == doctest::Approx(-std::log(0.6)).epsilon(1e-6));
}

TEST_CASE("unsupervised loss is non-increasing in tau1") {
    Rng rng(5);
    const std::vector<double> taus{0.0, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0, 1.01};
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 2 + static_cast<std::size_t>(trial % 3);
        const auto student = random_probs(c, 3, 4, rng);
        const auto labeler = as_probmap(random_probs(c, 3, 4, rng));
        Graph<double> g(false);
        double prev = unsupervised_loss(g, {student}, {labeler}, taus.front()).loss.item();
        for (std::size_t i = 1; i < taus.size(); ++i) {
            const double cur = unsupervised_loss(g, {student}, {labeler}, taus[i]).loss.item();
            CHECK(cur <= prev);
            prev = cur;
        }
    }
}

TEST_CASE("unsupervised loss: labeler values carry no gradient and only set targets and gates") {
    Rng rng(7);
    const auto student = random_probs(3, 4, 4, rng, true);
    auto labeler = as_probmap(random_probs(3, 4, 4, rng));
    Graph<double> g(false);
    const double before = unsupervised_loss(g, {student}, {labeler}, 0.5).loss.item();
    // shift mass between the two non-max classes; argmax and max confidence are unchanged
    for (std::size_t i = 0; i < labeler.pixels(); ++i) {
        const int best = labeler.argmax(i);
        const int a = (best + 1) % 3, b = (best + 2) % 3;
        const float total = labeler.at(a, i) + labeler.at(b, i);
        labeler.p[static_cast<std::size_t>(a) * labeler.pixels() + i] = 0.3f * total;
        labeler.p[static_cast<std::size_t>(b) * labeler.pixels() + i] = 0.7f * total;
        if (labeler.argmax(i) != best) labeler.p[static_cast<std::size_t>(b) * labeler.pixels() + i] = 0.3f * total;
    }
    CHECK(unsupervised_loss(g, {student}, {labeler}, 0.5).loss.item() == before);

    Graph<double> gg(true);
    auto r = unsupervised_loss(gg, {student}, {labeler}, 0.5);
    gg.backward(r.loss);
    CHECK(student.has_grad());
}

TEST_CASE("supervised loss equals unsupervised loss at tau1 = 0 against one-hot ground truth") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_probs(3, 4, 5, rng);
        LabelMap gt(4, 5);
        for (auto& v : gt.values) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
        Graph<double> g(false);
        const double s = supervised_loss(g, {p}, {gt}).item();
        const double u = unsupervised_loss(g, {p}, {model::ProbMap::one_hot(gt, 3)}, 0.0).loss.item();
        CHECK(s == doctest::Approx(u).epsilon(1e-12));
    }
}

TEST_CASE("combined loss") {
    Graph<double> g(false);
    LossBreakdown<double> parts{Tensor<double>::scalar(0.3), Tensor<double>::scalar(0.2), 0.5, 1, 1};
    CHECK(combined_loss(g, parts).item() == doctest::Approx(0.5));
    parts.n2 = 0;
    CHECK(combined_loss(g, parts).item() == 0.3);
    parts.n1 = 0;
    CHECK_THROWS_AS(combined_loss(g, parts), std::invalid_argument);
}

TEST_CASE("combined loss gradient is the sum of the separate gradients") {
    Rng rng(11);
    auto ps = random_probs(2, 3, 3, rng, true);
    auto pu = random_probs(2, 3, 3, rng, true);
    LabelMap gt(3, 3);
    for (auto& v : gt.values) v = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
    const auto labeler = as_probmap(random_probs(2, 3, 3, rng));

    auto run = [&](bool use_s, bool use_u) {
        ps.zero_grad();
        pu.zero_grad();
        Graph<double> g(true);
        // both terms always touch both leaves so every gradient buffer exists
        auto shared = ad::mul(g, ps, pu);
        auto ls = supervised_loss(g, {use_s ? ps : shared}, {gt});
        auto lu = unsupervised_loss(g, {use_u ? pu : shared}, {labeler}, 0.55).loss;
        LossBreakdown<double> parts{ls, lu, 0, 1, 1};
        if (use_s && !use_u) g.backward(ls);
        if (!use_s && use_u) g.backward(lu);
        if (use_s && use_u) g.backward(combined_loss(g, parts));
        std::vector<double> out(ps.grad().begin(), ps.grad().end());
        out.insert(out.end(), pu.grad().begin(), pu.grad().end());
        return out;
    };
    const auto both = run(true, true);
    const auto only_s = run(true, false);
    const auto only_u = run(false, true);
    for (std::size_t i = 0; i < both.size(); ++i) CHECK(both[i] == doctest::Approx(only_s[i] + only_u[i]).epsilon(1e-12));
}

TEST_CASE("ema update") {
    auto make = [](double v) {
        ad::ParameterSet<double> p;
        p.add("a", Tensor<double>::full({2, 2}, v));
        p.add("b", Tensor<double>::full({3}, v));
        return p;
    };
    auto teacher = make(0.0);
    const auto student = make(1.0);
    ema_update(teacher, student, 0.995);
    for (const auto& [name, t] : teacher) {
        for (double v : t.data()) CHECK(v == doctest::Approx(0.005).epsilon(1e-12));
    }
    auto copy = make(-3.0);
    ema_update(copy, student, 0.0);
    CHECK(copy.equals(student));

    auto contract = make(2.0);
    const auto c = make(0.5);
    double gap = 1.5;
    for (int i = 0; i < 5; ++i) {
        ema_update(contract, c, 0.9);
        const double now = std::abs(contract.at("a").data()[0] - 0.5);
        CHECK(now == doctest::Approx(0.9 * gap).epsilon(1e-12));
        gap = now;
    }
    auto frozen = make(4.0);
    ema_update(frozen, student, 1.0);
    CHECK(frozen.equals(make(4.0)));

    ad::ParameterSet<double> other;
    other.add("a", Tensor<double>::full({2, 2}, 0.0));
    CHECK_THROWS_AS(ema_update(teacher, other, 0.5), std::invalid_argument);

    LossConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg = LossConfig{};
    cfg.tau1 = 0.0;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}
