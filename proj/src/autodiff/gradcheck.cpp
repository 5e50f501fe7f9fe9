#include "twoshot/autodiff/gradcheck.hpp"

#include "twoshot/util/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace twoshot::ad {

std::vector<Tensor<double>> random_leaves(const std::vector<Shape>& shapes, std::uint64_t seed, double kink_margin) {
    Rng rng(seed);
    std::vector<Tensor<double>> leaves;
    for (const auto& shape : shapes) {
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) {
            do {
                v = rng.uniform(-1.0, 1.0);
            } while (std::abs(v) < kink_margin);
        }
        leaves.emplace_back(shape, std::move(values), true);
    }
    return leaves;
}

GradCheckResult gradient_check(std::vector<Tensor<double>> leaves, const ScalarFn& fn, const GradCheckOptions& options) {
    GradCheckResult result;
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.grad_buffer();
        leaf.zero_grad();
    }
    {
        Graph<double> g;
        auto loss = fn(g);
        g.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) {
        auto gr = leaf.grad();
        analytic.emplace_back(gr.begin(), gr.end());
    }

    auto evaluate = [&]() {
        Graph<double> g(false);
        return fn(g).item();
    };

    for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto values = leaves[l].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double a = analytic[l][i];
            if (!std::isfinite(a)) {
                std::ostringstream os;
                os << "non-finite analytic gradient at leaf " << l << " index " << i;
                result.ok = false;
                result.failure = os.str();
                result.worst_leaf = l;
                result.worst_index = i;
                result.max_relative_error = std::numeric_limits<double>::infinity();
                return result;
            }
            const double saved = values[i];
            values[i] = saved + options.step;
            const double up = evaluate();
            values[i] = saved - options.step;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            if (!(err <= result.max_relative_error)) {
                result.max_relative_error = err;
                result.worst_leaf = l;
                result.worst_index = i;
            }
        }
    }
    if (!std::isfinite(result.max_relative_error)) {
        result.ok = false;
        result.failure = "non-finite numeric gradient";
    }
    return result;
}

GradCheckResult gradient_check(const LeafFn& fn, const std::vector<Shape>& shapes, std::uint64_t seed,
                               const GradCheckOptions& options) {
    auto leaves = random_leaves(shapes, seed, options.kink_margin);
    return gradient_check(leaves, [&](Graph<double>& g) { return fn(g, leaves); }, options);
}

GradCheckResult gradient_check(OpKind kind, const std::vector<Shape>& shapes, std::uint64_t seed,
                               const OpAttrs& attrs, const GradCheckOptions& options) {
    auto leaves = random_leaves(shapes, seed, options.kink_margin);
    Tensor<double> projection;
    return gradient_check(
        leaves,
        [&](Graph<double>& g) {
            auto out = forward(g, kind, leaves, attrs);
            if (!projection.defined()) projection = random_leaves({out.shape()}, seed ^ 0x9e3779b97f4a7c15ULL, 0.0)[0];
            Tensor<double> fixed(projection.shape(), std::vector<double>(projection.data().begin(), projection.data().end()));
            return sum(g, mul(g, out, fixed));
        },
        options);
}

std::vector<PrimitiveCheck> primitive_checks() {
    struct Case {
        OpKind kind;
        std::vector<Shape> shapes;
        OpAttrs attrs;
        double kink_margin = 0.0;
    };
    const std::vector<Case> cases{
        {OpKind::add, {{2, 3}, {2, 3}}, {}},
        {OpKind::sub, {{2, 3}, {2, 3}}, {}},
        {OpKind::mul, {{2, 3}, {2, 3}}, {}},
        {OpKind::scalar_mul, {{5}}, OpAttrs{1.7, {}, {}}},
        {OpKind::matmul, {{3, 4}, {4, 2}}, {}},
        {OpKind::conv2d_3x3_pad1, {{1, 2, 5, 4}, {3, 2, 3, 3}, {3}}, {}},
        {OpKind::relu, {{12}}, {}, 1e-3},
        {OpKind::sigmoid, {{10}}, {}},
        {OpKind::channel_softmax, {{2, 3, 2, 2}}, {}},
        {OpKind::sum, {{3, 4}}, {}},
        {OpKind::mean, {{3, 4}}, {}},
        {OpKind::gather_labels, {{2, 3, 2, 2}}, OpAttrs{1.0, {0, 2, 1, 1, 2, 0, 0, 1}, {}}},
        {OpKind::neg_sq_l2_affinity, {{3, 5}, {3, 4}}, OpAttrs{0.5, {}, {}}},
        {OpKind::concat_channels, {{1, 2, 3}, {1, 3, 3}}, {}},
        {OpKind::avgpool2, {{1, 2, 4, 6}}, {}},
        {OpKind::upsample2_nearest, {{1, 2, 2, 3}}, {}},
        {OpKind::reshape, {{2, 6}}, OpAttrs{1.0, {}, {3, 4}}},
    };
    std::vector<PrimitiveCheck> out;
    for (const auto& c : cases) {
        out.push_back({c.kind, [c](std::uint64_t seed) {
                           GradCheckOptions opts;
                           opts.kink_margin = c.kink_margin;
                           return gradient_check(c.kind, c.shapes, seed, c.attrs, opts);
                       }});
    }
    out.push_back({OpKind::log, [](std::uint64_t seed) {
                       return gradient_check(
                           [](Graph<double>& g, const std::vector<Tensor<double>>& in) {
                               auto positive = add(g, mul(g, in[0], in[0]), Tensor<double>::full(in[0].shape(), 0.1));
                               return sum(g, log(g, positive));
                           },
                           {{6}}, seed);
                   }});
    return out;
}

}  // namespace twoshot::ad
