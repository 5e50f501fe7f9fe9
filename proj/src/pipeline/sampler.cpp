#include "twoshot/pipeline/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace twoshot::pipeline {

const char* phase_name(Phase phase) {
    switch (phase) {
        case Phase::phase1: return "phase1";
        case Phase::phase2: return "phase2";
        case Phase::naive: return "naive";
        case Phase::oracle: return "oracle";
    }
    return "unknown";
}

int curriculum_k(long iteration, long total, int k_start, int k_end) {
    if (total <= 1) return k_start;
    iteration = std::clamp(iteration, 0L, total - 1);
    return k_start + static_cast<int>(static_cast<long>(k_end - k_start) * iteration / (total - 1));
}

namespace {

std::vector<std::array<int, 3>> enumerate(int T, const std::vector<int>& starts, int min_gap, int K) {
    std::vector<std::array<int, 3>> out;
    for (int t1 : starts) {
        for (int dir : {1, -1}) {
            for (int g1 = min_gap; g1 <= K; ++g1) {
                const int t2 = t1 + dir * g1;
                if (t2 < 0 || t2 >= T) break;
                for (int g2 = min_gap; g2 <= K; ++g2) {
                    const int t3 = t2 + dir * g2;
                    if (t3 < 0 || t3 >= T) break;
                    out.push_back({t1, t2, t3});
                }
            }
        }
    }
    return out;
}

Triplet make(const std::array<int, 3>& f, const std::vector<int>& labeled, bool all_labeled) {
    Triplet t;
    t.frames = f;
    for (int s = 0; s < 3; ++s) {
        t.labeled[s] = all_labeled || std::find(labeled.begin(), labeled.end(), f[s]) != labeled.end();
    }
    return t;
}

std::vector<std::array<int, 3>> enumerate_or_repeat(int T, const std::vector<int>& starts, int K, bool& relaxed) {
    auto all = enumerate(T, starts, 1, K);
    if (all.empty()) {
        // too short for strictly moving triplets: allow repeated frames
        all = enumerate(T, starts, 0, K);
        relaxed = true;
    }
    return all;
}

}  // namespace

Triplet sample_triplet(int T, const std::vector<int>& labeled, Phase phase, int K, Rng& rng) {
    if (T < 1) throw std::invalid_argument("sample_triplet: empty video");
    if (K < 1) throw std::invalid_argument("sample_triplet: K must be >= 1");
    for (int l : labeled) {
        if (l < 0 || l >= T) throw std::out_of_range("sample_triplet: labeled frame " + std::to_string(l) + " out of range");
    }
    if (phase != Phase::oracle && labeled.empty()) throw std::invalid_argument("sample_triplet: no labeled frames");

    if (phase == Phase::naive) {
        std::array<int, 3> f{};
        for (auto& x : f) x = labeled[rng.index(labeled.size())];
        std::sort(f.begin(), f.end());
        if (rng.bernoulli(0.5)) std::reverse(f.begin(), f.end());
        return make(f, labeled, true);
    }

    bool relaxed = false;
    if (phase == Phase::phase2 || phase == Phase::oracle) {
        std::vector<int> starts(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) starts[static_cast<std::size_t>(t)] = t;
        const auto all = enumerate_or_repeat(T, starts, K, relaxed);
        auto t = make(all[rng.index(all.size())], labeled, phase == Phase::oracle);
        t.relaxed = relaxed;
        return t;
    }

    // phase 1: reference is labeled; half the draws have both others unlabeled,
    // the rest exactly one labeled at a uniform position.
    std::vector<int> starts = labeled;
    std::sort(starts.begin(), starts.end());
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
    const auto all = enumerate_or_repeat(T, starts, K, relaxed);
    std::array<std::vector<std::size_t>, 4> groups;  // both unlabeled, labeled at 2, labeled at 3, other
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto t = make(all[i], labeled, false);
        const int g = !t.labeled[1] && !t.labeled[2] ? 0 : (t.labeled[1] && !t.labeled[2] ? 1 : (!t.labeled[1] && t.labeled[2] ? 2 : 3));
        groups[static_cast<std::size_t>(g)].push_back(i);
    }
    int want = 0;
    if (!rng.bernoulli(0.5)) want = rng.bernoulli(0.5) ? 1 : 2;
    std::vector<int> order;
    if (want == 0) {
        order = {0, 1, 2, 3};
    } else {
        order = {want, 3 - want, 0, 3};
    }
    for (int g : order) {
        const auto& members = groups[static_cast<std::size_t>(g)];
        if (members.empty()) continue;
        auto t = make(all[members[rng.index(members.size())]], labeled, false);
        const bool same_kind = g == want || (want != 0 && (g == 1 || g == 2));
        t.relaxed = relaxed || !same_kind;
        return t;
    }
    throw std::logic_error("sample_triplet: no triplet");
}

}  // namespace twoshot::pipeline
