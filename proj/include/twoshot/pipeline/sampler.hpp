#pragma once

#include "twoshot/util/random.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace twoshot::pipeline {

enum class Phase : std::uint8_t { phase1 = 1, phase2 = 2, naive = 3, oracle = 4 };

const char* phase_name(Phase phase);

// Linear curriculum: k_start at iteration 0, k_end at iteration total-1.
int curriculum_k(long iteration, long total, int k_start, int k_end);

struct Triplet {
    // Visiting order; indices are monotone in either direction.
    std::array<int, 3> frames{};
    std::array<bool, 3> labeled{};
    // Phase 1 only: the requested composition was unreachable and another was used.
    bool relaxed = false;
};

// labeled: the video's annotated frame indices. Consecutive gaps lie in [1, K]
// (shrunk to fit short videos); naive triplets repeat labeled frames.
Triplet sample_triplet(int frames, const std::vector<int>& labeled, Phase phase, int K, Rng& rng);

}  // namespace twoshot::pipeline
