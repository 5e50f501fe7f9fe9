#pragma once

#include "twoshot/model/segmenter.hpp"

#include <array>
#include <string>
#include <vector>

namespace twoshot::pipeline {

struct Pca2 {
    std::vector<double> mean;
    std::array<std::vector<double>, 2> components;  // unit vectors
    std::array<double, 2> variances{};              // eigenvalues, descending
    std::array<double, 2> project(const std::vector<double>& row) const;
};

// Top two principal directions by power iteration with deflation on the
// covariance; rejects data whose covariance has rank below 2.
Pca2 fit_pca2(const std::vector<std::vector<double>>& rows, double tolerance = 1e-8, int max_iterations = 1000);

struct PcaPoint {
    double x = 0;
    double y = 0;
    int label = 0;  // object id at the feature location, 0 for background
};

// Key-encoder features of the first n_frames frames (taken in clip order).
std::vector<PcaPoint> pca_features(const model::Segmenter<float>& net, const std::vector<video::VideoClip>& clips,
                                   int n_frames);

std::string pca_csv(const std::vector<PcaPoint>& points);

}  // namespace twoshot::pipeline
