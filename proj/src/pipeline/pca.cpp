#include "twoshot/pipeline/pca.hpp"

#include "twoshot/autodiff/graph.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace twoshot::pipeline {

namespace {

using Matrix = std::vector<std::vector<double>>;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> mat_vec(const Matrix& m, const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = dot(m[i], v);
    return out;
}

void remove_component(std::vector<double>& v, const std::vector<double>& u) {
    const double d = dot(v, u);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * u[i];
}

bool normalize(std::vector<double>& v) {
    const double n = std::sqrt(dot(v, v));
    if (!(n > 0.0)) return false;
    for (auto& x : v) x /= n;
    return true;
}

// Dominant eigenvector of a symmetric PSD matrix, orthogonal to `avoid`.
std::vector<double> power_iteration(const Matrix& c, const std::vector<double>* avoid, double tol, int max_iter) {
    const std::size_t d = c.size();
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
    if (avoid) remove_component(v, *avoid);
    if (!normalize(v)) throw std::invalid_argument("pca: degenerate starting vector");
    for (int it = 0; it < max_iter; ++it) {
        auto w = mat_vec(c, v);
        if (avoid) remove_component(w, *avoid);
        if (!normalize(w)) throw std::invalid_argument("pca: covariance annihilates the search direction (rank deficient)");
        if (dot(w, v) < 0) {
            for (auto& x : w) x = -x;
        }
        double diff = 0;
        for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(w[i] - v[i]));
        v = std::move(w);
        if (diff < tol) break;
    }
    return v;
}

}  // namespace

std::array<double, 2> Pca2::project(const std::vector<double>& row) const {
    std::array<double, 2> out{};
    for (int k = 0; k < 2; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < row.size(); ++i) s += (row[i] - mean[i]) * components[static_cast<std::size_t>(k)][i];
        out[static_cast<std::size_t>(k)] = s;
    }
    return out;
}

Pca2 fit_pca2(const std::vector<std::vector<double>>& rows, double tolerance, int max_iterations) {
    if (rows.size() < 3) throw std::invalid_argument("pca: need at least 3 feature rows");
    const std::size_t d = rows.front().size();
    if (d < 2) throw std::invalid_argument("pca: features must have at least 2 dimensions");
    Pca2 p;
    p.mean.assign(d, 0.0);
    for (const auto& r : rows) {
        if (r.size() != d) throw std::invalid_argument("pca: ragged feature rows");
        for (std::size_t i = 0; i < d; ++i) p.mean[i] += r[i];
    }
    for (auto& m : p.mean) m /= static_cast<double>(rows.size());
    Matrix c(d, std::vector<double>(d, 0.0));
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < d; ++i) {
            const double a = r[i] - p.mean[i];
            for (std::size_t j = 0; j < d; ++j) c[i][j] += a * (r[j] - p.mean[j]);
        }
    }
    double trace = 0;
    for (std::size_t i = 0; i < d; ++i) {
        for (auto& x : c[i]) x /= static_cast<double>(rows.size());
        trace += c[i][i];
    }
    if (!(trace > 1e-300)) throw std::invalid_argument("pca: covariance is zero (constant features)");

    p.components[0] = power_iteration(c, nullptr, tolerance, max_iterations);
    p.variances[0] = dot(p.components[0], mat_vec(c, p.components[0]));
    p.components[1] = power_iteration(c, &p.components[0], tolerance, max_iterations);
    p.variances[1] = dot(p.components[1], mat_vec(c, p.components[1]));
    if (p.variances[1] <= 1e-12 * trace) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "pca: covariance rank < 2 (eigenvalues %.3g, %.3g)", p.variances[0], p.variances[1]);
        throw std::invalid_argument(buf);
    }
    if (p.variances[1] > p.variances[0]) {
        std::swap(p.components[0], p.components[1]);
        std::swap(p.variances[0], p.variances[1]);
    }
    return p;
}

std::vector<PcaPoint> pca_features(const model::Segmenter<float>& net, const std::vector<video::VideoClip>& clips,
                                   int n_frames) {
    if (n_frames < 1) throw std::invalid_argument("pca: n_frames must be >= 1");
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int taken = 0;
    for (const auto& clip : clips) {
        for (int t = 0; t < clip.frames() && taken < n_frames; ++t, ++taken) {
            ad::Graph<float> g(false);
            const auto key = net.encode_frame(g, model::frame_tensor<float>(clip, t)).key;
            const std::size_t ck = key.dim(1), h = key.dim(2), w = key.dim(3);
            const int stride = clip.height / static_cast<int>(h);
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    std::vector<double> f(ck);
                    for (std::size_t c = 0; c < ck; ++c) f[c] = key.data()[(c * h + y) * w + x];
                    rows.push_back(std::move(f));
                    const int py = static_cast<int>(y) * stride + stride / 2, px = static_cast<int>(x) * stride + stride / 2;
                    labels.push_back(clip.labels[static_cast<std::size_t>(t)].at(py, px));
                }
            }
        }
        if (taken >= n_frames) break;
    }
    if (taken < n_frames) throw std::invalid_argument("pca: dataset has fewer than n_frames frames");
    const auto pca = fit_pca2(rows);
    std::vector<PcaPoint> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto xy = pca.project(rows[i]);
        out.push_back({xy[0], xy[1], labels[i]});
    }
    return out;
}

std::string pca_csv(const std::vector<PcaPoint>& points) {
    std::ostringstream os;
    os << "x,y,label\n";
    char buf[96];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d\n", p.x, p.y, p.label);
        os << buf;
    }
    return os.str();
}

}  // namespace twoshot::pipeline
