#pragma once

// Test-side reference implementations. Everything here is deliberately
// independent of the library's compute paths: gradients come from central
// finite differences, convolutions from direct six-deep loops, and sparse
// matrices are checked against dense arithmetic. Keep it that way; a test
// that reuses the code under test proves nothing.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <gtest/gtest.h>
#include <random>

#include "hazeforge/image.hpp"
#include "hazeforge/tensor.hpp"

namespace oracle {

// Central-difference gradient of f() with respect to every element of t,
// where f rebuilds its forward pass from current tensor values on each call.
inline Eigen::ArrayXf numeric_gradient(hazeforge::Tensor& t, const std::function<float()>& f,
                                       float h = 1e-2f) {
    Eigen::ArrayXf g(t.numel());
    Eigen::ArrayXf& v = t.values();
    for (int i = 0; i < t.numel(); ++i) {
        const float saved = v[i];
        v[i] = saved + h;
        const float fp = f();
        v[i] = saved - h;
        const float fm = f();
        v[i] = saved;
        g[i] = (fp - fm) / (2.0f * h);
    }
    return g;
}

// Elementwise |a-b| <= max(rel * max(|a|,|b|), abs_tol), reporting the worst
// offender on failure.
inline ::testing::AssertionResult arrays_close(const Eigen::ArrayXf& a, const Eigen::ArrayXf& b,
                                               float rel, float abs_tol) {
    if (a.size() != b.size())
        return ::testing::AssertionFailure()
               << "size mismatch: " << a.size() << " vs " << b.size();
    int worst = -1;
    float worst_excess = 0.0f;
    for (int i = 0; i < a.size(); ++i) {
        const float diff = std::fabs(a[i] - b[i]);
        const float allowed = std::max(rel * std::max(std::fabs(a[i]), std::fabs(b[i])), abs_tol);
        if (diff - allowed > worst_excess) {
            worst_excess = diff - allowed;
            worst = i;
        }
    }
    if (worst < 0)
        return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure()
           << "element " << worst << ": " << a[worst] << " vs " << b[worst] << " (diff "
           << std::fabs(a[worst] - b[worst]) << ", rel " << rel << ", abs " << abs_tol << ")";
}

// Uniform fill in [lo, hi] from a caller-owned engine.
inline void fill_uniform(hazeforge::Tensor& t, std::mt19937& rng, float lo = -1.0f,
                         float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    for (int i = 0; i < t.numel(); ++i)
        t.values()[i] = dist(rng);
}

// Moves every element at least `margin` away from zero, for ops with a kink
// there; finite differences straddling the kink are meaningless.
inline void avoid_zero(hazeforge::Tensor& t, float margin = 0.1f) {
    for (int i = 0; i < t.numel(); ++i) {
        float& v = t.values()[i];
        if (std::fabs(v) < margin)
            v = v < 0.0f ? v - margin : v + margin;
    }
}

// Direct cross-correlation, six nested loops, no im2col.
inline hazeforge::Tensor naive_conv2d(const hazeforge::Tensor& x, const hazeforge::Tensor& w,
                                      const hazeforge::Tensor& b, int stride, int pad) {
    const auto xs = x.shape();
    const auto ws = w.shape();
    const int k = ws.h;
    const int oh = (xs.h + 2 * pad - k) / stride + 1;
    const int ow = (xs.w + 2 * pad - k) / stride + 1;
    hazeforge::Tensor out = hazeforge::Tensor::zeros({xs.n, ws.n, oh, ow});
    auto xat = [&](int n, int c, int y, int xx) {
        return x.values()[((n * xs.c + c) * xs.h + y) * xs.w + xx];
    };
    auto wat = [&](int co, int ci, int ky, int kx) {
        return w.values()[((co * ws.c + ci) * k + ky) * k + kx];
    };
    for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < ws.n; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b.defined() ? b.values()[co] : 0.0;
                    for (int ci = 0; ci < xs.c; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy >= 0 && iy < xs.h && ix >= 0 && ix < xs.w)
                                    acc += static_cast<double>(xat(n, ci, iy, ix)) *
                                           wat(co, ci, ky, kx);
                            }
                    out.values()[((n * ws.n + co) * oh + oy) * ow + ox] =
                        static_cast<float>(acc);
                }
    return out;
}

// Dense brute-force matting Laplacian: accumulates the per-window formula
// into a full N x N matrix with scalar loops and a cofactor 3x3 inverse. No
// sparse machinery, no Eigen reductions.
inline Eigen::MatrixXd dense_matting_laplacian(const hazeforge::ImageBuffer& img, double eps,
                                               int r) {
    const int w = img.width, h = img.height;
    const int side = 2 * r + 1, win = side * side;
    const int n = w * h;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);

    for (int cy = r; cy < h - r; ++cy) {
        for (int cx = r; cx < w - r; ++cx) {
            double mu[3] = {0, 0, 0};
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    for (int c = 0; c < 3; ++c)
                        mu[c] += img.at(cx + dx, cy + dy, c);
            for (double& v : mu)
                v /= win;

            double cov[3][3];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    double s = 0;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx)
                            s += (img.at(cx + dx, cy + dy, a) - mu[a]) *
                                 (img.at(cx + dx, cy + dy, b) - mu[b]);
                    cov[a][b] = s / win + (a == b ? eps / win : 0.0);
                }

            // Cofactor inverse of the regularized covariance.
            const double det =
                cov[0][0] * (cov[1][1] * cov[2][2] - cov[1][2] * cov[2][1]) -
                cov[0][1] * (cov[1][0] * cov[2][2] - cov[1][2] * cov[2][0]) +
                cov[0][2] * (cov[1][0] * cov[2][1] - cov[1][1] * cov[2][0]);
            double inv[3][3];
            inv[0][0] = (cov[1][1] * cov[2][2] - cov[1][2] * cov[2][1]) / det;
            inv[0][1] = (cov[0][2] * cov[2][1] - cov[0][1] * cov[2][2]) / det;
            inv[0][2] = (cov[0][1] * cov[1][2] - cov[0][2] * cov[1][1]) / det;
            inv[1][0] = (cov[1][2] * cov[2][0] - cov[1][0] * cov[2][2]) / det;
            inv[1][1] = (cov[0][0] * cov[2][2] - cov[0][2] * cov[2][0]) / det;
            inv[1][2] = (cov[0][2] * cov[1][0] - cov[0][0] * cov[1][2]) / det;
            inv[2][0] = (cov[1][0] * cov[2][1] - cov[1][1] * cov[2][0]) / det;
            inv[2][1] = (cov[0][1] * cov[2][0] - cov[0][0] * cov[2][1]) / det;
            inv[2][2] = (cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0]) / det;

            for (int i = 0; i < win; ++i) {
                const int ix = cx + (i % side) - r, iy = cy + (i / side) - r;
                const int gi = iy * w + ix;
                double di[3] = {img.at(ix, iy, 0) - mu[0], img.at(ix, iy, 1) - mu[1],
                                img.at(ix, iy, 2) - mu[2]};
                for (int j = 0; j < win; ++j) {
                    const int jx = cx + (j % side) - r, jy = cy + (j / side) - r;
                    const int gj = jy * w + jx;
                    double dj[3] = {img.at(jx, jy, 0) - mu[0], img.at(jx, jy, 1) - mu[1],
                                    img.at(jx, jy, 2) - mu[2]};
                    double quad = 0;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            quad += di[a] * inv[a][b] * dj[b];
                    m(gi, gj) += (i == j ? 1.0 : 0.0) - (1.0 + quad) / win;
                }
            }
        }
    }
    return m;
}

// Windowed structural similarity computed the slow way: an explicit 2D
// Gaussian table and per-window scalar loops for every statistic. No
// separable filtering, no shared mean maps.
inline double naive_ssim(const hazeforge::ImageBuffer& a, const hazeforge::ImageBuffer& b) {
    const int k = 11;
    const double sigma = 1.5;
    double weight[11][11];
    double wsum = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            const double dy = y - 5.0, dx = x - 5.0;
            weight[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            wsum += weight[y][x];
        }
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x)
            weight[y][x] /= wsum;

    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        double acc = 0.0;
        int count = 0;
        for (int wy = 0; wy + k <= a.height; ++wy)
            for (int wx = 0; wx + k <= a.width; ++wx, ++count) {
                double mu_a = 0, mu_b = 0;
                for (int y = 0; y < k; ++y)
                    for (int x = 0; x < k; ++x) {
                        mu_a += weight[y][x] * a.at(wx + x, wy + y, c);
                        mu_b += weight[y][x] * b.at(wx + x, wy + y, c);
                    }
                double var_a = 0, var_b = 0, cov = 0;
                for (int y = 0; y < k; ++y)
                    for (int x = 0; x < k; ++x) {
                        const double da = a.at(wx + x, wy + y, c) - mu_a;
                        const double db = b.at(wx + x, wy + y, c) - mu_b;
                        var_a += weight[y][x] * da * da;
                        var_b += weight[y][x] * db * db;
                        cov += weight[y][x] * da * db;
                    }
                acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                       ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            }
        total += acc / count;
    }
    return total / a.channels;
}

// Deterministic synthetic RGB test image: smooth gradients plus a few hard
// block edges, so matting windows see both flat and structured statistics.
inline hazeforge::ImageBuffer synthetic_rgb(int w, int h, unsigned seed) {
    hazeforge::ImageBuffer img = hazeforge::ImageBuffer::create(w, h, 3);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> jitter(-0.03f, 0.03f);
    const int bx = 1 + static_cast<int>(rng() % std::max(1u, static_cast<unsigned>(w) / 2));
    const int by = 1 + static_cast<int>(rng() % std::max(1u, static_cast<unsigned>(h) / 2));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool block = x >= bx && x < bx + w / 3 && y >= by && y < by + h / 3;
            float r = 0.2f + 0.6f * x / std::max(1, w - 1);
            float g = 0.2f + 0.6f * y / std::max(1, h - 1);
            float b = block ? 0.85f : 0.3f;
            img.at(x, y, 0) = std::clamp(r + jitter(rng), 0.0f, 1.0f);
            img.at(x, y, 1) = std::clamp(g + jitter(rng), 0.0f, 1.0f);
            img.at(x, y, 2) = std::clamp(b + jitter(rng), 0.0f, 1.0f);
        }
    return img;
}

} // namespace oracle
