#include "hazeforge/metrics.hpp"

#include <cmath>
#include <vector>

namespace hazeforge {

namespace {

void check_pair(const char* op, const ImageBuffer& a, const ImageBuffer& b) {
    check(a.width == b.width && a.height == b.height && a.channels == b.channels, op,
          ": image shapes differ, ", a.width, "x", a.height, "x", a.channels, " vs ", b.width,
          "x", b.height, "x", b.channels);
    check(!a.data.empty(), op, ": empty images");
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

// One channel as a double plane.
std::vector<double> extract_channel(const ImageBuffer& img, int c) {
    std::vector<double> out(static_cast<std::size_t>(img.pixel_count()));
    for (int i = 0; i < img.pixel_count(); ++i)
        out[static_cast<std::size_t>(i)] = img.data[static_cast<std::size_t>(i) * img.channels + c];
    return out;
}

// Valid-region separable Gaussian filter: output is (h-10) x (w-10).
std::vector<double> gaussian_valid(const std::vector<double>& plane, int w, int h,
                                   const std::vector<double>& kernel) {
    const int k = kSsimWindow;
    const int ow = w - k + 1, oh = h - k + 1;
    // Horizontal pass over full rows, then vertical pass over the valid columns.
    std::vector<double> rows(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i)
                acc += kernel[static_cast<std::size_t>(i)] *
                       plane[static_cast<std::size_t>(y) * w + x + i];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i)
                acc += kernel[static_cast<std::size_t>(i)] *
                       rows[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b) {
    check_pair("mean_squared_error", a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    const double mse = mean_squared_error(a, b);
    if (mse <= 0.0)
        return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    check_pair("ssim", a, b);
    check(a.width >= kSsimWindow && a.height >= kSsimWindow,
          "ssim: image must be at least ", kSsimWindow, "x", kSsimWindow, ", got ", a.width, "x",
          a.height);

    std::vector<double> kernel(kSsimWindow);
    double ksum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - (kSsimWindow - 1) / 2.0;
        kernel[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        ksum += kernel[static_cast<std::size_t>(i)];
    }
    for (double& v : kernel)
        v /= ksum;

    constexpr double c1 = 0.01 * 0.01; // (K1 * L)^2
    constexpr double c2 = 0.03 * 0.03; // (K2 * L)^2

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const std::vector<double> pa = extract_channel(a, c);
        const std::vector<double> pb = extract_channel(b, c);
        std::vector<double> paa(pa.size()), pbb(pa.size()), pab(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
        const std::vector<double> mu_a = gaussian_valid(pa, a.width, a.height, kernel);
        const std::vector<double> mu_b = gaussian_valid(pb, a.width, a.height, kernel);
        const std::vector<double> m_aa = gaussian_valid(paa, a.width, a.height, kernel);
        const std::vector<double> m_bb = gaussian_valid(pbb, a.width, a.height, kernel);
        const std::vector<double> m_ab = gaussian_valid(pab, a.width, a.height, kernel);

        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double var_a = m_aa[i] - mu_a[i] * mu_a[i];
            const double var_b = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
            const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
            acc += num / den;
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / a.channels;
}

} // namespace hazeforge
