#include "fslam/core/ssim.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fslam {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_kernel() {
    std::array<double, kWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kHalf;
        k[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Valid-mode separable convolution of a single-channel plane.
std::vector<double> convolve_valid(const std::vector<double>& src, int w, int h, int& ow, int& oh) {
    static const std::array<double, kWindow> kern = gaussian_kernel();
    ow = w - kWindow + 1;
    oh = h - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) acc += kern[i] * src[y * static_cast<std::size_t>(w) + x + i];
            rows[y * static_cast<std::size_t>(ow) + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) acc += kern[i] * rows[(y + i) * static_cast<std::size_t>(ow) + x];
            out[y * static_cast<std::size_t>(ow) + x] = acc;
        }
    return out;
}

struct WindowStats {
    int ow = 0, oh = 0;
    std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab;
};

WindowStats window_stats(const ImageD& a, const ImageD& b, int channel) {
    const int w = a.width, h = a.height;
    std::vector<double> pa(static_cast<std::size_t>(w) * h), pb(pa.size()), paa(pa.size()),
        pbb(pa.size()), pab(pa.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double va = a.at(x, y, channel), vb = b.at(x, y, channel);
            const std::size_t i = y * static_cast<std::size_t>(w) + x;
            pa[i] = va;
            pb[i] = vb;
            paa[i] = va * va;
            pbb[i] = vb * vb;
            pab[i] = va * vb;
        }
    WindowStats s;
    s.mu_a = convolve_valid(pa, w, h, s.ow, s.oh);
    s.mu_b = convolve_valid(pb, w, h, s.ow, s.oh);
    s.e_aa = convolve_valid(paa, w, h, s.ow, s.oh);
    s.e_bb = convolve_valid(pbb, w, h, s.ow, s.oh);
    s.e_ab = convolve_valid(pab, w, h, s.ow, s.oh);
    return s;
}

void check_shapes(const ImageD& a, const ImageD& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
    if (a.width < kWindow || a.height < kWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
}

}  // namespace

double ssim(const ImageD& a, const ImageD& b) {
    check_shapes(a, b);
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels; ++c) {
        const WindowStats s = window_stats(a, b, c);
        for (std::size_t i = 0; i < s.mu_a.size(); ++i) {
            const double mu_a = s.mu_a[i], mu_b = s.mu_b[i];
            const double var_a = s.e_aa[i] - mu_a * mu_a;
            const double var_b = s.e_bb[i] - mu_b * mu_b;
            const double cov = s.e_ab[i] - mu_a * mu_b;
            const double a1 = 2.0 * mu_a * mu_b + kC1;
            const double a2 = 2.0 * cov + kC2;
            const double b1 = mu_a * mu_a + mu_b * mu_b + kC1;
            const double b2 = var_a + var_b + kC2;
            total += (a1 * a2) / (b1 * b2);
        }
        count += s.mu_a.size();
    }
    return total / static_cast<double>(count);
}

double ssim_with_grad(const ImageD& a, const ImageD& b, ImageD& grad_a) {
    check_shapes(a, b);
    static const std::array<double, kWindow> kern = gaussian_kernel();

    grad_a = ImageD(a.width, a.height, a.channels);
    double total = 0.0;
    std::size_t count = 0;

    for (int c = 0; c < a.channels; ++c) {
        const WindowStats s = window_stats(a, b, c);
        count += s.mu_a.size();
    }
    const double inv_count = 1.0 / static_cast<double>(count);

    for (int c = 0; c < a.channels; ++c) {
        const WindowStats s = window_stats(a, b, c);
        for (int wy = 0; wy < s.oh; ++wy) {
            for (int wx = 0; wx < s.ow; ++wx) {
                const std::size_t i = wy * static_cast<std::size_t>(s.ow) + wx;
                const double mu_a = s.mu_a[i], mu_b = s.mu_b[i];
                const double var_a = s.e_aa[i] - mu_a * mu_a;
                const double var_b = s.e_bb[i] - mu_b * mu_b;
                const double cov = s.e_ab[i] - mu_a * mu_b;
                const double a1 = 2.0 * mu_a * mu_b + kC1;
                const double a2 = 2.0 * cov + kC2;
                const double b1 = mu_a * mu_a + mu_b * mu_b + kC1;
                const double b2 = var_a + var_b + kC2;
                const double sval = (a1 * a2) / (b1 * b2);
                total += sval;

                const double d_mu = 2.0 * (mu_b * a2 * b1 - mu_a * a1 * a2) / (b1 * b1 * b2);
                const double d_var = -a1 * a2 / (b1 * b2 * b2);
                const double d_cov = 2.0 * a1 / (b1 * b2);

                for (int ky = 0; ky < kWindow; ++ky) {
                    for (int kx = 0; kx < kWindow; ++kx) {
                        const double wgt = kern[ky] * kern[kx];
                        const int qx = wx + kx, qy = wy + ky;
                        const double av = a.at(qx, qy, c), bv = b.at(qx, qy, c);
                        grad_a.at(qx, qy, c) +=
                            inv_count * wgt *
                            (d_mu + d_var * 2.0 * (av - mu_a) + d_cov * (bv - mu_b));
                    }
                }
            }
        }
    }
    return total * inv_count;
}

}  // namespace fslam
