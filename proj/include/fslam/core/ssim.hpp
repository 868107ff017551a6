#pragma once

#include "fslam/core/image.hpp"

namespace fslam {

// Structural similarity with an 11x11 Gaussian window (sigma 1.5) and the
// standard constants for unit-range images. Windows fully inside the image
// only; the result is the mean over channels and window positions.
// Throws if the images are smaller than the window or shapes differ.
double ssim(const ImageD& a, const ImageD& b);

// Same value, plus d(mean ssim)/d(a) accumulated into grad_a (allocated to
// a's shape, zero-initialized).
double ssim_with_grad(const ImageD& a, const ImageD& b, ImageD& grad_a);

}  // namespace fslam
