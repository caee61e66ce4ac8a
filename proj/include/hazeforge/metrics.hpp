#pragma once

#include "hazeforge/common.hpp"
#include "hazeforge/image.hpp"

namespace hazeforge {

// Mean squared error over all pixels and channels, accumulated in double.
double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b);

// Peak signal-to-noise ratio in dB for signals in [0,1]: 10*log10(1/MSE).
// Identical images would be infinite, so the value is capped at 99 dB.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5,
// K1 0.01, K2 0.03, dynamic range 1). Only windows fully inside the image
// contribute, so both dimensions must be at least 11. Multi-channel images
// average the per-channel scores.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

} // namespace hazeforge
