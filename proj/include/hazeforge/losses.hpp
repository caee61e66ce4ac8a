#pragma once

#include "hazeforge/matting.hpp"
#include "hazeforge/tensor.hpp"

// The four loss atoms of the training objective. Each returns a scalar tensor
// on the tape; composite objectives are weighted sums built with add and
// scalar_mul by the caller.

namespace hazeforge {

// Least-squares adversarial loss for a discriminator:
//   mean[(D(real) - 1)^2] + mean[D(fake)^2]
// with no 1/2 in front. The caller must detach the fake batch before running
// it through D, or this loss would train the generator to look fake.
Tensor lsgan_d_loss(const Tensor& d_real, const Tensor& d_fake);

// Least-squares adversarial loss for a generator: mean[(D(fake) - 1)^2].
Tensor lsgan_g_loss(const Tensor& d_fake);

// Mean absolute error after a round trip through both generators.
Tensor cycle_loss(const Tensor& reconstructed, const Tensor& original);

// Mean absolute error against a paired ground-truth image.
Tensor paired_l1_loss(const Tensor& output, const Tensor& target);

// Photorealism energy of a generator output against the matting Laplacian of
// the corresponding input image. `generated` is (1,3,H,W) in [-1,1]; the
// energy is evaluated on the [0,1] remap (x+1)/2 and its closed-form gradient
// enters the tape through a custom node, picking up the remap's 1/2 on the
// way. m must be built from an H*W-pixel guide.
Tensor photorealism_loss(const SparseMatrixD& m, const Tensor& generated);

// Term weights of the two composite objectives. Defaults follow the training
// recipe this repo ships: cycle 10, photorealism 2, and a paired split of
// 9.9 adversarial / 0.1 L1.
struct LossWeights {
    float lambda_cycle = 10.0f;
    float lambda_photo = 2.0f;
    float lambda_paired_adv = 9.9f;
    float lambda_paired_l1 = 0.1f;
};

// Scalar composites over already-reduced loss values. The trainer builds the
// same sums on the tape; these mirror that arithmetic (same association
// order, float throughout) so a logged total can be checked against its
// logged components.
//   unpaired: adv + lambda_cycle * cyc + lambda_photo * photo
//   paired:   lambda_paired_adv * adv + lambda_paired_l1 * l1
float compose_unpaired(float adv_g, float cyc, float photo, const LossWeights& w);
float compose_paired(float adv_g, float l1, const LossWeights& w);

} // namespace hazeforge
