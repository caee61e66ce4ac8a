#include "hazeforge/losses.hpp"

namespace hazeforge {

namespace {

Tensor mean_abs_diff(const char* op, const Tensor& a, const Tensor& b) {
    check(a.defined() && b.defined(), op, ": undefined input");
    check(a.shape() == b.shape(), op, ": shape mismatch, ", a.shape().str(), " vs ",
          b.shape().str());
    return mean(abs(sub(a, b)));
}

} // namespace

Tensor lsgan_d_loss(const Tensor& d_real, const Tensor& d_fake) {
    check(d_real.defined() && d_fake.defined(), "lsgan_d_loss: undefined input");
    const Tensor ones = Tensor::full(d_real.shape(), 1.0f);
    return add(mean(square(sub(d_real, ones))), mean(square(d_fake)));
}

Tensor lsgan_g_loss(const Tensor& d_fake) {
    check(d_fake.defined(), "lsgan_g_loss: undefined input");
    const Tensor ones = Tensor::full(d_fake.shape(), 1.0f);
    return mean(square(sub(d_fake, ones)));
}

Tensor cycle_loss(const Tensor& reconstructed, const Tensor& original) {
    return mean_abs_diff("cycle_loss", reconstructed, original);
}

Tensor paired_l1_loss(const Tensor& output, const Tensor& target) {
    return mean_abs_diff("paired_l1_loss", output, target);
}

Tensor photorealism_loss(const SparseMatrixD& m, const Tensor& generated) {
    check(generated.defined(), "photorealism_loss: undefined input");
    const Shape s = generated.shape();
    check(s.n == 1 && s.c == 3, "photorealism_loss: expected shape (1,3,H,W), got ", s.str());
    check(m.rows() == static_cast<long>(s.h) * s.w, "photorealism_loss: matrix is ", m.rows(),
          "x", m.cols(), " but the image has ", static_cast<long>(s.h) * s.w, " pixels");

    // Remap [-1,1] -> [0,1] and interleave for the energy routines. Values
    // outside the contract fail the energy's own range check.
    const Eigen::ArrayXf& x = generated.values();
    const int pixels = s.h * s.w;
    ImageBuffer v = ImageBuffer::create(s.w, s.h, 3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < pixels; ++i)
            v.data[static_cast<std::size_t>(i) * 3 + c] = (x[c * pixels + i] + 1.0f) * 0.5f;

    const double energy = photorealism_energy(m, v);
    const std::vector<float> grad_v = photorealism_gradient(m, v);

    // d energy / d generated = (1/2) * grad_v, planarized back to NCHW.
    Eigen::ArrayXf grad(generated.numel());
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < pixels; ++i)
            grad[c * pixels + i] = 0.5f * grad_v[static_cast<std::size_t>(i) * 3 + c];

    return custom_scalar(generated, static_cast<float>(energy), std::move(grad));
}

float compose_unpaired(float adv_g, float cyc, float photo, const LossWeights& w) {
    return (adv_g + w.lambda_cycle * cyc) + w.lambda_photo * photo;
}

float compose_paired(float adv_g, float l1, const LossWeights& w) {
    return w.lambda_paired_adv * adv_g + w.lambda_paired_l1 * l1;
}

} // namespace hazeforge
