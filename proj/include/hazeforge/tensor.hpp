#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hazeforge/common.hpp"

// Reverse-mode autodiff over rank-4 float32 tensors in NCHW layout.
// Ops record a define-by-run graph; backward(loss) seeds a scalar loss with 1
// and sweeps the producing subgraph in reverse creation order, accumulating
// into the .grad of every requires_grad tensor it reaches. Gradients keep
// accumulating across sweeps until zero_grad. inject_gradient(out, g) runs the
// same sweep seeded with an externally computed gradient at any taped tensor,
// which is how the photorealism term feeds its closed-form gradient into the
// generator subgraph.
//
// Sweeps use per-sweep scratch buffers, so several backward calls (including a
// sweep launched from inside another sweep's node) compose additively.

namespace hazeforge {

struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    int numel() const { return n * c * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const { return cat("(", n, ",", c, ",", h, ",", w, ")"); }
};

namespace detail {
struct TensorImpl;
struct GradSweep;
} // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false);
    static Tensor full(Shape s, float value, bool requires_grad = false);
    static Tensor from_data(Shape s, std::span<const float> data, bool requires_grad = false);
    static Tensor scalar(float value);

    bool defined() const { return impl_ != nullptr; }
    Shape shape() const;
    int numel() const { return shape().numel(); }

    Eigen::ArrayXf& values();
    const Eigen::ArrayXf& values() const;
    // Zero-sized until a backward sweep reaches this tensor.
    const Eigen::ArrayXf& grad() const;
    void zero_grad();

    bool requires_grad() const;
    void set_requires_grad(bool v);
    // True when an op produced this tensor and recorded a backward edge.
    bool on_tape() const;

    // Shares the value array, drops the graph link. The result never
    // propagates gradient into the subgraph that produced it.
    Tensor detach() const;

    // Value of a one-element tensor.
    float item() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> share() const { return impl_; }

private:
    friend Tensor wrap_impl(std::shared_ptr<detail::TensorImpl> impl);
    std::shared_ptr<detail::TensorImpl> impl_;
};

// True while gradient recording is enabled (default). Ops built under a
// NoGradGuard produce constants and keep no backward state.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Elementwise and reduction ops. Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a); // subgradient at 0 is 0
Tensor square(const Tensor& a);
Tensor mean(const Tensor& a); // scalar output, shape (1,1,1,1)
Tensor scalar_mul(const Tensor& a, float s);

// Activations.
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float negative_slope);
Tensor tanh(const Tensor& a);

// Per-(sample, channel) normalization over the spatial extent, no affine
// parameters: y = (x - mean) / sqrt(var + eps), variance biased.
Tensor instance_norm(const Tensor& x, float eps = 1e-5f);

// Cross-correlation with zero padding. x: (N,Ci,H,W), w: (Co,Ci,k,k),
// b: (1,Co,1,1) or undefined for no bias. Output spatial dims are
// floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

// Adjoint of conv2d with the same geometry: maps (N,Co,H,W) back through a
// weight of shape (Co,Ci,k,k) to (N,Ci,Ho,Wo) with
// Ho = (H-1)*stride - 2*padding + k + output_padding. b: (1,Ci,1,1) or
// undefined. output_padding must be < stride; it appends rows/cols the
// forward conv's floor division discarded, and with it the op is still the
// exact adjoint of the conv taking (N,Ci,Ho,Wo) to (N,Co,H,W).
Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int output_padding = 0);

// Scalar node with a precomputed gradient with respect to `input`: forward
// takes the given value; backward feeds upstream * grad_wrt_input into the
// subgraph that produced `input` (via inject_gradient). This is the hook for
// loss terms whose gradient comes from outside the tape, like the closed-form
// photorealism energy.
Tensor custom_scalar(const Tensor& input, float value, Eigen::ArrayXf grad_wrt_input);

// Seeds loss (a one-element taped tensor) with gradient 1 and propagates,
// accumulating into every requires_grad tensor reached.
void backward(const Tensor& loss);

// Seeds `output` with an externally computed gradient (same length as the
// tensor) and propagates it through the producing subgraph immediately.
void inject_gradient(const Tensor& output, std::span<const float> grad);

} // namespace hazeforge
