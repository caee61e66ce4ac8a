#include "hazeforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "hazeforge/common.hpp"
#include "hazeforge/image.hpp"
#include "hazeforge/losses.hpp"
#include "hazeforge/matting.hpp"
#include "hazeforge/networks.hpp"

namespace hazeforge {

namespace {

// Top 53 engine bits to [0,1), the same construction the synthesis code uses,
// so every sampled value is pinned to the seed.
double unit_double(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1p-53;
}

float uniform(std::mt19937_64& rng, float lo, float hi) {
    return lo + float(unit_double(rng)) * (hi - lo);
}

Tensor leaf_uniform(Shape s, std::mt19937_64& rng, float lo, float hi) {
    Tensor t = Tensor::zeros(s, true);
    for (int i = 0; i < t.numel(); ++i)
        t.values()[i] = uniform(rng, lo, hi);
    return t;
}

// Pushes every element at least `margin` away from zero so central
// differences never straddle a kink (abs, relu, leaky_relu).
void clear_kink(Tensor& t, float margin) {
    for (int i = 0; i < t.numel(); ++i) {
        float& v = t.values()[i];
        v += v >= 0.0f ? margin : -margin;
    }
}

double relative_error(double candidate, double reference) {
    return std::abs(candidate - reference) / std::max(1.0, std::abs(reference));
}

// Shared harness state: the fixed output projection making the scalar under
// test, and the taped gradient of that scalar for every input.
struct AnalyticCapture {
    Eigen::ArrayXf direction;
    std::vector<Eigen::ArrayXd> analytic;
};

AnalyticCapture capture_analytic(std::span<Tensor> inputs, const Tensor& out,
                                 std::uint64_t seed) {
    AnalyticCapture cap;
    // A random projection mixes every output element. A uniform seed
    // direction (plain mean) would let adjoint bugs that only shuffle
    // contributions between outputs cancel.
    std::mt19937_64 rng(seed);
    cap.direction.resize(out.numel());
    for (int i = 0; i < cap.direction.size(); ++i)
        cap.direction[i] = uniform(rng, -1.0f, 1.0f);

    for (Tensor& t : inputs)
        t.zero_grad();
    inject_gradient(out,
                    std::span<const float>(cap.direction.data(), size_t(cap.direction.size())));

    cap.analytic.reserve(inputs.size());
    for (Tensor& t : inputs) {
        // Inputs the output does not depend on keep a zero-sized grad; their
        // analytic gradient is zero.
        if (t.grad().size() == t.numel())
            cap.analytic.push_back(t.grad().cast<double>());
        else
            cap.analytic.push_back(Eigen::ArrayXd::Zero(t.numel()));
        t.zero_grad();
    }
    return cap;
}

// Walks every element of every input, comparing the taped gradient against
// `numeric_at(input, element, step)`. Elements whose first estimate misses
// are retried at half step: agreement there clears a curvature miss, and two
// estimates that contradict each other mark the element as unmeasurable (the
// stencil straddles a kink) and skip it, within a 10% budget.
template <typename NumericAt>
GradCheckResult compare_elements(const std::string& name, std::span<Tensor> inputs,
                                 const AnalyticCapture& cap, NumericAt&& numeric_at,
                                 double tolerance, double step) {
    GradCheckResult result;
    result.name = name;
    result.tolerance = tolerance;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (int k = 0; k < inputs[i].numel(); ++k) {
            ++result.elements;
            const double a = cap.analytic[i][k];
            const double coarse = numeric_at(inputs[i], k, step);
            double err = relative_error(a, coarse);
            if (err > tolerance) {
                const double fine = numeric_at(inputs[i], k, step / 2);
                err = relative_error(a, fine);
                if (err > tolerance && relative_error(fine, coarse) > tolerance) {
                    ++result.skipped;
                    continue;
                }
            }
            result.max_error = std::max(result.max_error, err);
        }
    }
    result.passed =
        result.max_error <= tolerance && 10 * result.skipped <= result.elements;
    return result;
}

void validate_inputs(const std::string& name, std::span<Tensor> inputs) {
    check(!inputs.empty(), "check_gradient: '", name, "' has no inputs");
    for (const Tensor& t : inputs)
        check(t.defined() && t.requires_grad(), "check_gradient: every input of '", name,
              "' must be a defined tensor with requires_grad");
}

// ---------------------------------------------------------------------------
// Double-precision replay of the network forwards.
//
// Finite differences of a full float32 stack drown in rounding noise and
// compounded curvature long before they resolve percent-level agreement, so
// the whole-network checks differentiate this smooth replay instead and
// compare against the float tape. Faithfulness of the replay is guarded by
// comparing its values against the real forward at the unperturbed point;
// the replay reads the live float parameters, so perturbations flow through.

struct RefTensor {
    int n = 0, c = 0, h = 0, w = 0;
    Eigen::ArrayXd v;

    static RefTensor zeros(int n, int c, int h, int w) {
        RefTensor t{n, c, h, w, Eigen::ArrayXd::Zero(std::ptrdiff_t(n) * c * h * w)};
        return t;
    }

    double at(int ni, int ci, int y, int x) const {
        return v[((std::ptrdiff_t(ni) * c + ci) * h + y) * w + x];
    }
    double& at(int ni, int ci, int y, int x) {
        return v[((std::ptrdiff_t(ni) * c + ci) * h + y) * w + x];
    }
};

RefTensor ref_from(const Tensor& t) {
    const Shape s = t.shape();
    RefTensor r{s.n, s.c, s.h, s.w, t.values().cast<double>()};
    return r;
}

// Matches the float instance norm bit for bit in structure: biased variance
// plus the float default eps, per (sample, channel) slice.
constexpr double kNormEps = double(1e-5f);

RefTensor instance_norm_ref(const RefTensor& x) {
    RefTensor out = RefTensor::zeros(x.n, x.c, x.h, x.w);
    const int m = x.h * x.w;
    for (int slice = 0; slice < x.n * x.c; ++slice) {
        auto xs = x.v.segment(std::ptrdiff_t(slice) * m, m);
        const double mu = xs.mean();
        const double var = (xs - mu).square().mean();
        out.v.segment(std::ptrdiff_t(slice) * m, m) = (xs - mu) / std::sqrt(var + kNormEps);
    }
    return out;
}

RefTensor conv2d_ref(const RefTensor& x, const Tensor& weight, const Tensor& bias, int stride,
                     int padding) {
    const Shape ws = weight.shape();
    const int co = ws.n, ci = ws.c, k = ws.h;
    const int oh = (x.h + 2 * padding - k) / stride + 1;
    const int ow = (x.w + 2 * padding - k) / stride + 1;
    RefTensor out = RefTensor::zeros(x.n, co, oh, ow);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < co; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias.defined() ? double(bias.values()[c]) : 0.0;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int dy = 0; dy < k; ++dy) {
                            const int iy = oy * stride - padding + dy;
                            if (iy < 0 || iy >= x.h)
                                continue;
                            for (int dx = 0; dx < k; ++dx) {
                                const int ix = ox * stride - padding + dx;
                                if (ix < 0 || ix >= x.w)
                                    continue;
                                acc += x.at(n, ic, iy, ix) *
                                       double(weight.values()[((std::ptrdiff_t(c) * ci + ic) * k +
                                                               dy) *
                                                                  k +
                                                              dx]);
                            }
                        }
                    out.at(n, c, oy, ox) = acc;
                }
    return out;
}

RefTensor conv2d_transpose_ref(const RefTensor& x, const Tensor& weight, const Tensor& bias,
                               int stride, int padding, int output_padding) {
    const Shape ws = weight.shape();
    const int co = ws.n, ci = ws.c, k = ws.h;
    const int oh = (x.h - 1) * stride - 2 * padding + k + output_padding;
    const int ow = (x.w - 1) * stride - 2 * padding + k + output_padding;
    RefTensor out = RefTensor::zeros(x.n, ci, oh, ow);
    if (bias.defined())
        for (int n = 0; n < x.n; ++n)
            for (int c = 0; c < ci; ++c)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox)
                        out.at(n, c, oy, ox) = double(bias.values()[c]);
    // Scatter form of the conv adjoint: every input position spreads through
    // the kernel into the positions the forward conv would have gathered.
    for (int n = 0; n < x.n; ++n)
        for (int ic = 0; ic < co; ++ic)
            for (int y = 0; y < x.h; ++y)
                for (int xpos = 0; xpos < x.w; ++xpos) {
                    const double xv = x.at(n, ic, y, xpos);
                    for (int c = 0; c < ci; ++c)
                        for (int dy = 0; dy < k; ++dy) {
                            const int oy = y * stride - padding + dy;
                            if (oy < 0 || oy >= oh)
                                continue;
                            for (int dx = 0; dx < k; ++dx) {
                                const int ox = xpos * stride - padding + dx;
                                if (ox < 0 || ox >= ow)
                                    continue;
                                out.at(n, c, oy, ox) +=
                                    xv * double(weight.values()[((std::ptrdiff_t(ic) * ci + c) *
                                                                     k +
                                                                 dy) *
                                                                    k +
                                                                dx]);
                            }
                        }
                }
    return out;
}

void relu_ref(RefTensor& t) {
    t.v = t.v.max(0.0);
}

void leaky_relu_ref(RefTensor& t) {
    constexpr double slope = double(0.2f);
    t.v = (t.v >= 0.0).select(t.v, slope * t.v);
}

RefTensor conv_in_relu_ref(const RefTensor& x, const ParameterSet& p, const std::string& name,
                           int stride, int padding) {
    RefTensor y = conv2d_ref(x, p.at(name + ".w"), p.at(name + ".b"), stride, padding);
    y = instance_norm_ref(y);
    relu_ref(y);
    return y;
}

RefTensor generator_forward_ref(const Generator& g, const RefTensor& x) {
    const ParameterSet& p = g.params;
    RefTensor y = conv_in_relu_ref(x, p, "enc1", 1, 3);
    y = conv_in_relu_ref(y, p, "enc2", 2, 1);
    y = conv_in_relu_ref(y, p, "enc3", 2, 1);
    for (int i = 1; i <= g.config.res_blocks; ++i) {
        RefTensor r = conv_in_relu_ref(y, p, cat("res", i, "a"), 1, 1);
        r = instance_norm_ref(
            conv2d_ref(r, p.at(cat("res", i, "b.w")), p.at(cat("res", i, "b.b")), 1, 1));
        y.v += r.v;
    }
    y = conv2d_transpose_ref(y, p.at("dec1.w"), p.at("dec1.b"), 2, 1, 1);
    y = instance_norm_ref(y);
    relu_ref(y);
    y = conv2d_transpose_ref(y, p.at("dec2.w"), p.at("dec2.b"), 2, 1, 1);
    y = instance_norm_ref(y);
    relu_ref(y);
    y = conv2d_ref(y, p.at("out.w"), p.at("out.b"), 1, 3);
    y.v = y.v.tanh();
    return y;
}

RefTensor discriminator_forward_ref(const Discriminator& d, const RefTensor& x) {
    constexpr struct {
        int stride;
        bool normed;
    } layers[5] = {{2, false}, {2, true}, {2, true}, {1, true}, {1, false}};

    RefTensor y = x;
    for (int i = 0; i < 5; ++i) {
        const std::string name = cat("l", i + 1);
        y = conv2d_ref(y, d.params.at(name + ".w"), d.params.at(name + ".b"),
                       layers[i].stride, 1);
        if (layers[i].normed)
            y = instance_norm_ref(y);
        if (i < 4)
            leaky_relu_ref(y);
    }
    return y;
}

// Whole-network check: float tape gradient against central differences of
// the double replay. The unperturbed replay must agree with the real forward
// before any differencing happens, or the comparison proves nothing.
GradCheckResult check_network_gradient(const std::string& name, std::span<Tensor> inputs,
                                       const std::function<Tensor()>& forward,
                                       const std::function<RefTensor()>& forward_ref,
                                       double tolerance, std::uint64_t seed) {
    validate_inputs(name, inputs);
    Tensor out = forward();
    const RefTensor at_point = forward_ref();
    require(out.numel() == int(at_point.v.size()), "gradcheck: replay of '", name,
            "' has the wrong output shape");
    for (int k = 0; k < out.numel(); ++k)
        require(relative_error(double(out.values()[k]), at_point.v[k]) <= 5e-3,
                "gradcheck: replay of '", name, "' diverged from the real forward at element ",
                k);

    const AnalyticCapture cap = capture_analytic(inputs, out, seed);

    auto phi = [&]() {
        const RefTensor o = forward_ref();
        double acc = 0.0;
        for (int k = 0; k < int(o.v.size()); ++k)
            acc += o.v[k] * double(cap.direction[k]);
        return acc;
    };
    auto numeric_at = [&](Tensor& t, int k, double h) {
        const float saved = t.values()[k];
        const float plus = float(double(saved) + h);
        const float minus = float(double(saved) - h);
        t.values()[k] = plus;
        const double f_plus = phi();
        t.values()[k] = minus;
        const double f_minus = phi();
        t.values()[k] = saved;
        return (f_plus - f_minus) / (double(plus) - double(minus));
    };

    // The replay is noise-free, so the step only has to clear the float
    // quantization of the perturbed parameter itself.
    return compare_elements(name, inputs, cap, numeric_at, tolerance, 1e-5);
}

} // namespace

GradCheckResult check_gradient(const std::string& name, std::span<Tensor> inputs,
                               const std::function<Tensor()>& forward, double tolerance,
                               std::uint64_t seed, double step) {
    check(step > 0.0, "check_gradient: step must be positive, got ", step);
    validate_inputs(name, inputs);

    Tensor out = forward();
    check(out.defined() && out.numel() > 0, "check_gradient: '", name,
          "' produced no output");
    const AnalyticCapture cap = capture_analytic(inputs, out, seed);

    auto project = [&]() {
        NoGradGuard guard;
        Tensor o = forward();
        require(o.numel() == int(cap.direction.size()), "check_gradient: '", name,
                "' changed output shape between calls");
        double acc = 0.0;
        for (int k = 0; k < o.numel(); ++k)
            acc += double(o.values()[k]) * double(cap.direction[k]);
        return acc;
    };
    auto numeric_at = [&](Tensor& t, int k, double h) {
        const float saved = t.values()[k];
        // The realized step is the float spacing actually applied, not 2h,
        // which removes the quantization of x from the quotient.
        const float plus = float(double(saved) + h);
        const float minus = float(double(saved) - h);
        t.values()[k] = plus;
        const double f_plus = project();
        t.values()[k] = minus;
        const double f_minus = project();
        t.values()[k] = saved;
        return (f_plus - f_minus) / (double(plus) - double(minus));
    };

    return compare_elements(name, inputs, cap, numeric_at, tolerance, step);
}

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheckResult> results;

    auto run1 = [&](const std::string& name, Tensor a, auto op, double tol) {
        Tensor inputs[] = {a};
        results.push_back(
            check_gradient(name, inputs, [&] { return op(inputs[0]); }, tol, rng()));
    };
    auto run2 = [&](const std::string& name, Tensor a, Tensor b, auto op, double tol) {
        Tensor inputs[] = {a, b};
        results.push_back(check_gradient(
            name, inputs, [&] { return op(inputs[0], inputs[1]); }, tol, rng()));
    };

    const Shape box{2, 3, 4, 5};

    // Elementwise ops, reductions, activations. Kinked ops get inputs nudged
    // away from zero.
    run2("add", leaf_uniform(box, rng, -1, 1), leaf_uniform(box, rng, -1, 1),
         [](const Tensor& a, const Tensor& b) { return add(a, b); }, 1e-3);
    run2("sub", leaf_uniform(box, rng, -1, 1), leaf_uniform(box, rng, -1, 1),
         [](const Tensor& a, const Tensor& b) { return sub(a, b); }, 1e-3);
    {
        Tensor a = leaf_uniform(box, rng, -1, 1);
        clear_kink(a, 0.1f);
        run1("abs", a, [](const Tensor& t) { return abs(t); }, 1e-3);
    }
    run1("square", leaf_uniform(box, rng, -1, 1),
         [](const Tensor& t) { return square(t); }, 1e-3);
    run1("mean", leaf_uniform(box, rng, -1, 1), [](const Tensor& t) { return mean(t); },
         1e-3);
    run1("scalar_mul", leaf_uniform(box, rng, -1, 1),
         [](const Tensor& t) { return scalar_mul(t, -1.7f); }, 1e-3);
    {
        Tensor a = leaf_uniform(box, rng, -1, 1);
        clear_kink(a, 0.1f);
        run1("relu", a, [](const Tensor& t) { return relu(t); }, 1e-3);
    }
    {
        Tensor a = leaf_uniform(box, rng, -1, 1);
        clear_kink(a, 0.1f);
        run1("leaky_relu", a, [](const Tensor& t) { return leaky_relu(t, 0.2f); }, 1e-3);
    }
    run1("tanh", leaf_uniform(box, rng, -2, 2), [](const Tensor& t) { return tanh(t); },
         1e-3);
    run1("instance_norm", leaf_uniform({2, 3, 5, 4}, rng, -1, 1),
         [](const Tensor& t) { return instance_norm(t); }, 2e-3);

    // Both conv directions, with gradients taken through input, weight, and
    // bias at once. Stride 2 with padding exercises the ragged tail the
    // floor division drops.
    {
        Tensor inputs[] = {leaf_uniform({2, 3, 6, 7}, rng, -1, 1),
                           leaf_uniform({4, 3, 3, 3}, rng, -0.5, 0.5),
                           leaf_uniform({1, 4, 1, 1}, rng, -0.5, 0.5)};
        results.push_back(check_gradient(
            "conv2d", inputs,
            [&] { return conv2d(inputs[0], inputs[1], inputs[2], 2, 1); }, 2e-3, rng()));
    }
    {
        Tensor inputs[] = {leaf_uniform({1, 4, 3, 3}, rng, -1, 1),
                           leaf_uniform({4, 2, 3, 3}, rng, -0.5, 0.5),
                           leaf_uniform({1, 2, 1, 1}, rng, -0.5, 0.5)};
        results.push_back(check_gradient(
            "conv2d_transpose", inputs,
            [&] { return conv2d_transpose(inputs[0], inputs[1], inputs[2], 2, 1, 1); },
            2e-3, rng()));
    }

    // Loss atoms.
    run2("lsgan_d_loss", leaf_uniform({1, 1, 4, 4}, rng, -1, 2),
         leaf_uniform({1, 1, 4, 4}, rng, -1, 2),
         [](const Tensor& r, const Tensor& f) { return lsgan_d_loss(r, f); }, 1e-3);
    run1("lsgan_g_loss", leaf_uniform({1, 1, 4, 4}, rng, -1, 2),
         [](const Tensor& f) { return lsgan_g_loss(f); }, 1e-3);
    {
        // Keep |a - b| off zero so the L1 kink stays clear of the stencil.
        Tensor a = leaf_uniform(box, rng, -1, 1);
        Tensor b = Tensor::zeros(box, true);
        for (int i = 0; i < b.numel(); ++i)
            b.values()[i] = a.values()[i] + uniform(rng, 0.1f, 0.4f);
        run2("cycle_loss", a, b,
             [](const Tensor& x, const Tensor& y) { return cycle_loss(x, y); }, 1e-3);
    }
    {
        Tensor a = leaf_uniform(box, rng, -1, 1);
        Tensor b = Tensor::zeros(box, true);
        for (int i = 0; i < b.numel(); ++i)
            b.values()[i] = a.values()[i] + uniform(rng, 0.1f, 0.4f);
        run2("paired_l1_loss", a, b,
             [](const Tensor& x, const Tensor& y) { return paired_l1_loss(x, y); }, 1e-3);
    }

    // Photorealism energy against a fixed guide: the closed-form gradient
    // entering the tape through the custom node, including the remap's 1/2.
    {
        std::mt19937_64 guide_rng(seed ^ 0x9e3779b97f4a7c15ull);
        ImageBuffer guide = ImageBuffer::create(6, 6, 3);
        for (float& v : guide.data)
            v = float(unit_double(guide_rng));
        const SparseMatrixD m = build_matting_laplacian(guide);
        // Inputs stay in [-0.9, 0.9] so the [0,1] remap holds under the
        // stencil's perturbations.
        Tensor inputs[] = {leaf_uniform({1, 3, 6, 6}, rng, -0.9f, 0.9f)};
        results.push_back(check_gradient(
            "photorealism_loss", inputs, [&] { return photorealism_loss(m, inputs[0]); },
            1e-3, rng()));
    }

    // Whole networks, against the double replay: gradients through the full
    // generator and discriminator stacks with respect to the input and a
    // spread of parameter tensors. 12x12 inputs keep the bottleneck's norm
    // windows at 3x3, and init_std above the training default keeps
    // activations well scaled. The tolerance absorbs the float tape's own
    // rounding; a wrong adjoint anywhere in the chain shows up as O(1).
    {
        std::mt19937_64 net_rng(seed ^ 0x2545f4914f6cdd1dull);
        Generator g = make_generator({.base_channels = 2, .res_blocks = 1}, net_rng, 0.2f);
        Tensor inputs[] = {leaf_uniform({1, 3, 12, 12}, rng, -1, 1), g.params.at("enc1.w"),
                           g.params.at("res1a.b"), g.params.at("dec2.w"),
                           g.params.at("out.w"), g.params.at("out.b")};
        results.push_back(check_network_gradient(
            "generator", inputs, [&] { return g.forward(inputs[0]); },
            [&] { return generator_forward_ref(g, ref_from(inputs[0])); }, 1e-2, rng()));
    }
    {
        std::mt19937_64 net_rng(seed ^ 0x94d049bb133111ebull);
        Discriminator d = make_discriminator({.base_channels = 2}, net_rng, 0.2f);
        Tensor inputs[] = {leaf_uniform({1, 3, 12, 12}, rng, -1, 1), d.params.at("l1.w"),
                           d.params.at("l3.b"), d.params.at("l5.w"), d.params.at("l5.b")};
        results.push_back(check_network_gradient(
            "discriminator", inputs, [&] { return d.forward(inputs[0]); },
            [&] { return discriminator_forward_ref(d, ref_from(inputs[0])); }, 1e-2,
            rng()));
    }

    // Photorealism energy composed with a full generator: the closed-form
    // matting gradient entering the tape through the custom node must chain
    // correctly into every upstream parameter. 8x8 keeps the quadratic form
    // small while the bottleneck still shrinks to 2x2.
    {
        std::mt19937_64 guide_rng(seed ^ 0xd1342543de82ef95ull);
        ImageBuffer guide = ImageBuffer::create(8, 8, 3);
        for (float& v : guide.data)
            v = float(unit_double(guide_rng));
        const SparseMatrixD m = build_matting_laplacian(guide);

        std::mt19937_64 net_rng(seed ^ 0x9e6c63d0a4b2c1f7ull);
        Generator g = make_generator({.base_channels = 2, .res_blocks = 1}, net_rng, 0.2f);
        Tensor inputs[] = {leaf_uniform({1, 3, 8, 8}, rng, -1, 1), g.params.at("enc1.w"),
                           g.params.at("res1a.b"), g.params.at("dec2.w"),
                           g.params.at("out.w"), g.params.at("out.b")};
        results.push_back(check_network_gradient(
            "photorealism_generator", inputs,
            [&] { return photorealism_loss(m, g.forward(inputs[0])); },
            [&] {
                const RefTensor y = generator_forward_ref(g, ref_from(inputs[0]));
                RefTensor out = RefTensor::zeros(1, 1, 1, 1);
                const int pixels = y.h * y.w;
                for (int c = 0; c < 3; ++c) {
                    const Eigen::VectorXd v =
                        ((y.v.segment(std::ptrdiff_t(c) * pixels, pixels) + 1.0) * 0.5)
                            .matrix();
                    out.v[0] += v.dot(m * v);
                }
                return out;
            },
            1e-2, rng()));
    }

    return results;
}

} // namespace hazeforge
