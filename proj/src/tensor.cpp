#include "hazeforge/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_map>

namespace hazeforge {
namespace detail {

struct GradSweep;

struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Receives the output gradient, adds each input's contribution into the
    // sweep's scratch buffers. May capture raw pointers to input impls (kept
    // alive by `inputs`) but never the output impl, to avoid ownership cycles.
    std::function<void(const Eigen::ArrayXf&, GradSweep&)> backward;
};

struct TensorImpl {
    Shape shape;
    Eigen::ArrayXf value;
    Eigen::ArrayXf grad; // zero-sized until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> node;
    std::uint64_t seq = 0;
};

// Per-sweep gradient scratch. Persistent .grad only receives the sweep totals
// at the end, so repeated sweeps over one graph add instead of compounding.
struct GradSweep {
    std::unordered_map<TensorImpl*, Eigen::ArrayXf> local;

    Eigen::ArrayXf& buffer(TensorImpl* t) {
        auto [it, inserted] = local.try_emplace(t);
        if (inserted)
            it->second = Eigen::ArrayXf::Zero(t->shape.numel());
        return it->second;
    }
};

namespace {

std::atomic<std::uint64_t> g_seq{1};
thread_local int g_no_grad_depth = 0;

std::shared_ptr<TensorImpl> new_impl(Shape s) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = s;
    impl->value.resize(s.numel());
    impl->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    return impl;
}

bool connected(const TensorImpl* t) { return t && (t->requires_grad || t->node != nullptr); }

void attach_node(const std::shared_ptr<TensorImpl>& out,
                 std::vector<std::shared_ptr<TensorImpl>> inputs,
                 std::function<void(const Eigen::ArrayXf&, GradSweep&)> backward) {
    auto node = std::make_shared<Node>();
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out->node = std::move(node);
}

// Whether an op over these inputs should record a backward edge.
bool should_track(std::initializer_list<const TensorImpl*> inputs) {
    if (g_no_grad_depth > 0)
        return false;
    return std::any_of(inputs.begin(), inputs.end(), connected);
}

void run_backward(TensorImpl* root, const Eigen::ArrayXf& seed) {
    GradSweep sweep;
    sweep.buffer(root) += seed;

    // Reachable taped tensors, processed in descending creation order so every
    // consumer has contributed to a tensor's buffer before its node fires.
    std::vector<TensorImpl*> order;
    std::unordered_map<TensorImpl*, bool> seen;
    std::vector<TensorImpl*> stack{root};
    seen[root] = true;
    while (!stack.empty()) {
        TensorImpl* t = stack.back();
        stack.pop_back();
        if (!t->node)
            continue;
        order.push_back(t);
        for (const auto& in : t->node->inputs) {
            if (!seen[in.get()]) {
                seen[in.get()] = true;
                stack.push_back(in.get());
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorImpl* a, const TensorImpl* b) { return a->seq > b->seq; });

    for (TensorImpl* t : order) {
        auto it = sweep.local.find(t);
        if (it == sweep.local.end())
            continue; // no consumer fed this tensor any gradient
        t->node->backward(it->second, sweep);
    }

    for (auto& [impl, buf] : sweep.local) {
        if (!impl->requires_grad)
            continue;
        if (impl->grad.size() == 0)
            impl->grad = Eigen::ArrayXf::Zero(impl->shape.numel());
        impl->grad += buf;
    }
}

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

// One convolution geometry: a (ci, h, w) input correlated with k*k kernels at
// the given stride/pad produces an (oh, ow) grid. im2col flattens the window
// under each output position into a column, so conv is a single GEMM.
struct ConvGeom {
    int ci, h, w, k, stride, pad, oh, ow;

    int cols_rows() const { return ci * k * k; }
    int cols_cols() const { return oh * ow; }
};

void im2col(const float* src, const ConvGeom& g, Eigen::MatrixXf& cols) {
    cols.resize(g.cols_rows(), g.cols_cols());
    for (int oy = 0; oy < g.oh; ++oy) {
        for (int ox = 0; ox < g.ow; ++ox) {
            float* col = cols.col(oy * g.ow + ox).data();
            int idx = 0;
            for (int ci = 0; ci < g.ci; ++ci) {
                const float* plane = src + static_cast<std::ptrdiff_t>(ci) * g.h * g.w;
                for (int ky = 0; ky < g.k; ++ky) {
                    const int iy = oy * g.stride - g.pad + ky;
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        const bool inside = iy >= 0 && iy < g.h && ix >= 0 && ix < g.w;
                        col[idx++] = inside ? plane[iy * g.w + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back onto the (ci, h, w) plane.
void col2im_add(const Eigen::MatrixXf& cols, const ConvGeom& g, float* dst) {
    for (int oy = 0; oy < g.oh; ++oy) {
        for (int ox = 0; ox < g.ow; ++ox) {
            const float* col = cols.col(oy * g.ow + ox).data();
            int idx = 0;
            for (int ci = 0; ci < g.ci; ++ci) {
                float* plane = dst + static_cast<std::ptrdiff_t>(ci) * g.h * g.w;
                for (int ky = 0; ky < g.k; ++ky) {
                    const int iy = oy * g.stride - g.pad + ky;
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                            plane[iy * g.w + ix] += col[idx];
                        ++idx;
                    }
                }
            }
        }
    }
}

} // namespace
} // namespace detail

using detail::ConvGeom;
using detail::ConstMapRM;
using detail::GradSweep;
using detail::MapRM;
using detail::TensorImpl;

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
    check(s.numel() > 0, "zeros: non-positive shape ", s.str());
    auto impl = detail::new_impl(s);
    impl->value.setZero();
    impl->requires_grad = requires_grad;
    return wrap_impl(std::move(impl));
}

Tensor Tensor::full(Shape s, float value, bool requires_grad) {
    Tensor t = zeros(s, requires_grad);
    t.values().setConstant(value);
    return t;
}

Tensor Tensor::from_data(Shape s, std::span<const float> data, bool requires_grad) {
    check(static_cast<int>(data.size()) == s.numel(), "from_data: ", data.size(),
          " values for shape ", s.str());
    Tensor t = zeros(s, requires_grad);
    std::copy(data.begin(), data.end(), t.values().data());
    return t;
}

Tensor Tensor::scalar(float value) { return full({1, 1, 1, 1}, value); }

Shape Tensor::shape() const {
    check(impl_ != nullptr, "shape: undefined tensor");
    return impl_->shape;
}

Eigen::ArrayXf& Tensor::values() {
    check(impl_ != nullptr, "values: undefined tensor");
    return impl_->value;
}

const Eigen::ArrayXf& Tensor::values() const {
    check(impl_ != nullptr, "values: undefined tensor");
    return impl_->value;
}

const Eigen::ArrayXf& Tensor::grad() const {
    check(impl_ != nullptr, "grad: undefined tensor");
    return impl_->grad;
}

void Tensor::zero_grad() {
    check(impl_ != nullptr, "zero_grad: undefined tensor");
    impl_->grad.resize(0);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
    check(impl_ != nullptr, "set_requires_grad: undefined tensor");
    impl_->requires_grad = v;
}

bool Tensor::on_tape() const { return impl_ && impl_->node != nullptr; }

Tensor Tensor::detach() const {
    check(impl_ != nullptr, "detach: undefined tensor");
    auto impl = detail::new_impl(impl_->shape);
    impl->value = impl_->value;
    return wrap_impl(std::move(impl));
}

float Tensor::item() const {
    check(impl_ != nullptr && impl_->shape.numel() == 1, "item: tensor is not a scalar");
    return impl_->value[0];
}

bool grad_enabled() { return detail::g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++detail::g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::g_no_grad_depth; }

namespace {

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, float bsign) {
    check(a.defined() && b.defined(), name, ": undefined tensor");
    check(a.shape() == b.shape(), name, ": shape mismatch ", a.shape().str(), " vs ",
          b.shape().str());
    auto out = detail::new_impl(a.shape());
    out->value = a.values() + bsign * b.values();
    if (detail::should_track({a.impl(), b.impl()})) {
        TensorImpl* ai = a.impl();
        TensorImpl* bi = b.impl();
        detail::attach_node(out, {a.share(), b.share()},
                            [ai, bi, bsign](const Eigen::ArrayXf& g, GradSweep& sweep) {
                                sweep.buffer(ai) += g;
                                sweep.buffer(bi) += bsign * g;
                            });
    }
    return wrap_impl(std::move(out));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", a, b, 1.0f); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", a, b, -1.0f); }

Tensor abs(const Tensor& a) {
    check(a.defined(), "abs: undefined tensor");
    auto out = detail::new_impl(a.shape());
    out->value = a.values().abs();
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        detail::attach_node(out, {a.share()}, [ai](const Eigen::ArrayXf& g, GradSweep& sweep) {
            sweep.buffer(ai) += g * ai->value.sign();
        });
    }
    return wrap_impl(std::move(out));
}

Tensor square(const Tensor& a) {
    check(a.defined(), "square: undefined tensor");
    auto out = detail::new_impl(a.shape());
    out->value = a.values().square();
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        detail::attach_node(out, {a.share()}, [ai](const Eigen::ArrayXf& g, GradSweep& sweep) {
            sweep.buffer(ai) += 2.0f * g * ai->value;
        });
    }
    return wrap_impl(std::move(out));
}

Tensor mean(const Tensor& a) {
    check(a.defined(), "mean: undefined tensor");
    auto out = detail::new_impl({1, 1, 1, 1});
    out->value[0] = a.values().mean();
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        const float inv_n = 1.0f / static_cast<float>(a.numel());
        detail::attach_node(out, {a.share()},
                            [ai, inv_n](const Eigen::ArrayXf& g, GradSweep& sweep) {
                                sweep.buffer(ai) += g[0] * inv_n;
                            });
    }
    return wrap_impl(std::move(out));
}

Tensor scalar_mul(const Tensor& a, float s) {
    check(a.defined(), "scalar_mul: undefined tensor");
    auto out = detail::new_impl(a.shape());
    out->value = s * a.values();
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        detail::attach_node(out, {a.share()}, [ai, s](const Eigen::ArrayXf& g, GradSweep& sweep) {
            sweep.buffer(ai) += s * g;
        });
    }
    return wrap_impl(std::move(out));
}

Tensor relu(const Tensor& a) {
    check(a.defined(), "relu: undefined tensor");
    auto out = detail::new_impl(a.shape());
    out->value = a.values().max(0.0f);
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        detail::attach_node(out, {a.share()}, [ai](const Eigen::ArrayXf& g, GradSweep& sweep) {
            sweep.buffer(ai) += g * (ai->value > 0.0f).cast<float>();
        });
    }
    return wrap_impl(std::move(out));
}

Tensor leaky_relu(const Tensor& a, float negative_slope) {
    check(a.defined(), "leaky_relu: undefined tensor");
    auto out = detail::new_impl(a.shape());
    out->value = (a.values() > 0.0f).select(a.values(), negative_slope * a.values());
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        detail::attach_node(out, {a.share()},
                            [ai, negative_slope](const Eigen::ArrayXf& g, GradSweep& sweep) {
                                sweep.buffer(ai) +=
                                    g * (ai->value > 0.0f)
                                            .select(Eigen::ArrayXf::Ones(ai->value.size()),
                                                    Eigen::ArrayXf::Constant(ai->value.size(),
                                                                             negative_slope));
                            });
    }
    return wrap_impl(std::move(out));
}

Tensor tanh(const Tensor& a) {
    check(a.defined(), "tanh: undefined tensor");
    auto out = detail::new_impl(a.shape());
    out->value = a.values().tanh();
    if (detail::should_track({a.impl()})) {
        TensorImpl* ai = a.impl();
        detail::attach_node(out, {a.share()}, [ai](const Eigen::ArrayXf& g, GradSweep& sweep) {
            sweep.buffer(ai) += g * (1.0f - ai->value.tanh().square());
        });
    }
    return wrap_impl(std::move(out));
}

Tensor instance_norm(const Tensor& x, float eps) {
    check(x.defined(), "instance_norm: undefined tensor");
    check(eps > 0.0f, "instance_norm: eps must be positive, got ", eps);
    const Shape s = x.shape();
    const int m = s.h * s.w;
    auto out = detail::new_impl(s);

    Eigen::ArrayXf inv_std(s.n * s.c);
    for (int slice = 0; slice < s.n * s.c; ++slice) {
        auto xs = x.values().segment(static_cast<std::ptrdiff_t>(slice) * m, m);
        const float mu = xs.mean();
        const float var = (xs - mu).square().mean();
        const float inv = 1.0f / std::sqrt(var + eps);
        inv_std[slice] = inv;
        out->value.segment(static_cast<std::ptrdiff_t>(slice) * m, m) = (xs - mu) * inv;
    }

    if (detail::should_track({x.impl()})) {
        TensorImpl* xi = x.impl();
        // Saved normalized values: dx = inv/m * (m*g - sum(g) - xhat * sum(g*xhat))
        Eigen::ArrayXf xhat = out->value;
        detail::attach_node(
            out, {x.share()},
            [xi, m, inv_std = std::move(inv_std),
             xhat = std::move(xhat)](const Eigen::ArrayXf& g, GradSweep& sweep) {
                Eigen::ArrayXf& buf = sweep.buffer(xi);
                const int slices = static_cast<int>(inv_std.size());
                for (int slice = 0; slice < slices; ++slice) {
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(slice) * m;
                    auto gs = g.segment(off, m);
                    auto hs = xhat.segment(off, m);
                    const float g_sum = gs.sum();
                    const float gh_sum = (gs * hs).sum();
                    buf.segment(off, m) +=
                        (inv_std[slice] / static_cast<float>(m)) *
                        (static_cast<float>(m) * gs - g_sum - hs * gh_sum);
                }
            });
    }
    return wrap_impl(std::move(out));
}

namespace {

ConvGeom make_geom(const char* op, Shape x, Shape w, int stride, int padding) {
    check(stride >= 1, op, ": stride must be >= 1, got ", stride);
    check(padding >= 0, op, ": padding must be >= 0, got ", padding);
    check(w.h == w.w, op, ": kernel must be square, got ", w.str());
    ConvGeom g;
    g.ci = w.c;
    g.h = x.h;
    g.w = x.w;
    g.k = w.h;
    g.stride = stride;
    g.pad = padding;
    g.oh = (x.h + 2 * padding - w.h) / stride + 1;
    g.ow = (x.w + 2 * padding - w.w) / stride + 1;
    check(x.h + 2 * padding >= w.h && x.w + 2 * padding >= w.w, op,
          ": kernel ", w.str(), " larger than padded input ", x.str());
    return g;
}

void check_bias(const char* op, const Tensor& b, int channels) {
    if (!b.defined())
        return;
    const Shape bs = b.shape();
    check(bs.n == 1 && bs.c == channels && bs.h == 1 && bs.w == 1, op,
          ": bias shape ", bs.str(), " does not match ", channels, " channels");
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    check(x.defined() && w.defined(), "conv2d: undefined tensor");
    const Shape xs = x.shape(), ws = w.shape();
    check(xs.c == ws.c, "conv2d: input channels ", xs.str(), " vs weight ", ws.str());
    const ConvGeom g = make_geom("conv2d", xs, ws, stride, padding);
    const int co = ws.n;
    check_bias("conv2d", b, co);

    auto out = detail::new_impl({xs.n, co, g.oh, g.ow});
    Eigen::MatrixXf cols;
    ConstMapRM wm(w.values().data(), co, g.cols_rows());
    for (int n = 0; n < xs.n; ++n) {
        detail::im2col(x.values().data() + static_cast<std::ptrdiff_t>(n) * xs.c * xs.h * xs.w, g,
                       cols);
        MapRM om(out->value.data() + static_cast<std::ptrdiff_t>(n) * co * g.oh * g.ow, co,
                 g.cols_cols());
        om.noalias() = wm * cols;
        if (b.defined())
            om.colwise() += Eigen::Map<const Eigen::VectorXf>(b.values().data(), co);
    }

    if (detail::should_track({x.impl(), w.impl(), b.defined() ? b.impl() : nullptr})) {
        TensorImpl* xi = x.impl();
        TensorImpl* wi = w.impl();
        TensorImpl* bi = b.defined() ? b.impl() : nullptr;
        std::vector<std::shared_ptr<TensorImpl>> inputs{x.share(), w.share()};
        if (b.defined())
            inputs.push_back(b.share());
        const int batch = xs.n;
        detail::attach_node(
            out, std::move(inputs),
            [xi, wi, bi, g, co, batch](const Eigen::ArrayXf& gout, GradSweep& sweep) {
                ConstMapRM wm(wi->value.data(), co, g.cols_rows());
                MapRM dwm(sweep.buffer(wi).data(), co, g.cols_rows());
                Eigen::ArrayXf* dx = detail::connected(xi) ? &sweep.buffer(xi) : nullptr;
                Eigen::MatrixXf cols, dcols;
                for (int n = 0; n < batch; ++n) {
                    ConstMapRM gm(gout.data() + static_cast<std::ptrdiff_t>(n) * co * g.oh * g.ow,
                                  co, g.cols_cols());
                    detail::im2col(
                        xi->value.data() + static_cast<std::ptrdiff_t>(n) * g.ci * g.h * g.w, g,
                        cols);
                    dwm.noalias() += gm * cols.transpose();
                    if (bi)
                        Eigen::Map<Eigen::VectorXf>(sweep.buffer(bi).data(), co).noalias() +=
                            gm.rowwise().sum();
                    if (dx) {
                        dcols.noalias() = wm.transpose() * gm;
                        detail::col2im_add(
                            dcols, g,
                            dx->data() + static_cast<std::ptrdiff_t>(n) * g.ci * g.h * g.w);
                    }
                }
            });
    }
    return wrap_impl(std::move(out));
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int output_padding) {
    check(x.defined() && w.defined(), "conv2d_transpose: undefined tensor");
    check(output_padding >= 0 && output_padding < stride,
          "conv2d_transpose: output_padding must be in [0, stride), got ", output_padding);
    const Shape xs = x.shape(), ws = w.shape();
    const int co = ws.n, ci = ws.c, k = ws.h;
    check(xs.c == co, "conv2d_transpose: input channels ", xs.str(), " vs weight ", ws.str());
    const int oh = (xs.h - 1) * stride - 2 * padding + k + output_padding;
    const int ow = (xs.w - 1) * stride - 2 * padding + k + output_padding;
    check(oh > 0 && ow > 0, "conv2d_transpose: non-positive output dims for input ", xs.str());
    check_bias("conv2d_transpose", b, ci);

    // Geometry of the conv this op is adjoint to: (ci, oh, ow) -> (xs.h, xs.w).
    const ConvGeom g = make_geom("conv2d_transpose", {xs.n, ci, oh, ow}, ws, stride, padding);
    check(g.oh == xs.h && g.ow == xs.w,
          "conv2d_transpose: geometry mismatch, adjoint conv yields ", g.oh, "x", g.ow,
          " but input is ", xs.h, "x", xs.w);

    auto out = detail::new_impl({xs.n, ci, oh, ow});
    out->value.setZero();
    ConstMapRM wm(w.values().data(), co, g.cols_rows());
    Eigen::MatrixXf cols;
    for (int n = 0; n < xs.n; ++n) {
        ConstMapRM xm(x.values().data() + static_cast<std::ptrdiff_t>(n) * co * xs.h * xs.w, co,
                      g.cols_cols());
        cols.noalias() = wm.transpose() * xm;
        float* dst = out->value.data() + static_cast<std::ptrdiff_t>(n) * ci * oh * ow;
        detail::col2im_add(cols, g, dst);
        if (b.defined()) {
            MapRM om(dst, ci, oh * ow);
            om.colwise() += Eigen::Map<const Eigen::VectorXf>(b.values().data(), ci);
        }
    }

    if (detail::should_track({x.impl(), w.impl(), b.defined() ? b.impl() : nullptr})) {
        TensorImpl* xi = x.impl();
        TensorImpl* wi = w.impl();
        TensorImpl* bi = b.defined() ? b.impl() : nullptr;
        std::vector<std::shared_ptr<TensorImpl>> inputs{x.share(), w.share()};
        if (b.defined())
            inputs.push_back(b.share());
        const int batch = xs.n;
        const int ih = xs.h, iw = xs.w;
        detail::attach_node(
            out, std::move(inputs),
            [xi, wi, bi, g, co, ci, batch, ih, iw](const Eigen::ArrayXf& gout, GradSweep& sweep) {
                ConstMapRM wm(wi->value.data(), co, g.cols_rows());
                MapRM dwm(sweep.buffer(wi).data(), co, g.cols_rows());
                Eigen::ArrayXf* dx = detail::connected(xi) ? &sweep.buffer(xi) : nullptr;
                Eigen::MatrixXf gcols;
                for (int n = 0; n < batch; ++n) {
                    const float* gslice =
                        gout.data() + static_cast<std::ptrdiff_t>(n) * ci * g.h * g.w;
                    detail::im2col(gslice, g, gcols);
                    ConstMapRM xm(xi->value.data() + static_cast<std::ptrdiff_t>(n) * co * ih * iw,
                                  co, g.cols_cols());
                    dwm.noalias() += xm * gcols.transpose();
                    if (bi)
                        Eigen::Map<Eigen::VectorXf>(sweep.buffer(bi).data(), ci).noalias() +=
                            ConstMapRM(gslice, ci, g.h * g.w).rowwise().sum();
                    if (dx) {
                        MapRM dxm(dx->data() + static_cast<std::ptrdiff_t>(n) * co * ih * iw, co,
                                  g.cols_cols());
                        dxm.noalias() += wm * gcols;
                    }
                }
            });
    }
    return wrap_impl(std::move(out));
}

Tensor custom_scalar(const Tensor& input, float value, Eigen::ArrayXf grad_wrt_input) {
    check(input.defined(), "custom_scalar: undefined tensor");
    check(grad_wrt_input.size() == input.numel(), "custom_scalar: gradient length ",
          grad_wrt_input.size(), " vs input ", input.shape().str());
    auto out = detail::new_impl({1, 1, 1, 1});
    out->value[0] = value;
    if (detail::should_track({input.impl()})) {
        Tensor in = input;
        detail::attach_node(out, {input.share()},
                            [in, grad = std::move(grad_wrt_input)](const Eigen::ArrayXf& g,
                                                                   GradSweep&) {
                                // Feed the precomputed gradient, scaled by the upstream
                                // scalar, back through the subgraph that produced the input.
                                Eigen::ArrayXf scaled = g[0] * grad;
                                inject_gradient(in, std::span<const float>(scaled.data(),
                                                                           scaled.size()));
                            });
    }
    return wrap_impl(std::move(out));
}

void backward(const Tensor& loss) {
    check(loss.defined(), "backward: undefined tensor");
    check(loss.numel() == 1, "backward: loss must be a scalar, got ", loss.shape().str());
    Eigen::ArrayXf seed(1);
    seed[0] = 1.0f;
    detail::run_backward(loss.impl(), seed);
}

void inject_gradient(const Tensor& output, std::span<const float> grad) {
    check(output.defined(), "inject_gradient: undefined tensor");
    check(static_cast<int>(grad.size()) == output.numel(), "inject_gradient: gradient length ",
          grad.size(), " vs tensor ", output.shape().str());
    Eigen::ArrayXf seed = Eigen::Map<const Eigen::ArrayXf>(grad.data(), grad.size());
    detail::run_backward(output.impl(), seed);
}

} // namespace hazeforge
