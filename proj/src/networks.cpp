#include "hazeforge/networks.hpp"

#include <cmath>

namespace hazeforge {

Tensor& ParameterSet::add(std::string name, Tensor t) {
    check(!contains(name), "ParameterSet: duplicate parameter \"", name, "\"");
    check(t.defined(), "ParameterSet: undefined tensor for \"", name, "\"");
    items_.emplace_back(std::move(name), std::move(t));
    return items_.back().second;
}

Tensor& ParameterSet::at(std::string_view name) {
    for (auto& [n, t] : items_)
        if (n == name)
            return t;
    throw ContractError(cat("ParameterSet: no parameter \"", name, "\""));
}

const Tensor& ParameterSet::at(std::string_view name) const {
    for (const auto& [n, t] : items_)
        if (n == name)
            return t;
    throw ContractError(cat("ParameterSet: no parameter \"", name, "\""));
}

bool ParameterSet::contains(std::string_view name) const {
    for (const auto& [n, t] : items_)
        if (n == name)
            return true;
    return false;
}

void fill_normal(Tensor& t, std::mt19937_64& rng, float stddev) {
    check(t.defined(), "fill_normal: undefined tensor");
    check(stddev >= 0.0f, "fill_normal: negative stddev ", stddev);
    constexpr double two_pi = 6.283185307179586476925286766559;
    Eigen::ArrayXf& v = t.values();
    float spare = 0.0f;
    bool has_spare = false;
    for (int i = 0; i < t.numel(); ++i) {
        if (has_spare) {
            v[i] = spare;
            has_spare = false;
            continue;
        }
        // u1 in (0,1] keeps the log finite; top 53 bits for exact doubles.
        const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        const double radius = std::sqrt(-2.0 * std::log(u1)) * stddev;
        v[i] = static_cast<float>(radius * std::cos(two_pi * u2));
        spare = static_cast<float>(radius * std::sin(two_pi * u2));
        has_spare = true;
    }
}

namespace {

// Adds a conv (or transposed conv) weight and bias pair, weight drawn from
// N(0, std), bias zero. Weight layout is (n, c, k, k); for a transposed conv
// n is the input channel count.
void add_conv_params(ParameterSet& params, const std::string& name, int n, int c, int k,
                     int bias_channels, std::mt19937_64& rng, float init_std) {
    Tensor w = Tensor::zeros({n, c, k, k});
    fill_normal(w, rng, init_std);
    w.set_requires_grad(true);
    params.add(name + ".w", w);
    Tensor b = Tensor::zeros({1, bias_channels, 1, 1});
    b.set_requires_grad(true);
    params.add(name + ".b", b);
}

Tensor conv_in_relu(const Tensor& x, const ParameterSet& p, const std::string& name, int stride,
                    int padding) {
    Tensor y = conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride, padding);
    return relu(instance_norm(y));
}

} // namespace

Generator make_generator(const GeneratorConfig& config, std::mt19937_64& rng, float init_std) {
    check(config.base_channels > 0, "make_generator: base_channels must be positive, got ",
          config.base_channels);
    check(config.res_blocks >= 0, "make_generator: negative res_blocks ", config.res_blocks);
    const int c = config.base_channels;

    Generator g;
    g.config = config;
    add_conv_params(g.params, "enc1", c, 3, 7, c, rng, init_std);
    add_conv_params(g.params, "enc2", 2 * c, c, 3, 2 * c, rng, init_std);
    add_conv_params(g.params, "enc3", 4 * c, 2 * c, 3, 4 * c, rng, init_std);
    for (int i = 1; i <= config.res_blocks; ++i) {
        add_conv_params(g.params, cat("res", i, "a"), 4 * c, 4 * c, 3, 4 * c, rng, init_std);
        add_conv_params(g.params, cat("res", i, "b"), 4 * c, 4 * c, 3, 4 * c, rng, init_std);
    }
    // Transposed conv weights map their first dim (input channels) to the second.
    add_conv_params(g.params, "dec1", 4 * c, 2 * c, 3, 2 * c, rng, init_std);
    add_conv_params(g.params, "dec2", 2 * c, c, 3, c, rng, init_std);
    add_conv_params(g.params, "out", 3, c, 7, 3, rng, init_std);
    return g;
}

Tensor Generator::forward(const Tensor& x) const {
    check(x.defined(), "Generator::forward: undefined input");
    const Shape s = x.shape();
    check(s.c == 3, "Generator::forward: expected 3 input channels, got ", s.c);
    check(s.h % 4 == 0 && s.w % 4 == 0,
          "Generator::forward: spatial dims must be multiples of 4, got ", s.h, "x", s.w);

    Tensor y = conv_in_relu(x, params, "enc1", 1, 3);
    y = conv_in_relu(y, params, "enc2", 2, 1);
    y = conv_in_relu(y, params, "enc3", 2, 1);
    for (int i = 1; i <= config.res_blocks; ++i) {
        Tensor r = conv_in_relu(y, params, cat("res", i, "a"), 1, 1);
        r = instance_norm(
            conv2d(r, params.at(cat("res", i, "b.w")), params.at(cat("res", i, "b.b")), 1, 1));
        y = add(y, r);
    }
    y = relu(instance_norm(
        conv2d_transpose(y, params.at("dec1.w"), params.at("dec1.b"), 2, 1, 1)));
    y = relu(instance_norm(
        conv2d_transpose(y, params.at("dec2.w"), params.at("dec2.b"), 2, 1, 1)));
    return hazeforge::tanh(conv2d(y, params.at("out.w"), params.at("out.b"), 1, 3));
}

namespace {

struct DiscLayer {
    int stride;
    bool normed;
};

// Five 3x3 layers; the first skips the norm (its input statistics are the
// image's own), the last is the raw linear score head.
constexpr DiscLayer kDiscLayers[5] = {{2, false}, {2, true}, {2, true}, {1, true}, {1, false}};

} // namespace

Discriminator make_discriminator(const DiscriminatorConfig& config, std::mt19937_64& rng,
                                 float init_std) {
    check(config.base_channels > 0, "make_discriminator: base_channels must be positive, got ",
          config.base_channels);
    const int c = config.base_channels;
    const int widths[6] = {3, c, 2 * c, 4 * c, 8 * c, 1};

    Discriminator d;
    d.config = config;
    for (int i = 0; i < 5; ++i)
        add_conv_params(d.params, cat("l", i + 1), widths[i + 1], widths[i], 3, widths[i + 1],
                        rng, init_std);
    return d;
}

Tensor Discriminator::forward(const Tensor& x) const {
    check(x.defined(), "Discriminator::forward: undefined input");
    check(x.shape().c == 3, "Discriminator::forward: expected 3 input channels, got ",
          x.shape().c);

    Tensor y = x;
    for (int i = 0; i < 5; ++i) {
        const std::string name = cat("l", i + 1);
        y = conv2d(y, params.at(name + ".w"), params.at(name + ".b"), kDiscLayers[i].stride, 1);
        if (kDiscLayers[i].normed)
            y = instance_norm(y);
        if (i < 4)
            y = leaky_relu(y, 0.2f);
    }
    return y;
}

int discriminator_receptive_field() {
    int rf = 1, jump = 1;
    for (const DiscLayer& layer : kDiscLayers) {
        rf += 2 * jump; // (k - 1) * jump with k = 3
        jump *= layer.stride;
    }
    return rf;
}

} // namespace hazeforge
