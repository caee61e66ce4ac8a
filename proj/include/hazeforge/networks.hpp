#pragma once

#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hazeforge/common.hpp"
#include "hazeforge/tensor.hpp"

namespace hazeforge {

// Named, insertion-ordered parameter tensors. Tensors are shared handles, so
// holding a copy and updating through at() both touch the same storage. The
// insertion order is the serialization order.
class ParameterSet {
  public:
    Tensor& add(std::string name, Tensor t);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::size_t size() const { return items_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Fills t with N(0, stddev^2) samples via Box-Muller over raw engine draws.
// Using the engine directly (rather than std::normal_distribution, whose
// algorithm is implementation-defined) pins the values to the seed.
void fill_normal(Tensor& t, std::mt19937_64& rng, float stddev);

// Image-to-image generator: a 7x7 stem, two stride-2 downsampling convs, a
// stack of residual blocks at the bottleneck width, two stride-2 transposed
// convs back up, and a 7x7 tanh output head. Instance norm plus ReLU after
// every conv except the head. Spatial dims must be multiples of 4 so the
// up path exactly undoes the down path.
struct GeneratorConfig {
    int base_channels = 16;
    int res_blocks = 2;
};

struct Generator {
    GeneratorConfig config;
    ParameterSet params;

    // x: (N,3,H,W) with H,W % 4 == 0, values any range; output matches the
    // input shape with values in [-1,1].
    Tensor forward(const Tensor& x) const;
};

Generator make_generator(const GeneratorConfig& config, std::mt19937_64& rng,
                         float init_std = 0.02f);

// Patch discriminator: five 3x3 convs (strides 2,2,2,1,1) ending in a raw
// one-channel score map, leaky ReLU (0.2) between layers, instance norm on
// the middle three. Each output score judges one receptive-field patch.
struct DiscriminatorConfig {
    int base_channels = 16;
};

struct Discriminator {
    DiscriminatorConfig config;
    ParameterSet params;

    // x: (N,3,H,W); output (N,1,H/8,W/8) of unbounded patch scores.
    Tensor forward(const Tensor& x) const;
};

Discriminator make_discriminator(const DiscriminatorConfig& config, std::mt19937_64& rng,
                                 float init_std = 0.02f);

// Side length of the input patch that influences one discriminator score.
int discriminator_receptive_field();

} // namespace hazeforge
