#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hazeforge/common.hpp"

// Flat key=value run configuration. '#' starts a comment, blank lines are
// skipped, unknown keys are rejected, and every key can be overridden from
// the command line with --set key=value. dump() renders doubles in shortest
// round-trip form, so dump -> parse -> dump is a fixed point.

namespace hazeforge {

struct RunConfig {
    // Architecture.
    int image_size = 32;    // square training/eval resolution, divisible by 4
    int base_channels = 16; // generator stem width; discriminator matches
    int res_blocks = 2;

    // Optimization.
    double lr = 2e-5;
    int epochs_constant = 50;
    int epochs_decay = 50;
    int iterations = 0; // 0 means epochs * (n_unpaired + n_paired)
    int batch_size = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double init_std = 0.02;
    std::uint64_t seed = 1;
    int checkpoint_every = 100; // iterations; 0 keeps only the final one

    // Loss weights.
    double lambda_cycle = 10.0;
    double lambda_photo = 2.0;
    double lambda_paired_adv = 9.9;
    double lambda_paired_l1 = 0.1;
    bool photo_backward_only = false; // restrict photorealism to the y->x->y cycle

    // Photorealism / matting.
    double matting_eps = 1e-7;
    int matting_radius = 1;

    // Haze synthesis.
    double beta_min = 0.7; // per-image scattering draw, uniform in [min, max]
    double beta_max = 1.3;
    double atmosphere = 0.85;
    double t_floor = 0.01;

    // Depth refinement.
    double refine_lambda = 1e-4;
    double cg_tol = 1e-6;
    int cg_max_iter = 2000;

    // Typed assignment with validation; throws ContractError on unknown keys
    // or unparseable values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    std::string dump() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);

    // Cross-field checks; set() validates single fields, this the rest.
    void validate() const;
};

} // namespace hazeforge
