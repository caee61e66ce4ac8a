#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hazeforge/image.hpp"

// Haze synthesis from depth: transmission t = exp(-beta * d) and the
// scattering model I = J*t + A*(1-t). Depth maps are refined with the matting
// Laplacian of the clean image first, so haze density follows real object
// boundaries instead of raw depth-sensor blobs.

namespace hazeforge {

struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> data; // nonnegative, row-major

    static DepthMap create(int width, int height, float fill = 0.0f);
    // 1-channel image buffers carry depth verbatim (PFM/PGM loaders return
    // those); values may exceed 1.
    static DepthMap from_image(const ImageBuffer& img);
    ImageBuffer to_image() const;

    float at(int x, int y) const { return data[y * width + x]; }
    float& at(int x, int y) { return data[y * width + x]; }
};

// Scales by the maximum so depths land in [0,1] and beta alone controls haze
// strength. All-zero maps stay zero.
DepthMap normalize_depth(const DepthMap& depth);

// t = max(exp(-beta * d), t_floor), 1-channel. Depths must be nonnegative.
ImageBuffer transmission_from_depth(const DepthMap& depth, double beta, double t_floor);

// I = J*t + A*(1-t) per channel. J in [0,1], t in (0,1], same dims.
ImageBuffer add_haze(const ImageBuffer& clean, const ImageBuffer& transmission,
                     double atmosphere);

// Exact algebraic inverse J = (I - A*(1-t)) / t.
ImageBuffer invert_haze(const ImageBuffer& hazy, const ImageBuffer& transmission,
                        double atmosphere);

struct RefineOptions {
    double lambda = 1e-4;  // data-term weight against the matting smoothness
    double matting_eps = 1e-7;
    int matting_radius = 1;
    double cg_tol = 1e-6;
    int cg_max_iter = 2000;
};

// Soft matting refinement: solve (M + lambda*I) d = lambda * d0 with M built
// from the RGB guide. Dims must match. Throws RuntimeError when the solver
// fails to converge, naming the achieved residual.
DepthMap refine_depth(const DepthMap& depth, const ImageBuffer& guide,
                      const RefineOptions& options = {});

struct SynthesisOptions {
    double beta_min = 0.7;
    double beta_max = 1.3;
    double atmosphere = 0.85;
    double t_floor = 0.01;
    std::uint64_t seed = 1;
    int size = 0; // resize inputs to size x size; 0 keeps native dims
    RefineOptions refine;
};

struct SynthesisRecord {
    std::string name;   // image filename stem
    double beta = 0.0;
    std::uint64_t seed = 0; // per-image engine seed
    std::string status; // "ok" or "error: ..."
};

struct SynthesisReport {
    std::vector<SynthesisRecord> records;
    int ok_count() const;
};

// For every image in images_dir, finds <stem>.pfm or <stem>.pgm in depth_dir,
// refines the normalized depth against the clean image, draws beta from a
// per-image engine seeded by (seed, filename), and writes
// out_dir/hazy/<stem>.png, out_dir/clean/<stem>.png, and out_dir/manifest.tsv
// (columns: name, beta, atmosphere, seed, status). Per-file failures become
// error records and processing continues; the same inputs and seed produce
// byte-identical outputs.
SynthesisReport generate_paired_set(const std::filesystem::path& images_dir,
                                    const std::filesystem::path& depth_dir,
                                    const std::filesystem::path& out_dir,
                                    const SynthesisOptions& options);

// The per-image engine seed used by generate_paired_set, exposed for tests.
std::uint64_t per_image_seed(std::uint64_t global_seed, const std::string& filename);

} // namespace hazeforge
