// Regenerates the committed toy dataset under tests/fixtures/toyset: 28
// deterministic 32x32 scenes with matching depth maps, hazed through the
// library's own atmospheric model. Scenes 0-7 become unpaired hazy images,
// 8-15 unpaired clean, 16-23 aligned hazy/clean pairs, 24-27 a held-out test
// split. Rerunning reproduces the tree byte for byte.

#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include "hazeforge/common.hpp"
#include "hazeforge/hazesynth.hpp"
#include "hazeforge/image.hpp"

namespace fs = std::filesystem;
using namespace hazeforge;

namespace {

constexpr int kSize = 32;
constexpr double kAtmosphere = 0.85;
constexpr double kTFloor = 0.01;

struct Scene {
    ImageBuffer clean;
    DepthMap depth;
};

// A sky band over a ground plane, plus two colored blocks standing at
// different distances. The depth map mirrors the layout: far sky, a ground
// ramp that nears toward the bottom edge, blocks at their own depths.
Scene paint_scene(unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);

    const int horizon = 8 + int(rng() % 8);
    const float sky_r = 0.4f + 0.3f * unit(rng);
    const float sky_b = 0.7f + 0.3f * unit(rng);
    const float ground_g = 0.3f + 0.4f * unit(rng);

    Scene s;
    s.clean = ImageBuffer::create(kSize, kSize, 3);
    s.depth = DepthMap::create(kSize, kSize);
    for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x) {
            if (y < horizon) {
                s.clean.at(x, y, 0) = sky_r;
                s.clean.at(x, y, 1) = sky_r + 0.1f;
                s.clean.at(x, y, 2) = sky_b;
                s.depth.at(x, y) = 1.0f;
            } else {
                const float toward = float(y - horizon) / float(kSize - horizon);
                s.clean.at(x, y, 0) = 0.25f + 0.1f * toward;
                s.clean.at(x, y, 1) = ground_g + 0.2f * toward;
                s.clean.at(x, y, 2) = 0.2f;
                s.depth.at(x, y) = 1.0f - 0.9f * toward;
            }
        }

    for (int block = 0; block < 2; ++block) {
        const int bw = 5 + int(rng() % 8);
        const int bh = 6 + int(rng() % 10);
        const int bx = int(rng() % unsigned(kSize - bw));
        const int by_bottom = horizon + 2 + int(rng() % (kSize - horizon - 2));
        const float d = 0.15f + 0.7f * unit(rng);
        const float r = unit(rng), g = unit(rng), b = unit(rng);
        for (int y = std::max(0, by_bottom - bh); y < by_bottom; ++y)
            for (int x = bx; x < bx + bw; ++x) {
                s.clean.at(x, y, 0) = r;
                s.clean.at(x, y, 1) = g;
                s.clean.at(x, y, 2) = b;
                s.depth.at(x, y) = d;
            }
    }
    return s;
}

ImageBuffer haze_scene(const Scene& s, double beta) {
    const ImageBuffer t = transmission_from_depth(normalize_depth(s.depth), beta, kTFloor);
    return add_haze(s.clean, t, kAtmosphere);
}

} // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("tests/fixtures/toyset");

    struct Split {
        fs::path dir;
        bool hazy;
        bool clean;
    };
    const Split splits[] = {
        {root / "unpaired" / "trainA", true, false},
        {root / "unpaired" / "trainB", false, true},
        {root / "paired", true, true},
        {root / "test", true, true},
    };
    const int counts[] = {8, 8, 8, 4};

    std::mt19937 beta_rng(2026);
    std::uniform_real_distribution<double> beta_draw(0.7, 1.3);

    int scene_index = 0;
    for (int split = 0; split < 4; ++split) {
        const Split& sp = splits[split];
        for (int i = 0; i < counts[split]; ++i, ++scene_index) {
            const Scene scene = paint_scene(1000u + unsigned(scene_index));
            const double beta = beta_draw(beta_rng);
            const std::string leaf = cat("scene", scene_index, ".png");
            if (sp.hazy) {
                const fs::path dir = sp.clean ? sp.dir / "hazy" : sp.dir;
                fs::create_directories(dir);
                write_image(dir / leaf, haze_scene(scene, beta));
            }
            if (sp.clean) {
                const fs::path dir = sp.hazy ? sp.dir / "clean" : sp.dir;
                fs::create_directories(dir);
                write_image(dir / leaf, scene.clean);
            }
        }
    }
    std::cout << "toyset: " << scene_index << " scenes under " << root.string() << "\n";
    return 0;
}
