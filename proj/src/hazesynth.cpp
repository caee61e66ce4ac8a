#include "hazeforge/hazesynth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "hazeforge/matting.hpp"

namespace hazeforge {

DepthMap DepthMap::create(int width, int height, float fill) {
    check(width > 0 && height > 0, "DepthMap: non-positive dims ", width, "x", height);
    check(fill >= 0.0f, "DepthMap: negative fill ", fill);
    DepthMap d;
    d.width = width;
    d.height = height;
    d.data.assign(static_cast<std::size_t>(width) * height, fill);
    return d;
}

DepthMap DepthMap::from_image(const ImageBuffer& img) {
    check(img.channels == 1, "DepthMap: depth images must be 1-channel, got ", img.channels);
    DepthMap d;
    d.width = img.width;
    d.height = img.height;
    d.data = img.data;
    for (float v : d.data)
        check(v >= 0.0f, "DepthMap: negative depth value ", v);
    return d;
}

ImageBuffer DepthMap::to_image() const {
    ImageBuffer img = ImageBuffer::create(width, height, 1);
    img.data = data;
    return img;
}

DepthMap normalize_depth(const DepthMap& depth) {
    check(!depth.data.empty(), "normalize_depth: empty depth map");
    const float max_d = *std::max_element(depth.data.begin(), depth.data.end());
    DepthMap out = depth;
    if (max_d > 0.0f)
        for (float& v : out.data)
            v /= max_d;
    return out;
}

ImageBuffer transmission_from_depth(const DepthMap& depth, double beta, double t_floor) {
    check(beta > 0.0, "transmission_from_depth: beta must be positive, got ", beta);
    check(t_floor > 0.0 && t_floor < 1.0, "transmission_from_depth: t_floor must be in (0,1), got ",
          t_floor);
    ImageBuffer t = ImageBuffer::create(depth.width, depth.height, 1);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        check(depth.data[i] >= 0.0f, "transmission_from_depth: negative depth ", depth.data[i]);
        t.data[i] = static_cast<float>(
            std::max(std::exp(-beta * static_cast<double>(depth.data[i])), t_floor));
    }
    return t;
}

namespace {

void check_haze_inputs(const char* op, const ImageBuffer& img, const ImageBuffer& t,
                       double atmosphere) {
    check(img.width == t.width && img.height == t.height, op, ": image ", img.width, "x",
          img.height, " vs transmission ", t.width, "x", t.height);
    check(t.channels == 1, op, ": transmission must be 1-channel");
    check(atmosphere > 0.0 && atmosphere <= 1.0, op, ": atmosphere must be in (0,1], got ",
          atmosphere);
    for (float v : t.data)
        if (v <= 0.0f || v > 1.0f)
            throw ContractError(cat(op, ": transmission values must lie in (0,1], got ", v));
}

} // namespace

ImageBuffer add_haze(const ImageBuffer& clean, const ImageBuffer& transmission,
                     double atmosphere) {
    check_haze_inputs("add_haze", clean, transmission, atmosphere);
    ImageBuffer out = ImageBuffer::create(clean.width, clean.height, clean.channels);
    const float a = static_cast<float>(atmosphere);
    for (int i = 0; i < clean.pixel_count(); ++i) {
        const float t = transmission.data[i];
        for (int c = 0; c < clean.channels; ++c)
            out.data[i * clean.channels + c] =
                clean.data[i * clean.channels + c] * t + a * (1.0f - t);
    }
    return out;
}

ImageBuffer invert_haze(const ImageBuffer& hazy, const ImageBuffer& transmission,
                        double atmosphere) {
    check_haze_inputs("invert_haze", hazy, transmission, atmosphere);
    ImageBuffer out = ImageBuffer::create(hazy.width, hazy.height, hazy.channels);
    const float a = static_cast<float>(atmosphere);
    for (int i = 0; i < hazy.pixel_count(); ++i) {
        const float t = transmission.data[i];
        for (int c = 0; c < hazy.channels; ++c)
            out.data[i * hazy.channels + c] = (hazy.data[i * hazy.channels + c] - a * (1.0f - t)) / t;
    }
    return out;
}

DepthMap refine_depth(const DepthMap& depth, const ImageBuffer& guide,
                      const RefineOptions& options) {
    check(depth.width == guide.width && depth.height == guide.height,
          "refine_depth: depth ", depth.width, "x", depth.height, " vs guide ", guide.width, "x",
          guide.height);
    const SparseMatrixD m =
        build_matting_laplacian(guide, options.matting_eps, options.matting_radius);
    Eigen::VectorXd target(depth.data.size());
    for (std::size_t i = 0; i < depth.data.size(); ++i)
        target[static_cast<long>(i)] = depth.data[i];

    const CgResult result =
        solve_soft_matting(m, target, options.lambda, options.cg_tol, options.cg_max_iter);
    require(result.converged, "refine_depth: solver did not converge within ",
            options.cg_max_iter, " iterations (relative residual ", result.relative_residual,
            ")");

    DepthMap out = DepthMap::create(depth.width, depth.height);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(std::max(0.0, result.x[static_cast<long>(i)]));
    return out;
}

int SynthesisReport::ok_count() const {
    int n = 0;
    for (const auto& r : records)
        if (r.status == "ok")
            ++n;
    return n;
}

std::uint64_t per_image_seed(std::uint64_t global_seed, const std::string& filename) {
    std::uint64_t hash = 1469598103934665603ull;
    auto mix_byte = [&hash](unsigned char b) {
        hash ^= b;
        hash *= 1099511628211ull;
    };
    for (int i = 0; i < 8; ++i)
        mix_byte(static_cast<unsigned char>((global_seed >> (8 * i)) & 0xff));
    for (char c : filename)
        mix_byte(static_cast<unsigned char>(c));
    return hash;
}

namespace {

// Uniform double in [0,1) from the top 53 bits, identical on any platform.
double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

} // namespace

SynthesisReport generate_paired_set(const std::filesystem::path& images_dir,
                                    const std::filesystem::path& depth_dir,
                                    const std::filesystem::path& out_dir,
                                    const SynthesisOptions& options) {
    namespace fs = std::filesystem;
    check(options.beta_min > 0.0 && options.beta_min <= options.beta_max,
          "generate_paired_set: bad beta range [", options.beta_min, ", ", options.beta_max, "]");
    require(fs::is_directory(images_dir), "generate_paired_set: not a directory: ",
            images_dir.string());
    require(fs::is_directory(depth_dir), "generate_paired_set: not a directory: ",
            depth_dir.string());

    std::set<fs::path> image_files; // set gives a stable processing order
    for (const auto& entry : fs::directory_iterator(images_dir)) {
        const std::string ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm"))
            image_files.insert(entry.path());
    }
    // An empty source directory is not an error: the run succeeds with an
    // empty report and a header-only manifest.

    fs::create_directories(out_dir / "hazy");
    fs::create_directories(out_dir / "clean");

    SynthesisReport report;
    for (const fs::path& image_path : image_files) {
        const std::string stem = image_path.stem().string();
        SynthesisRecord record;
        record.name = image_path.filename().string();
        record.seed = per_image_seed(options.seed, record.name);

        try {
            ImageBuffer clean = read_image(image_path);
            require(clean.channels == 3, image_path.string(), ": expected an RGB image");
            if (options.size > 0)
                clean = resize_bilinear(clean, options.size, options.size);

            fs::path depth_path = depth_dir / (stem + ".pfm");
            if (!fs::exists(depth_path))
                depth_path = depth_dir / (stem + ".pgm");
            require(fs::exists(depth_path), "no depth map (", stem, ".pfm or .pgm) in ",
                    depth_dir.string());

            ImageBuffer depth_img = read_image(depth_path);
            require(depth_img.channels == 1, depth_path.string(), ": depth must be 1-channel");
            if (depth_img.width != clean.width || depth_img.height != clean.height)
                depth_img = resize_bilinear(depth_img, clean.width, clean.height);

            DepthMap depth = normalize_depth(DepthMap::from_image(depth_img));
            DepthMap refined = refine_depth(depth, clean, options.refine);

            std::mt19937_64 engine(record.seed);
            record.beta = options.beta_min +
                          unit_double(engine()) * (options.beta_max - options.beta_min);

            const ImageBuffer t =
                transmission_from_depth(refined, record.beta, options.t_floor);
            const ImageBuffer hazy = add_haze(clean, t, options.atmosphere);

            write_image(out_dir / "hazy" / (stem + ".png"), hazy);
            write_image(out_dir / "clean" / (stem + ".png"), clean);
            record.status = "ok";
        } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), '\t', ' ');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            record.status = cat("error: ", msg);
        }
        report.records.push_back(std::move(record));
    }

    std::string manifest = "name\tbeta\tatmosphere\tseed\tstatus\n";
    for (const auto& r : report.records) {
        const std::string beta = r.status == "ok" ? format_double(r.beta) : "-";
        const std::string atm = r.status == "ok" ? format_double(options.atmosphere) : "-";
        manifest += cat(r.name, "\t", beta, "\t", atm, "\t", r.seed, "\t", r.status, "\n");
    }
    std::ofstream mf(out_dir / "manifest.tsv", std::ios::binary | std::ios::trunc);
    require(mf.good(), "generate_paired_set: cannot write manifest in ", out_dir.string());
    mf << manifest;
    return report;
}

} // namespace hazeforge
