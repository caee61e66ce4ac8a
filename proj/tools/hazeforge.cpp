// Command-line surface of the toolkit. Every subcommand is a thin shell over
// the library: it resolves a RunConfig (file, then --set overrides, then
// --seed), validates inputs, calls one library entry point, and writes
// file or TSV outputs that are byte-reproducible for a fixed seed.
//
// Exit codes: 0 success, 1 rejected input (bad flags, bad config, bad
// request), 2 runtime failure (unreadable files, solver breakdown,
// non-finite training loss), each with a single-line diagnostic on stderr.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hazeforge/checkpoint.hpp"
#include "hazeforge/common.hpp"
#include "hazeforge/config.hpp"
#include "hazeforge/dataset.hpp"
#include "hazeforge/gradcheck.hpp"
#include "hazeforge/hazesynth.hpp"
#include "hazeforge/image.hpp"
#include "hazeforge/matting.hpp"
#include "hazeforge/metrics.hpp"
#include "hazeforge/networks.hpp"
#include "hazeforge/tensor.hpp"
#include "hazeforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace hazeforge;

namespace {

// --config / --set / --seed, shared by every subcommand and applied in that
// order so later sources win.
struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path,
                    "configuration file, key=value lines with # comments");
    cmd->add_option("--set", opts.sets, "override one configuration key as key=value")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", opts.seed, "override the configured random seed");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig config;
    if (!opts.config_path.empty())
        config = RunConfig::load(opts.config_path);
    for (const std::string& kv : opts.sets) {
        const auto eq = kv.find('=');
        check(eq != std::string::npos, "--set expects key=value, got '", kv, "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.seed)
        config.seed = *opts.seed;
    config.validate();
    return config;
}

RefineOptions refine_options(const RunConfig& c) {
    RefineOptions o;
    o.lambda = c.refine_lambda;
    o.matting_eps = c.matting_eps;
    o.matting_radius = c.matting_radius;
    o.cg_tol = c.cg_tol;
    o.cg_max_iter = c.cg_max_iter;
    return o;
}

TrainConfig to_train_config(const RunConfig& c) {
    TrainConfig t;
    t.image_size = c.image_size;
    t.lr = float(c.lr);
    t.adam_beta1 = float(c.adam_beta1);
    t.adam_beta2 = float(c.adam_beta2);
    t.adam_eps = float(c.adam_eps);
    t.epochs_constant = c.epochs_constant;
    t.epochs_decay = c.epochs_decay;
    t.seed = c.seed;
    t.batch_size = c.batch_size;
    t.weights.lambda_cycle = float(c.lambda_cycle);
    t.weights.lambda_photo = float(c.lambda_photo);
    t.weights.lambda_paired_adv = float(c.lambda_paired_adv);
    t.weights.lambda_paired_l1 = float(c.lambda_paired_l1);
    t.photorealism_mode = c.photo_backward_only ? PhotorealismMode::backward_only
                                                : PhotorealismMode::both_directions;
    t.checkpoint_every = c.checkpoint_every;
    t.base_channels = c.base_channels;
    t.res_blocks = c.res_blocks;
    t.init_std = float(c.init_std);
    t.matting_eps = c.matting_eps;
    t.matting_radius = c.matting_radius;
    return t;
}

// Rebuilds the four networks from a training checkpoint. The architecture
// fields ride inside the checkpoint, so no config is needed.
TrainingNets load_nets(const fs::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    TrainConfig cfg;
    cfg.base_channels = int(ckpt.scalar("config/base_channels"));
    cfg.res_blocks = int(ckpt.scalar("config/res_blocks"));
    std::mt19937_64 rng(0);
    TrainingNets nets = make_training_nets(cfg, rng);
    Optimizers opt = make_optimizers(cfg);
    std::int64_t iteration = 0;
    restore_training(ckpt, nets, opt, iteration, rng);
    return nets;
}

void write_text(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream f(out_path, std::ios::binary);
    require(f.good(), "cannot open ", out_path, " for writing");
    f << text;
    f.flush();
    require(f.good(), "failed writing ", out_path);
}

int run_synthesize(const RunConfig& config, const fs::path& images, const fs::path& depths,
                   const fs::path& out, int size) {
    SynthesisOptions options;
    options.beta_min = config.beta_min;
    options.beta_max = config.beta_max;
    options.atmosphere = config.atmosphere;
    options.t_floor = config.t_floor;
    options.seed = config.seed;
    options.size = size;
    options.refine = refine_options(config);

    const SynthesisReport report = generate_paired_set(images, depths, out, options);
    const int failed = int(report.records.size()) - report.ok_count();
    std::cout << "synthesize: " << report.ok_count() << " pairs written, " << failed
              << " failed, manifest at " << (out / "manifest.tsv").string() << "\n";
    return 0;
}

int run_refine_depth(const RunConfig& config, const fs::path& depth_path,
                     const fs::path& guide_path, const fs::path& out) {
    const DepthMap raw = DepthMap::from_image(read_image(depth_path));
    const ImageBuffer guide = read_image(guide_path);
    check(guide.channels == 3, "refine-depth: guide must be a 3-channel image, got ",
          guide.channels, " channel(s) in ", guide_path.string());
    const DepthMap refined = refine_depth(normalize_depth(raw), guide, refine_options(config));
    if (const fs::path parent = out.parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_image(out, refined.to_image());
    std::cout << "refine-depth: " << out.string() << "\n";
    return 0;
}

int run_build_matting_cache(const RunConfig& config, const fs::path& images,
                            std::string cache_dir) {
    if (cache_dir.empty())
        if (const char* env = std::getenv("HAZEFORGE_CACHE"))
            cache_dir = env;
    check(!cache_dir.empty(),
          "build-matting-cache: pass --out or set HAZEFORGE_CACHE to name the cache directory");
    fs::create_directories(cache_dir);

    const auto files = list_images(images);
    std::string manifest = "name\tkey\n";
    for (const fs::path& file : files) {
        // Resize exactly as the trainer loads guides, so the keys match what
        // a training run will look up.
        const LoadedImage loaded = load_image_tensor(file, config.image_size);
        const std::string key =
            matting_cache_key(loaded.image, config.matting_eps, config.matting_radius);
        const fs::path entry = fs::path(cache_dir) / (key + ".mlap");
        if (!fs::exists(entry))
            save_matting_cache(
                entry, build_matting_laplacian(loaded.image, config.matting_eps,
                                               config.matting_radius));
        manifest += cat(file.filename().string(), "\t", key, "\n");
    }
    std::cout << manifest;
    std::cout << "build-matting-cache: " << files.size() << " entries in " << cache_dir
              << "\n";
    return 0;
}

int run_train(const RunConfig& config, const fs::path& data_root, const fs::path& out,
              const fs::path& resume) {
    const DatasetPaths paths = default_data_layout(data_root);
    const Dataset dataset = scan_dataset(paths);
    TrainConfig cfg = to_train_config(config);

    const bool paired_enabled =
        cfg.weights.lambda_paired_adv != 0.0f || cfg.weights.lambda_paired_l1 != 0.0f;
    const std::int64_t n_unpaired =
        std::int64_t(std::max(dataset.unpaired_hazy.size(), dataset.unpaired_clean.size()));
    const std::int64_t n_paired =
        paired_enabled ? std::int64_t(dataset.paired_hazy.size()) : 0;
    if (config.iterations > 0) {
        cfg.iterations = config.iterations;
        cfg.iterations_per_epoch = 0; // derived from the total by the schedule
    } else {
        check(n_unpaired + n_paired > 0, "train: dataset under ", data_root.string(),
              " is empty, cannot derive an iteration count");
        cfg.iterations =
            std::int64_t(config.epochs_constant + config.epochs_decay) * (n_unpaired + n_paired);
        cfg.iterations_per_epoch = int(n_unpaired + n_paired);
    }

    fs::create_directories(out);
    // Record the exact effective configuration next to the run outputs.
    write_text((out / "config.cfg").string(), config.dump());

    std::cout << "train: " << cfg.iterations << " iterations over " << n_unpaired
              << " unpaired + " << n_paired << " paired images\n";
    const fs::path final_ckpt = train(cfg, paths, out, resume);
    std::cout << "train: final checkpoint " << final_ckpt.string() << "\n";
    return 0;
}

int run_generator_over_dir(const char* verb, const fs::path& ckpt_path, const fs::path& in_dir,
                           const fs::path& out_dir, int image_size, bool dehaze_direction) {
    TrainingNets nets = load_nets(ckpt_path);
    const Generator& g = dehaze_direction ? nets.g_dehaze : nets.g_addhaze;

    const auto files = list_images(in_dir);
    fs::create_directories(out_dir);
    NoGradGuard guard;
    for (const fs::path& file : files) {
        const LoadedImage loaded = load_image_tensor(file, image_size);
        write_image(out_dir / file.filename(), tensor_to_image(g.forward(loaded.tensor)));
    }
    std::cout << verb << ": " << files.size() << " images -> " << out_dir.string() << "\n";
    return 0;
}

// One TSV row per image plus a final "mean" row, shared by both evaluate
// modes.
struct MetricRows {
    std::string tsv = "name\tpsnr\tssim\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int count = 0;

    void add(const std::string& name, double p, double s) {
        tsv += cat(name, "\t", format_double(p), "\t", format_double(s), "\n");
        psnr_sum += p;
        ssim_sum += s;
        ++count;
    }
    double mean_psnr() const { return psnr_sum / count; }
    double mean_ssim() const { return ssim_sum / count; }
    void finish() {
        tsv += cat("mean\t", format_double(mean_psnr()), "\t", format_double(mean_ssim()), "\n");
    }
};

int run_evaluate(const fs::path& results, const fs::path& truth, const std::string& out_path) {
    const auto files = list_images(results);
    check(!files.empty(), "evaluate: no images under ", results.string());

    MetricRows rows;
    for (const fs::path& file : files) {
        const fs::path other = truth / file.filename();
        require(fs::exists(other), "evaluate: no ground truth for ", file.filename().string(),
                " under ", truth.string());
        const ImageBuffer a = read_image(file);
        const ImageBuffer b = read_image(other);
        check(a.width == b.width && a.height == b.height && a.channels == b.channels,
              "evaluate: dimension mismatch for ", file.filename().string());
        rows.add(file.filename().string(), psnr(a, b), ssim(a, b));
    }
    rows.finish();
    write_text(out_path, rows.tsv);
    if (!out_path.empty())
        std::cout << "evaluate: mean psnr " << format_double(rows.mean_psnr()) << " dB, mean ssim "
                  << format_double(rows.mean_ssim()) << " over " << rows.count << " images\n";
    return 0;
}

int run_evaluate_cycle(const RunConfig& config, const fs::path& ckpt_path, const fs::path& in_dir,
                       const std::string& out_path) {
    TrainingNets nets = load_nets(ckpt_path);
    const auto files = list_images(in_dir);
    check(!files.empty(), "evaluate: no images under ", in_dir.string());

    MetricRows rows;
    NoGradGuard guard;
    for (const fs::path& file : files) {
        // Round trip through both generators, scored against the image that
        // entered the cycle (after the same resize the generators see).
        const LoadedImage loaded = load_image_tensor(file, config.image_size);
        const Tensor reconstructed = nets.g_addhaze.forward(nets.g_dehaze.forward(loaded.tensor));
        const ImageBuffer recon_image = tensor_to_image(reconstructed);
        rows.add(file.filename().string(), psnr(recon_image, loaded.image),
                 ssim(recon_image, loaded.image));
    }
    rows.finish();
    write_text(out_path, rows.tsv);
    if (!out_path.empty())
        std::cout << "evaluate --cycle: mean psnr " << format_double(rows.mean_psnr())
                  << " dB, mean ssim " << format_double(rows.mean_ssim()) << " over " << rows.count
                  << " images\n";
    return 0;
}

int run_gradcheck(std::uint64_t seed, const std::string& out_path) {
    const std::vector<GradCheckResult> results = run_gradient_checks(seed);
    std::string tsv = "name\tmax_error\ttolerance\telements\tskipped\tstatus\n";
    std::vector<std::string> failures;
    for (const GradCheckResult& r : results) {
        tsv += cat(r.name, "\t", format_double(r.max_error), "\t", format_double(r.tolerance),
                   "\t", r.elements, "\t", r.skipped, "\t", r.passed ? "pass" : "FAIL", "\n");
        if (!r.passed)
            failures.push_back(r.name);
    }
    write_text(out_path, tsv);
    std::cout << "gradcheck: " << results.size() - failures.size() << "/" << results.size()
              << " checks passed\n";
    if (!failures.empty()) {
        std::string names;
        for (const std::string& name : failures)
            names += (names.empty() ? "" : ", ") + name;
        throw RuntimeError(cat("gradcheck: analytic and numeric gradients disagree for: ", names));
    }
    return 0;
}

int run_inspect(const fs::path& ckpt_path, const std::string& out_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::string tsv = "kind\tname\tvalue\n";
    for (const auto& [name, blob] : ckpt.tensors)
        tsv += cat("tensor\t", name, "\t", blob.shape.str(), "\n");
    for (const auto& [name, values] : ckpt.arrays)
        tsv += cat("array\t", name, "\t", values.size(), "\n");
    for (const auto& [name, value] : ckpt.scalars)
        tsv += cat("scalar\t", name, "\t", value, "\n");
    tsv += cat("rng\tengine\t", ckpt.rng_state.size(), " chars\n");
    write_text(out_path, tsv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cycle-structured image dehazing: haze synthesis, training, inference, metrics"};
    app.require_subcommand(1);
    int exit_code = 0;

    // synthesize
    CommonOpts syn_common;
    fs::path syn_images, syn_depths, syn_out;
    int syn_size = 0;
    CLI::App* syn = app.add_subcommand(
        "synthesize", "render a paired hazy/clean set from clean images and depth maps");
    syn->add_option("--images", syn_images, "directory of clean RGB images")->required();
    syn->add_option("--depths", syn_depths, "directory of depth maps (<stem>.pfm or .pgm)")
        ->required();
    syn->add_option("--out", syn_out, "output directory (hazy/, clean/, manifest.tsv)")
        ->required();
    syn->add_option("--size", syn_size, "resize pairs to size x size, 0 keeps native dims");
    add_common(syn, syn_common);
    syn->callback([&] {
        exit_code = run_synthesize(resolve_config(syn_common), syn_images, syn_depths, syn_out,
                                   syn_size);
    });

    // refine-depth
    CommonOpts ref_common;
    fs::path ref_depth, ref_guide, ref_out;
    CLI::App* ref = app.add_subcommand(
        "refine-depth", "snap a depth map to the color edges of its image (normalizes, then "
                        "solves the soft matting system)");
    ref->add_option("--depth", ref_depth, "depth map (.pfm or .pgm)")->required();
    ref->add_option("--guide", ref_guide, "the RGB image the depth belongs to")->required();
    ref->add_option("--out", ref_out, "output depth file (.pfm or .pgm)")->required();
    add_common(ref, ref_common);
    ref->callback([&] {
        exit_code = run_refine_depth(resolve_config(ref_common), ref_depth, ref_guide, ref_out);
    });

    // build-matting-cache
    CommonOpts bmc_common;
    fs::path bmc_images;
    std::string bmc_out;
    CLI::App* bmc = app.add_subcommand(
        "build-matting-cache",
        "precompute matting Laplacians for a training image directory");
    bmc->add_option("--images", bmc_images, "directory of RGB images")->required();
    bmc->add_option("--out", bmc_out,
                    "cache directory (default: the HAZEFORGE_CACHE environment variable)");
    add_common(bmc, bmc_common);
    bmc->callback([&] {
        exit_code = run_build_matting_cache(resolve_config(bmc_common), bmc_images, bmc_out);
    });

    // train
    CommonOpts train_common;
    fs::path train_data, train_out, train_resume;
    CLI::App* trn = app.add_subcommand(
        "train", "run the alternating unpaired/paired training loop");
    trn->add_option("--data", train_data,
                    "dataset root (unpaired/trainA, unpaired/trainB, paired/hazy, paired/clean)")
        ->required();
    trn->add_option("--out", train_out, "run directory for logs and checkpoints")->required();
    trn->add_option("--resume", train_resume, "checkpoint to continue from");
    add_common(trn, train_common);
    trn->callback([&] {
        exit_code = run_train(resolve_config(train_common), train_data, train_out, train_resume);
    });

    // dehaze / addhaze
    CommonOpts deh_common, adh_common;
    fs::path deh_ckpt, deh_in, deh_out, adh_ckpt, adh_in, adh_out;
    CLI::App* deh = app.add_subcommand("dehaze", "run the dehazing generator over a directory");
    deh->add_option("--checkpoint", deh_ckpt, "training checkpoint (.scgn)")->required();
    deh->add_option("--in", deh_in, "directory of hazy images")->required();
    deh->add_option("--out", deh_out, "output directory, filenames preserved")->required();
    add_common(deh, deh_common);
    deh->callback([&] {
        exit_code = run_generator_over_dir("dehaze", deh_ckpt, deh_in, deh_out,
                                           resolve_config(deh_common).image_size, true);
    });

    CLI::App* adh = app.add_subcommand("addhaze", "run the haze-adding generator over a directory");
    adh->add_option("--checkpoint", adh_ckpt, "training checkpoint (.scgn)")->required();
    adh->add_option("--in", adh_in, "directory of clean images")->required();
    adh->add_option("--out", adh_out, "output directory, filenames preserved")->required();
    add_common(adh, adh_common);
    adh->callback([&] {
        exit_code = run_generator_over_dir("addhaze", adh_ckpt, adh_in, adh_out,
                                           resolve_config(adh_common).image_size, false);
    });

    // evaluate
    CommonOpts eval_common;
    fs::path eval_results, eval_truth, eval_ckpt, eval_in;
    std::string eval_out;
    bool eval_cycle = false;
    CLI::App* evl = app.add_subcommand(
        "evaluate", "PSNR/SSIM per image plus the mean, as TSV; --cycle scores the round trip "
                    "dehaze -> addhaze against the input");
    evl->add_option("--results", eval_results, "directory of images to score");
    evl->add_option("--truth", eval_truth, "directory of ground-truth images, same filenames");
    evl->add_flag("--cycle", eval_cycle, "cycle-reconstruction mode");
    evl->add_option("--checkpoint", eval_ckpt, "training checkpoint (--cycle only)");
    evl->add_option("--in", eval_in, "directory of hazy images (--cycle only)");
    evl->add_option("--out", eval_out, "TSV output file (default: stdout)");
    add_common(evl, eval_common);
    evl->callback([&] {
        const RunConfig config = resolve_config(eval_common);
        if (eval_cycle) {
            check(!eval_ckpt.empty() && !eval_in.empty(),
                  "evaluate --cycle needs --checkpoint and --in");
            exit_code = run_evaluate_cycle(config, eval_ckpt, eval_in, eval_out);
        } else {
            check(!eval_results.empty() && !eval_truth.empty(),
                  "evaluate needs --results and --truth (or --cycle)");
            exit_code = run_evaluate(eval_results, eval_truth, eval_out);
        }
    });

    // gradcheck
    CommonOpts gc_common;
    std::string gc_out;
    CLI::App* gc = app.add_subcommand(
        "gradcheck", "verify every analytic gradient against finite differences");
    gc->add_option("--out", gc_out, "TSV output file (default: stdout)");
    add_common(gc, gc_common);
    gc->callback([&] {
        resolve_config(gc_common); // rejects bad --config/--set even though only the seed matters
        exit_code = run_gradcheck(gc_common.seed.value_or(42), gc_out);
    });

    // inspect-checkpoint
    CommonOpts ins_common;
    fs::path ins_path;
    std::string ins_out;
    CLI::App* ins = app.add_subcommand(
        "inspect-checkpoint", "list a checkpoint's tensors, arrays, scalars, and RNG state");
    ins->add_option("checkpoint", ins_path, "checkpoint file (.scgn)")->required();
    ins->add_option("--out", ins_out, "TSV output file (default: stdout)");
    add_common(ins, ins_common);
    ins->callback([&] {
        resolve_config(ins_common);
        exit_code = run_inspect(ins_path, ins_out);
    });

    try {
        app.parse(argc, argv);
        return exit_code;
    } catch (const CLI::ParseError& e) {
        // CLI11 prints contextual help for --help (exit 0); anything else is
        // a rejected invocation.
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const RuntimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
