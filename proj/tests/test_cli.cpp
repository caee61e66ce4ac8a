// End-to-end tests of the command-line binary. Each test shells out to the
// real executable (path baked in as HF_CLI_PATH), so argument parsing, config
// resolution, exit codes, and output formats are all exercised exactly as a
// user sees them.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "hazeforge/common.hpp"
#include "hazeforge/config.hpp"
#include "hazeforge/dataset.hpp"
#include "hazeforge/image.hpp"

#include "oracles.hpp"

using namespace hazeforge;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path temp_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "hazeforge_cli_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Runs the binary with the given arguments, capturing stdout and stderr.
CliResult run_cli(const std::string& args) {
    static int invocation = 0;
    const fs::path dir = fs::temp_directory_path() / "hazeforge_cli_tests";
    fs::create_directories(dir);
    const fs::path out_file = dir / cat("stdout_", invocation, ".txt");
    const fs::path err_file = dir / cat("stderr_", invocation, ".txt");
    ++invocation;

    const std::string cmd = cat(HF_CLI_PATH, " ", args, " >'", out_file.string(), "' 2>'",
                                err_file.string(), "'");
    const int status = std::system(cmd.c_str());

    CliResult r;
    r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    r.out = slurp_file(out_file);
    r.err = slurp_file(err_file);
    return r;
}

// Splits TSV text into rows of cells, dropping blank and comment lines.
std::vector<std::vector<std::string>> parse_tsv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, '\t'))
            cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

void write_images(const fs::path& dir, int count, int size, unsigned seed_base) {
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i)
        write_image(dir / cat("im", i, ".png"), oracle::synthetic_rgb(size, size, seed_base + i));
}

// Gray ramp depth maps named to pair with write_images output.
void write_depths(const fs::path& dir, int count, int size) {
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        ImageBuffer d = ImageBuffer::create(size, size, 1);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                d.at(x, y, 0) = float(x + y + 3 * i) / float(2 * size);
        write_image(dir / cat("im", i, ".pgm"), d);
    }
}

// Flags shared by the training-related tests: small nets, few iterations.
const char* kTinyTrainFlags = "--set iterations=8 --set checkpoint_every=4 "
                              "--set base_channels=4 --set res_blocks=1 --set image_size=16";

// One dataset tree plus one completed training run, built on first use and
// shared by every test that only reads from it.
struct TrainedRun {
    fs::path data;
    fs::path out;
    fs::path final_ckpt;
    fs::path mid_ckpt;
};

const TrainedRun& trained_run() {
    static const TrainedRun run = [] {
        TrainedRun r;
        r.data = temp_dir("shared_data");
        const DatasetPaths paths = default_data_layout(r.data);
        write_images(paths.unpaired_hazy, 3, 16, 100);
        write_images(paths.unpaired_clean, 3, 16, 200);
        write_images(paths.paired_hazy, 2, 16, 300);
        write_images(paths.paired_clean, 2, 16, 400);

        r.out = temp_dir("shared_run");
        const CliResult res = run_cli(cat("train --data '", r.data.string(), "' --out '",
                                          r.out.string(), "' --seed 3 ", kTinyTrainFlags));
        EXPECT_EQ(res.exit_code, 0) << res.err;
        r.final_ckpt = r.out / "checkpoint_final.scgn";
        r.mid_ckpt = r.out / "checkpoint_000004.scgn";
        EXPECT_TRUE(fs::exists(r.final_ckpt));
        EXPECT_TRUE(fs::exists(r.mid_ckpt));
        return r;
    }();
    return run;
}

} // namespace

TEST(CliBasics, HelpExitsZeroAndListsSubcommands) {
    const CliResult r = run_cli("--help");
    EXPECT_EQ(r.exit_code, 0);
    for (const char* name : {"synthesize", "refine-depth", "build-matting-cache", "train",
                             "dehaze", "addhaze", "evaluate", "gradcheck", "inspect-checkpoint"})
        EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST(CliBasics, MissingSubcommandIsAUsageError) {
    const CliResult r = run_cli("");
    EXPECT_EQ(r.exit_code, 1);
}

TEST(CliBasics, UnknownFlagIsAUsageError) {
    EXPECT_EQ(run_cli("dehaze --bogus-flag").exit_code, 1);
}

TEST(CliBasics, UnknownConfigKeyIsAValidationError) {
    const CliResult r = run_cli("gradcheck --set bogus_key=1");
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("bogus_key"), std::string::npos);
    EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << "diagnostic should be one line";
}

TEST(CliBasics, MissingInputDirectoryIsARuntimeError) {
    const CliResult r = run_cli("evaluate --results /nonexistent_a --truth /nonexistent_b");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(CliEvaluate, IdenticalDirectoriesScorePerfectly) {
    const fs::path dir = temp_dir("eval_identical");
    write_images(dir, 3, 16, 10);

    const CliResult r = run_cli(cat("evaluate --results '", dir.string(), "' --truth '",
                                    dir.string(), "'"));
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const auto rows = parse_tsv(r.out);
    ASSERT_EQ(rows.size(), 5u); // header, three images, mean
    EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "psnr", "ssim"}));
    EXPECT_EQ(rows.back(), (std::vector<std::string>{"mean", "99", "1"}));
}

TEST(CliEvaluate, WritesTsvToFileWhenAsked) {
    const fs::path dir = temp_dir("eval_to_file");
    write_images(dir / "a", 2, 16, 20);
    write_images(dir / "b", 2, 16, 30);

    const fs::path tsv = dir / "scores.tsv";
    const CliResult r = run_cli(cat("evaluate --results '", (dir / "a").string(), "' --truth '",
                                    (dir / "b").string(), "' --out '", tsv.string(), "'"));
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const auto rows = parse_tsv(slurp_file(tsv));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows.back()[0], "mean");
    // Different images: finite PSNR, SSIM below 1.
    EXPECT_LT(std::stod(rows[1][1]), 99.0);
    EXPECT_LT(std::stod(rows[1][2]), 1.0);
}

TEST(CliSynthesize, WritesPairsManifestAndIsDeterministic) {
    const fs::path dir = temp_dir("synth");
    write_images(dir / "imgs", 3, 16, 40);
    write_depths(dir / "depths", 3, 16);

    const std::string args = cat("synthesize --images '", (dir / "imgs").string(),
                                 "' --depths '", (dir / "depths").string(), "' --seed 5");
    ASSERT_EQ(run_cli(cat(args, " --out '", (dir / "out1").string(), "'")).exit_code, 0);
    ASSERT_EQ(run_cli(cat(args, " --out '", (dir / "out2").string(), "'")).exit_code, 0);

    const auto rows = parse_tsv(slurp_file(dir / "out1" / "manifest.tsv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "beta", "atmosphere", "seed", "status"}));
    for (size_t i = 1; i < rows.size(); ++i)
        EXPECT_EQ(rows[i][4], "ok");

    for (int i = 0; i < 3; ++i) {
        const std::string leaf = cat("im", i, ".png");
        EXPECT_EQ(slurp_file(dir / "out1" / "hazy" / leaf),
                  slurp_file(dir / "out2" / "hazy" / leaf))
            << leaf;
        EXPECT_TRUE(fs::exists(dir / "out1" / "clean" / leaf));
    }
}

TEST(CliSynthesize, RecordsPerFileFailuresAndKeepsGoing) {
    const fs::path dir = temp_dir("synth_fail");
    write_images(dir / "imgs", 2, 16, 50);
    write_depths(dir / "depths", 2, 16);
    fs::remove(dir / "depths" / "im1.pgm"); // leave one image without a depth map

    const CliResult r = run_cli(cat("synthesize --images '", (dir / "imgs").string(),
                                    "' --depths '", (dir / "depths").string(), "' --out '",
                                    (dir / "out").string(), "' --seed 5"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("1 pairs written, 1 failed"), std::string::npos) << r.out;

    const auto rows = parse_tsv(slurp_file(dir / "out" / "manifest.tsv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][4], "ok");
    EXPECT_EQ(rows[2][4].substr(0, 6), "error:");
    EXPECT_TRUE(fs::exists(dir / "out" / "hazy" / "im0.png"));
    EXPECT_FALSE(fs::exists(dir / "out" / "hazy" / "im1.png"));
}

TEST(CliRefineDepth, WritesADepthFileOfMatchingSize) {
    const fs::path dir = temp_dir("refine");
    write_images(dir / "imgs", 1, 16, 60);
    write_depths(dir / "depths", 1, 16);

    const fs::path out = dir / "refined.pgm";
    const CliResult r = run_cli(cat("refine-depth --depth '",
                                    (dir / "depths" / "im0.pgm").string(), "' --guide '",
                                    (dir / "imgs" / "im0.png").string(), "' --out '",
                                    out.string(), "'"));
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const ImageBuffer refined = read_image(out);
    EXPECT_EQ(refined.width, 16);
    EXPECT_EQ(refined.height, 16);
    EXPECT_EQ(refined.channels, 1);
}

TEST(CliMattingCache, FlagEnvAndNeither) {
    const fs::path dir = temp_dir("mcache");
    write_images(dir / "imgs", 2, 16, 70);

    const std::string base = cat("build-matting-cache --images '", (dir / "imgs").string(),
                                 "' --set image_size=16");
    const CliResult with_flag = run_cli(cat(base, " --out '", (dir / "via_flag").string(), "'"));
    ASSERT_EQ(with_flag.exit_code, 0) << with_flag.err;
    const auto rows = parse_tsv(with_flag.out);
    ASSERT_GE(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "key"}));
    EXPECT_TRUE(fs::exists(dir / "via_flag" / (rows[1][1] + ".mlap")));

    ASSERT_EQ(setenv("HAZEFORGE_CACHE", (dir / "via_env").string().c_str(), 1), 0);
    const CliResult with_env = run_cli(base);
    unsetenv("HAZEFORGE_CACHE");
    ASSERT_EQ(with_env.exit_code, 0) << with_env.err;
    EXPECT_TRUE(fs::exists(dir / "via_env" / (rows[1][1] + ".mlap")));

    EXPECT_EQ(run_cli(base).exit_code, 1);
}

TEST(CliTrain, ProducesLogCheckpointsAndConfigDump) {
    const TrainedRun& run = trained_run();

    const auto log_rows = parse_tsv(slurp_file(run.out / "training_log.tsv"));
    ASSERT_EQ(log_rows.size(), 9u); // header plus eight iterations
    EXPECT_EQ(log_rows[0][0], "iteration");
    EXPECT_EQ(log_rows[1][0], "1");
    EXPECT_EQ(log_rows[1][1], "U");
    EXPECT_EQ(log_rows[2][1], "P");

    // The effective config is recorded next to the run and reparses cleanly.
    const std::string dumped = slurp_file(run.out / "config.cfg");
    const RunConfig config = RunConfig::parse(dumped);
    EXPECT_EQ(config.seed, 3u);
    EXPECT_EQ(config.base_channels, 4);
    EXPECT_EQ(config.dump(), dumped);
}

TEST(CliTrain, SameSeedIsByteIdenticalAndResumeMatches) {
    const TrainedRun& run = trained_run();

    const fs::path rerun = temp_dir("train_rerun");
    ASSERT_EQ(run_cli(cat("train --data '", run.data.string(), "' --out '", rerun.string(),
                          "' --seed 3 ", kTinyTrainFlags))
                  .exit_code,
              0);
    EXPECT_EQ(slurp_file(run.final_ckpt), slurp_file(rerun / "checkpoint_final.scgn"));

    const fs::path resumed = temp_dir("train_resumed");
    ASSERT_EQ(run_cli(cat("train --data '", run.data.string(), "' --out '", resumed.string(),
                          "' --seed 3 --resume '", run.mid_ckpt.string(), "' ", kTinyTrainFlags))
                  .exit_code,
              0);
    EXPECT_EQ(slurp_file(run.final_ckpt), slurp_file(resumed / "checkpoint_final.scgn"));
}

TEST(CliTrain, DerivesIterationsFromEpochsAndDatasetSize) {
    const TrainedRun& run = trained_run();

    // 3 unpaired + 2 paired images, one constant plus one decay epoch.
    const fs::path out = temp_dir("train_derived");
    const CliResult r = run_cli(cat(
        "train --data '", run.data.string(), "' --out '", out.string(),
        "' --seed 3 --set epochs_constant=1 --set epochs_decay=1 "
        "--set base_channels=4 --set res_blocks=1 --set image_size=16 --set checkpoint_every=100"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("10 iterations over 3 unpaired + 2 paired"), std::string::npos) << r.out;
    EXPECT_EQ(parse_tsv(slurp_file(out / "training_log.tsv")).size(), 11u);
}

TEST(CliTrain, ZeroPairedWeightsDropThePairedPhase) {
    const TrainedRun& run = trained_run();

    const fs::path out = temp_dir("train_unpaired_only");
    const CliResult r = run_cli(cat(
        "train --data '", run.data.string(), "' --out '", out.string(),
        "' --seed 3 --set epochs_constant=1 --set epochs_decay=1 "
        "--set lambda_paired_adv=0 --set lambda_paired_l1=0 "
        "--set base_channels=4 --set res_blocks=1 --set image_size=16 --set checkpoint_every=100"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("6 iterations over 3 unpaired + 0 paired"), std::string::npos) << r.out;

    const auto rows = parse_tsv(slurp_file(out / "training_log.tsv"));
    ASSERT_EQ(rows.size(), 7u);
    for (size_t i = 1; i < rows.size(); ++i)
        EXPECT_EQ(rows[i][1], "U") << "row " << i;
}

TEST(CliInference, DehazeAndAddhazePreserveFilenames) {
    const TrainedRun& run = trained_run();
    const fs::path dir = temp_dir("inference");

    const DatasetPaths paths = default_data_layout(run.data);
    const CliResult deh = run_cli(cat("dehaze --checkpoint '", run.final_ckpt.string(),
                                      "' --in '", paths.unpaired_hazy.string(), "' --out '",
                                      (dir / "dehazed").string(), "' --set image_size=16"));
    ASSERT_EQ(deh.exit_code, 0) << deh.err;
    for (const fs::path& f : list_images(paths.unpaired_hazy)) {
        const fs::path produced = dir / "dehazed" / f.filename();
        ASSERT_TRUE(fs::exists(produced)) << produced;
        const ImageBuffer img = read_image(produced);
        EXPECT_EQ(img.width, 16);
        EXPECT_EQ(img.channels, 3);
    }

    const CliResult adh = run_cli(cat("addhaze --checkpoint '", run.final_ckpt.string(),
                                      "' --in '", paths.unpaired_clean.string(), "' --out '",
                                      (dir / "rehazed").string(), "' --set image_size=16"));
    ASSERT_EQ(adh.exit_code, 0) << adh.err;
    EXPECT_EQ(list_images(dir / "rehazed").size(), 3u);
}

TEST(CliInference, CycleEvaluationScoresTheRoundTrip) {
    const TrainedRun& run = trained_run();
    const DatasetPaths paths = default_data_layout(run.data);

    const CliResult r = run_cli(cat("evaluate --cycle --checkpoint '", run.final_ckpt.string(),
                                    "' --in '", paths.unpaired_hazy.string(),
                                    "' --set image_size=16"));
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const auto rows = parse_tsv(r.out);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows.back()[0], "mean");
    const double mean_psnr = std::stod(rows.back()[1]);
    EXPECT_GT(mean_psnr, 0.0);
    EXPECT_LT(mean_psnr, 99.0); // a barely trained cycle is far from lossless

    // Missing either flag is rejected up front.
    EXPECT_EQ(run_cli("evaluate --cycle").exit_code, 1);
}

TEST(CliInspect, ListsTensorsArraysScalarsAndRng) {
    const TrainedRun& run = trained_run();

    const CliResult r = run_cli(cat("inspect-checkpoint '", run.final_ckpt.string(), "'"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("tensor\tg_dehaze/enc1.w\t(4,3,7,7)"), std::string::npos);
    EXPECT_NE(r.out.find("tensor\td_hazy/l5.b\t"), std::string::npos);
    EXPECT_NE(r.out.find("array\tadam_gen/"), std::string::npos);
    EXPECT_NE(r.out.find("scalar\titeration\t8"), std::string::npos);
    EXPECT_NE(r.out.find("rng\tengine\t"), std::string::npos);

    EXPECT_EQ(run_cli("inspect-checkpoint /nonexistent.scgn").exit_code, 2);
}

TEST(CliGradcheck, PassesOnACorrectBuild) {
    const CliResult r = run_cli("gradcheck --seed 42");
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const auto rows = parse_tsv(r.out);
    ASSERT_GE(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "max_error", "tolerance", "elements",
                                                 "skipped", "status"}));
    for (size_t i = 1; i + 1 < rows.size(); ++i)
        EXPECT_EQ(rows[i][5], "pass") << rows[i][0];
}

TEST(CliConfig, FileSetAndSeedPrecedence) {
    const TrainedRun& run = trained_run();
    const fs::path dir = temp_dir("config_precedence");

    // File sets seed and channels; --set overrides channels; --seed overrides
    // the file's seed. The recorded effective config shows the winners.
    std::ofstream(dir / "run.cfg") << "seed=11\nbase_channels=8\nres_blocks=1\nimage_size=16\n"
                                   << "iterations=2\ncheckpoint_every=100\n";
    const CliResult r = run_cli(cat("train --data '", run.data.string(), "' --out '",
                                    (dir / "out").string(), "' --config '",
                                    (dir / "run.cfg").string(),
                                    "' --set base_channels=4 --seed 12"));
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const RunConfig effective = RunConfig::parse(slurp_file(dir / "out" / "config.cfg"));
    EXPECT_EQ(effective.seed, 12u);
    EXPECT_EQ(effective.base_channels, 4);
    EXPECT_EQ(effective.res_blocks, 1);
    EXPECT_EQ(effective.iterations, 2);
}
