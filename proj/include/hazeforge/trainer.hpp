#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "hazeforge/checkpoint.hpp"
#include "hazeforge/dataset.hpp"
#include "hazeforge/losses.hpp"
#include "hazeforge/matting.hpp"
#include "hazeforge/networks.hpp"

// The training loop and its moving parts: Adam, the learning-rate schedule,
// the two step kinds (unpaired cycle steps and paired supervised steps), and
// checkpoint plumbing. Steps alternate U,P,U,P,... strictly; within a step
// the discriminators update first on detached fakes, then both generators
// update jointly. Everything is single-threaded and seeded, so a (seed,
// config, data) triple pins every parameter bit.

namespace hazeforge {

// Whether the photorealism term constrains both generated images of an
// unpaired step or only the synthetic-haze direction.
enum class PhotorealismMode { both_directions, backward_only };

struct TrainConfig {
    std::int64_t iterations = 500;
    int image_size = 32;
    float lr = 2e-5f;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
    int epochs_constant = 50;
    int epochs_decay = 50;
    // Iterations per schedule epoch; 0 spreads epochs_constant+epochs_decay
    // evenly over the whole run so lr reaches 0 on the last iteration.
    int iterations_per_epoch = 0;
    std::uint64_t seed = 0;
    int batch_size = 1;
    LossWeights weights;
    PhotorealismMode photorealism_mode = PhotorealismMode::both_directions;
    int checkpoint_every = 100;
    int base_channels = 16;
    int res_blocks = 2;
    float init_std = 0.02f;
    double matting_eps = 1e-7;
    int matting_radius = 1;
};

// Throws ContractError on out-of-range fields (lr <= 0, betas outside [0,1),
// image size not a positive multiple of 4, and so on).
void validate_train_config(const TrainConfig& cfg);

// Constant lr for epochs_constant epochs, then linear decay to exactly 0 at
// epochs_constant + epochs_decay. Never negative, never increasing.
float lr_schedule(const TrainConfig& cfg, int epoch);

// Adam with bias correction. Moment arrays appear zeroed the first time a
// parameter is seen; the step counter is shared by every parameter in a call.
struct AdamState {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    std::int64_t step = 0;
    std::map<std::string, std::pair<Eigen::ArrayXf, Eigen::ArrayXf>, std::less<>> moments;
};

// One update over every parameter in the set, then zeroes their grads.
// Every parameter must carry a gradient (missing ones throw, nothing is
// half-applied).
void adam_step(ParameterSet& params, AdamState& state, float lr_now);

// The four networks of the cycle. Construction order (dehaze, addhaze,
// clean judge, hazy judge) fixes how many rng draws each consumes, so a seed
// pins all four initializations.
struct TrainingNets {
    Generator g_dehaze;
    Generator g_addhaze;
    Discriminator d_clean;
    Discriminator d_hazy;
};

TrainingNets make_training_nets(const TrainConfig& cfg, std::mt19937_64& rng);

// Shared-handle views used for the joint generator update and for snapshots.
// Names get "g_dehaze/"-style prefixes so the two generators cannot collide.
ParameterSet generator_parameters(TrainingNets& nets);
ParameterSet all_parameters(TrainingNets& nets);

void zero_all_grads(TrainingNets& nets);

// FNV-1a over names and raw value bytes in order. Used to assert that a
// sub-update left a frozen network untouched.
std::uint64_t hash_parameters(const ParameterSet& params);

// One Adam state per update target: the generator pair updates jointly.
struct Optimizers {
    AdamState gen;
    AdamState d_clean;
    AdamState d_hazy;
};

Optimizers make_optimizers(const TrainConfig& cfg);

// Every term of one iteration. Terms a step kind does not compute stay
// nullopt and print as "-" in the log. g_total is the scalar the joint
// generator update minimized; it reproduces compose_unpaired/compose_paired
// over the logged components.
struct LossReport {
    std::int64_t iteration = 0;
    char phase = 'U';
    float lr = 0.0f;
    std::optional<float> d_clean, d_hazy;
    std::optional<float> adv_forward, adv_backward;
    std::optional<float> cycle_forward, cycle_backward;
    std::optional<float> photo_forward, photo_backward;
    std::optional<float> paired_adv_clean, paired_adv_hazy;
    std::optional<float> paired_l1_clean, paired_l1_hazy;
    std::optional<float> g_total;

    // False as soon as any populated term is non-finite; the loop then dumps
    // a crash checkpoint instead of applying further updates.
    bool finite() const;
};

std::string loss_log_header();
std::string loss_log_row(const LossReport& report);
LossReport parse_loss_log_row(const std::string& row);

// One unpaired iteration: x is a hazy batch, y an unrelated clean batch.
// Updates d_clean on (y, dehaze(x)), d_hazy on (x, addhaze(y)), then both
// generators jointly on adversarial + cycle + photorealism terms. m_x / m_y
// are the matting Laplacians of the batch images on their [0,1]
// representation; they are consulted only when lambda_photo is nonzero, and
// m_x only in both_directions mode.
LossReport train_step_unpaired(const Tensor& x, const Tensor& y, const SparseMatrixD& m_x,
                               const SparseMatrixD& m_y, TrainingNets& nets, Optimizers& opt,
                               const TrainConfig& cfg, float lr_now);

// One paired iteration over an aligned (hazy x, clean y) pair: both
// discriminators update against the ground truths, then the generators
// update jointly on weighted adversarial + L1 terms in both directions.
LossReport train_step_paired(const Tensor& x, const Tensor& y, TrainingNets& nets,
                             Optimizers& opt, const TrainConfig& cfg, float lr_now);

// Memoizing store of matting Laplacians keyed by guide content and
// parameters. When the HAZEFORGE_CACHE environment variable names a
// directory, entries persist there across runs.
class MattingCache {
  public:
    MattingCache(double eps, int window_radius);

    const SparseMatrixD& get(const ImageBuffer& guide);

  private:
    double eps_;
    int radius_;
    std::optional<std::filesystem::path> disk_dir_;
    std::map<std::string, SparseMatrixD, std::less<>> by_key_;
};

// Full training state <-> checkpoint. Snapshots carry the four networks,
// all three Adam states, the completed-iteration counter, the architecture
// fields needed to rebuild the networks, and the RNG engine.
Checkpoint snapshot_training(TrainingNets& nets, const Optimizers& opt, std::int64_t iteration,
                             const std::mt19937_64& rng);
void restore_training(const Checkpoint& ckpt, TrainingNets& nets, Optimizers& opt,
                      std::int64_t& iteration, std::mt19937_64& rng);

// Runs the full loop: loads the datasets at cfg.image_size, initializes (or
// resumes) the networks, alternates unpaired/paired steps, appends one TSV
// row per iteration to out_dir/training_log.tsv, writes periodic checkpoints
// plus checkpoint_final.scgn, and returns the final checkpoint path. With
// lambda_paired_adv = lambda_paired_l1 = 0 the paired phase is dropped and
// every iteration is unpaired.
std::filesystem::path train(const TrainConfig& cfg, const DatasetPaths& data,
                            const std::filesystem::path& out_dir,
                            const std::filesystem::path& resume_from = {});

} // namespace hazeforge
