#include "hazeforge/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace hazeforge {

namespace fs = std::filesystem;

void validate_train_config(const TrainConfig& cfg) {
    check(cfg.iterations > 0, "train config: iterations must be positive, got ", cfg.iterations);
    check(cfg.image_size > 0 && cfg.image_size % 4 == 0,
          "train config: image_size must be a positive multiple of 4, got ", cfg.image_size);
    check(cfg.lr > 0.0f && std::isfinite(cfg.lr), "train config: lr must be positive, got ",
          cfg.lr);
    check(cfg.adam_beta1 >= 0.0f && cfg.adam_beta1 < 1.0f, "train config: adam_beta1 must lie in [0,1), got ",
          cfg.adam_beta1);
    check(cfg.adam_beta2 >= 0.0f && cfg.adam_beta2 < 1.0f, "train config: adam_beta2 must lie in [0,1), got ",
          cfg.adam_beta2);
    check(cfg.adam_eps > 0.0f, "train config: adam_eps must be positive, got ", cfg.adam_eps);
    check(cfg.epochs_constant >= 0 && cfg.epochs_decay >= 0 &&
              cfg.epochs_constant + cfg.epochs_decay >= 1,
          "train config: epochs_constant (", cfg.epochs_constant, ") + epochs_decay (",
          cfg.epochs_decay, ") must cover at least one epoch");
    check(cfg.iterations_per_epoch >= 0, "train config: iterations_per_epoch must be >= 0, got ",
          cfg.iterations_per_epoch);
    check(cfg.batch_size == 1, "train config: only batch size 1 is supported, got ",
          cfg.batch_size);
    const LossWeights& w = cfg.weights;
    for (float lambda : {w.lambda_cycle, w.lambda_photo, w.lambda_paired_adv, w.lambda_paired_l1})
        check(lambda >= 0.0f && std::isfinite(lambda),
              "train config: loss weights must be finite and nonnegative");
    check(cfg.checkpoint_every > 0, "train config: checkpoint_every must be positive, got ",
          cfg.checkpoint_every);
    check(cfg.base_channels >= 1, "train config: base_channels must be >= 1, got ",
          cfg.base_channels);
    check(cfg.res_blocks >= 1, "train config: res_blocks must be >= 1, got ", cfg.res_blocks);
    check(cfg.init_std > 0.0f, "train config: init_std must be positive, got ", cfg.init_std);
    check(cfg.matting_eps > 0.0, "train config: matting_eps must be positive, got ",
          cfg.matting_eps);
    check(cfg.matting_radius >= 1, "train config: matting_radius must be >= 1, got ",
          cfg.matting_radius);
    check(cfg.image_size > 2 * cfg.matting_radius,
          "train config: image_size must exceed twice the matting window radius");
}

float lr_schedule(const TrainConfig& cfg, int epoch) {
    check(epoch >= 0, "lr_schedule: epoch must be nonnegative, got ", epoch);
    if (epoch < cfg.epochs_constant)
        return cfg.lr;
    const int end = cfg.epochs_constant + cfg.epochs_decay;
    if (epoch >= end)
        return 0.0f;
    return cfg.lr * static_cast<float>(end - epoch) / static_cast<float>(cfg.epochs_decay);
}

void adam_step(ParameterSet& params, AdamState& state, float lr_now) {
    check(std::isfinite(lr_now) && lr_now >= 0.0f, "adam_step: bad learning rate ", lr_now);
    // Validate every gradient before touching anything, so a missing one
    // cannot leave the set half-updated.
    for (const auto& [name, t] : params.items())
        check(t.grad().size() == t.numel(), "adam_step: parameter '", name,
              "' has no gradient");

    state.step += 1;
    const float bc1 =
        static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), state.step));
    const float bc2 =
        static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), state.step));

    for (auto& [name, t] : params.items()) {
        auto& [m, v] = state.moments[name];
        if (m.size() == 0) {
            m = Eigen::ArrayXf::Zero(t.numel());
            v = Eigen::ArrayXf::Zero(t.numel());
        }
        check(m.size() == t.numel(), "adam_step: moment arrays for '", name, "' hold ", m.size(),
              " values but the parameter has ", t.numel());
        const Eigen::ArrayXf& g = t.grad();
        m = state.beta1 * m + (1.0f - state.beta1) * g;
        v = state.beta2 * v + (1.0f - state.beta2) * g.square();
        t.values() -= lr_now * (m / bc1) / ((v / bc2).sqrt() + state.eps);
        t.zero_grad();
    }
}

TrainingNets make_training_nets(const TrainConfig& cfg, std::mt19937_64& rng) {
    const GeneratorConfig gen_cfg{cfg.base_channels, cfg.res_blocks};
    const DiscriminatorConfig disc_cfg{cfg.base_channels};
    TrainingNets nets{make_generator(gen_cfg, rng, cfg.init_std),
                      make_generator(gen_cfg, rng, cfg.init_std),
                      make_discriminator(disc_cfg, rng, cfg.init_std),
                      make_discriminator(disc_cfg, rng, cfg.init_std)};
    return nets;
}

namespace {

void add_prefixed(ParameterSet& out, const char* prefix, ParameterSet& source) {
    for (auto& [name, t] : source.items())
        out.add(cat(prefix, "/", name), t);
}

} // namespace

ParameterSet generator_parameters(TrainingNets& nets) {
    ParameterSet set;
    add_prefixed(set, "g_dehaze", nets.g_dehaze.params);
    add_prefixed(set, "g_addhaze", nets.g_addhaze.params);
    return set;
}

ParameterSet all_parameters(TrainingNets& nets) {
    ParameterSet set = generator_parameters(nets);
    add_prefixed(set, "d_clean", nets.d_clean.params);
    add_prefixed(set, "d_hazy", nets.d_hazy.params);
    return set;
}

void zero_all_grads(TrainingNets& nets) {
    for (ParameterSet* set : {&nets.g_dehaze.params, &nets.g_addhaze.params,
                              &nets.d_clean.params, &nets.d_hazy.params})
        for (auto& [name, t] : set->items())
            t.zero_grad();
}

std::uint64_t hash_parameters(const ParameterSet& params) {
    std::uint64_t h = 14695981039346656037ULL;
    const auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params.items()) {
        mix(name.data(), name.size());
        const unsigned char sep = 0;
        mix(&sep, 1);
        const Eigen::ArrayXf& v = t.values();
        mix(v.data(), static_cast<std::size_t>(v.size()) * sizeof(float));
    }
    return h;
}

Optimizers make_optimizers(const TrainConfig& cfg) {
    AdamState proto;
    proto.beta1 = cfg.adam_beta1;
    proto.beta2 = cfg.adam_beta2;
    proto.eps = cfg.adam_eps;
    return {proto, proto, proto};
}

namespace {

std::array<const std::optional<float>*, 13> report_fields(const LossReport& r) {
    return {&r.d_clean,       &r.d_hazy,         &r.adv_forward,     &r.adv_backward,
            &r.cycle_forward, &r.cycle_backward, &r.photo_forward,   &r.photo_backward,
            &r.paired_adv_clean, &r.paired_adv_hazy, &r.paired_l1_clean, &r.paired_l1_hazy,
            &r.g_total};
}

} // namespace

bool LossReport::finite() const {
    for (const std::optional<float>* field : report_fields(*this))
        if (field->has_value() && !std::isfinite(**field))
            return false;
    return true;
}

std::string loss_log_header() {
    return "iteration\tphase\tlr\td_clean\td_hazy\tadv_forward\tadv_backward\tcycle_forward"
           "\tcycle_backward\tphoto_forward\tphoto_backward\tpaired_adv_clean\tpaired_adv_hazy"
           "\tpaired_l1_clean\tpaired_l1_hazy\tg_total";
}

std::string loss_log_row(const LossReport& report) {
    std::string row = cat(report.iteration, "\t", report.phase, "\t",
                          format_double(static_cast<double>(report.lr)));
    for (const std::optional<float>* field : report_fields(report)) {
        row += '\t';
        row += field->has_value() ? format_double(static_cast<double>(**field)) : "-";
    }
    return row;
}

namespace {

float parse_log_float(const std::string& cell, const char* what) {
    try {
        std::size_t used = 0;
        const float v = std::stof(cell, &used);
        require(used == cell.size(), "loss log: trailing characters in ", what, " value '", cell,
                "'");
        return v;
    } catch (const std::logic_error&) {
        require(false, "loss log: bad ", what, " value '", cell, "'");
    }
    return 0.0f; // unreachable
}

} // namespace

LossReport parse_loss_log_row(const std::string& row) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = row.find('\t', start);
        cells.push_back(row.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos)
            break;
        start = tab + 1;
    }
    require(cells.size() == 16, "loss log: row has ", cells.size(), " columns, expected 16");

    LossReport r;
    try {
        r.iteration = std::stoll(cells[0]);
    } catch (const std::logic_error&) {
        require(false, "loss log: bad iteration value '", cells[0], "'");
    }
    require(cells[1] == "U" || cells[1] == "P", "loss log: bad phase tag '", cells[1], "'");
    r.phase = cells[1][0];
    r.lr = parse_log_float(cells[2], "lr");

    std::optional<float>* fields[] = {&r.d_clean,       &r.d_hazy,         &r.adv_forward,
                                      &r.adv_backward,  &r.cycle_forward,  &r.cycle_backward,
                                      &r.photo_forward, &r.photo_backward, &r.paired_adv_clean,
                                      &r.paired_adv_hazy, &r.paired_l1_clean, &r.paired_l1_hazy,
                                      &r.g_total};
    for (std::size_t i = 0; i < 13; ++i) {
        const std::string& cell = cells[i + 3];
        if (cell != "-")
            *fields[i] = parse_log_float(cell, "loss term");
    }
    return r;
}

namespace {

// Shared D sub-update: score the real batch and the detached fake, take one
// Adam step on the judge alone, and leave every grad in the cycle zeroed.
// A non-finite objective skips the update so the caller can dump state.
float d_objective_and_update(Discriminator& d, AdamState& state, const Tensor& real,
                             const Tensor& fake, float lr_now, TrainingNets& nets) {
    Tensor loss = lsgan_d_loss(d.forward(real), d.forward(fake.detach()));
    const float value = loss.item();
    if (!std::isfinite(value))
        return value;
    backward(loss);
    adam_step(d.params, state, lr_now);
    zero_all_grads(nets);
    return value;
}

void joint_generator_update(const Tensor& total, TrainingNets& nets, Optimizers& opt,
                            float lr_now) {
    backward(total);
    ParameterSet gen = generator_parameters(nets);
    adam_step(gen, opt.gen, lr_now);
    zero_all_grads(nets);
}

} // namespace

LossReport train_step_unpaired(const Tensor& x, const Tensor& y, const SparseMatrixD& m_x,
                               const SparseMatrixD& m_y, TrainingNets& nets, Optimizers& opt,
                               const TrainConfig& cfg, float lr_now) {
    LossReport report;
    report.phase = 'U';
    report.lr = lr_now;
    const LossWeights& w = cfg.weights;

    Tensor fake_clean = nets.g_dehaze.forward(x);
    Tensor fake_hazy = nets.g_addhaze.forward(y);

    report.d_clean = d_objective_and_update(nets.d_clean, opt.d_clean, y, fake_clean, lr_now, nets);
    if (!report.finite())
        return report;
    report.d_hazy = d_objective_and_update(nets.d_hazy, opt.d_hazy, x, fake_hazy, lr_now, nets);
    if (!report.finite())
        return report;

    // Generator objective against the just-updated judges. The weighted sum
    // is associated exactly like compose_unpaired so the logged total can be
    // recomputed from the logged components.
    Tensor adv_f = lsgan_g_loss(nets.d_clean.forward(fake_clean));
    Tensor adv_b = lsgan_g_loss(nets.d_hazy.forward(fake_hazy));
    Tensor cyc_f = cycle_loss(nets.g_addhaze.forward(fake_clean), x);
    Tensor cyc_b = cycle_loss(nets.g_dehaze.forward(fake_hazy), y);
    report.adv_forward = adv_f.item();
    report.adv_backward = adv_b.item();
    report.cycle_forward = cyc_f.item();
    report.cycle_backward = cyc_b.item();

    Tensor total =
        add(add(adv_f, adv_b), scalar_mul(add(cyc_f, cyc_b), w.lambda_cycle));
    if (w.lambda_photo != 0.0f) {
        Tensor photo_b = photorealism_loss(m_y, fake_hazy);
        report.photo_backward = photo_b.item();
        Tensor photo_sum = photo_b;
        if (cfg.photorealism_mode == PhotorealismMode::both_directions) {
            Tensor photo_f = photorealism_loss(m_x, fake_clean);
            report.photo_forward = photo_f.item();
            photo_sum = add(photo_f, photo_b);
        }
        total = add(total, scalar_mul(photo_sum, w.lambda_photo));
    }
    report.g_total = total.item();
    if (!report.finite())
        return report;

    joint_generator_update(total, nets, opt, lr_now);
    return report;
}

LossReport train_step_paired(const Tensor& x, const Tensor& y, TrainingNets& nets,
                             Optimizers& opt, const TrainConfig& cfg, float lr_now) {
    LossReport report;
    report.phase = 'P';
    report.lr = lr_now;
    const LossWeights& w = cfg.weights;

    Tensor fake_clean = nets.g_dehaze.forward(x);
    Tensor fake_hazy = nets.g_addhaze.forward(y);

    report.d_clean = d_objective_and_update(nets.d_clean, opt.d_clean, y, fake_clean, lr_now, nets);
    if (!report.finite())
        return report;
    report.d_hazy = d_objective_and_update(nets.d_hazy, opt.d_hazy, x, fake_hazy, lr_now, nets);
    if (!report.finite())
        return report;

    Tensor adv_y = lsgan_g_loss(nets.d_clean.forward(fake_clean));
    Tensor adv_x = lsgan_g_loss(nets.d_hazy.forward(fake_hazy));
    Tensor l1_y = paired_l1_loss(fake_clean, y);
    Tensor l1_x = paired_l1_loss(fake_hazy, x);
    report.paired_adv_clean = adv_y.item();
    report.paired_adv_hazy = adv_x.item();
    report.paired_l1_clean = l1_y.item();
    report.paired_l1_hazy = l1_x.item();

    Tensor total = add(scalar_mul(add(adv_y, adv_x), w.lambda_paired_adv),
                       scalar_mul(add(l1_y, l1_x), w.lambda_paired_l1));
    report.g_total = total.item();
    if (!report.finite())
        return report;

    joint_generator_update(total, nets, opt, lr_now);
    return report;
}

MattingCache::MattingCache(double eps, int window_radius) : eps_(eps), radius_(window_radius) {
    check(eps_ > 0.0 && radius_ >= 1, "MattingCache: bad parameters eps=", eps_,
          " radius=", radius_);
    if (const char* dir = std::getenv("HAZEFORGE_CACHE"); dir != nullptr && *dir != '\0') {
        disk_dir_ = fs::path(dir);
        fs::create_directories(*disk_dir_);
    }
}

const SparseMatrixD& MattingCache::get(const ImageBuffer& guide) {
    const std::string key = matting_cache_key(guide, eps_, radius_);
    if (auto it = by_key_.find(key); it != by_key_.end())
        return it->second;
    if (disk_dir_) {
        const fs::path file = *disk_dir_ / (key + ".mlap");
        if (fs::exists(file))
            return by_key_.emplace(key, load_matting_cache(file)).first->second;
        SparseMatrixD m = build_matting_laplacian(guide, eps_, radius_);
        save_matting_cache(file, m);
        return by_key_.emplace(key, std::move(m)).first->second;
    }
    return by_key_.emplace(key, build_matting_laplacian(guide, eps_, radius_)).first->second;
}

namespace {

void save_adam(Checkpoint& ckpt, const std::string& prefix, const AdamState& state) {
    ckpt.add_scalar(prefix + "/step", static_cast<std::uint64_t>(state.step));
    for (const auto& [name, mv] : state.moments) {
        ckpt.add_array(cat(prefix, "/m:", name), mv.first);
        ckpt.add_array(cat(prefix, "/v:", name), mv.second);
    }
}

void load_adam(const Checkpoint& ckpt, const std::string& prefix, AdamState& state) {
    state.step = static_cast<std::int64_t>(ckpt.scalar(prefix + "/step"));
    state.moments.clear();
    const std::string m_tag = prefix + "/m:";
    for (const auto& [name, values] : ckpt.arrays) {
        if (name.rfind(m_tag, 0) != 0)
            continue;
        const std::string param = name.substr(m_tag.size());
        auto& slot = state.moments[param];
        slot.first = values;
        slot.second = ckpt.array(cat(prefix, "/v:", param));
        require(slot.first.size() == slot.second.size(), "checkpoint: moment arrays for '",
                param, "' disagree in length");
    }
}

} // namespace

Checkpoint snapshot_training(TrainingNets& nets, const Optimizers& opt, std::int64_t iteration,
                             const std::mt19937_64& rng) {
    Checkpoint ckpt;
    ckpt.add_scalar("iteration", static_cast<std::uint64_t>(iteration));
    ckpt.add_scalar("config/base_channels",
                    static_cast<std::uint64_t>(nets.g_dehaze.config.base_channels));
    ckpt.add_scalar("config/res_blocks",
                    static_cast<std::uint64_t>(nets.g_dehaze.config.res_blocks));
    ParameterSet params = all_parameters(nets);
    for (const auto& [name, t] : params.items())
        ckpt.add_tensor(name, t);
    save_adam(ckpt, "adam_gen", opt.gen);
    save_adam(ckpt, "adam_d_clean", opt.d_clean);
    save_adam(ckpt, "adam_d_hazy", opt.d_hazy);
    std::ostringstream os;
    os << rng;
    ckpt.rng_state = os.str();
    return ckpt;
}

void restore_training(const Checkpoint& ckpt, TrainingNets& nets, Optimizers& opt,
                      std::int64_t& iteration, std::mt19937_64& rng) {
    iteration = static_cast<std::int64_t>(ckpt.scalar("iteration"));
    ParameterSet params = all_parameters(nets);
    for (auto& [name, t] : params.items()) {
        const TensorBlob& blob = ckpt.tensor(name);
        require(blob.shape == t.shape(), "checkpoint: tensor '", name, "' has shape ",
                blob.shape.str(), " but the network expects ", t.shape().str());
        t.values() = blob.data;
    }
    load_adam(ckpt, "adam_gen", opt.gen);
    load_adam(ckpt, "adam_d_clean", opt.d_clean);
    load_adam(ckpt, "adam_d_hazy", opt.d_hazy);
    require(!ckpt.rng_state.empty(), "checkpoint: missing RNG state");
    std::istringstream is(ckpt.rng_state);
    is >> rng;
    require(!is.fail(), "checkpoint: RNG state does not parse");
}

namespace {

std::string checkpoint_name(std::int64_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "checkpoint_%06lld.scgn",
                  static_cast<long long>(iteration));
    return buf;
}

std::vector<LoadedImage> load_pool(const std::vector<fs::path>& files, int size) {
    std::vector<LoadedImage> pool;
    pool.reserve(files.size());
    for (const fs::path& p : files)
        pool.push_back(load_image_tensor(p, size));
    return pool;
}

} // namespace

fs::path train(const TrainConfig& cfg, const DatasetPaths& data, const fs::path& out_dir,
               const fs::path& resume_from) {
    validate_train_config(cfg);

    const Dataset ds = scan_dataset(data);
    const bool paired_enabled =
        cfg.weights.lambda_paired_adv != 0.0f || cfg.weights.lambda_paired_l1 != 0.0f;
    check(!ds.unpaired_hazy.empty() && !ds.unpaired_clean.empty(),
          "train: unpaired pools must not be empty (", ds.unpaired_hazy.size(), " hazy, ",
          ds.unpaired_clean.size(), " clean)");
    if (paired_enabled)
        check(!ds.paired_hazy.empty(),
              "train: paired loss weights are nonzero but the paired set is empty");

    // Desk-scale sets are small, so everything loads up front.
    const std::vector<LoadedImage> pool_x = load_pool(ds.unpaired_hazy, cfg.image_size);
    const std::vector<LoadedImage> pool_y = load_pool(ds.unpaired_clean, cfg.image_size);
    const std::vector<LoadedImage> pair_x = load_pool(ds.paired_hazy, cfg.image_size);
    const std::vector<LoadedImage> pair_y = load_pool(ds.paired_clean, cfg.image_size);

    MattingCache cache(cfg.matting_eps, cfg.matting_radius);

    std::mt19937_64 rng(cfg.seed);
    TrainingNets nets = make_training_nets(cfg, rng);
    Optimizers opt = make_optimizers(cfg);
    std::int64_t done = 0;
    if (!resume_from.empty()) {
        restore_training(load_checkpoint(resume_from), nets, opt, done, rng);
        check(done <= cfg.iterations, "train: checkpoint is already at iteration ", done,
              " of the configured ", cfg.iterations);
    }

    fs::create_directories(out_dir);
    const fs::path log_path = out_dir / "training_log.tsv";
    const bool fresh_log = !fs::exists(log_path) || fs::file_size(log_path) == 0;
    std::ofstream log(log_path, std::ios::app);
    require(log.good(), "train: cannot open ", log_path.string());
    if (fresh_log)
        log << "# update order within an iteration: d_clean, d_hazy, then both generators "
               "jointly\n"
            << loss_log_header() << "\n";

    const int epochs_total = std::max(1, cfg.epochs_constant + cfg.epochs_decay);
    const std::int64_t per_epoch =
        cfg.iterations_per_epoch > 0
            ? cfg.iterations_per_epoch
            : std::max<std::int64_t>(1, (cfg.iterations + epochs_total - 1) / epochs_total);

    for (std::int64_t it = done + 1; it <= cfg.iterations; ++it) {
        const int epoch = static_cast<int>((it - 1) / per_epoch);
        const float lr_now = lr_schedule(cfg, epoch);

        LossReport report;
        if (paired_enabled && it % 2 == 0) {
            const std::size_t ip = static_cast<std::size_t>(rng() % pair_x.size());
            report =
                train_step_paired(pair_x[ip].tensor, pair_y[ip].tensor, nets, opt, cfg, lr_now);
        } else {
            const std::size_t ix = static_cast<std::size_t>(rng() % pool_x.size());
            const std::size_t iy = static_cast<std::size_t>(rng() % pool_y.size());
            const bool want_photo = cfg.weights.lambda_photo != 0.0f;
            const bool want_m_x =
                want_photo && cfg.photorealism_mode == PhotorealismMode::both_directions;
            static const SparseMatrixD no_matrix;
            const SparseMatrixD& m_x = want_m_x ? cache.get(pool_x[ix].image) : no_matrix;
            const SparseMatrixD& m_y = want_photo ? cache.get(pool_y[iy].image) : no_matrix;
            report = train_step_unpaired(pool_x[ix].tensor, pool_y[iy].tensor, m_x, m_y, nets,
                                         opt, cfg, lr_now);
        }
        report.iteration = it;
        log << loss_log_row(report) << "\n";
        log.flush();

        if (!report.finite()) {
            const fs::path crash = out_dir / "checkpoint_crash.scgn";
            save_checkpoint(crash, snapshot_training(nets, opt, it - 1, rng));
            require(false, "train: non-finite loss at iteration ", it,
                    "; crash checkpoint written to ", crash.string());
        }
        if (it % cfg.checkpoint_every == 0 && it != cfg.iterations)
            save_checkpoint(out_dir / checkpoint_name(it), snapshot_training(nets, opt, it, rng));
    }

    const fs::path final_path = out_dir / "checkpoint_final.scgn";
    save_checkpoint(final_path, snapshot_training(nets, opt, cfg.iterations, rng));
    return final_path;
}

} // namespace hazeforge
