#include "hazeforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>

namespace hazeforge {

namespace {

int parse_int(const std::string& key, const std::string& value) {
    int v = 0;
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    check(ec == std::errc() && end == value.data() + value.size(), "config: key '", key,
          "' expects an integer, got '", value, "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    check(ec == std::errc() && end == value.data() + value.size(), "config: key '", key,
          "' expects an unsigned integer, got '", value, "'");
    return v;
}

double parse_dbl(const std::string& key, const std::string& value) {
    double v = 0;
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    check(ec == std::errc() && end == value.data() + value.size(), "config: key '", key,
          "' expects a number, got '", value, "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true")
        return true;
    if (value == "false")
        return false;
    throw ContractError(cat("config: key '", key, "' expects true or false, got '", value, "'"));
}

struct Field {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
void range_check(const char* key, T v, T lo, T hi) {
    check(v >= lo && v <= hi, "config: ", key, " must be in [", lo, ", ", hi, "], got ", v);
}

const std::vector<Field>& fields() {
    auto int_field = [](const char* name, int RunConfig::*member, int lo, int hi) {
        return Field{name,
                     [member](const RunConfig& c) { return cat(c.*member); },
                     [name, member, lo, hi](RunConfig& c, const std::string& v) {
                         const int parsed = parse_int(name, v);
                         range_check(name, parsed, lo, hi);
                         c.*member = parsed;
                     }};
    };
    auto dbl_field = [](const char* name, double RunConfig::*member, double lo, double hi) {
        return Field{name,
                     [member](const RunConfig& c) { return format_double(c.*member); },
                     [name, member, lo, hi](RunConfig& c, const std::string& v) {
                         const double parsed = parse_dbl(name, v);
                         range_check(name, parsed, lo, hi);
                         c.*member = parsed;
                     }};
    };
    auto bool_field = [](const char* name, bool RunConfig::*member) {
        return Field{name,
                     [member](const RunConfig& c) { return c.*member ? "true" : "false"; },
                     [name, member](RunConfig& c, const std::string& v) {
                         c.*member = parse_bool(name, v);
                     }};
    };

    static const double inf = std::numeric_limits<double>::infinity();
    static const std::vector<Field> defs = {
        int_field("image_size", &RunConfig::image_size, 8, 4096),
        int_field("base_channels", &RunConfig::base_channels, 1, 512),
        int_field("res_blocks", &RunConfig::res_blocks, 0, 64),
        dbl_field("lr", &RunConfig::lr, 1e-12, 1.0),
        int_field("epochs_constant", &RunConfig::epochs_constant, 0, 100000),
        int_field("epochs_decay", &RunConfig::epochs_decay, 0, 100000),
        int_field("iterations", &RunConfig::iterations, 0, 100000000),
        int_field("batch_size", &RunConfig::batch_size, 1, 64),
        dbl_field("adam_beta1", &RunConfig::adam_beta1, 0.0, 0.9999),
        dbl_field("adam_beta2", &RunConfig::adam_beta2, 0.0, 0.999999),
        dbl_field("adam_eps", &RunConfig::adam_eps, 1e-16, 1.0),
        dbl_field("init_std", &RunConfig::init_std, 1e-6, 1.0),
        Field{"seed", [](const RunConfig& c) { return cat(c.seed); },
              [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
        int_field("checkpoint_every", &RunConfig::checkpoint_every, 0, 100000000),
        dbl_field("lambda_cycle", &RunConfig::lambda_cycle, 0.0, inf),
        dbl_field("lambda_photo", &RunConfig::lambda_photo, 0.0, inf),
        dbl_field("lambda_paired_adv", &RunConfig::lambda_paired_adv, 0.0, inf),
        dbl_field("lambda_paired_l1", &RunConfig::lambda_paired_l1, 0.0, inf),
        bool_field("photo_backward_only", &RunConfig::photo_backward_only),
        dbl_field("matting_eps", &RunConfig::matting_eps, 1e-16, 1.0),
        int_field("matting_radius", &RunConfig::matting_radius, 1, 16),
        dbl_field("beta_min", &RunConfig::beta_min, 1e-6, 100.0),
        dbl_field("beta_max", &RunConfig::beta_max, 1e-6, 100.0),
        dbl_field("atmosphere", &RunConfig::atmosphere, 1e-6, 1.0),
        dbl_field("t_floor", &RunConfig::t_floor, 1e-9, 0.999),
        dbl_field("refine_lambda", &RunConfig::refine_lambda, 1e-12, 1e6),
        dbl_field("cg_tol", &RunConfig::cg_tol, 1e-15, 1.0),
        int_field("cg_max_iter", &RunConfig::cg_max_iter, 1, 100000000),
    };
    return defs;
}

const Field& find_field(const std::string& key) {
    for (const Field& f : fields())
        if (key == f.name)
            return f;
    throw ContractError(cat("config: unknown key '", key, "'"));
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos)
        return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    find_field(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const Field& f : fields())
            out.push_back(f.name);
        return out;
    }();
    return names;
}

std::string RunConfig::dump() const {
    std::string out;
    for (const Field& f : fields())
        out += cat(f.name, "=", f.get(*this), "\n");
    return out;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig config;
    std::size_t line_start = 0;
    int line_no = 0;
    while (line_start <= text.size()) {
        std::size_t line_end = text.find('\n', line_start);
        if (line_end == std::string::npos)
            line_end = text.size();
        std::string line = text.substr(line_start, line_end - line_start);
        line_start = line_end + 1;
        ++line_no;

        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;

        const auto eq = line.find('=');
        check(eq != std::string::npos, "config: line ", line_no, " has no '=': '", line, "'");
        config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    config.validate();
    return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(f.good(), "config: cannot open ", path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(text);
}

void RunConfig::validate() const {
    check(image_size % 4 == 0, "config: image_size must be divisible by 4, got ", image_size);
    check(beta_min <= beta_max, "config: beta_min ", beta_min, " exceeds beta_max ", beta_max);
    check(epochs_constant + epochs_decay >= 1 || iterations >= 1,
          "config: training length is zero (epochs and iterations both zero)");
}

} // namespace hazeforge
