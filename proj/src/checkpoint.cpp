#include "hazeforge/checkpoint.hpp"

#include "binary_io.hpp"

namespace hazeforge {

namespace {

template <typename Vec>
const typename Vec::value_type::second_type& find_entry(const Vec& entries,
                                                        std::string_view name,
                                                        const char* kind) {
    for (const auto& [n, v] : entries)
        if (n == name)
            return v;
    throw ContractError(cat("Checkpoint: no ", kind, " named \"", name, "\""));
}

template <typename Vec>
bool has_entry(const Vec& entries, std::string_view name) {
    for (const auto& [n, v] : entries)
        if (n == name)
            return true;
    return false;
}

void check_name(const std::string& name, bool taken, const char* kind) {
    check(!name.empty(), "Checkpoint: empty ", kind, " name");
    check(!taken, "Checkpoint: duplicate ", kind, " \"", name, "\"");
}

} // namespace

void Checkpoint::add_tensor(std::string name, const Tensor& t) {
    check_name(name, has_tensor(name), "tensor");
    check(t.defined(), "Checkpoint: undefined tensor \"", name, "\"");
    tensors.emplace_back(std::move(name), TensorBlob{t.shape(), t.values()});
}

void Checkpoint::add_array(std::string name, Eigen::ArrayXf values) {
    check_name(name, has_array(name), "array");
    arrays.emplace_back(std::move(name), std::move(values));
}

void Checkpoint::add_scalar(std::string name, std::uint64_t value) {
    check_name(name, has_scalar(name), "scalar");
    scalars.emplace_back(std::move(name), value);
}

const TensorBlob& Checkpoint::tensor(std::string_view name) const {
    return find_entry(tensors, name, "tensor");
}

const Eigen::ArrayXf& Checkpoint::array(std::string_view name) const {
    return find_entry(arrays, name, "array");
}

std::uint64_t Checkpoint::scalar(std::string_view name) const {
    return find_entry(scalars, name, "scalar");
}

bool Checkpoint::has_tensor(std::string_view name) const { return has_entry(tensors, name); }
bool Checkpoint::has_array(std::string_view name) const { return has_entry(arrays, name); }
bool Checkpoint::has_scalar(std::string_view name) const { return has_entry(scalars, name); }

namespace {

void put_name(std::string& out, const std::string& name) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
}

std::string read_name(detail::ByteReader& in) {
    const std::uint32_t len = in.u32("name length");
    return in.chunk(len, "name");
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    using detail::put_f32;
    using detail::put_u32;
    using detail::put_u64;

    std::string out;
    out.append("SCGN");
    put_u32(out, 1);

    put_u64(out, ckpt.tensors.size());
    for (const auto& [name, blob] : ckpt.tensors) {
        check(blob.shape.numel() == blob.data.size(), "save_checkpoint: tensor \"", name,
              "\" has ", blob.data.size(), " values for shape ", blob.shape.str());
        put_name(out, name);
        put_u32(out, static_cast<std::uint32_t>(blob.shape.n));
        put_u32(out, static_cast<std::uint32_t>(blob.shape.c));
        put_u32(out, static_cast<std::uint32_t>(blob.shape.h));
        put_u32(out, static_cast<std::uint32_t>(blob.shape.w));
        for (int i = 0; i < blob.data.size(); ++i)
            put_f32(out, blob.data[i]);
    }

    put_u64(out, ckpt.arrays.size());
    for (const auto& [name, values] : ckpt.arrays) {
        put_name(out, name);
        put_u64(out, static_cast<std::uint64_t>(values.size()));
        for (int i = 0; i < values.size(); ++i)
            put_f32(out, values[i]);
    }

    put_u64(out, ckpt.scalars.size());
    for (const auto& [name, value] : ckpt.scalars) {
        put_name(out, name);
        put_u64(out, value);
    }

    put_u32(out, static_cast<std::uint32_t>(ckpt.rng_state.size()));
    out.append(ckpt.rng_state);

    detail::write_file_bytes(path, out, "save_checkpoint");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file_bytes(path, "load_checkpoint");
    detail::ByteReader in{bytes, path.string()};

    in.need(4, "magic");
    require(bytes.compare(0, 4, "SCGN") == 0, path.string(),
            ": not a checkpoint (bad magic at byte 0)");
    in.pos = 4;
    const std::uint32_t version = in.u32("version");
    require(version == 1, path.string(), ": unsupported checkpoint version ", version);

    Checkpoint ckpt;
    const std::uint64_t n_tensors = in.u64("tensor count");
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        std::string name = read_name(in);
        Shape shape;
        shape.n = static_cast<int>(in.u32("shape"));
        shape.c = static_cast<int>(in.u32("shape"));
        shape.h = static_cast<int>(in.u32("shape"));
        shape.w = static_cast<int>(in.u32("shape"));
        require(shape.n > 0 && shape.c > 0 && shape.h > 0 && shape.w > 0, path.string(),
                ": tensor \"", name, "\" has invalid shape ", shape.str());
        TensorBlob blob;
        blob.shape = shape;
        blob.data.resize(shape.numel());
        for (int j = 0; j < blob.data.size(); ++j)
            blob.data[j] = in.f32("tensor values");
        require(!ckpt.has_tensor(name), path.string(), ": duplicate tensor \"", name, "\"");
        ckpt.tensors.emplace_back(std::move(name), std::move(blob));
    }

    const std::uint64_t n_arrays = in.u64("array count");
    for (std::uint64_t i = 0; i < n_arrays; ++i) {
        std::string name = read_name(in);
        const std::uint64_t len = in.u64("array length");
        Eigen::ArrayXf values(static_cast<long>(len));
        for (std::uint64_t j = 0; j < len; ++j)
            values[static_cast<long>(j)] = in.f32("array values");
        require(!ckpt.has_array(name), path.string(), ": duplicate array \"", name, "\"");
        ckpt.arrays.emplace_back(std::move(name), std::move(values));
    }

    const std::uint64_t n_scalars = in.u64("scalar count");
    for (std::uint64_t i = 0; i < n_scalars; ++i) {
        std::string name = read_name(in);
        const std::uint64_t value = in.u64("scalar value");
        require(!ckpt.has_scalar(name), path.string(), ": duplicate scalar \"", name, "\"");
        ckpt.scalars.emplace_back(std::move(name), value);
    }

    const std::uint32_t rng_len = in.u32("rng state length");
    ckpt.rng_state = in.chunk(rng_len, "rng state");
    in.expect_end("rng state");
    return ckpt;
}

} // namespace hazeforge
