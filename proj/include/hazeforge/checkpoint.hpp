#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hazeforge/common.hpp"
#include "hazeforge/tensor.hpp"

namespace hazeforge {

// A tensor snapshot outside the autodiff tape: shape plus raw float values.
struct TensorBlob {
    Shape shape{};
    Eigen::ArrayXf data;
};

// Everything a training run needs to resume bit-exactly: parameter tensors,
// optimizer moment arrays, counters, and the serialized RNG engine. Entries
// keep their insertion order on disk and after a reload.
//
// File layout (little-endian): magic "SCGN", u32 version 1, then three
// length-prefixed sections (tensors: name, four u32 dims, f32 payload;
// arrays: name, u64 length, f32 payload; scalars: name, u64 value), then the
// RNG state as a length-prefixed decimal string.
struct Checkpoint {
    std::vector<std::pair<std::string, TensorBlob>> tensors;
    std::vector<std::pair<std::string, Eigen::ArrayXf>> arrays;
    std::vector<std::pair<std::string, std::uint64_t>> scalars;
    std::string rng_state;

    void add_tensor(std::string name, const Tensor& t);
    void add_array(std::string name, Eigen::ArrayXf values);
    void add_scalar(std::string name, std::uint64_t value);

    const TensorBlob& tensor(std::string_view name) const;
    const Eigen::ArrayXf& array(std::string_view name) const;
    std::uint64_t scalar(std::string_view name) const;
    bool has_tensor(std::string_view name) const;
    bool has_array(std::string_view name) const;
    bool has_scalar(std::string_view name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace hazeforge
