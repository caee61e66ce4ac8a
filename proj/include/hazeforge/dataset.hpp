#pragma once

#include <filesystem>
#include <vector>

#include "hazeforge/image.hpp"
#include "hazeforge/tensor.hpp"

// Conversions between files/ImageBuffers and network tensors, plus the
// on-disk dataset layout the trainer consumes. Networks run on NCHW float
// tensors in [-1,1]; image files and the metrics live on [0,1] interleaved
// buffers, so the affine remap lives here and nowhere else.

namespace hazeforge {

// [0,1] interleaved HWC -> (1,C,H,W) planar in [-1,1] via v*2-1. The result
// is a plain constant (no tape). Accepts 1- or 3-channel buffers.
Tensor image_to_tensor(const ImageBuffer& image);

// Inverse remap: (1,C,H,W) in [-1,1] -> [0,1] interleaved, clamped so
// slightly out-of-range network outputs still quantize cleanly.
ImageBuffer tensor_to_image(const Tensor& t);

// Reads an RGB image, resizes it to size x size (size > 0), and remaps to a
// network tensor. The [0,1] buffer comes back too since the photorealism
// term needs it as a matting guide.
struct LoadedImage {
    ImageBuffer image;
    Tensor tensor;
};
LoadedImage load_image_tensor(const std::filesystem::path& path, int size);

// The .png/.ppm files directly inside dir, sorted by filename. Missing or
// non-directory paths throw; an empty directory is just an empty list.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// The four training directories. default_data_layout fills the documented
// tree under a root: unpaired/trainA (hazy), unpaired/trainB (clean),
// paired/hazy, paired/clean.
struct DatasetPaths {
    std::filesystem::path unpaired_hazy;
    std::filesystem::path unpaired_clean;
    std::filesystem::path paired_hazy;
    std::filesystem::path paired_clean;
};
DatasetPaths default_data_layout(const std::filesystem::path& root);

// File lists per pool. The paired vectors are index-aligned: paired_hazy[i]
// and paired_clean[i] share a filename.
struct Dataset {
    std::vector<std::filesystem::path> unpaired_hazy;
    std::vector<std::filesystem::path> unpaired_clean;
    std::vector<std::filesystem::path> paired_hazy;
    std::vector<std::filesystem::path> paired_clean;
};

// Lists all four directories and checks that the paired sets carry identical
// filename sets, naming the first offender otherwise.
Dataset scan_dataset(const DatasetPaths& paths);

} // namespace hazeforge
