#include "hazeforge/dataset.hpp"

#include <algorithm>
#include <string>

namespace hazeforge {

namespace fs = std::filesystem;

Tensor image_to_tensor(const ImageBuffer& image) {
    check(!image.empty(), "image_to_tensor: empty image");
    check(image.channels == 1 || image.channels == 3, "image_to_tensor: ", image.channels,
          " channels, expected 1 or 3");

    Tensor t = Tensor::zeros({1, image.channels, image.height, image.width});
    Eigen::ArrayXf& out = t.values();
    const int pixels = image.pixel_count();
    for (int c = 0; c < image.channels; ++c)
        for (int i = 0; i < pixels; ++i)
            out[c * pixels + i] =
                image.data[static_cast<std::size_t>(i) * image.channels + c] * 2.0f - 1.0f;
    return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
    check(t.defined(), "tensor_to_image: undefined tensor");
    const Shape s = t.shape();
    check(s.n == 1, "tensor_to_image: batch must be 1, got shape ", s.str());
    check(s.c == 1 || s.c == 3, "tensor_to_image: ", s.c, " channels, expected 1 or 3");

    ImageBuffer image = ImageBuffer::create(s.w, s.h, s.c);
    const Eigen::ArrayXf& in = t.values();
    const int pixels = s.h * s.w;
    for (int c = 0; c < s.c; ++c)
        for (int i = 0; i < pixels; ++i) {
            const float v = (in[c * pixels + i] + 1.0f) * 0.5f;
            image.data[static_cast<std::size_t>(i) * s.c + c] = std::clamp(v, 0.0f, 1.0f);
        }
    return image;
}

LoadedImage load_image_tensor(const fs::path& path, int size) {
    check(size > 0, "load_image_tensor: size must be positive, got ", size);
    ImageBuffer image = read_image(path);
    require(image.channels == 3, path.string(), ": expected an RGB image, got ", image.channels,
            " channel(s)");
    image = resize_bilinear(image, size, size);
    Tensor tensor = image_to_tensor(image);
    return {std::move(image), std::move(tensor)};
}

std::vector<fs::path> list_images(const fs::path& dir) {
    require(fs::is_directory(dir), "list_images: not a directory: ", dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm"))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

DatasetPaths default_data_layout(const fs::path& root) {
    return {root / "unpaired" / "trainA", root / "unpaired" / "trainB", root / "paired" / "hazy",
            root / "paired" / "clean"};
}

Dataset scan_dataset(const DatasetPaths& paths) {
    Dataset ds;
    ds.unpaired_hazy = list_images(paths.unpaired_hazy);
    ds.unpaired_clean = list_images(paths.unpaired_clean);
    ds.paired_hazy = list_images(paths.paired_hazy);
    ds.paired_clean = list_images(paths.paired_clean);

    // Both lists are filename-sorted, so one zipped walk finds any mismatch.
    const std::size_t n = std::min(ds.paired_hazy.size(), ds.paired_clean.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string hazy_name = ds.paired_hazy[i].filename().string();
        const std::string clean_name = ds.paired_clean[i].filename().string();
        require(hazy_name == clean_name, "scan_dataset: paired sets disagree: hazy has '",
                hazy_name, "' where clean has '", clean_name, "'");
    }
    if (ds.paired_hazy.size() != ds.paired_clean.size()) {
        const bool hazy_longer = ds.paired_hazy.size() > ds.paired_clean.size();
        const fs::path& extra = hazy_longer ? ds.paired_hazy[n] : ds.paired_clean[n];
        require(false, "scan_dataset: '", extra.filename().string(), "' has no partner in ",
                (hazy_longer ? paths.paired_clean : paths.paired_hazy).string());
    }
    return ds;
}

} // namespace hazeforge
