#include "hazeforge/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"

using namespace hazeforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "hazeforge_dataset_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST(ImageTensor, RemapsEndpointsAndMidpoint) {
    ImageBuffer image = ImageBuffer::create(2, 1, 3);
    image.at(0, 0, 0) = 0.0f;
    image.at(0, 0, 1) = 0.5f;
    image.at(0, 0, 2) = 1.0f;
    image.at(1, 0, 0) = 0.25f;
    image.at(1, 0, 1) = 0.75f;
    image.at(1, 0, 2) = 1.0f;

    Tensor t = image_to_tensor(image);
    ASSERT_EQ(t.shape(), (Shape{1, 3, 1, 2}));
    EXPECT_FALSE(t.requires_grad());
    EXPECT_FALSE(t.on_tape());

    // Planar layout: plane c holds pixel i at c*pixels + i.
    EXPECT_EQ(t.values()[0], -1.0f); // (0,0,c0)
    EXPECT_EQ(t.values()[1], -0.5f); // (1,0,c0)
    EXPECT_EQ(t.values()[2], 0.0f);  // (0,0,c1)
    EXPECT_EQ(t.values()[3], 0.5f);  // (1,0,c1)
    EXPECT_EQ(t.values()[4], 1.0f);  // (0,0,c2)
    EXPECT_EQ(t.values()[5], 1.0f);  // (1,0,c2)
}

TEST(ImageTensor, RoundTripsThroughBothRemaps) {
    ImageBuffer image = oracle::synthetic_rgb(9, 7, 17);
    ImageBuffer back = tensor_to_image(image_to_tensor(image));
    ASSERT_EQ(back.width, image.width);
    ASSERT_EQ(back.height, image.height);
    ASSERT_EQ(back.channels, image.channels);
    for (std::size_t i = 0; i < image.data.size(); ++i)
        EXPECT_NEAR(back.data[i], image.data[i], 1e-6f) << "element " << i;
}

TEST(ImageTensor, ClampsOutOfRangeNetworkOutputs) {
    Tensor t = Tensor::zeros({1, 1, 1, 3});
    t.values() << -1.75f, 0.0f, 1.25f;
    ImageBuffer image = tensor_to_image(t);
    EXPECT_EQ(image.at(0, 0, 0), 0.0f);
    EXPECT_EQ(image.at(1, 0, 0), 0.5f);
    EXPECT_EQ(image.at(2, 0, 0), 1.0f);
}

TEST(ImageTensor, RejectsBadShapes) {
    EXPECT_THROW(image_to_tensor(ImageBuffer{}), ContractError);
    EXPECT_THROW(tensor_to_image(Tensor{}), ContractError);
    EXPECT_THROW(tensor_to_image(Tensor::zeros({2, 3, 4, 4})), ContractError);
    EXPECT_THROW(tensor_to_image(Tensor::zeros({1, 2, 4, 4})), ContractError);
}

TEST(ImageTensor, LoadResizesAndKeepsBothViews) {
    const fs::path dir = temp_dir("load");
    write_image(dir / "a.png", oracle::synthetic_rgb(10, 6, 3));

    LoadedImage loaded = load_image_tensor(dir / "a.png", 8);
    EXPECT_EQ(loaded.image.width, 8);
    EXPECT_EQ(loaded.image.height, 8);
    ASSERT_EQ(loaded.tensor.shape(), (Shape{1, 3, 8, 8}));

    // The two views describe the same pixels.
    EXPECT_NEAR(loaded.tensor.values()[0], loaded.image.at(0, 0, 0) * 2.0f - 1.0f, 1e-7f);

    EXPECT_THROW(load_image_tensor(dir / "a.png", 0), ContractError);
    EXPECT_THROW(load_image_tensor(dir / "missing.png", 8), RuntimeError);
}

TEST(ListImages, SortsAndFiltersByExtension) {
    const fs::path dir = temp_dir("list");
    write_image(dir / "b.png", oracle::synthetic_rgb(4, 4, 1));
    write_image(dir / "a.ppm", oracle::synthetic_rgb(4, 4, 2));
    write_image(dir / "c.png", oracle::synthetic_rgb(4, 4, 3));
    write_image(dir / "depth.pgm", ImageBuffer::create(4, 4, 1, 0.5f));

    const auto files = list_images(dir);
    ASSERT_EQ(files.size(), 3u);
    EXPECT_EQ(files[0].filename(), "a.ppm");
    EXPECT_EQ(files[1].filename(), "b.png");
    EXPECT_EQ(files[2].filename(), "c.png");

    EXPECT_THROW(list_images(dir / "nope"), RuntimeError);
}

TEST(ScanDataset, AcceptsTheDocumentedTree) {
    const fs::path root = temp_dir("tree");
    const DatasetPaths paths = default_data_layout(root);
    EXPECT_EQ(paths.unpaired_hazy, root / "unpaired" / "trainA");
    EXPECT_EQ(paths.unpaired_clean, root / "unpaired" / "trainB");
    EXPECT_EQ(paths.paired_hazy, root / "paired" / "hazy");
    EXPECT_EQ(paths.paired_clean, root / "paired" / "clean");

    for (const fs::path& p :
         {paths.unpaired_hazy, paths.unpaired_clean, paths.paired_hazy, paths.paired_clean})
        fs::create_directories(p);
    write_image(paths.unpaired_hazy / "h1.png", oracle::synthetic_rgb(4, 4, 1));
    write_image(paths.unpaired_hazy / "h2.png", oracle::synthetic_rgb(4, 4, 2));
    write_image(paths.unpaired_clean / "c1.png", oracle::synthetic_rgb(4, 4, 3));
    write_image(paths.paired_hazy / "p1.png", oracle::synthetic_rgb(4, 4, 4));
    write_image(paths.paired_hazy / "p2.png", oracle::synthetic_rgb(4, 4, 5));
    write_image(paths.paired_clean / "p1.png", oracle::synthetic_rgb(4, 4, 6));
    write_image(paths.paired_clean / "p2.png", oracle::synthetic_rgb(4, 4, 7));

    const Dataset ds = scan_dataset(paths);
    EXPECT_EQ(ds.unpaired_hazy.size(), 2u);
    EXPECT_EQ(ds.unpaired_clean.size(), 1u);
    ASSERT_EQ(ds.paired_hazy.size(), 2u);
    ASSERT_EQ(ds.paired_clean.size(), 2u);
    for (std::size_t i = 0; i < ds.paired_hazy.size(); ++i)
        EXPECT_EQ(ds.paired_hazy[i].filename(), ds.paired_clean[i].filename());
}

TEST(ScanDataset, NamesTheUnmatchedPairedFile) {
    const fs::path root = temp_dir("mismatch");
    const DatasetPaths paths = default_data_layout(root);
    for (const fs::path& p :
         {paths.unpaired_hazy, paths.unpaired_clean, paths.paired_hazy, paths.paired_clean})
        fs::create_directories(p);
    write_image(paths.paired_hazy / "p1.png", oracle::synthetic_rgb(4, 4, 1));
    write_image(paths.paired_hazy / "p2.png", oracle::synthetic_rgb(4, 4, 2));
    write_image(paths.paired_clean / "p1.png", oracle::synthetic_rgb(4, 4, 3));

    try {
        scan_dataset(paths);
        FAIL() << "expected a pairing error";
    } catch (const RuntimeError& e) {
        EXPECT_NE(std::string(e.what()).find("p2.png"), std::string::npos) << e.what();
    }

    // A different filename in the same slot is also a mismatch, not an extra.
    write_image(paths.paired_clean / "p3.png", oracle::synthetic_rgb(4, 4, 4));
    EXPECT_THROW(scan_dataset(paths), RuntimeError);
}
