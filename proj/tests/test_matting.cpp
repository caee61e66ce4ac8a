#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>

#include "hazeforge/matting.hpp"
#include "oracles.hpp"

using namespace hazeforge;
namespace fs = std::filesystem;

namespace {

ImageBuffer random_unit_image(int w, int h, int channels, unsigned seed) {
    ImageBuffer img = ImageBuffer::create(w, h, channels);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (float& v : img.data)
        v = dist(rng);
    return img;
}

fs::path temp_dir() {
    fs::path dir = fs::temp_directory_path() / "hazeforge_matting_test";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST(MattingLaplacian, RejectsBadInputs) {
    ImageBuffer gray = ImageBuffer::create(5, 5, 1);
    EXPECT_THROW(build_matting_laplacian(gray), ContractError);
    ImageBuffer rgb = ImageBuffer::create(5, 5, 3);
    EXPECT_THROW(build_matting_laplacian(rgb, -1.0), ContractError);
    EXPECT_THROW(build_matting_laplacian(rgb, 1e-7, 0), ContractError);
    ImageBuffer tiny = ImageBuffer::create(2, 2, 3);
    EXPECT_THROW(build_matting_laplacian(tiny, 1e-7, 1), ContractError);
}

TEST(MattingLaplacian, MatchesDenseBruteForce) {
    struct Case {
        int w, h, r;
        unsigned seed;
    };
    const Case cases[] = {{5, 7, 1, 1}, {8, 6, 2, 2}, {10, 10, 1, 3}};
    for (const auto& c : cases) {
        ImageBuffer guide = oracle::synthetic_rgb(c.w, c.h, c.seed);
        SparseMatrixD sparse = build_matting_laplacian(guide, 1e-7, c.r);
        Eigen::MatrixXd dense = oracle::dense_matting_laplacian(guide, 1e-7, c.r);
        ASSERT_EQ(sparse.rows(), dense.rows());
        const double max_diff = (Eigen::MatrixXd(sparse) - dense).cwiseAbs().maxCoeff();
        EXPECT_LT(max_diff, 1e-9) << c.w << "x" << c.h << " r=" << c.r;
    }
}

TEST(MattingLaplacian, StructuralInvariants) {
    ImageBuffer guide = oracle::synthetic_rgb(12, 9, 7);
    SparseMatrixD m = build_matting_laplacian(guide);

    // Zero row sums: constant images cost nothing.
    Eigen::VectorXd row_sums = m * Eigen::VectorXd::Ones(m.cols());
    EXPECT_LT(row_sums.cwiseAbs().maxCoeff(), 1e-8);

    // Symmetry, elementwise over the sparse structure.
    SparseMatrixD diff = m - SparseMatrixD(m.transpose());
    double max_asym = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (SparseMatrixD::InnerIterator it(diff, k); it; ++it)
            max_asym = std::max(max_asym, std::abs(it.value()));
    EXPECT_LT(max_asym, 1e-12);

    // Positive semidefinite: random Rayleigh quotients and the smallest
    // eigenvalue of the dense form.
    std::mt19937 rng(99);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd v(m.rows());
        for (int i = 0; i < v.size(); ++i)
            v[i] = gauss(rng);
        v.normalize();
        EXPECT_GT(v.dot(m * v), -1e-8);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(m)};
    EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-8);
}

TEST(MattingLaplacian, AssemblyIsBitReproducible) {
    ImageBuffer guide = oracle::synthetic_rgb(10, 8, 21);
    SparseMatrixD a = build_matting_laplacian(guide);
    SparseMatrixD b = build_matting_laplacian(guide);
    ASSERT_EQ(a.nonZeros(), b.nonZeros());
    for (long i = 0; i < a.nonZeros(); ++i)
        ASSERT_EQ(a.valuePtr()[i], b.valuePtr()[i]);
}

TEST(MattingLaplacian, HardColorEdgesGetAlmostNoAffinity) {
    // Two flat color regions with a sharp vertical edge. Window covariances are
    // nearly rank-1 here, which once made the cofactor-inverse kernel leak
    // O(1e-1) affinity across the edge; the stable solve keeps it near zero.
    const int w = 14, h = 10;
    ImageBuffer guide = ImageBuffer::create(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool right = x >= w / 2;
            guide.at(x, y, 0) = right ? 0.85f : 0.15f;
            guide.at(x, y, 1) = right ? 0.80f : 0.20f;
            guide.at(x, y, 2) = right ? 0.75f : 0.25f;
        }
    SparseMatrixD m = build_matting_laplacian(guide);

    double cross = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMatrixD::InnerIterator it(m, k); it; ++it) {
            if (it.row() == it.col())
                continue;
            const bool left_i = static_cast<int>(it.row()) % w < w / 2;
            const bool left_j = static_cast<int>(it.col()) % w < w / 2;
            if (left_i != left_j)
                cross += std::abs(it.value());
        }
    EXPECT_LT(cross, 1e-4);
}

TEST(PhotorealismEnergy, AffineFunctionsOfTheGuideCostAlmostNothing) {
    ImageBuffer guide = oracle::synthetic_rgb(10, 10, 5);
    SparseMatrixD m = build_matting_laplacian(guide);

    // V affine in the guide colors sits in the Laplacian's near-null space.
    ImageBuffer affine = ImageBuffer::create(10, 10, 3);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            const float r = guide.at(x, y, 0), g = guide.at(x, y, 1), b = guide.at(x, y, 2);
            affine.at(x, y, 0) = 0.25f * r + 0.25f * g + 0.25f * b + 0.1f;
            affine.at(x, y, 1) = 0.5f * r + 0.2f * b + 0.05f;
            affine.at(x, y, 2) = 0.3f * g + 0.3f;
        }
    ImageBuffer noisy = random_unit_image(10, 10, 3, 31);

    const double e_affine = photorealism_energy(m, affine);
    const double e_noisy = photorealism_energy(m, noisy);
    EXPECT_GE(e_affine, -1e-6);
    EXPECT_GT(e_noisy, 0.0);
    EXPECT_LT(e_affine, 1e-3 * e_noisy);
}

TEST(PhotorealismEnergy, InputChecks) {
    ImageBuffer guide = oracle::synthetic_rgb(6, 6, 13);
    SparseMatrixD m = build_matting_laplacian(guide);
    ImageBuffer wrong = ImageBuffer::create(5, 5, 3);
    EXPECT_THROW(photorealism_energy(m, wrong), ContractError);
    ImageBuffer out_of_range = ImageBuffer::create(6, 6, 3, 0.5f);
    out_of_range.data[7] = 1.5f;
    EXPECT_THROW(photorealism_energy(m, out_of_range), ContractError);
}

TEST(PhotorealismGradient, IsTheExactDerivativeOfTheEnergy) {
    ImageBuffer guide = oracle::synthetic_rgb(6, 6, 17);
    SparseMatrixD m = build_matting_laplacian(guide);
    ImageBuffer v = random_unit_image(6, 6, 3, 23);

    std::vector<float> grad = photorealism_gradient(m, v);
    ASSERT_EQ(grad.size(), v.data.size());

    // The energy is quadratic, so central differences are exact up to
    // rounding; the gradient itself is float, hence the 1e-5 relative band.
    const double h = 1e-4;
    for (std::size_t i = 0; i < v.data.size(); i += 7) {
        ImageBuffer vp = v, vm = v;
        vp.data[i] = std::min(1.0f, vp.data[i] + static_cast<float>(h));
        vm.data[i] = std::max(0.0f, vm.data[i] - static_cast<float>(h));
        const double dv = static_cast<double>(vp.data[i]) - vm.data[i];
        const double numeric = (photorealism_energy(m, vp) - photorealism_energy(m, vm)) / dv;
        const double allowed = std::max(1e-5 * std::abs(numeric), 1e-6);
        EXPECT_NEAR(grad[i], numeric, allowed) << "element " << i;
    }
}

TEST(SoftMattingSolve, AgreesWithDenseDirectSolve) {
    ImageBuffer guide = oracle::synthetic_rgb(8, 8, 41);
    SparseMatrixD m = build_matting_laplacian(guide);
    Eigen::MatrixXd dense = oracle::dense_matting_laplacian(guide, 1e-7, 1);

    std::mt19937 rng(43);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd target(m.rows());
    for (int i = 0; i < target.size(); ++i)
        target[i] = dist(rng);

    const double lambda = 1e-4;
    CgResult cg = solve_soft_matting(m, target, lambda, 1e-10, 5000);
    ASSERT_TRUE(cg.converged) << "residual " << cg.relative_residual;

    Eigen::MatrixXd a = dense + lambda * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    Eigen::VectorXd direct = a.partialPivLu().solve(lambda * target);
    EXPECT_LT((cg.x - direct).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(SoftMattingSolve, ConstantTargetIsAFixedPoint) {
    ImageBuffer guide = oracle::synthetic_rgb(7, 7, 47);
    SparseMatrixD m = build_matting_laplacian(guide);
    Eigen::VectorXd target = Eigen::VectorXd::Constant(m.rows(), 0.37);
    CgResult r = solve_soft_matting(m, target, 1e-4, 1e-8, 2000);
    ASSERT_TRUE(r.converged);
    EXPECT_LT((r.x - target).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SoftMattingSolve, ErrorDecreasesMonotonicallyInTheSystemNorm) {
    ImageBuffer guide = oracle::synthetic_rgb(8, 6, 53);
    SparseMatrixD m = build_matting_laplacian(guide);
    Eigen::MatrixXd dense = oracle::dense_matting_laplacian(guide, 1e-7, 1);
    const double lambda = 1e-4;
    Eigen::MatrixXd a = dense + lambda * Eigen::MatrixXd::Identity(m.rows(), m.cols());

    Eigen::VectorXd target(m.rows());
    std::mt19937 rng(59);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < target.size(); ++i)
        target[i] = dist(rng);
    const Eigen::VectorXd exact = a.partialPivLu().solve(lambda * target);

    std::vector<double> energy_errors;
    solve_soft_matting(m, target, lambda, 1e-10, 3000, [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd e = x - exact;
        energy_errors.push_back(e.dot(a * e));
    });
    ASSERT_GT(energy_errors.size(), 3u);
    for (std::size_t i = 1; i < energy_errors.size(); ++i)
        EXPECT_LE(energy_errors[i], energy_errors[i - 1] * (1.0 + 1e-12))
            << "iteration " << i;
}

TEST(SoftMattingSolve, NonConvergenceReportsTheAchievedResidual) {
    ImageBuffer guide = oracle::synthetic_rgb(8, 8, 61);
    SparseMatrixD m = build_matting_laplacian(guide);
    Eigen::VectorXd target = Eigen::VectorXd::Ones(m.rows());
    CgResult r = solve_soft_matting(m, target, 1e-4, 1e-15, 2);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 2);
    EXPECT_GT(r.relative_residual, 0.0);
    EXPECT_LT(r.relative_residual, 1.0);
}

TEST(MattingCache, RoundTripsBitExactly) {
    ImageBuffer guide = oracle::synthetic_rgb(9, 7, 67);
    SparseMatrixD m = build_matting_laplacian(guide);
    const fs::path file = temp_dir() / "roundtrip.mlap";
    save_matting_cache(file, m);
    SparseMatrixD loaded = load_matting_cache(file);

    ASSERT_EQ(loaded.rows(), m.rows());
    ASSERT_EQ(loaded.nonZeros(), m.nonZeros());
    SparseMatrixD compressed = m;
    compressed.makeCompressed();
    for (long i = 0; i < compressed.nonZeros(); ++i) {
        ASSERT_EQ(loaded.innerIndexPtr()[i], compressed.innerIndexPtr()[i]);
        ASSERT_EQ(loaded.valuePtr()[i], compressed.valuePtr()[i]);
    }
}

TEST(MattingCache, RejectsCorruptFiles) {
    ImageBuffer guide = oracle::synthetic_rgb(6, 6, 71);
    SparseMatrixD m = build_matting_laplacian(guide);
    const fs::path dir = temp_dir();

    const fs::path good = dir / "good.mlap";
    save_matting_cache(good, m);
    std::string bytes;
    {
        std::ifstream f(good, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    }

    const fs::path bad_magic = dir / "bad_magic.mlap";
    {
        std::string corrupt = bytes;
        corrupt[0] = 'X';
        std::ofstream f(bad_magic, std::ios::binary);
        f.write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
    }
    EXPECT_THROW(load_matting_cache(bad_magic), RuntimeError);

    const fs::path truncated = dir / "truncated.mlap";
    {
        std::ofstream f(truncated, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        load_matting_cache(truncated);
        FAIL() << "expected RuntimeError";
    } catch (const RuntimeError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }

    const fs::path trailing = dir / "trailing.mlap";
    {
        std::string padded = bytes + "junk";
        std::ofstream f(trailing, std::ios::binary);
        f.write(padded.data(), static_cast<std::streamsize>(padded.size()));
    }
    EXPECT_THROW(load_matting_cache(trailing), RuntimeError);

    EXPECT_THROW(load_matting_cache(dir / "missing.mlap"), RuntimeError);
}

TEST(MattingCache, KeyDependsOnGuideAndParameters) {
    ImageBuffer a = oracle::synthetic_rgb(8, 8, 73);
    ImageBuffer b = a;
    b.data[10] += 0.01f;
    const std::string base = matting_cache_key(a, 1e-7, 1);
    EXPECT_EQ(base.size(), 16u);
    EXPECT_NE(base, matting_cache_key(b, 1e-7, 1));
    EXPECT_NE(base, matting_cache_key(a, 1e-6, 1));
    EXPECT_NE(base, matting_cache_key(a, 1e-7, 2));
    EXPECT_EQ(base, matting_cache_key(a, 1e-7, 1));
}
