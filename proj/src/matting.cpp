#include "hazeforge/matting.hpp"

#include <Eigen/Dense>
#include <vector>

#include "binary_io.hpp"

namespace hazeforge {

namespace {

void check_guide(const ImageBuffer& guide, double eps, int window_radius) {
    check(guide.channels == 3, "build_matting_laplacian: guide must be RGB, got ",
          guide.channels, " channels");
    check(eps > 0.0, "build_matting_laplacian: eps must be positive, got ", eps);
    check(window_radius >= 1, "build_matting_laplacian: window radius must be >= 1, got ",
          window_radius);
    check(guide.width > 2 * window_radius && guide.height > 2 * window_radius,
          "build_matting_laplacian: image ", guide.width, "x", guide.height,
          " too small for radius ", window_radius);
}

} // namespace

SparseMatrixD build_matting_laplacian(const ImageBuffer& guide, double eps, int window_radius) {
    check_guide(guide, eps, window_radius);
    const int w = guide.width, h = guide.height, r = window_radius;
    const int side = 2 * r + 1;
    const int win = side * side;
    const long n = static_cast<long>(w) * h;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(w - 2 * r) * (h - 2 * r) * win * win);

    Eigen::MatrixXd window(win, 3);   // window colors, one pixel per row
    std::vector<long> index(win, 0);  // flat pixel index per row

    for (int cy = r; cy < h - r; ++cy) {
        for (int cx = r; cx < w - r; ++cx) {
            int row = 0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx, ++row) {
                    const int px = cx + dx, py = cy + dy;
                    index[row] = static_cast<long>(py) * w + px;
                    for (int c = 0; c < 3; ++c)
                        window(row, c) = guide.at(px, py, c);
                }
            }

            const Eigen::RowVector3d mu = window.colwise().mean();
            Eigen::MatrixXd centered = window.rowwise() - mu;
            Eigen::Matrix3d cov =
                (centered.transpose() * centered) / static_cast<double>(win) +
                (eps / win) * Eigen::Matrix3d::Identity();
            // Solve instead of inverting: on flat two-tone windows the regularized
            // covariance is nearly rank-1 and the cofactor inverse loses enough
            // precision to manufacture affinity across hard color edges.
            const Eigen::MatrixXd solved = cov.ldlt().solve(centered.transpose());

            // kernel(i,j) = (1 + (x_i-mu)^T cov^-1 (x_j-mu)) / |w|
            Eigen::MatrixXd kernel =
                (Eigen::MatrixXd::Ones(win, win) + centered * solved) /
                static_cast<double>(win);

            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double val = (i == j ? 1.0 : 0.0) - kernel(i, j);
                    triplets.emplace_back(index[i], index[j], val);
                }
        }
    }

    SparseMatrixD m(n, n);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

namespace {

// Splits interleaved channel c of v into a dense vector.
Eigen::VectorXd channel_vector(const ImageBuffer& v, int c) {
    Eigen::VectorXd out(v.pixel_count());
    for (int i = 0; i < v.pixel_count(); ++i)
        out[i] = v.data[static_cast<std::size_t>(i) * v.channels + c];
    return out;
}

void check_energy_input(const SparseMatrixD& m, const ImageBuffer& v, const char* op) {
    check(static_cast<long>(v.pixel_count()) == m.rows(), op, ": image has ", v.pixel_count(),
          " pixels but matrix dimension is ", m.rows());
    for (float x : v.data)
        check(x >= -1e-6f && x <= 1.0f + 1e-6f, op, ": image values must lie in [0,1], got ", x);
}

} // namespace

double photorealism_energy(const SparseMatrixD& m, const ImageBuffer& v) {
    check_energy_input(m, v, "photorealism_energy");
    double e = 0.0;
    for (int c = 0; c < v.channels; ++c) {
        const Eigen::VectorXd vc = channel_vector(v, c);
        e += vc.dot(m * vc);
    }
    return e;
}

std::vector<float> photorealism_gradient(const SparseMatrixD& m, const ImageBuffer& v) {
    check_energy_input(m, v, "photorealism_gradient");
    std::vector<float> grad(v.data.size());
    for (int c = 0; c < v.channels; ++c) {
        const Eigen::VectorXd g = 2.0 * (m * channel_vector(v, c));
        for (int i = 0; i < v.pixel_count(); ++i)
            grad[static_cast<std::size_t>(i) * v.channels + c] = static_cast<float>(g[i]);
    }
    return grad;
}

CgResult solve_soft_matting(const SparseMatrixD& m, const Eigen::VectorXd& target, double lambda,
                            double tol, int max_iter,
                            const std::function<void(const Eigen::VectorXd&)>& observer) {
    check(m.rows() == m.cols(), "solve_soft_matting: matrix is ", m.rows(), "x", m.cols());
    check(target.size() == m.rows(), "solve_soft_matting: target length ", target.size(),
          " vs dimension ", m.rows());
    check(lambda > 0.0, "solve_soft_matting: lambda must be positive, got ", lambda);
    check(tol > 0.0 && max_iter >= 1, "solve_soft_matting: bad tol/max_iter");

    const Eigen::VectorXd b = lambda * target;
    const double b_norm = b.norm();
    CgResult result;
    result.x = Eigen::VectorXd::Zero(m.rows());
    if (b_norm == 0.0) {
        result.converged = true;
        return result;
    }

    auto apply = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd { return m * p + lambda * p; };

    Eigen::VectorXd residual = b;
    Eigen::VectorXd direction = residual;
    double rs = residual.squaredNorm();
    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::VectorXd ap = apply(direction);
        const double alpha = rs / direction.dot(ap);
        result.x += alpha * direction;
        residual -= alpha * ap;
        result.iterations = it;
        if (observer)
            observer(result.x);
        const double rs_next = residual.squaredNorm();
        if (std::sqrt(rs_next) / b_norm <= tol) {
            result.converged = true;
            break;
        }
        direction = residual + (rs_next / rs) * direction;
        rs = rs_next;
    }
    // The recursion's residual can drift from the true one; judge convergence
    // by the recomputed value.
    result.relative_residual = (b - apply(result.x)).norm() / b_norm;
    result.converged = result.relative_residual <= tol;
    return result;
}

void save_matting_cache(const std::filesystem::path& path, const SparseMatrixD& m) {
    using detail::put_f64;
    using detail::put_u32;
    using detail::put_u64;
    SparseMatrixD compressed = m;
    compressed.makeCompressed();

    std::string out;
    out.reserve(24 + 8 * (compressed.rows() + 1) + 16 * compressed.nonZeros());
    out.append("MLAP");
    put_u32(out, 1);
    put_u64(out, static_cast<std::uint64_t>(compressed.rows()));
    put_u64(out, static_cast<std::uint64_t>(compressed.nonZeros()));
    for (long i = 0; i <= compressed.rows(); ++i)
        put_u64(out, static_cast<std::uint64_t>(compressed.outerIndexPtr()[i]));
    for (long i = 0; i < compressed.nonZeros(); ++i)
        put_u64(out, static_cast<std::uint64_t>(compressed.innerIndexPtr()[i]));
    for (long i = 0; i < compressed.nonZeros(); ++i)
        put_f64(out, compressed.valuePtr()[i]);

    detail::write_file_bytes(path, out, "save_matting_cache");
}

SparseMatrixD load_matting_cache(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file_bytes(path, "load_matting_cache");

    detail::ByteReader in{bytes, path.string()};
    in.need(4, "magic");
    require(bytes.compare(0, 4, "MLAP") == 0, path.string(),
            ": not a matting cache (bad magic at byte 0)");
    in.pos = 4;
    const std::uint32_t version = in.u32("version");
    require(version == 1, path.string(), ": unsupported cache version ", version);
    const std::uint64_t n = in.u64("dimension");
    const std::uint64_t nnz = in.u64("nonzero count");

    std::vector<std::uint64_t> row_ptr(n + 1);
    for (std::uint64_t i = 0; i <= n; ++i)
        row_ptr[i] = in.u64("row pointer");
    require(row_ptr[0] == 0 && row_ptr[n] == nnz, path.string(),
            ": row pointers inconsistent with nonzero count");

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(nnz);
    std::vector<std::uint64_t> cols(nnz);
    for (std::uint64_t i = 0; i < nnz; ++i) {
        cols[i] = in.u64("column index");
        require(cols[i] < n, path.string(), ": column index ", cols[i], " out of range");
    }
    for (std::uint64_t row = 0; row < n; ++row) {
        require(row_ptr[row] <= row_ptr[row + 1], path.string(), ": row pointers not monotone");
        for (std::uint64_t k = row_ptr[row]; k < row_ptr[row + 1]; ++k)
            triplets.emplace_back(static_cast<long>(row), static_cast<long>(cols[k]),
                                  in.f64("value"));
    }
    require(in.pos == bytes.size(), path.string(), ": ", bytes.size() - in.pos,
            " trailing bytes after values");

    SparseMatrixD m(static_cast<long>(n), static_cast<long>(n));
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

std::string matting_cache_key(const ImageBuffer& guide, double eps, int window_radius) {
    std::uint64_t hash = 1469598103934665603ull;
    auto mix = [&hash](const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            hash ^= p[i];
            hash *= 1099511628211ull;
        }
    };
    mix(&guide.width, sizeof guide.width);
    mix(&guide.height, sizeof guide.height);
    mix(&guide.channels, sizeof guide.channels);
    mix(guide.data.data(), guide.data.size() * sizeof(float));
    mix(&eps, sizeof eps);
    mix(&window_radius, sizeof window_radius);

    static const char* hex = "0123456789abcdef";
    std::string key(16, '0');
    for (int i = 15; i >= 0; --i) {
        key[i] = hex[hash & 0xf];
        hash >>= 4;
    }
    return key;
}

} // namespace hazeforge
