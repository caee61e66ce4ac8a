#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <filesystem>
#include <functional>
#include <string>

#include "hazeforge/image.hpp"

// Matting Laplacian over the pixels of an RGB guide image, and the
// photorealism machinery built on it. Pixels are indexed row-major
// (i = y*width + x); the matrix entry for pixels i, j sums, over every full
// (2r+1)^2 window containing both, the term
//
//   delta_ij - (1/|w|) * (1 + (x_i - mu)^T (Sigma + (eps/|w|) I)^-1 (x_j - mu))
//
// with mu and Sigma the window's color mean and covariance. The result is
// symmetric, has zero row sums, and is positive semidefinite, so
// sum_c V_c^T M V_c is a photorealism energy: zero for images that are
// locally affine in the guide's colors, positive as they drift away.

namespace hazeforge {

using SparseMatrixD = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Guide must be 3-channel with both dims > 2*window_radius. Double precision
// throughout; assembly order is fixed, so rebuilding is bit-reproducible.
SparseMatrixD build_matting_laplacian(const ImageBuffer& guide, double eps = 1e-7,
                                      int window_radius = 1);

// sum over channels of V_c^T M V_c. V must match M's pixel count and lie in
// [0,1] (a hair of slack is allowed for float arithmetic at the boundary).
double photorealism_energy(const SparseMatrixD& m, const ImageBuffer& v);

// Per-channel 2*M*V_c, interleaved like V. This is the exact derivative of
// photorealism_energy with respect to V.
std::vector<float> photorealism_gradient(const SparseMatrixD& m, const ImageBuffer& v);

struct CgResult {
    Eigen::VectorXd x;
    bool converged = false;
    int iterations = 0;
    // True relative residual ||b - Ax|| / ||b|| recomputed at exit.
    double relative_residual = 0.0;
};

// Solves (M + lambda*I) x = lambda * target by conjugate gradients from x0=0.
// The system matrix is symmetric positive definite for lambda > 0. observer,
// when set, sees each iterate in order (used to watch convergence).
CgResult solve_soft_matting(const SparseMatrixD& m, const Eigen::VectorXd& target, double lambda,
                            double tol = 1e-6, int max_iter = 2000,
                            const std::function<void(const Eigen::VectorXd&)>& observer = {});

// Binary cache for assembled Laplacians. Layout, all little-endian:
//   bytes 0..3   magic "MLAP"
//   bytes 4..7   version, u32, currently 1
//   bytes 8..15  N, u64, matrix dimension
//   bytes 16..23 nnz, u64
//   then row_ptr as (N+1) u64, col_idx as nnz u64, values as nnz f64.
void save_matting_cache(const std::filesystem::path& path, const SparseMatrixD& m);
SparseMatrixD load_matting_cache(const std::filesystem::path& path);

// Cache file key for a guide/parameter combination: FNV-1a over the pixel
// bytes, dims, eps, and radius, rendered as 16 hex digits.
std::string matting_cache_key(const ImageBuffer& guide, double eps, int window_radius);

} // namespace hazeforge
