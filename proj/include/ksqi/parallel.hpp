#pragma once

// Data-parallel kernels. Every kernel has a serial reference and an OpenMP
// variant with identical results; tests compare the two and bench/ times them.

#include <cstdint>
#include <span>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ksqi {

enum class Execution { Serial, Parallel };

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

int max_threads();

namespace kernels {

/// out = a * x - b, row by row.
void affine_residual_serial(const SparseRowMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b,
                            Eigen::VectorXd& out);
void affine_residual_parallel(const SparseRowMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b,
                              Eigen::VectorXd& out);

inline void affine_residual(Execution ex, const SparseRowMatrix& a, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& b, Eigen::VectorXd& out) {
  if (ex == Execution::Parallel) {
    affine_residual_parallel(a, x, b, out);
  } else {
    affine_residual_serial(a, x, b, out);
  }
}

/// Pair statistics for Kendall's tau-b over all n(n-1)/2 pairs.
struct PairCounts {
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t tied_x = 0;  // tied in x (including joint ties)
  std::int64_t tied_y = 0;  // tied in y (including joint ties)

  bool operator==(const PairCounts&) const = default;
};

PairCounts kendall_pairs_serial(std::span<const double> x, std::span<const double> y);
PairCounts kendall_pairs_parallel(std::span<const double> x, std::span<const double> y);

inline PairCounts kendall_pairs(Execution ex, std::span<const double> x, std::span<const double> y) {
  return ex == Execution::Parallel ? kendall_pairs_parallel(x, y) : kendall_pairs_serial(x, y);
}

}  // namespace kernels
}  // namespace ksqi
