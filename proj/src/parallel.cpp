#include "ksqi/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ksqi {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace kernels {

namespace {

double row_dot(const SparseRowMatrix& a, Eigen::Index r, const Eigen::VectorXd& x) {
  double acc = 0.0;
  for (SparseRowMatrix::InnerIterator it(a, r); it; ++it) acc += it.value() * x[it.col()];
  return acc;
}

void count_pair(double dx, double dy, PairCounts& c) {
  if (dx == 0.0) ++c.tied_x;
  if (dy == 0.0) ++c.tied_y;
  if (dx == 0.0 || dy == 0.0) return;
  if ((dx > 0.0) == (dy > 0.0)) {
    ++c.concordant;
  } else {
    ++c.discordant;
  }
}

}  // namespace

void affine_residual_serial(const SparseRowMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b,
                            Eigen::VectorXd& out) {
  out.resize(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) out[r] = row_dot(a, r, x) - b[r];
}

void affine_residual_parallel(const SparseRowMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b,
                              Eigen::VectorXd& out) {
  out.resize(a.rows());
  const Eigen::Index rows = a.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < rows; ++r) out[r] = row_dot(a, r, x) - b[r];
}

PairCounts kendall_pairs_serial(std::span<const double> x, std::span<const double> y) {
  PairCounts c;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) count_pair(x[j] - x[i], y[j] - y[i], c);
  }
  return c;
}

PairCounts kendall_pairs_parallel(std::span<const double> x, std::span<const double> y) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  std::int64_t concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : concordant, discordant, tied_x, tied_y)
  for (std::int64_t i = 0; i < n; ++i) {
    PairCounts local;
    for (std::int64_t j = i + 1; j < n; ++j) count_pair(x[j] - x[i], y[j] - y[i], local);
    concordant += local.concordant;
    discordant += local.discordant;
    tied_x += local.tied_x;
    tied_y += local.tied_y;
  }
  return {concordant, discordant, tied_x, tied_y};
}

}  // namespace kernels
}  // namespace ksqi
