#include "fsikit/sparse.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

namespace fsikit {

CsrMatrix CsrMatrix::from_triplets(int nrows, int ncols, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m;
  m.nrows_ = nrows;
  m.ncols_ = ncols;
  m.row_ptr_.assign(nrows + 1, 0);
  for (size_t k = 0; k < triplets.size();) {
    size_t j = k;
    double sum = 0.0;
    while (j < triplets.size() && triplets[j].row == triplets[k].row &&
           triplets[j].col == triplets[k].col)
      sum += triplets[j++].val;
    m.col_idx_.push_back(triplets[k].col);
    m.values_.push_back(sum);
    ++m.row_ptr_[triplets[k].row + 1];
    k = j;
  }
  for (int r = 0; r < nrows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(nrows_, 0.0);
  for (int r = 0; r < nrows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) y[r] += values_[k] * x[col_idx_[k]];
  return y;
}

std::vector<double> CsrMatrix::multiply_transpose(std::span<const double> x) const {
  std::vector<double> y(ncols_, 0.0);
  for (int r = 0; r < nrows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) y[col_idx_[k]] += values_[k] * x[r];
  return y;
}

CsrMatrix CsrMatrix::transposed() const {
  std::vector<Triplet> t;
  t.reserve(values_.size());
  for (int r = 0; r < nrows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({col_idx_[k], r, values_[k]});
  return from_triplets(ncols_, nrows_, std::move(t));
}

double CsrMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

double CsrMatrix::entry(int row, int col) const {
  for (int k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k)
    if (col_idx_[k] == col) return values_[k];
  return 0.0;
}

double CsrMatrix::symmetry_gap() const {
  const CsrMatrix t = transposed();
  double gap = 0.0;
  for (int r = 0; r < nrows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      gap = std::max(gap, std::abs(values_[k] - t.entry(r, col_idx_[k])));
  return gap;
}

void CsrMatrix::eliminate_dirichlet(std::span<const int> dofs, std::span<const double> values,
                                    std::span<double> rhs) {
  std::vector<char> constrained(nrows_, 0);
  std::vector<double> gval(nrows_, 0.0);
  for (size_t i = 0; i < dofs.size(); ++i) {
    constrained[dofs[i]] = 1;
    gval[dofs[i]] = values[i];
  }
  for (int r = 0; r < nrows_; ++r) {
    if (constrained[r]) {
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        values_[k] = col_idx_[k] == r ? 1.0 : 0.0;
    } else {
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        const int c = col_idx_[k];
        if (constrained[c]) {
          rhs[r] -= values_[k] * gval[c];
          values_[k] = 0.0;
        }
      }
    }
  }
  for (size_t i = 0; i < dofs.size(); ++i) rhs[dofs[i]] = values[i];
}

CsrMatrix CsrMatrix::with_diagonal() const {
  std::vector<Triplet> t;
  t.reserve(values_.size() + nrows_);
  for (int r = 0; r < nrows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      t.push_back({r, col_idx_[k], values_[k]});
  for (int r = 0; r < std::min(nrows_, ncols_); ++r) t.push_back({r, r, 0.0});
  return from_triplets(nrows_, ncols_, std::move(t));
}

namespace {

Eigen::SparseMatrix<double> to_eigen(const CsrMatrix& a) {
  Eigen::SparseMatrix<double> m(a.rows(), a.cols());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a.values().size());
  const auto rp = a.row_ptr();
  const auto ci = a.col_idx();
  const auto v = a.values();
  for (int r = 0; r < a.rows(); ++r)
    for (int k = rp[r]; k < rp[r + 1]; ++k) t.emplace_back(r, ci[k], v[k]);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace

struct LuSolver::Impl {
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool ready = false;
};

LuSolver::LuSolver() : impl_(std::make_unique<Impl>()) {}
LuSolver::~LuSolver() = default;
LuSolver::LuSolver(LuSolver&&) noexcept = default;
LuSolver& LuSolver::operator=(LuSolver&&) noexcept = default;
bool LuSolver::factorized() const { return impl_->ready; }

void LuSolver::factorize(const CsrMatrix& a) {
  if (a.rows() != a.cols()) throw SolverError("matrix is not square");
  const auto m = to_eigen(a);
  impl_->lu.analyzePattern(m);
  impl_->lu.factorize(m);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverError("singular matrix: " + impl_->lu.lastErrorMessage());
  impl_->ready = true;
}

std::vector<double> LuSolver::solve(std::span<const double> b) const {
  Eigen::Map<const Eigen::VectorXd> bm(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = impl_->lu.solve(bm);
  return {x.data(), x.data() + x.size()};
}

std::vector<double> LuSolver::solve_transpose(std::span<const double> b) const {
  Eigen::Map<const Eigen::VectorXd> bm(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = impl_->lu.transpose().solve(bm);
  return {x.data(), x.data() + x.size()};
}

std::vector<double> solve_sparse(const CsrMatrix& a, std::span<const double> b) {
  LuSolver lu;
  lu.factorize(a);
  auto x = lu.solve(b);
  // residual check per the solve contract
  const auto ax = a.multiply(x);
  double rnorm = 0.0, xnorm = 0.0, bnorm = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    rnorm += (ax[i] - b[i]) * (ax[i] - b[i]);
    xnorm += x[i] * x[i];
    bnorm += b[i] * b[i];
  }
  const double anorm = a.frobenius_norm();
  if (std::sqrt(rnorm) > 1e-10 * (anorm * std::sqrt(xnorm) + std::sqrt(bnorm)) + 1e-300)
    throw SolverError("direct solve residual exceeds tolerance (ill-conditioned system)");
  return x;
}

struct CholeskyFactor::Impl {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> llt;
  Eigen::SparseMatrix<double> upper;  // U with U^T U = S
};

CholeskyFactor::CholeskyFactor(const CsrMatrix& s) : impl_(std::make_unique<Impl>()) {
  impl_->llt.compute(to_eigen(s));
  if (impl_->llt.info() != Eigen::Success)
    throw SolverError("Cholesky factorization failed (matrix not SPD)");
  impl_->upper = Eigen::SparseMatrix<double>(impl_->llt.matrixL()).transpose();
}

CholeskyFactor::~CholeskyFactor() = default;
CholeskyFactor::CholeskyFactor(CholeskyFactor&&) noexcept = default;
CholeskyFactor& CholeskyFactor::operator=(CholeskyFactor&&) noexcept = default;

std::vector<double> CholeskyFactor::apply(std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> xm(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd y = impl_->upper * xm;
  return {y.data(), y.data() + y.size()};
}

std::vector<double> CholeskyFactor::solve(std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> xm(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd y =
      impl_->upper.triangularView<Eigen::Upper>().solve(Eigen::VectorXd(xm));
  return {y.data(), y.data() + y.size()};
}

std::vector<double> CholeskyFactor::solve_transpose(std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> xm(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd y = impl_->upper.transpose().triangularView<Eigen::Lower>().solve(
      Eigen::VectorXd(xm));
  return {y.data(), y.data() + y.size()};
}

CsrMatrix CholeskyFactor::factor_csr() const {
  std::vector<Triplet> t;
  for (int k = 0; k < impl_->upper.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(impl_->upper, k); it; ++it)
      t.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
  return CsrMatrix::from_triplets(static_cast<int>(impl_->upper.rows()),
                                  static_cast<int>(impl_->upper.cols()), std::move(t));
}

}  // namespace fsikit
