#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsikit {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Triplet {
  int row, col;
  double val;
};

/// Compressed sparse row matrix. Built from triplets with a deterministic
/// (row, col) ordering; duplicate entries are summed.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  static CsrMatrix from_triplets(int nrows, int ncols, std::vector<Triplet> triplets);

  int rows() const { return nrows_; }
  int cols() const { return ncols_; }
  std::span<const int> row_ptr() const { return row_ptr_; }
  std::span<const int> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  std::vector<double> multiply(std::span<const double> x) const;
  std::vector<double> multiply_transpose(std::span<const double> x) const;
  CsrMatrix transposed() const;
  double frobenius_norm() const;
  /// max |A - A^T| entry, for symmetry checks.
  double symmetry_gap() const;
  double entry(int row, int col) const;

  /// Symmetric Dirichlet elimination: constrained rows become identity rows,
  /// rhs entries are set to the prescribed values, and constrained columns
  /// are moved to the rhs. Sparsity pattern is preserved (entries zeroed).
  void eliminate_dirichlet(std::span<const int> dofs, std::span<const double> values,
                           std::span<double> rhs);

  /// Rebuild with explicit (possibly zero) diagonal entries, so elimination
  /// can turn structurally empty rows into identity rows.
  CsrMatrix with_diagonal() const;

 private:
  int nrows_ = 0, ncols_ = 0;
  std::vector<int> row_ptr_, col_idx_;
  std::vector<double> values_;
};

/// Sparse direct LU (with pivoting) behind the solve contract; also solves
/// transposed systems on the same factorization.
class LuSolver {
 public:
  LuSolver();
  ~LuSolver();
  LuSolver(LuSolver&&) noexcept;
  LuSolver& operator=(LuSolver&&) noexcept;

  void factorize(const CsrMatrix& a);
  bool factorized() const;
  std::vector<double> solve(std::span<const double> b) const;
  std::vector<double> solve_transpose(std::span<const double> b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Direct solve with a residual check per the solver contract.
std::vector<double> solve_sparse(const CsrMatrix& a, std::span<const double> b);

/// Repeated assembly into a fixed sparsity pattern.
class CsrAssembler {
 public:
  explicit CsrAssembler(CsrMatrix pattern) : mat_(std::move(pattern)) { zero(); }
  void zero() {
    for (auto& v : mat_.values()) v = 0.0;
  }
  void add(int row, int col, double v) {
    const auto rp = mat_.row_ptr();
    const auto ci = mat_.col_idx();
    int lo = rp[row], hi = rp[row + 1];
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (ci[mid] < col)
        lo = mid + 1;
      else
        hi = mid;
    }
    mat_.values()[lo] += v;
  }
  const CsrMatrix& matrix() const { return mat_; }
  CsrMatrix& matrix() { return mat_; }

 private:
  CsrMatrix mat_;
};

/// Sparse Cholesky factor (natural ordering) of an SPD matrix S, exposing the
/// upper-triangular factor U with U^T U = S and the associated maps.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const CsrMatrix& s);
  ~CholeskyFactor();
  CholeskyFactor(CholeskyFactor&&) noexcept;
  CholeskyFactor& operator=(CholeskyFactor&&) noexcept;

  /// U x
  std::vector<double> apply(std::span<const double> x) const;
  /// U^{-1} x
  std::vector<double> solve(std::span<const double> x) const;
  /// U^{-T} x
  std::vector<double> solve_transpose(std::span<const double> x) const;
  CsrMatrix factor_csr() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fsikit
