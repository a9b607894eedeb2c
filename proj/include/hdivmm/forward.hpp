#pragma once

#include <memory>
#include <string>

#include <Eigen/Core>

#include "hdivmm/assembly.hpp"

namespace hdivmm {

/// Flux coefficients (RT0) and state coefficients (P0).
struct FieldPair {
    Eigen::VectorXd j;
    Eigen::VectorXd phi;
};

/// Sparse LU factorization of a square system, reused across right-hand sides.
///
/// Every solve is checked against ||A x - b|| <= 1e-10 (1 + ||b||), with up to
/// three steps of iterative refinement before giving up.  Solves on a const
/// instance are safe to run concurrently.
class SaddleSolver {
public:
    explicit SaddleSolver(SparseMatrix matrix, std::string label = "saddle");
    ~SaddleSolver();
    SaddleSolver(SaddleSolver&&) noexcept;
    SaddleSolver& operator=(SaddleSolver&&) noexcept;

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    int size() const { return static_cast<int>(matrix_.rows()); }
    const SparseMatrix& matrix() const { return matrix_; }
    /// 1-norm condition number estimate (Hager / Higham).
    double condition_estimate() const;

private:
    struct Impl;
    SparseMatrix matrix_;
    std::string label_;
    std::unique_ptr<Impl> impl_;
};

/// One-shot sparse direct solve.
Eigen::VectorXd solve_saddle(const SparseMatrix& matrix, const Eigen::VectorXd& rhs);

/// Builds a sparse matrix from a 2-D grid of blocks (null entries are zero).
SparseMatrix block_matrix(const std::vector<std::vector<const SparseMatrix*>>& blocks,
                          const std::vector<int>& row_sizes, const std::vector<int>& col_sizes);

/// [a1, a2^T; a2, a6].
SparseMatrix forward_matrix(const SaddleBlocks& blocks);

/// Factorized forward operator for repeated solves with different f.
class ForwardSolver {
public:
    explicit ForwardSolver(const SaddleBlocks& blocks);
    FieldPair solve(const Eigen::VectorXd& f) const;
    const SaddleSolver& solver() const { return solver_; }

private:
    int n1_;
    Eigen::VectorXd m0_;
    SaddleSolver solver_;
};

/// Solves [a1, a2^T; a2, a6] (j, phi) = (0, -M0 f).
FieldPair solve_forward(const SaddleBlocks& blocks, const Eigen::VectorXd& f);

double flux_l2_norm(const HDivSpace& hdiv, const Eigen::VectorXd& j);
double hdiv_norm(const HDivSpace& hdiv, const Eigen::VectorXd& j);
double p0_l2_norm(const L2Space& l2, const Eigen::VectorXd& phi);

/// ||phi_h - phi*||_{L2} with a degree-4 cell quadrature.
double l2_error(const L2Space& l2, const Eigen::VectorXd& phi, const ScalarField& exact);
/// ||j_h - j*||_{L2} with a degree-4 cell quadrature.
double l2_error(const HDivSpace& hdiv, const Eigen::VectorXd& j, const VectorField& exact);

/// (||j||_{H(div)} + ||phi||) / ||f||, the discrete a priori stability ratio.
double stability_ratio(const HDivSpace& hdiv, const L2Space& l2, const FieldPair& fields, const Eigen::VectorXd& f);

} // namespace hdivmm
