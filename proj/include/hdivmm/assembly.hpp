#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hdivmm/femspace.hpp"

namespace hdivmm {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Piecewise constant conductivity A and reaction c.
struct CoefficientFields {
    std::vector<Eigen::Matrix2d> A;
    std::vector<Eigen::Matrix2d> Ainv;
    Eigen::VectorXd c;
    double mu = 0.0; // min eigenvalue of A over all cells
    double c0 = 0.0;
    double c1 = 0.0;

    /// Validates symmetry (1e-12), positive definiteness and c >= 0.
    static CoefficientFields make(std::vector<Eigen::Matrix2d> A, Eigen::VectorXd c);
    static CoefficientFields uniform(int num_cells, const Eigen::Matrix2d& A, double c);
};

/// The set { f : (Q(f - f0), f - f0) <= epsilon1 } with Q multiplication by q.
struct PriorEllipsoid {
    Eigen::VectorXd f0;
    Eigen::VectorXd q;
    double epsilon1 = 1.0;

    static PriorEllipsoid make(Eigen::VectorXd f0, Eigen::VectorXd q, double epsilon1 = 1.0);

    /// q / epsilon1, the weight of the normalized ellipsoid.
    Eigen::VectorXd q_eff() const { return q / epsilon1; }
    /// (Q(f - f0), f - f0) / epsilon1; the set is membership <= 1.
    double membership(const L2Space& l2, const Eigen::VectorXd& f) const;
};

/// Matrices and loads of the discrete systems (row index = test function).
struct SaddleBlocks {
    SparseMatrix abar1; // n1 x n1, (A^{-T} xi_j, xi_i)
    SparseMatrix a1;    // n1 x n1, (A^{-1} xi_j, xi_i)
    SparseMatrix a2;    // n2 x n1, -(eta_i, div xi_j)
    SparseMatrix a3;    // n1 x n1, flux observation Gram
    SparseMatrix a4;    // n2 x n2, scalar observation Gram
    SparseMatrix a5;    // n2 x n2, -(Q^{-1} eta_j, eta_i)
    SparseMatrix a6;    // n2 x n2, -(c eta_j, eta_i)
    Eigen::VectorXd b1; // n1
    Eigen::VectorXd b2; // n2
    Eigen::VectorXd m0; // P0 mass diagonal, the cell areas

    int n1() const { return static_cast<int>(a1.rows()); }
    int n2() const { return static_cast<int>(a6.rows()); }
};

/// abar1, a1, a2, a5, a6.  a3, a4 are zero and b1, b2 empty-valued zeros.
SaddleBlocks assemble_core_forms(const HDivSpace& hdiv, const L2Space& l2, const CoefficientFields& coeffs,
                                 const PriorEllipsoid& prior);

/// b1_i = (l1, xi_i) for a cell-wise constant l1 (one row per cell),
/// b2_i = l2_i |K_i|.
std::pair<Eigen::VectorXd, Eigen::VectorXd> assemble_functional_loads(const HDivSpace& hdiv, const L2Space& l2,
                                                                      const Eigen::MatrixX2d& l1,
                                                                      const Eigen::VectorXd& l2fun);

SparseMatrix diagonal_matrix(const Eigen::VectorXd& d);

} // namespace hdivmm
