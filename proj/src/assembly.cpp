#include "hdivmm/assembly.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hdivmm/errors.hpp"

namespace hdivmm {

CoefficientFields CoefficientFields::make(std::vector<Eigen::Matrix2d> A, Eigen::VectorXd c) {
    if (A.size() != static_cast<std::size_t>(c.size()))
        throw InvalidArgument("CoefficientFields: A and c sizes differ");
    CoefficientFields f;
    f.mu = std::numeric_limits<double>::infinity();
    f.Ainv.reserve(A.size());
    for (std::size_t k = 0; k < A.size(); ++k) {
        const Eigen::Matrix2d& a = A[k];
        if (!a.allFinite()) throw InvalidArgument("CoefficientFields: non-finite A at cell " + std::to_string(k));
        if (std::abs(a(0, 1) - a(1, 0)) > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
            throw InvalidArgument("CoefficientFields: A not symmetric at cell " + std::to_string(k));
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(a, Eigen::EigenvaluesOnly).eigenvalues()[0];
        if (!(lmin > 0.0)) throw InvalidArgument("CoefficientFields: A not positive definite at cell " + std::to_string(k));
        f.mu = std::min(f.mu, lmin);
        f.Ainv.push_back(a.inverse());
    }
    if (c.size() > 0) {
        if (!c.allFinite() || c.minCoeff() < 0.0) throw InvalidArgument("CoefficientFields: c must be finite and >= 0");
        f.c0 = c.minCoeff();
        f.c1 = c.maxCoeff();
    }
    f.A = std::move(A);
    f.c = std::move(c);
    return f;
}

CoefficientFields CoefficientFields::uniform(int num_cells, const Eigen::Matrix2d& A, double c) {
    return make(std::vector<Eigen::Matrix2d>(num_cells, A), Eigen::VectorXd::Constant(num_cells, c));
}

PriorEllipsoid PriorEllipsoid::make(Eigen::VectorXd f0, Eigen::VectorXd q, double epsilon1) {
    if (f0.size() != q.size()) throw InvalidArgument("PriorEllipsoid: f0 and q sizes differ");
    if (!f0.allFinite()) throw InvalidArgument("PriorEllipsoid: non-finite f0");
    if (q.size() > 0 && !(q.allFinite() && q.minCoeff() > 0.0)) throw InvalidArgument("PriorEllipsoid: q must be > 0");
    if (!(epsilon1 > 0.0) || !std::isfinite(epsilon1)) throw InvalidArgument("PriorEllipsoid: epsilon1 must be > 0");
    return PriorEllipsoid{std::move(f0), std::move(q), epsilon1};
}

double PriorEllipsoid::membership(const L2Space& l2, const Eigen::VectorXd& f) const {
    const Eigen::VectorXd d = f - f0;
    return (q.array() * d.array().square() * l2.areas().array()).sum() / epsilon1;
}

SparseMatrix diagonal_matrix(const Eigen::VectorXd& d) {
    SparseMatrix m(d.size(), d.size());
    m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
    for (Eigen::Index i = 0; i < d.size(); ++i) m.insert(i, i) = d[i];
    m.makeCompressed();
    return m;
}

namespace {

// (B psi_j, psi_i) on one cell by the edge-midpoint rule.
Eigen::Matrix3d local_mass(const HDivSpace& hdiv, int k, const Eigen::Matrix2d& B) {
    const Mesh& m = hdiv.mesh();
    const auto& c = m.cells()[k];
    Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
    for (int q = 0; q < 3; ++q) {
        const Eigen::Vector2d x = 0.5 * (m.vertex(c[(q + 1) % 3]) + m.vertex(c[(q + 2) % 3]));
        Eigen::Matrix<double, 2, 3> psi;
        for (int l = 0; l < 3; ++l) psi.col(l) = hdiv.basis(k, l, x);
        out += psi.transpose() * B * psi;
    }
    return out * (m.area(k) / 3.0);
}

} // namespace

SaddleBlocks assemble_core_forms(const HDivSpace& hdiv, const L2Space& l2, const CoefficientFields& coeffs,
                                 const PriorEllipsoid& prior) {
    const Mesh& m = hdiv.mesh();
    if (&m != &l2.mesh()) throw InvalidArgument("assemble_core_forms: spaces on different meshes");
    const int nc = m.num_cells();
    if (static_cast<int>(coeffs.A.size()) != nc || coeffs.c.size() != nc)
        throw InvalidArgument("assemble_core_forms: coefficient fields do not match the mesh");
    if (prior.q.size() != nc || prior.f0.size() != nc)
        throw InvalidArgument("assemble_core_forms: prior does not match the mesh");

    const int n1 = hdiv.n1();
    const int n2 = l2.n2();
    std::vector<Eigen::Triplet<double>> t1, tb, t2;
    t1.reserve(9 * nc);
    tb.reserve(9 * nc);
    t2.reserve(3 * nc);
    for (int k = 0; k < nc; ++k) {
        const Eigen::Matrix3d ma = local_mass(hdiv, k, coeffs.Ainv[k]);
        const Eigen::Matrix3d mb = local_mass(hdiv, k, coeffs.Ainv[k].transpose());
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                t1.emplace_back(hdiv.dof(k, i), hdiv.dof(k, j), ma(i, j));
                tb.emplace_back(hdiv.dof(k, i), hdiv.dof(k, j), mb(i, j));
            }
            t2.emplace_back(k, hdiv.dof(k, i), -hdiv.basis_div(k, i) * m.area(k));
        }
    }

    SaddleBlocks b;
    b.a1.resize(n1, n1);
    b.a1.setFromTriplets(t1.begin(), t1.end());
    b.abar1.resize(n1, n1);
    b.abar1.setFromTriplets(tb.begin(), tb.end());
    b.a2.resize(n2, n1);
    b.a2.setFromTriplets(t2.begin(), t2.end());
    b.a3.resize(n1, n1);
    b.a4.resize(n2, n2);
    b.a5 = diagonal_matrix(-(l2.areas().array() / prior.q_eff().array()).matrix());
    b.a6 = diagonal_matrix(-(coeffs.c.array() * l2.areas().array()).matrix());
    b.b1 = Eigen::VectorXd::Zero(n1);
    b.b2 = Eigen::VectorXd::Zero(n2);
    b.m0 = l2.areas();
    return b;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> assemble_functional_loads(const HDivSpace& hdiv, const L2Space& l2,
                                                                      const Eigen::MatrixX2d& l1,
                                                                      const Eigen::VectorXd& l2fun) {
    const Mesh& m = hdiv.mesh();
    if (l1.rows() != m.num_cells() || l2fun.size() != l2.n2())
        throw InvalidArgument("assemble_functional_loads: load sizes do not match the mesh");
    Eigen::VectorXd b1 = Eigen::VectorXd::Zero(hdiv.n1());
    for (int k = 0; k < m.num_cells(); ++k) {
        const Eigen::Vector2d xc = m.centroid(k);
        const Eigen::Vector2d lk = l1.row(k).transpose();
        for (int l = 0; l < 3; ++l) b1[hdiv.dof(k, l)] += m.area(k) * lk.dot(hdiv.basis(k, l, xc));
    }
    Eigen::VectorXd b2 = (l2fun.array() * l2.areas().array()).matrix();
    return {std::move(b1), std::move(b2)};
}

} // namespace hdivmm
