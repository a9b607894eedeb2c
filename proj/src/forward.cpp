#include "hdivmm/forward.hpp"

#include <array>
#include <cmath>

#include <Eigen/SparseLU>
#include <spdlog/spdlog.h>

#include "hdivmm/errors.hpp"

namespace hdivmm {

struct SaddleSolver::Impl {
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

SaddleSolver::SaddleSolver(SparseMatrix matrix, std::string label)
    : matrix_(std::move(matrix)), label_(std::move(label)), impl_(std::make_unique<Impl>()) {
    if (matrix_.rows() != matrix_.cols()) throw InvalidArgument(label_ + ": matrix is not square");
    matrix_.makeCompressed();
    if (matrix_.rows() == 0) return;
    impl_->lu.analyzePattern(matrix_);
    impl_->lu.factorize(matrix_);
    if (impl_->lu.info() != Eigen::Success)
        throw NumericalError(label_ + ": factorization failed (" + impl_->lu.lastErrorMessage() + ")");
    spdlog::debug("{}: factorized {} x {} system, {} nonzeros", label_, matrix_.rows(), matrix_.cols(),
                  matrix_.nonZeros());
}

SaddleSolver::~SaddleSolver() = default;
SaddleSolver::SaddleSolver(SaddleSolver&&) noexcept = default;
SaddleSolver& SaddleSolver::operator=(SaddleSolver&&) noexcept = default;

Eigen::VectorXd SaddleSolver::solve(const Eigen::VectorXd& rhs) const {
    if (rhs.size() != matrix_.rows()) throw InvalidArgument(label_ + ": right-hand side size mismatch");
    if (matrix_.rows() == 0) return Eigen::VectorXd();
    if (!rhs.allFinite()) throw NumericalError(label_ + ": non-finite right-hand side");
    const double tol = 1e-10 * (1.0 + rhs.norm());
    Eigen::VectorXd x = impl_->lu.solve(rhs);
    Eigen::VectorXd r = rhs - matrix_ * x;
    for (int it = 0; it < 3 && !(r.norm() <= tol); ++it) {
        x += impl_->lu.solve(r);
        r = rhs - matrix_ * x;
    }
    if (!x.allFinite() || !(r.norm() <= tol))
        throw NumericalError(label_ + ": residual " + std::to_string(r.norm()) + " exceeds tolerance " +
                             std::to_string(tol));
    return x;
}

double SaddleSolver::condition_estimate() const {
    const Eigen::Index n = matrix_.rows();
    if (n == 0) return 1.0;
    double anorm = 0.0;
    for (Eigen::Index k = 0; k < matrix_.outerSize(); ++k) {
        double s = 0.0;
        for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it) s += std::abs(it.value());
        anorm = std::max(anorm, s);
    }
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    double est = 0.0;
    for (int it = 0; it < 5; ++it) {
        const Eigen::VectorXd y = impl_->lu.solve(x);
        est = y.lpNorm<1>();
        const Eigen::VectorXd xi = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
        const Eigen::VectorXd z = impl_->lu.transpose().solve(xi);
        Eigen::Index jmax = 0;
        const double zmax = z.cwiseAbs().maxCoeff(&jmax);
        if (zmax <= z.dot(x)) break;
        x.setZero();
        x[jmax] = 1.0;
    }
    return anorm * est;
}

Eigen::VectorXd solve_saddle(const SparseMatrix& matrix, const Eigen::VectorXd& rhs) {
    return SaddleSolver(matrix).solve(rhs);
}

SparseMatrix block_matrix(const std::vector<std::vector<const SparseMatrix*>>& blocks,
                          const std::vector<int>& row_sizes, const std::vector<int>& col_sizes) {
    std::vector<int> roff(row_sizes.size() + 1, 0), coff(col_sizes.size() + 1, 0);
    for (std::size_t i = 0; i < row_sizes.size(); ++i) roff[i + 1] = roff[i] + row_sizes[i];
    for (std::size_t j = 0; j < col_sizes.size(); ++j) coff[j + 1] = coff[j] + col_sizes[j];
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        for (std::size_t j = 0; j < blocks[i].size(); ++j) {
            const SparseMatrix* b = blocks[i][j];
            if (!b) continue;
            if (b->rows() != row_sizes[i] || b->cols() != col_sizes[j])
                throw InvalidArgument("block_matrix: block (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") has the wrong shape");
            for (Eigen::Index k = 0; k < b->outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(*b, k); it; ++it)
                    t.emplace_back(roff[i] + it.row(), coff[j] + it.col(), it.value());
        }
    }
    SparseMatrix m(roff.back(), coff.back());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SparseMatrix forward_matrix(const SaddleBlocks& b) {
    const SparseMatrix a2t = b.a2.transpose();
    return block_matrix({{&b.a1, &a2t}, {&b.a2, &b.a6}}, {b.n1(), b.n2()}, {b.n1(), b.n2()});
}

ForwardSolver::ForwardSolver(const SaddleBlocks& blocks)
    : n1_(blocks.n1()), m0_(blocks.m0), solver_(forward_matrix(blocks), "forward") {}

FieldPair ForwardSolver::solve(const Eigen::VectorXd& f) const {
    if (f.size() != m0_.size()) throw InvalidArgument("solve_forward: f has the wrong size");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(solver_.size());
    rhs.tail(m0_.size()) = -(m0_.array() * f.array()).matrix();
    const Eigen::VectorXd x = solver_.solve(rhs);
    return FieldPair{x.head(n1_), x.tail(m0_.size())};
}

FieldPair solve_forward(const SaddleBlocks& blocks, const Eigen::VectorXd& f) {
    return ForwardSolver(blocks).solve(f);
}

namespace {

struct CellRule {
    std::array<Eigen::Vector3d, 6> bary;
    std::array<double, 6> w;
};

// Symmetric 6-point rule, exact for degree 4.
const CellRule& degree4_rule() {
    static const CellRule rule = [] {
        CellRule r;
        const double a = 0.445948490915965, wa = 0.223381589678011;
        const double b = 0.091576213509771, wb = 0.109951743655322;
        r.bary = {Eigen::Vector3d(a, a, 1 - 2 * a), Eigen::Vector3d(a, 1 - 2 * a, a), Eigen::Vector3d(1 - 2 * a, a, a),
                  Eigen::Vector3d(b, b, 1 - 2 * b), Eigen::Vector3d(b, 1 - 2 * b, b), Eigen::Vector3d(1 - 2 * b, b, b)};
        r.w = {wa, wa, wa, wb, wb, wb};
        return r;
    }();
    return rule;
}

Eigen::Vector2d map_point(const Mesh& m, int k, const Eigen::Vector3d& lam) {
    const auto& c = m.cells()[k];
    return lam[0] * m.vertex(c[0]) + lam[1] * m.vertex(c[1]) + lam[2] * m.vertex(c[2]);
}

} // namespace

double flux_l2_norm(const HDivSpace& hdiv, const Eigen::VectorXd& j) {
    return l2_error(hdiv, j, [](const Eigen::Vector2d&) { return Eigen::Vector2d::Zero().eval(); });
}

double hdiv_norm(const HDivSpace& hdiv, const Eigen::VectorXd& j) {
    const double a = flux_l2_norm(hdiv, j);
    const Eigen::VectorXd d = hdiv.divergence(j);
    const Eigen::Map<const Eigen::VectorXd> area(hdiv.mesh().areas().data(), hdiv.mesh().num_cells());
    return std::sqrt(a * a + (d.array().square() * area.array()).sum());
}

double p0_l2_norm(const L2Space& l2, const Eigen::VectorXd& phi) {
    return std::sqrt((phi.array().square() * l2.areas().array()).sum());
}

double l2_error(const L2Space& l2, const Eigen::VectorXd& phi, const ScalarField& exact) {
    const Mesh& m = l2.mesh();
    const auto& rule = degree4_rule();
    double s = 0.0;
    for (int k = 0; k < m.num_cells(); ++k) {
        double cell = 0.0;
        for (int q = 0; q < 6; ++q) {
            const double d = phi[k] - exact(map_point(m, k, rule.bary[q]));
            cell += rule.w[q] * d * d;
        }
        s += cell * m.area(k);
    }
    return std::sqrt(s);
}

double l2_error(const HDivSpace& hdiv, const Eigen::VectorXd& j, const VectorField& exact) {
    const Mesh& m = hdiv.mesh();
    if (j.size() != hdiv.n1()) throw InvalidArgument("l2_error: coefficient size mismatch");
    const auto& rule = degree4_rule();
    double s = 0.0;
    for (int k = 0; k < m.num_cells(); ++k) {
        double cell = 0.0;
        for (int q = 0; q < 6; ++q) {
            const Eigen::Vector2d x = map_point(m, k, rule.bary[q]);
            cell += rule.w[q] * (hdiv.eval(j, k, x) - exact(x)).squaredNorm();
        }
        s += cell * m.area(k);
    }
    return std::sqrt(s);
}

double stability_ratio(const HDivSpace& hdiv, const L2Space& l2, const FieldPair& fields, const Eigen::VectorXd& f) {
    const double nf = p0_l2_norm(l2, f);
    if (nf == 0.0) throw InvalidArgument("stability_ratio: f is zero");
    return (hdiv_norm(hdiv, fields.j) + p0_l2_norm(l2, fields.phi)) / nf;
}

} // namespace hdivmm
