#include <doctest.h>

#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "hdivmm/errors.hpp"
#include "hdivmm/forward.hpp"

using namespace hdivmm;

namespace {

struct Problem {
    MeshPtr mesh;
    Spaces sp;
    SaddleBlocks blocks;
};

Problem make(int n, const Eigen::Matrix2d& A, double c) {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(n));
    auto sp = build_spaces(mesh);
    const int nc = mesh->num_cells();
    auto blocks = assemble_core_forms(sp.hdiv, sp.l2, CoefficientFields::uniform(nc, A, c),
                                      PriorEllipsoid::make(Eigen::VectorXd::Zero(nc), Eigen::VectorXd::Ones(nc)));
    return Problem{mesh, std::move(sp), std::move(blocks)};
}

double rate(double e0, double e1) { return std::log(e0 / e1) / std::log(2.0); }

} // namespace

TEST_CASE("solve_saddle basics") {
    SparseMatrix I(3, 3);
    I.setIdentity();
    const Eigen::Vector3d r(1, -2, 3);
    CHECK(solve_saddle(I, r) == r);

    SparseMatrix P(2, 2);
    P.insert(0, 1) = 1.0;
    P.insert(1, 0) = 1.0;
    const Eigen::VectorXd x = solve_saddle(P, Eigen::Vector2d(4, 5));
    CHECK(x[0] == doctest::Approx(5.0));
    CHECK(x[1] == doctest::Approx(4.0));

    SparseMatrix S(2, 2);
    S.insert(0, 0) = 1.0;
    CHECK_THROWS_AS(solve_saddle(S, Eigen::Vector2d(1, 1)), NumericalError);
}

TEST_CASE("forward system against dense LU") {
    Eigen::Matrix2d A;
    A << 2, 0.3, 0.3, 1;
    const auto p = make(2, A, 0.7);
    const Eigen::VectorXd f = interpolate_l2(p.sp.l2, [](const Eigen::Vector2d& x) { return 1 + x.x() * x.y(); });
    const FieldPair s = solve_forward(p.blocks, f);
    const Eigen::MatrixXd K = Eigen::MatrixXd(forward_matrix(p.blocks));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K.rows());
    rhs.tail(f.size()) = -(p.sp.l2.areas().array() * f.array()).matrix();
    const Eigen::VectorXd ref = K.fullPivLu().solve(rhs);
    CHECK((s.j - ref.head(s.j.size())).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s.phi - ref.tail(s.phi.size())).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("homogeneous, linear, deterministic") {
    const auto p = make(4, Eigen::Matrix2d::Identity(), 1.0);
    const ForwardSolver solver(p.blocks);
    const int nc = p.mesh->num_cells();
    const FieldPair z = solver.solve(Eigen::VectorXd::Zero(nc));
    CHECK(z.j.isZero(0.0));
    CHECK(z.phi.isZero(0.0));

    const Eigen::VectorXd f1 = Eigen::VectorXd::Random(nc), f2 = Eigen::VectorXd::Random(nc);
    const FieldPair s1 = solver.solve(f1), s2 = solver.solve(f2), s12 = solver.solve(f1 + f2);
    CHECK((s12.j - s1.j - s2.j).norm() <= 1e-10 * s12.j.norm());
    CHECK((s12.phi - s1.phi - s2.phi).norm() <= 1e-10 * s12.phi.norm());

    const FieldPair again = solve_forward(p.blocks, f1);
    CHECK(again.j == s1.j);
    CHECK(again.phi == s1.phi);
}

TEST_CASE("compatibility: total divergence equals total source") {
    Eigen::Matrix2d A;
    A << 2, 0, 0, 1;
    const auto p = make(6, A, 0.0);
    const FieldPair s = solve_forward(p.blocks, Eigen::VectorXd::Ones(p.mesh->num_cells()));
    const Eigen::VectorXd div = p.sp.hdiv.divergence(s.j);
    CHECK(std::abs((div.array() * p.sp.l2.areas().array()).sum() - 1.0) <= 1e-10);
    CHECK(std::abs(-(p.blocks.a2 * s.j).sum() - 1.0) <= 1e-10);
}

TEST_CASE("manufactured solution converges") {
    const double pi = M_PI;
    auto phi = [pi](const Eigen::Vector2d& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); };
    auto j = [pi](const Eigen::Vector2d& x) {
        return Eigen::Vector2d(-pi * std::cos(pi * x.x()) * std::sin(pi * x.y()),
                               -pi * std::sin(pi * x.x()) * std::cos(pi * x.y()));
    };
    std::vector<double> ephi, ej, stab;
    for (int n : {8, 16, 32}) {
        const auto p = make(n, Eigen::Matrix2d::Identity(), 1.0);
        const Eigen::VectorXd f = interpolate_l2(p.sp.l2, [&](const Eigen::Vector2d& x) { return (2 * pi * pi + 1) * phi(x); });
        const FieldPair s = solve_forward(p.blocks, f);
        ephi.push_back(l2_error(p.sp.l2, s.phi, phi));
        ej.push_back(l2_error(p.sp.hdiv, s.j, j));
        stab.push_back(stability_ratio(p.sp.hdiv, p.sp.l2, s, f));
    }
    for (std::size_t i = 0; i + 1 < ephi.size(); ++i) {
        CHECK(rate(ephi[i], ephi[i + 1]) >= 0.9);
        CHECK(rate(ej[i], ej[i + 1]) >= 0.9);
    }
    for (double r : stab) CHECK(r <= 2.0 * stab.front());
    for (double r : stab) CHECK(r >= 0.5 * stab.front());
}

TEST_CASE("norms") {
    const auto p = make(3, Eigen::Matrix2d::Identity(), 0.0);
    const Eigen::VectorXd j = interpolate_hdiv(p.sp.hdiv, [](const Eigen::Vector2d&) { return Eigen::Vector2d(3, 4); });
    CHECK(flux_l2_norm(p.sp.hdiv, j) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(hdiv_norm(p.sp.hdiv, j) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(p0_l2_norm(p.sp.l2, Eigen::VectorXd::Constant(p.mesh->num_cells(), 2.0)) == doctest::Approx(2.0));
    // ||j||^2 = j^T a1 j for A = I.
    CHECK(flux_l2_norm(p.sp.hdiv, j) * flux_l2_norm(p.sp.hdiv, j) == doctest::Approx(j.dot(p.blocks.a1 * j)).epsilon(1e-12));
}

TEST_CASE("condition estimate is close to the dense 1-norm condition number") {
    const auto p = make(2, Eigen::Matrix2d::Identity(), 1.0);
    const SaddleSolver s(forward_matrix(p.blocks));
    const Eigen::MatrixXd K = Eigen::MatrixXd(s.matrix());
    const Eigen::MatrixXd Ki = K.inverse();
    const double kappa = K.cwiseAbs().colwise().sum().maxCoeff() * Ki.cwiseAbs().colwise().sum().maxCoeff();
    CHECK(s.condition_estimate() <= kappa * (1 + 1e-10));
    CHECK(s.condition_estimate() >= 0.1 * kappa);
}
