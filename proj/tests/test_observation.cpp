#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "dense_oracle.hpp"
#include "hdivmm/errors.hpp"
#include "hdivmm/observation.hpp"
#include "setups.hpp"

using namespace hdivmm;

namespace {

std::vector<int> all_cells(const Mesh& m) {
    std::vector<int> c(m.num_cells());
    for (int k = 0; k < m.num_cells(); ++k) c[k] = k;
    return c;
}

} // namespace

TEST_CASE("identity scalar channel returns the state verbatim") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(3));
    const auto sp = build_spaces(mesh);
    ObservationSetup s;
    s.scalar_channels.push_back(identity_scalar_channel(all_cells(*mesh), 1.0));
    const ObservationOperators ops(s, sp.hdiv, sp.l2);
    const FieldPair st{Eigen::VectorXd::Random(sp.hdiv.n1()), Eigen::VectorXd::Random(sp.l2.n2())};
    const ObsField y = apply_observation(ops, st);
    CHECK(y.scalar[0] == st.phi);

    // a4 is the P0 mass matrix.
    const auto [a3, a4] = compose_tilde_kernels(ops);
    CHECK(a3.nonZeros() == 0);
    CHECK((Eigen::MatrixXd(a4) - Eigen::MatrixXd(sp.l2.areas().asDiagonal())).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("constant scalar kernel integrates the state") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(2));
    const auto sp = build_spaces(mesh);
    std::vector<int> S = {0, 1, 2, 3}; // lower half, area 0.5
    ObservationSetup s;
    s.scalar_channels.push_back(kernel_scalar_channel(*mesh, S, [](const Eigen::Vector2d&, const Eigen::Vector2d&) { return 1.0; }, 1.0));
    const ObservationOperators ops(s, sp.hdiv, sp.l2);
    const FieldPair st{Eigen::VectorXd::Zero(sp.hdiv.n1()), Eigen::VectorXd::Constant(sp.l2.n2(), 3.0)};
    const ObsField y = ops.apply(st);
    for (Eigen::Index a = 0; a < y.scalar[0].size(); ++a) CHECK(std::abs(y.scalar[0][a] - 1.5) <= 1e-14);

    // Rank one Gram matrix.
    const auto [a3, a4] = compose_tilde_kernels(ops);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(a4)).eigenvalues();
    int rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) rank += ev[i] > 1e-12 * ev.cwiseAbs().maxCoeff();
    CHECK(rank == 1);
    CHECK(ev.minCoeff() >= -1e-14);
}

TEST_CASE("no channels") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(2));
    const auto sp = build_spaces(mesh);
    const ObservationOperators ops(ObservationSetup{}, sp.hdiv, sp.l2);
    const auto [a3, a4] = compose_tilde_kernels(ops);
    CHECK(a3.rows() == sp.hdiv.n1());
    CHECK(a3.nonZeros() == 0);
    CHECK(a4.nonZeros() == 0);
    CHECK(std::isinf(ObservationSetup{}.alpha()));
}

TEST_CASE("operators, adjoints and Gram matrices match dense oracles") {
    auto setup = testsupport::random_setup(5, 3);
    const auto& p = *setup.problem;
    const auto& ops = p.obs();
    const auto d = oracle::assemble(p, setup.state);
    CHECK((Eigen::MatrixXd(ops.G1()) - d.G1).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Eigen::MatrixXd(ops.G2()) - d.G2).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Eigen::MatrixXd(p.blocks().a3) - d.a3).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Eigen::MatrixXd(p.blocks().a4) - d.a4).cwiseAbs().maxCoeff() <= 1e-12);

    const Eigen::MatrixXd a3 = Eigen::MatrixXd(p.blocks().a3);
    CHECK((a3 - a3.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a3).eigenvalues().minCoeff() >= -1e-12);

    // Random flux state: C1 j against the dense operator.
    const FieldPair st{Eigen::VectorXd::Random(p.hdiv().n1()), Eigen::VectorXd::Random(p.l2().n2())};
    const ObsField y = ops.apply(st);
    CHECK((ops.flatten_flux(y) - d.G1 * st.j).cwiseAbs().maxCoeff() <= 1e-12);

    // <C j, w>_H = (j, C^t w)_{L2}, with C^t w cell-wise constant.
    std::mt19937_64 rng(3);
    const ObsField w = testsupport::random_obs(ops, rng);
    const auto [cf1, cf2] = ops.adjoint_fields(w);
    const Eigen::MatrixX2d jc = p.hdiv().centroid_values(st.j);
    double rhs1 = 0, rhs2 = 0;
    for (int k = 0; k < p.mesh().num_cells(); ++k) {
        rhs1 += p.mesh().area(k) * jc.row(k).dot(cf1.row(k));
        rhs2 += p.mesh().area(k) * st.phi[k] * cf2[k];
    }
    CHECK(std::abs(ops.inner_flux(y, w) - rhs1) <= 1e-10);
    CHECK(std::abs(ops.inner_scalar(y, w) - rhs2) <= 1e-10);

    // Adjoint loads are the Galerkin projection of C^t u.
    const auto [l1, l2] = ops.adjoint_loads(w);
    CHECK(std::abs(l1.dot(st.j) - rhs1) <= 1e-10);
    CHECK(std::abs(l2.dot(st.phi) - rhs2) <= 1e-10);
}

TEST_CASE("weights, inverse weights and alpha") {
    auto s = testsupport::random_setup(9, 3);
    const auto& ops = s.problem->obs();
    std::mt19937_64 rng(1);
    const ObsField u = testsupport::random_obs(ops, rng);
    const ObsField back = ops.apply_weight(ops.apply_inverse_weight(u));
    CHECK((ops.flatten_flux(back) - ops.flatten_flux(u)).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((ops.flatten_scalar(back) - ops.flatten_scalar(u)).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(ops.inverse_weight_norm2_flux(u) == doctest::Approx(ops.inner_flux(ops.apply_inverse_weight(u), u)).epsilon(1e-13));
    // (Q~^{-1} u, u) >= alpha ||u||^2.
    const double alpha = ops.setup().alpha();
    CHECK(alpha > 0.0);
    CHECK(ops.inverse_weight_norm2_flux(u) + ops.inverse_weight_norm2_scalar(u) >= alpha * ops.inner(u, u) * (1 - 1e-12));
}

TEST_CASE("admissibility traces") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(2));
    const auto sp = build_spaces(mesh);
    ObservationSetup s;
    s.scalar_channels.push_back(identity_scalar_channel({0, 1, 2, 3}, 2.0));
    const ObservationOperators ops(s, sp.hdiv, sp.l2);

    NoiseCovariance zero{{}, {Eigen::VectorXd::Zero(4)}};
    auto r0 = check_admissibility(ops, zero);
    CHECK(r0.trace_flux == 0.0);
    CHECK(r0.trace_scalar == 0.0);
    CHECK(r0.admissible());

    for (double s2 : {0.5, 1.0, 1.5}) {
        const auto r = check_admissibility(ops, NoiseCovariance{{}, {Eigen::VectorXd::Constant(4, s2)}});
        CHECK(r.trace_scalar == doctest::Approx(s2));
        CHECK(r.admissible() == (s2 <= 1.0));
    }
    CHECK_THROWS_AS(check_admissibility(ops, NoiseCovariance{}), InvalidArgument);
}

TEST_CASE("setup validation") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(1));
    const auto sp = build_spaces(mesh);
    auto make = [&](ObservationSetup s) { return ObservationOperators(std::move(s), sp.hdiv, sp.l2); };
    ObservationSetup a;
    a.scalar_channels.push_back(identity_scalar_channel({}, 1.0));
    CHECK_THROWS_AS(make(a), InvalidArgument);
    ObservationSetup b;
    b.scalar_channels.push_back(identity_scalar_channel({5}, 1.0));
    CHECK_THROWS_AS(make(b), InvalidArgument);
    ObservationSetup c;
    c.flux_channels.push_back(identity_flux_channel({0}, -Eigen::Matrix2d::Identity()));
    CHECK_THROWS_AS(make(c), InvalidArgument);
    ObservationSetup d;
    d.flux_channels.push_back(identity_flux_channel({0, 1}, Eigen::Matrix2d::Zero()));
    const auto ops = make(d);
    CHECK_FALSE(ops.active_flux(0));
    CHECK(ops.W1().nonZeros() == 0);
    ObservationSetup e;
    e.epsilon2 = 0.0;
    CHECK_THROWS_AS(make(e), InvalidArgument);
}
