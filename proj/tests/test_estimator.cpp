#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "dense_oracle.hpp"
#include "hdivmm/errors.hpp"
#include "hdivmm/estimator.hpp"
#include "setups.hpp"

using namespace hdivmm;
using testsupport::add;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

std::shared_ptr<EstimationProblem> simple_problem(int n, ObservationSetup obs, double q = 1.0, double c = 1.0) {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(n));
    const int nc = mesh->num_cells();
    Eigen::VectorXd f0(nc);
    for (int k = 0; k < nc; ++k) f0[k] = 1.0 + mesh->centroid(k).x();
    return std::make_shared<EstimationProblem>(mesh, CoefficientFields::uniform(nc, Eigen::Matrix2d::Identity(), c),
                                               PriorEllipsoid::make(f0, Eigen::VectorXd::Constant(nc, q)), std::move(obs));
}

FunctionalSpec mean_state(int nc) { return FunctionalSpec::state(Eigen::MatrixX2d::Zero(nc, 2), Eigen::VectorXd::Ones(nc)); }

} // namespace

TEST_CASE("zero functional gives zero everything") {
    auto s = testsupport::random_setup(1, 3);
    const int nc = s.problem->mesh().num_cells();
    const auto sol = solve_minimax_system(*s.problem, FunctionalSpec::state(Eigen::MatrixX2d::Zero(nc, 2), Eigen::VectorXd::Zero(nc)));
    CHECK(sol.z1hat.isZero(0.0));
    CHECK(sol.p2.isZero(0.0));
    CHECK(sol.chat == 0.0);
    CHECK(sol.sigma == 0.0);
    CHECK(s.problem->obs().flatten_flux(sol.uhat).isZero(0.0));
    CHECK(evaluate_cost_I(*s.problem, FunctionalSpec::state(Eigen::MatrixX2d::Zero(nc, 2), Eigen::VectorXd::Zero(nc)),
                          s.problem->obs().zero()) == 0.0);
}

TEST_CASE("no channels: sigma^2 is the cost at zero gain") {
    auto p = simple_problem(4, ObservationSetup{});
    const auto f = mean_state(p->mesh().num_cells());
    const auto sol = solve_minimax_system(*p, f);
    const auto z = solve_adjoint(*p, f, p->obs().zero());
    const double direct = z.z2.dot(z.z2.cwiseProduct(p->blocks().m0).cwiseQuotient(p->prior().q_eff()));
    CHECK(rel(sol.sigma * sol.sigma, direct) <= 1e-10);
    CHECK(rel(sol.sigma * sol.sigma, evaluate_cost_I(*p, f, p->obs().zero())) <= 1e-10);
    // Estimate is c-hat = -(z2hat, f0).
    const auto e = estimate_with_sigma(*p, sol, p->obs().zero());
    CHECK(e.estimate == sol.chat);
    CHECK(std::abs(sol.chat + sol.z2hat.dot(p->blocks().m0.cwiseProduct(p->prior().f0))) <= 1e-14);
}

TEST_CASE("two-cell system against the dense oracle") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(1));
    ObservationSetup obs;
    obs.scalar_channels.push_back(identity_scalar_channel({0, 1}, 1.5));
    Eigen::Matrix2d A;
    A << 1.5, 0.2, 0.2, 0.8;
    EstimationProblem p(mesh, CoefficientFields::make({A, Eigen::Matrix2d::Identity()}, Eigen::Vector2d(0.5, 0.0)),
                        PriorEllipsoid::make(Eigen::Vector2d(1.0, -0.5), Eigen::Vector2d(2.0, 0.7), 1.3), obs);
    Eigen::MatrixX2d l1(2, 2);
    l1 << 0.3, -0.2, 1.0, 0.5;
    const auto f = FunctionalSpec::state(l1, Eigen::Vector2d(0.4, -1.1));
    const auto d = oracle::assemble(p, f);
    REQUIRE(d.K.rows() == 14);
    const Eigen::VectorXd x = oracle::solve_state(d);
    const auto sol = solve_minimax_system(p, f);
    Eigen::VectorXd got(14);
    got << sol.z1hat, sol.z2hat, sol.p1, sol.p2;
    CHECK((got - x).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Eigen::MatrixXd(p.four_field().matrix()) - d.K).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("estimate and its dense inner-product oracle") {
    auto s = testsupport::random_setup(2, 3);
    const auto& p = *s.problem;
    const auto sol = solve_minimax_system(p, s.state);
    CHECK(estimate_with_sigma(p, sol, p.obs().zero()).estimate == sol.chat);

    std::mt19937_64 rng(4);
    const auto d = oracle::assemble(p, s.state);
    for (int t = 0; t < 5; ++t) {
        const ObsField y = testsupport::random_obs(p.obs(), rng);
        const Eigen::VectorXd y1 = p.obs().flatten_flux(y), y2 = p.obs().flatten_scalar(y);
        // (y, Q~ C p)_H = y^T W C p with W carrying |K_a| Q~_a / eps.
        const double ref = y1.dot(d.W1 * d.G1 * sol.p1) + y2.dot(d.W2 * d.G2 * sol.p2) + sol.chat;
        const auto e = estimate_with_sigma(p, sol, y);
        CHECK(std::abs(e.estimate - ref) <= 1e-13 * std::max(1.0, std::abs(ref)));
        CHECK(e.sigma == sol.sigma);
    }
}

TEST_CASE("sigma^2 = I(u-hat) and minimax optimality, both families") {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        auto s = testsupport::random_setup(seed, 4);
        const auto& p = *s.problem;
        const auto st = solve_minimax_system(p, s.state);
        const double Ist = evaluate_cost_I(p, s.state, st.uhat);
        CHECK(rel(st.sigma * st.sigma, Ist) <= 1e-9);
        const auto rh = solve_rhs_minimax(p, s.rhs).solution;
        const double Irh = evaluate_cost_I(p, s.rhs, rh.uhat);
        CHECK(rel(rh.sigma * rh.sigma, Irh) <= 1e-9);

        std::mt19937_64 rng(seed);
        for (int t = 0; t < 20; ++t) {
            const ObsField d = testsupport::random_direction(p.obs(), rng);
            for (double mag : {0.1, 1.0}) {
                CHECK(evaluate_cost_I(p, s.state, add(st.uhat, d, mag)) >= Ist - 1e-10);
                CHECK(evaluate_cost_I(p, s.rhs, add(rh.uhat, d, mag)) >= Irh - 1e-10);
            }
        }
    }
}

TEST_CASE("cost is convex quadratic in u") {
    auto s = testsupport::random_setup(31, 3);
    const auto& p = *s.problem;
    std::mt19937_64 rng(5);
    const ObsField a = testsupport::random_obs(p.obs(), rng), b = testsupport::random_obs(p.obs(), rng);
    for (const auto& f : {s.state, s.rhs}) {
        const double Ia = evaluate_cost_I(p, f, a), Ib = evaluate_cost_I(p, f, b);
        const double Im = evaluate_cost_I(p, f, add(add(p.obs().zero(), a, 0.5), b, 0.5));
        CHECK(Im <= 0.5 * (Ia + Ib) + 1e-12);
        CHECK(Ia >= 0.0);
    }
}

TEST_CASE("reconstruction") {
    SUBCASE("homogeneous data") {
        auto mesh = std::make_shared<const Mesh>(generate_unit_square(3));
        const int nc = mesh->num_cells();
        ObservationSetup obs;
        obs.scalar_channels.push_back(identity_scalar_channel({0, 1, 2, 3, 4}, 1.0));
        EstimationProblem p(mesh, CoefficientFields::uniform(nc, Eigen::Matrix2d::Identity(), 1.0),
                            PriorEllipsoid::make(Eigen::VectorXd::Zero(nc), Eigen::VectorXd::Ones(nc)), obs);
        const auto r = solve_state_reconstruction(p, p.obs().zero());
        CHECK(r.jhat.isZero(0.0));
        CHECK(r.phihat.isZero(0.0));
    }
    SUBCASE("tight prior recovers the forward solution") {
        auto mesh = std::make_shared<const Mesh>(generate_unit_square(4));
        const int nc = mesh->num_cells();
        std::vector<int> all(nc);
        for (int k = 0; k < nc; ++k) all[k] = k;
        ObservationSetup obs;
        obs.flux_channels.push_back(identity_flux_channel(all, Eigen::Matrix2d::Identity()));
        obs.scalar_channels.push_back(identity_scalar_channel(all, 1.0));
        Eigen::VectorXd f0(nc);
        for (int k = 0; k < nc; ++k) f0[k] = std::sin(3 * mesh->centroid(k).x()) + 2;
        EstimationProblem p(mesh, CoefficientFields::uniform(nc, Eigen::Matrix2d::Identity(), 1.0),
                            PriorEllipsoid::make(f0, Eigen::VectorXd::Constant(nc, 1e8)), obs);
        const FieldPair truth = p.forward().solve(f0);
        const auto r = solve_state_reconstruction(p, p.obs().apply(truth));
        CHECK(p0_l2_norm(p.l2(), r.phihat - truth.phi) <= 1e-6);
        CHECK(flux_l2_norm(p.hdiv(), r.jhat - truth.j) <= 1e-6);
    }
    SUBCASE("duality with the gain representation") {
        auto s = testsupport::random_setup(41, 4);
        const auto& p = *s.problem;
        const auto st = solve_minimax_system(p, s.state);
        const auto rh = solve_rhs_minimax(p, s.rhs).solution;
        std::mt19937_64 rng(6);
        for (int t = 0; t < 10; ++t) {
            const ObsField y = testsupport::random_obs(p.obs(), rng, 3.0);
            const auto r = solve_state_reconstruction(p, y);
            const double e1 = estimate_with_sigma(p, st, y).estimate;
            CHECK(rel(e1, evaluate_functional(p, s.state, FieldPair{r.jhat, r.phihat})) <= 1e-9);
            const double e2 = estimate_with_sigma(p, rh, y).estimate;
            CHECK(rel(e2, evaluate_functional(p, s.rhs, r.fhat)) <= 1e-9);
            const auto full = solve_rhs_minimax(p, s.rhs, y);
            REQUIRE(full.fhat.has_value());
            CHECK((*full.fhat - r.fhat).cwiseAbs().maxCoeff() <= 1e-14);
        }
    }
}

TEST_CASE("RHS family special cases") {
    auto s = testsupport::random_setup(51, 3);
    const auto& p = *s.problem;
    const int nc = p.mesh().num_cells();
    const auto zero = solve_rhs_minimax(p, FunctionalSpec::rhs(Eigen::VectorXd::Zero(nc)), p.obs().zero());
    CHECK(zero.solution.sigma == 0.0);
    CHECK(estimate_with_sigma(p, zero.solution, p.obs().zero()).estimate == 0.0);

    auto q = simple_problem(3, ObservationSetup{}, 1.7, 0.5);
    const Eigen::VectorXd l0 = Eigen::VectorXd::LinSpaced(q->mesh().num_cells(), -1.0, 2.0);
    const auto f = FunctionalSpec::rhs(l0);
    const auto sol = solve_rhs_minimax(*q, f).solution;
    CHECK(q->obs().flatten_scalar(sol.uhat).size() == 0);
    // No observations: z2hat = 0, estimate is the prior mean functional.
    CHECK(sol.z2hat.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(std::abs(estimate_with_sigma(*q, sol, q->obs().zero()).estimate - evaluate_functional(*q, f, q->prior().f0)) <= 1e-13);
    const Eigen::VectorXd g = l0 - sol.z2hat;
    const double two = g.dot(g.cwiseProduct(q->blocks().m0).cwiseQuotient(q->prior().q_eff()));
    CHECK(rel(sol.sigma * sol.sigma, two) <= 1e-10);
    CHECK(rel(sol.sigma * sol.sigma, evaluate_cost_I(*q, f, q->obs().zero())) <= 1e-10);
}

TEST_CASE("functional evaluation") {
    auto p = simple_problem(3, ObservationSetup{});
    const int nc = p->mesh().num_cells();
    const auto f = mean_state(nc);
    CHECK(evaluate_functional(*p, f, FieldPair{Eigen::VectorXd::Zero(p->hdiv().n1()), Eigen::VectorXd::Zero(nc)}) == 0.0);
    CHECK(evaluate_functional(*p, f, FieldPair{Eigen::VectorXd::Zero(p->hdiv().n1()), Eigen::VectorXd::Constant(nc, 2.0)}) ==
          doctest::Approx(2.0).epsilon(1e-14));

    auto s = testsupport::random_setup(61, 3);
    const auto d = oracle::assemble(*s.problem, s.state);
    const FieldPair x{Eigen::VectorXd::Random(s.problem->hdiv().n1()), Eigen::VectorXd::Random(s.problem->l2().n2())};
    const double ref = d.b1.dot(x.j) + d.b2.dot(x.phi);
    CHECK(std::abs(evaluate_functional(*s.problem, s.state, x) - ref) <= 1e-13 * std::max(1.0, std::abs(ref)));
    CHECK_THROWS_AS(evaluate_functional(*s.problem, s.rhs, x), InvalidArgument);
}

TEST_CASE("homogeneity in the load") {
    auto s = testsupport::random_setup(71, 3);
    const double sigma = solve_minimax_system(*s.problem, s.state).sigma;
    for (double lambda : {2.0, -3.0}) {
        const auto f = FunctionalSpec::state(lambda * s.state.l1, lambda * s.state.l2);
        CHECK(rel(solve_minimax_system(*s.problem, f).sigma, std::abs(lambda) * sigma) <= 1e-10);
        const auto g = FunctionalSpec::rhs(lambda * s.rhs.l0);
        CHECK(rel(solve_rhs_minimax(*s.problem, g).solution.sigma,
                  std::abs(lambda) * solve_rhs_minimax(*s.problem, s.rhs).solution.sigma) <= 1e-10);
    }
}

TEST_CASE("degenerate configuration: no flux channels and l1 = 0") {
    auto mesh = std::make_shared<const Mesh>(generate_unit_square(4));
    const int nc = mesh->num_cells();
    ObservationSetup obs;
    obs.scalar_channels.push_back(identity_scalar_channel({1, 5, 9, 13, 20}, 2.0));
    auto p = std::make_shared<EstimationProblem>(mesh, CoefficientFields::uniform(nc, Eigen::Matrix2d::Identity(), 0.0),
                                                 PriorEllipsoid::make(Eigen::VectorXd::Ones(nc), Eigen::VectorXd::Ones(nc)), obs);
    const auto f = mean_state(nc);
    const auto [b1, b2] = p->loads(f);
    CHECK(b1.isZero(0.0));
    const auto sol = solve_minimax_system(*p, f);
    CHECK(sol.uhat.flux.empty());
    CHECK(sol.sigma > 0.0);

    ObservationSetup obs2 = obs;
    obs2.flux_channels.push_back(identity_flux_channel({0, 2, 3}, Eigen::Matrix2d::Zero()));
    EstimationProblem p2(mesh, CoefficientFields::uniform(nc, Eigen::Matrix2d::Identity(), 0.0),
                         PriorEllipsoid::make(Eigen::VectorXd::Ones(nc), Eigen::VectorXd::Ones(nc)), obs2);
    const auto sol2 = solve_minimax_system(p2, f);
    CHECK(sol2.uhat.flux.size() == 1);
    CHECK(sol2.uhat.flux[0].isZero(0.0));
    CHECK(std::abs(sol2.sigma - sol.sigma) <= 1e-12);
    CHECK(std::abs(sol2.chat - sol.chat) <= 1e-12);
    CHECK((sol2.p2 - sol.p2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("argument checks") {
    auto s = testsupport::random_setup(81, 2);
    CHECK_THROWS_AS(solve_minimax_system(*s.problem, s.rhs), InvalidArgument);
    CHECK_THROWS_AS(solve_rhs_minimax(*s.problem, s.state), InvalidArgument);
    CHECK_THROWS_AS(solve_minimax_system(*s.problem, FunctionalSpec::state(Eigen::MatrixX2d::Zero(1, 2), Eigen::VectorXd::Zero(1))),
                    InvalidArgument);
    ObsField bad = s.problem->obs().zero();
    bad.scalar.pop_back();
    const auto sol = solve_minimax_system(*s.problem, s.state);
    CHECK_THROWS_AS(estimate_with_sigma(*s.problem, sol, bad), InvalidArgument);
}
