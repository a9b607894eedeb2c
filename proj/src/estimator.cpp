#include "hdivmm/estimator.hpp"

#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "hdivmm/errors.hpp"

namespace hdivmm {

FunctionalSpec FunctionalSpec::state(Eigen::MatrixX2d l1, Eigen::VectorXd l2) {
    FunctionalSpec f;
    f.kind = FunctionalKind::State;
    f.l1 = std::move(l1);
    f.l2 = std::move(l2);
    return f;
}

FunctionalSpec FunctionalSpec::rhs(Eigen::VectorXd l0) {
    FunctionalSpec f;
    f.kind = FunctionalKind::Rhs;
    f.l0 = std::move(l0);
    return f;
}

EstimationProblem::EstimationProblem(MeshPtr mesh, CoefficientFields coeffs, PriorEllipsoid prior,
                                     ObservationSetup setup)
    : hdiv_(mesh), l2_(mesh), coeffs_(std::move(coeffs)), prior_(std::move(prior)) {
    obs_ = std::make_shared<const ObservationOperators>(std::move(setup), hdiv_, l2_);
    blocks_ = assemble_core_forms(hdiv_, l2_, coeffs_, prior_);
    std::tie(blocks_.a3, blocks_.a4) = compose_tilde_kernels(*obs_);

    forward_ = std::make_shared<const ForwardSolver>(blocks_);
    const SparseMatrix a2t = blocks_.a2.transpose();
    const int n1 = blocks_.n1(), n2 = blocks_.n2();
    adjoint_ = std::make_shared<const SaddleSolver>(
        block_matrix({{&blocks_.abar1, &a2t}, {&blocks_.a2, &blocks_.a6}}, {n1, n2}, {n1, n2}), "adjoint");
    const auto& b = blocks_;
    four_field_ = std::make_shared<const SaddleSolver>(
        block_matrix({{&b.abar1, &a2t, &b.a3, nullptr},
                      {&b.a2, &b.a6, nullptr, &b.a4},
                      {nullptr, nullptr, &b.a1, &a2t},
                      {nullptr, &b.a5, &b.a2, &b.a6}},
                     {n1, n2, n1, n2}, {n1, n2, n1, n2}),
        "four-field");
    condition_ = four_field_->condition_estimate();
    if (condition_ > 1e12)
        spdlog::warn("four-field system is ill-conditioned (condition estimate {:.3e}); check q and the weights",
                     condition_);
    else
        spdlog::debug("four-field condition estimate {:.3e}", condition_);
}

void EstimationProblem::check_functional(const FunctionalSpec& f) const {
    const int nc = l2_.n2();
    if (f.kind == FunctionalKind::State) {
        if (f.l1.rows() != nc || f.l2.size() != nc) throw InvalidArgument("functional: l1/l2 do not match the mesh");
    } else if (f.l0.size() != nc) {
        throw InvalidArgument("functional: l0 does not match the mesh");
    }
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> EstimationProblem::loads(const FunctionalSpec& f) const {
    check_functional(f);
    if (f.kind == FunctionalKind::Rhs)
        return {Eigen::VectorXd::Zero(blocks_.n1()), Eigen::VectorXd::Zero(blocks_.n2())};
    return assemble_functional_loads(hdiv_, l2_, f.l1, f.l2);
}

namespace {

struct FourField {
    Eigen::VectorXd x1, x2, x3, x4;
};

FourField solve_four_field(const EstimationProblem& p, const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                           const Eigen::VectorXd& r3, const Eigen::VectorXd& r4) {
    const int n1 = p.blocks().n1(), n2 = p.blocks().n2();
    Eigen::VectorXd rhs(2 * (n1 + n2));
    rhs << r1, r2, r3, r4;
    const Eigen::VectorXd x = p.four_field().solve(rhs);
    return {x.segment(0, n1), x.segment(n1, n2), x.segment(n1 + n2, n1), x.segment(2 * n1 + n2, n2)};
}

ObsField gains(const EstimationProblem& p, const Eigen::VectorXd& p1, const Eigen::VectorXd& p2) {
    const auto& ops = p.obs();
    return ops.apply_weight(ops.unflatten(ops.G1() * p1, ops.G2() * p2));
}

double checked_sigma(double sigma2, double scale, const char* what) {
    if (!std::isfinite(sigma2)) throw NumericalError(std::string(what) + ": non-finite sigma^2");
    if (sigma2 < -1e-12 * std::max(1.0, scale))
        throw NumericalError(std::string(what) + ": negative sigma^2 = " + std::to_string(sigma2));
    return std::sqrt(std::max(sigma2, 0.0));
}

} // namespace

EstimatorSolution solve_minimax_system(const EstimationProblem& problem, const FunctionalSpec& functional) {
    if (functional.kind != FunctionalKind::State)
        throw InvalidArgument("solve_minimax_system: expects a STATE functional");
    const auto [b1, b2] = problem.loads(functional);
    const int n1 = problem.blocks().n1(), n2 = problem.blocks().n2();
    const FourField s = solve_four_field(problem, b1, b2, Eigen::VectorXd::Zero(n1), Eigen::VectorXd::Zero(n2));

    EstimatorSolution sol;
    sol.kind = FunctionalKind::State;
    sol.z1hat = s.x1;
    sol.z2hat = s.x2;
    sol.p1 = s.x3;
    sol.p2 = s.x4;
    sol.uhat = gains(problem, sol.p1, sol.p2);
    const Eigen::VectorXd& m0 = problem.blocks().m0;
    sol.chat = -sol.z2hat.dot(m0.cwiseProduct(problem.prior().f0));
    const double t1 = b1.dot(sol.p1), t2 = b2.dot(sol.p2);
    sol.sigma = checked_sigma(t1 + t2, std::abs(t1) + std::abs(t2), "solve_minimax_system");
    sol.prior_dual = sol.z2hat;
    return sol;
}

RhsEstimate solve_rhs_minimax(const EstimationProblem& problem, const FunctionalSpec& functional,
                              const std::optional<ObservationData>& y) {
    if (functional.kind != FunctionalKind::Rhs) throw InvalidArgument("solve_rhs_minimax: expects an RHS functional");
    problem.check_functional(functional);
    const auto& b = problem.blocks();
    const int n1 = b.n1(), n2 = b.n2();
    const FourField s = solve_four_field(problem, Eigen::VectorXd::Zero(n1), Eigen::VectorXd::Zero(n2),
                                         Eigen::VectorXd::Zero(n1), b.a5 * functional.l0);

    RhsEstimate out;
    EstimatorSolution& sol = out.solution;
    sol.kind = FunctionalKind::Rhs;
    sol.z1hat = s.x1;
    sol.z2hat = s.x2;
    sol.p1 = s.x3;
    sol.p2 = s.x4;
    sol.uhat = gains(problem, sol.p1, sol.p2);
    sol.prior_dual = functional.l0 - sol.z2hat;
    sol.chat = sol.prior_dual.dot(b.m0.cwiseProduct(problem.prior().f0));
    const Eigen::VectorXd terms = -(functional.l0.array() * (b.a5 * sol.prior_dual).array());
    sol.sigma = checked_sigma(terms.sum(), terms.cwiseAbs().sum(), "solve_rhs_minimax");

    if (y) {
        out.reconstruction = solve_state_reconstruction(problem, *y);
        out.fhat = out.reconstruction->fhat;
    }
    return out;
}

Estimate estimate_with_sigma(const EstimationProblem& problem, const EstimatorSolution& sol, const ObservationData& y) {
    return Estimate{problem.obs().inner(y, sol.uhat) + sol.chat, sol.sigma};
}

StateReconstruction solve_state_reconstruction(const EstimationProblem& problem, const ObservationData& y) {
    const auto& ops = problem.obs();
    const auto& b = problem.blocks();
    const Eigen::VectorXd r1 = ops.G1().transpose() * (ops.W1() * ops.flatten_flux(y));
    const Eigen::VectorXd r2 = ops.G2().transpose() * (ops.W2() * ops.flatten_scalar(y));
    const FourField s = solve_four_field(problem, r1, r2, Eigen::VectorXd::Zero(b.n1()),
                                         -b.m0.cwiseProduct(problem.prior().f0));
    StateReconstruction rec;
    rec.p1hat = s.x1;
    rec.p2hat = s.x2;
    rec.jhat = s.x3;
    rec.phihat = s.x4;
    rec.fhat = problem.prior().f0 - rec.p2hat.cwiseQuotient(problem.prior().q_eff());
    return rec;
}

AdjointState solve_adjoint(const EstimationProblem& problem, const FunctionalSpec& functional, const ObsField& u) {
    const auto [b1, b2] = problem.loads(functional);
    const auto [c1, c2] = problem.obs().adjoint_loads(u);
    Eigen::VectorXd rhs(b1.size() + b2.size());
    rhs << b1 - c1, b2 - c2;
    const Eigen::VectorXd x = problem.adjoint().solve(rhs);
    return AdjointState{x.head(b1.size()), x.tail(b2.size())};
}

double evaluate_cost_I(const EstimationProblem& problem, const FunctionalSpec& functional, const ObsField& u) {
    const auto& ops = problem.obs();
    const double noise = ops.inverse_weight_norm2_flux(u) + ops.inverse_weight_norm2_scalar(u);
    if (!std::isfinite(noise)) return noise;
    const AdjointState z = solve_adjoint(problem, functional, u);
    const Eigen::VectorXd g = functional.kind == FunctionalKind::State ? z.z2 : Eigen::VectorXd(functional.l0 - z.z2);
    return g.dot(-(problem.blocks().a5 * g)) + noise;
}

double evaluate_functional(const EstimationProblem& problem, const FunctionalSpec& functional,
                           const FieldPair& fields) {
    if (functional.kind != FunctionalKind::State)
        throw InvalidArgument("evaluate_functional: RHS functionals act on f, not on (j, phi)");
    const auto [b1, b2] = problem.loads(functional);
    if (fields.j.size() != b1.size() || fields.phi.size() != b2.size())
        throw InvalidArgument("evaluate_functional: field sizes do not match");
    return b1.dot(fields.j) + b2.dot(fields.phi);
}

double evaluate_functional(const EstimationProblem& problem, const FunctionalSpec& functional,
                           const Eigen::VectorXd& f) {
    if (functional.kind != FunctionalKind::Rhs)
        throw InvalidArgument("evaluate_functional: STATE functionals act on (j, phi)");
    problem.check_functional(functional);
    if (f.size() != functional.l0.size()) throw InvalidArgument("evaluate_functional: f has the wrong size");
    return (functional.l0.array() * f.array() * problem.blocks().m0.array()).sum();
}

} // namespace hdivmm
