#pragma once

#include <memory>
#include <optional>

#include <Eigen/Core>

#include "hdivmm/assembly.hpp"
#include "hdivmm/forward.hpp"
#include "hdivmm/observation.hpp"

namespace hdivmm {

enum class FunctionalKind { State, Rhs };

/// l(j, phi) = (l1, j) + (l2, phi)  or  l(f) = (l0, f), all cell-wise constant.
struct FunctionalSpec {
    FunctionalKind kind = FunctionalKind::State;
    Eigen::MatrixX2d l1; // one row per cell
    Eigen::VectorXd l2;
    Eigen::VectorXd l0;

    static FunctionalSpec state(Eigen::MatrixX2d l1, Eigen::VectorXd l2);
    static FunctionalSpec rhs(Eigen::VectorXd l0);
};

/// One estimation instance: spaces, data, assembled blocks and the
/// factorizations shared by every solve.  Immutable after construction.
class EstimationProblem {
public:
    EstimationProblem(MeshPtr mesh, CoefficientFields coeffs, PriorEllipsoid prior, ObservationSetup setup);

    const Mesh& mesh() const { return hdiv_.mesh(); }
    const HDivSpace& hdiv() const { return hdiv_; }
    const L2Space& l2() const { return l2_; }
    const CoefficientFields& coeffs() const { return coeffs_; }
    const PriorEllipsoid& prior() const { return prior_; }
    const ObservationOperators& obs() const { return *obs_; }
    /// All matrices; b1, b2 are zero (loads come with each functional).
    const SaddleBlocks& blocks() const { return blocks_; }

    const ForwardSolver& forward() const { return *forward_; }
    /// [abar1, a2^T; a2, a6].
    const SaddleSolver& adjoint() const { return *adjoint_; }
    /// [[abar1, a2^T, a3, 0], [a2, a6, 0, a4], [0, 0, a1, a2^T], [0, a5, a2, a6]].
    const SaddleSolver& four_field() const { return *four_field_; }
    double condition_estimate() const { return condition_; }

    /// (b1, b2) for a STATE functional; zeros for RHS.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> loads(const FunctionalSpec& functional) const;
    void check_functional(const FunctionalSpec& functional) const;

private:
    HDivSpace hdiv_;
    L2Space l2_;
    CoefficientFields coeffs_;
    PriorEllipsoid prior_;
    std::shared_ptr<const ObservationOperators> obs_;
    SaddleBlocks blocks_;
    std::shared_ptr<const ForwardSolver> forward_;
    std::shared_ptr<const SaddleSolver> adjoint_;
    std::shared_ptr<const SaddleSolver> four_field_;
    double condition_ = 0.0;
};

struct EstimatorSolution {
    FunctionalKind kind = FunctionalKind::State;
    Eigen::VectorXd z1hat, z2hat, p1, p2;
    ObsField uhat; // flux part u1hat = Q~1 C1 p1, scalar part u2hat = Q~2 C2 p2
    double chat = 0.0;
    double sigma = 0.0;
    /// Element g whose Q^{-1} image is the worst prior direction:
    /// z2hat for STATE, l0 - z2hat for RHS.
    Eigen::VectorXd prior_dual;
};

struct StateReconstruction {
    Eigen::VectorXd jhat, phihat, p1hat, p2hat;
    Eigen::VectorXd fhat; // f0 - Q^{-1} p2hat
};

struct RhsEstimate {
    EstimatorSolution solution;
    std::optional<Eigen::VectorXd> fhat;
    std::optional<StateReconstruction> reconstruction;
};

struct Estimate {
    double estimate = 0.0;
    double sigma = 0.0;
};

/// Adjoint pair z(.; u) for a given observation-space element u.
struct AdjointState {
    Eigen::VectorXd z1, z2;
};

/// Minimax estimate of a STATE functional: gains u-hat, offset c-hat and error sigma.
EstimatorSolution solve_minimax_system(const EstimationProblem& problem, const FunctionalSpec& functional);

/// Minimax estimate of an RHS functional; with data also f-hat.
RhsEstimate solve_rhs_minimax(const EstimationProblem& problem, const FunctionalSpec& functional,
                              const std::optional<ObservationData>& y = std::nullopt);

/// (y, u-hat) + c-hat together with sigma.
Estimate estimate_with_sigma(const EstimationProblem& problem, const EstimatorSolution& sol, const ObservationData& y);

/// Data-driven reconstruction (j-hat, phi-hat) with p-hat and f-hat.
StateReconstruction solve_state_reconstruction(const EstimationProblem& problem, const ObservationData& y);

AdjointState solve_adjoint(const EstimationProblem& problem, const FunctionalSpec& functional, const ObsField& u);

/// Guaranteed mean-square error of the estimate with gains u (either family).
double evaluate_cost_I(const EstimationProblem& problem, const FunctionalSpec& functional, const ObsField& u);

/// b1.j + b2.phi.
double evaluate_functional(const EstimationProblem& problem, const FunctionalSpec& functional,
                           const FieldPair& fields);
/// sum l0 f |K|.
double evaluate_functional(const EstimationProblem& problem, const FunctionalSpec& functional,
                           const Eigen::VectorXd& f);

} // namespace hdivmm
