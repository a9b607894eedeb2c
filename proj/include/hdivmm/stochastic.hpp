#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "hdivmm/estimator.hpp"

namespace hdivmm {

/// Independent engines for the prior draw and for the two noise groups.
struct RngStreams {
    std::mt19937_64 prior;
    std::mt19937_64 flux;
    std::mt19937_64 scalar;

    /// Streams derived from (seed, index) through std::seed_seq.
    static RngStreams make(std::uint64_t seed, std::uint64_t index);
};

enum class NoiseKind { White, WorstCase };

/// WHITE: per-cell Gaussian noise with covariance kappa Q~^{-1}, kappa chosen so
/// the trace sum |K_a| tr(Q~ R) equals tau per group.
/// WORST_CASE: nu Q~^{-1} u / (Q~^{-1} u, u)^{1/2} with Rademacher nu per group.
struct NoiseModel {
    NoiseKind kind = NoiseKind::White;
    double tau_flux = 1.0;
    double tau_scalar = 1.0;
    ObsField reference; // u-hat, WORST_CASE only
    std::uint64_t seed = 0;

    static NoiseModel white(double tau_flux, double tau_scalar, std::uint64_t seed = 0);
    static NoiseModel worst_case(ObsField uhat, std::uint64_t seed = 0);

    /// Diagonal R(x, x) of the covariance on every channel cell.
    NoiseCovariance covariance(const ObservationOperators& ops) const;
};

NoiseRealization sample_admissible_noise(const ObservationOperators& ops, const NoiseModel& model, RngStreams& rng);

struct WorstCase {
    Eigen::VectorXd ftilde;
    NoiseRealization noise;
    bool prior_degenerate = false;  // prior_dual == 0, ftilde = f0
    bool flux_degenerate = false;   // u1hat == 0, zero flux noise
    bool scalar_degenerate = false; // u2hat == 0, zero scalar noise
};

/// Unit Q-norm direction Q^{-1} g / (Q^{-1} g, g)^{1/2}, or zero if g = 0.
Eigen::VectorXd worst_case_direction(const EstimationProblem& problem, const EstimatorSolution& sol);

/// f0 + sign * direction, and the noise realization for the given nu values.
WorstCase worst_case_perturbations(const EstimationProblem& problem, const EstimatorSolution& sol, int sign,
                                   int nu_flux = 1, int nu_scalar = 1);

enum class McPolicy { AdmissibleRandom, WorstCase };

struct McOptions {
    McPolicy policy = McPolicy::WorstCase;
    int trials = 10000;
    std::uint64_t seed = 0;
    int threads = 1;
    double tau = 1.0;          // noise trace per group, ADMISSIBLE_RANDOM
    double prior_radius = 1.0; // max normalized Q-radius of f - f0, ADMISSIBLE_RANDOM
};

struct McReport {
    McPolicy policy = McPolicy::WorstCase;
    int trials = 0;
    double mse = 0.0;
    double sigma_sq = 0.0;
    double ratio = 0.0;
    double std_error = 0.0; // of the mse
    double ci_low = 0.0;    // mse -/+ 3 std_error
    double ci_high = 0.0;
};

/// Empirical E|l - l-hat|^2 with truth and estimator on the same mesh.
McReport monte_carlo_mse(const EstimationProblem& problem, const FunctionalSpec& functional, const McOptions& options);

const char* to_string(McPolicy policy);

} // namespace hdivmm
