#include "hdivmm/stochastic.hpp"

#include <cmath>
#include <limits>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <spdlog/spdlog.h>

#include "hdivmm/errors.hpp"

namespace hdivmm {

RngStreams RngStreams::make(std::uint64_t seed, std::uint64_t index) {
    auto engine = [&](std::uint32_t group) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), group};
        return std::mt19937_64(seq);
    };
    return RngStreams{engine(0), engine(1), engine(2)};
}

NoiseModel NoiseModel::white(double tau_flux, double tau_scalar, std::uint64_t seed) {
    if (!(tau_flux >= 0.0 && tau_flux <= 1.0) || !(tau_scalar >= 0.0 && tau_scalar <= 1.0))
        throw InvalidArgument("NoiseModel::white: tau must lie in [0, 1]");
    NoiseModel m;
    m.kind = NoiseKind::White;
    m.tau_flux = tau_flux;
    m.tau_scalar = tau_scalar;
    m.seed = seed;
    return m;
}

NoiseModel NoiseModel::worst_case(ObsField uhat, std::uint64_t seed) {
    NoiseModel m;
    m.kind = NoiseKind::WorstCase;
    m.reference = std::move(uhat);
    m.seed = seed;
    return m;
}

namespace {

// Per-group white-noise scale: trace of kappa Q~^{-1} against Q~ is kappa * dim * |S|.
double white_kappa(double tau, double dim, const ObservationOperators& ops, bool flux) {
    double measure = 0.0;
    const auto& s = ops.setup();
    const std::size_t n = flux ? s.flux_channels.size() : s.scalar_channels.size();
    for (std::size_t c = 0; c < n; ++c) {
        const int ci = static_cast<int>(c);
        if (flux ? !ops.active_flux(ci) : !ops.active_scalar(ci)) continue;
        for (double a : flux ? ops.channel_areas_flux(ci) : ops.channel_areas_scalar(ci)) measure += a;
    }
    return measure > 0.0 ? tau / (dim * measure) : 0.0;
}

Eigen::Matrix2d scaled_inverse_weight(const ObservationSetup& s, int c, int a) {
    return s.epsilon2 * s.flux_channels[c].weight[a].inverse();
}

} // namespace

NoiseCovariance NoiseModel::covariance(const ObservationOperators& ops) const {
    const auto& s = ops.setup();
    NoiseCovariance cov;
    cov.flux.resize(s.flux_channels.size());
    cov.scalar.resize(s.scalar_channels.size());
    if (kind == NoiseKind::White) {
        const double k1 = white_kappa(tau_flux, 2.0, ops, true);
        const double k2 = white_kappa(tau_scalar, 1.0, ops, false);
        for (std::size_t c = 0; c < s.flux_channels.size(); ++c) {
            const int ci = static_cast<int>(c);
            for (std::size_t a = 0; a < s.flux_channels[c].cells.size(); ++a)
                cov.flux[c].push_back(ops.active_flux(ci) ? Eigen::Matrix2d(k1 * scaled_inverse_weight(s, ci, a))
                                                          : Eigen::Matrix2d::Zero());
        }
        for (std::size_t c = 0; c < s.scalar_channels.size(); ++c) {
            const int ci = static_cast<int>(c);
            cov.scalar[c] = ops.active_scalar(ci)
                                ? Eigen::VectorXd(k2 * s.epsilon3 * s.scalar_channels[c].weight.cwiseInverse())
                                : Eigen::VectorXd::Zero(s.scalar_channels[c].weight.size());
        }
        return cov;
    }
    ops.check_shape(reference);
    const ObsField v = ops.apply_inverse_weight(reference);
    const double n1 = ops.inverse_weight_norm2_flux(reference);
    const double n2 = ops.inverse_weight_norm2_scalar(reference);
    for (std::size_t c = 0; c < s.flux_channels.size(); ++c) {
        for (std::size_t a = 0; a < s.flux_channels[c].cells.size(); ++a) {
            const Eigen::Vector2d w = v.flux[c].segment<2>(2 * a);
            cov.flux[c].push_back(n1 > 0.0 ? Eigen::Matrix2d(w * w.transpose() / n1) : Eigen::Matrix2d::Zero());
        }
    }
    for (std::size_t c = 0; c < s.scalar_channels.size(); ++c)
        cov.scalar[c] = n2 > 0.0 ? Eigen::VectorXd(v.scalar[c].array().square() / n2)
                                 : Eigen::VectorXd::Zero(v.scalar[c].size());
    return cov;
}

namespace {

int rademacher(std::mt19937_64& rng) { return (rng() >> 63) ? 1 : -1; }

ObsField worst_case_noise(const ObservationOperators& ops, const ObsField& uhat, int nu1, int nu2, bool* deg1,
                          bool* deg2) {
    ObsField v = ops.apply_inverse_weight(uhat);
    const double n1 = ops.inverse_weight_norm2_flux(uhat);
    const double n2 = ops.inverse_weight_norm2_scalar(uhat);
    const bool d1 = !(n1 > 0.0), d2 = !(n2 > 0.0);
    for (auto& f : v.flux) f = d1 ? Eigen::VectorXd::Zero(f.size()) : Eigen::VectorXd(f * (nu1 / std::sqrt(n1)));
    for (auto& f : v.scalar) f = d2 ? Eigen::VectorXd::Zero(f.size()) : Eigen::VectorXd(f * (nu2 / std::sqrt(n2)));
    if (deg1) *deg1 = d1;
    if (deg2) *deg2 = d2;
    return v;
}

} // namespace

NoiseRealization sample_admissible_noise(const ObservationOperators& ops, const NoiseModel& model, RngStreams& rng) {
    if (model.kind == NoiseKind::WorstCase) {
        ops.check_shape(model.reference);
        return worst_case_noise(ops, model.reference, rademacher(rng.flux), rademacher(rng.scalar), nullptr, nullptr);
    }
    const auto& s = ops.setup();
    const double k1 = white_kappa(model.tau_flux, 2.0, ops, true);
    const double k2 = white_kappa(model.tau_scalar, 1.0, ops, false);
    std::normal_distribution<double> normal(0.0, 1.0);
    ObsField eta = ops.zero();
    for (std::size_t c = 0; c < s.flux_channels.size(); ++c) {
        const int ci = static_cast<int>(c);
        if (!ops.active_flux(ci) || k1 == 0.0) continue;
        for (std::size_t a = 0; a < s.flux_channels[c].cells.size(); ++a) {
            const Eigen::Matrix2d L = Eigen::LLT<Eigen::Matrix2d>(scaled_inverse_weight(s, ci, a)).matrixL();
            const Eigen::Vector2d z(normal(rng.flux), normal(rng.flux));
            eta.flux[c].segment<2>(2 * a) = std::sqrt(k1) * L * z;
        }
    }
    for (std::size_t c = 0; c < s.scalar_channels.size(); ++c) {
        const int ci = static_cast<int>(c);
        if (!ops.active_scalar(ci) || k2 == 0.0) continue;
        const auto& w = s.scalar_channels[c].weight;
        for (Eigen::Index a = 0; a < w.size(); ++a)
            eta.scalar[c][a] = std::sqrt(k2 * s.epsilon3 / w[a]) * normal(rng.scalar);
    }
    return eta;
}

Eigen::VectorXd worst_case_direction(const EstimationProblem& problem, const EstimatorSolution& sol) {
    const Eigen::VectorXd& g = sol.prior_dual;
    const Eigen::VectorXd qinv_g = g.cwiseQuotient(problem.prior().q_eff());
    const double n2 = qinv_g.dot(problem.blocks().m0.cwiseProduct(g));
    if (!(n2 > 0.0)) return Eigen::VectorXd::Zero(g.size());
    return qinv_g / std::sqrt(n2);
}

WorstCase worst_case_perturbations(const EstimationProblem& problem, const EstimatorSolution& sol, int sign,
                                   int nu_flux, int nu_scalar) {
    if (std::abs(sign) != 1 || std::abs(nu_flux) != 1 || std::abs(nu_scalar) != 1)
        throw InvalidArgument("worst_case_perturbations: sign and nu must be +1 or -1");
    WorstCase wc;
    const Eigen::VectorXd d = worst_case_direction(problem, sol);
    wc.prior_degenerate = d.isZero(0.0);
    wc.ftilde = problem.prior().f0 + sign * d;
    wc.noise = worst_case_noise(problem.obs(), sol.uhat, nu_flux, nu_scalar, &wc.flux_degenerate,
                                &wc.scalar_degenerate);
    return wc;
}

const char* to_string(McPolicy policy) {
    return policy == McPolicy::WorstCase ? "WORST_CASE" : "ADMISSIBLE_RANDOM";
}

namespace {

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

} // namespace

McReport monte_carlo_mse(const EstimationProblem& problem, const FunctionalSpec& functional, const McOptions& opt) {
    if (opt.trials < 100) throw InvalidArgument("monte_carlo_mse: at least 100 trials required");
    if (!(opt.tau >= 0.0 && opt.tau <= 1.0)) throw InvalidArgument("monte_carlo_mse: tau must lie in [0, 1]");
    if (!(opt.prior_radius >= 0.0 && opt.prior_radius <= 1.0))
        throw InvalidArgument("monte_carlo_mse: prior_radius must lie in [0, 1]");

    const bool state = functional.kind == FunctionalKind::State;
    const EstimatorSolution sol =
        state ? solve_minimax_system(problem, functional) : solve_rhs_minimax(problem, functional).solution;
    const Eigen::VectorXd direction = worst_case_direction(problem, sol);
    const NoiseModel white = NoiseModel::white(opt.tau, opt.tau, opt.seed);
    const NoiseModel worst = NoiseModel::worst_case(sol.uhat, opt.seed);
    const auto& ops = problem.obs();
    const auto& prior = problem.prior();
    const Eigen::VectorXd& m0 = problem.blocks().m0;
    const auto [b1, b2] = problem.loads(functional);

    auto trial = [&](int t) {
        RngStreams rng = RngStreams::make(opt.seed, static_cast<std::uint64_t>(t));
        Eigen::VectorXd f;
        NoiseRealization eta;
        if (opt.policy == McPolicy::WorstCase) {
            f = prior.f0 + rademacher(rng.prior) * direction;
            eta = sample_admissible_noise(ops, worst, rng);
        } else {
            std::normal_distribution<double> normal(0.0, 1.0);
            std::uniform_real_distribution<double> uniform(0.0, 1.0);
            Eigen::VectorXd d(prior.f0.size());
            for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = normal(rng.prior);
            const double qn = std::sqrt((prior.q_eff().array() * d.array().square() * m0.array()).sum());
            const double r = opt.prior_radius * uniform(rng.prior);
            f = prior.f0 + (qn > 0.0 ? r / qn : 0.0) * d;
            eta = sample_admissible_noise(ops, white, rng);
        }
        const FieldPair truth = problem.forward().solve(f);
        const double l_true = state ? b1.dot(truth.j) + b2.dot(truth.phi)
                                    : (functional.l0.array() * f.array() * m0.array()).sum();
        const double l_hat = ops.inner(ops.apply(truth, eta), sol.uhat) + sol.chat;
        return (l_true - l_hat) * (l_true - l_hat);
    };

    std::vector<double> err(opt.trials);
    const int threads = std::max(1, std::min(opt.threads, opt.trials));
    if (threads == 1) {
        for (int t = 0; t < opt.trials; ++t) err[t] = trial(t);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> failure(threads);
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (int t = w; t < opt.trials; t += threads) err[t] = trial(t);
                } catch (...) {
                    failure[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : failure)
            if (e) std::rethrow_exception(e);
    }

    McReport r;
    r.policy = opt.policy;
    r.trials = opt.trials;
    const double n = static_cast<double>(opt.trials);
    r.mse = pairwise_sum(err.data(), err.size()) / n;
    std::vector<double> dev(err.size());
    for (std::size_t i = 0; i < err.size(); ++i) dev[i] = (err[i] - r.mse) * (err[i] - r.mse);
    r.std_error = std::sqrt(pairwise_sum(dev.data(), dev.size()) / (n - 1.0) / n);
    r.ci_low = r.mse - 3.0 * r.std_error;
    r.ci_high = r.mse + 3.0 * r.std_error;
    r.sigma_sq = sol.sigma * sol.sigma;
    if (r.sigma_sq > 0.0)
        r.ratio = r.mse / r.sigma_sq;
    else
        r.ratio = r.mse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    spdlog::info("monte carlo {}: N={} mse={:.6e} sigma^2={:.6e} ratio={:.4f}", to_string(opt.policy), opt.trials,
                 r.mse, r.sigma_sq, r.ratio);
    return r;
}

} // namespace hdivmm
