#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "hdivmm/assembly.hpp"
#include "hdivmm/forward.hpp"

namespace hdivmm {

enum class KernelKind { Identity, Matrix };

/// Observation of the flux on a cell subset.
///
/// Identity kernels restrict j to the subdomain (cell means).  Matrix kernels
/// compute y(x_a) = sum_b K(x_a, x_b) j(x_b) |K_b| over the subdomain centroids,
/// with `kernel` holding the 2x2 block K(x_a, x_b) at rows 2a.., cols 2b...
/// A channel whose weights are all exactly zero is inactive.
struct FluxChannel {
    std::vector<int> cells;
    KernelKind kind = KernelKind::Identity;
    Eigen::MatrixXd kernel;
    std::vector<Eigen::Matrix2d> weight;
};

/// Scalar analogue of FluxChannel; `kernel` is m x m.
struct ScalarChannel {
    std::vector<int> cells;
    KernelKind kind = KernelKind::Identity;
    Eigen::MatrixXd kernel;
    Eigen::VectorXd weight;
};

using FluxKernelFn = std::function<Eigen::Matrix2d(const Eigen::Vector2d& x, const Eigen::Vector2d& xi)>;
using ScalarKernelFn = std::function<double(const Eigen::Vector2d& x, const Eigen::Vector2d& xi)>;

FluxChannel identity_flux_channel(std::vector<int> cells, const Eigen::Matrix2d& weight);
ScalarChannel identity_scalar_channel(std::vector<int> cells, double weight);
/// Samples the kernel at subdomain centroids.
FluxChannel kernel_flux_channel(const Mesh& mesh, std::vector<int> cells, const FluxKernelFn& kernel,
                                const Eigen::Matrix2d& weight);
ScalarChannel kernel_scalar_channel(const Mesh& mesh, std::vector<int> cells, const ScalarKernelFn& kernel,
                                    double weight);

struct ObservationSetup {
    std::vector<FluxChannel> flux_channels;
    std::vector<ScalarChannel> scalar_channels;
    double epsilon2 = 1.0;
    double epsilon3 = 1.0;

    /// Throws InvalidArgument if a channel does not fit the mesh.
    void validate(const Mesh& mesh) const;
    /// Smallest eigenvalue of the (epsilon-scaled) inverse weights over active channels.
    double alpha() const;
};

/// Element of the observation space: per flux channel 2m values (x, y per
/// cell), per scalar channel m values.  Used for data y, noise and gains u.
struct ObsField {
    std::vector<Eigen::VectorXd> flux;
    std::vector<Eigen::VectorXd> scalar;
};
using ObservationData = ObsField;
using NoiseRealization = ObsField;

/// Cell-wise covariance diagonals R(x, x) per channel.
struct NoiseCovariance {
    std::vector<std::vector<Eigen::Matrix2d>> flux;
    std::vector<Eigen::VectorXd> scalar;
};

struct AdmissibilityReport {
    double trace_flux = 0.0;
    double trace_scalar = 0.0;
    bool flux_ok = true;
    bool scalar_ok = true;
    bool admissible() const { return flux_ok && scalar_ok; }
};

/// Discrete observation operators of one setup on one pair of spaces.
///
/// G1, G2 map coefficients to stacked channel values; W1, W2 are the
/// block-diagonal weight masses |K_a| Q~_a / eps.
class ObservationOperators {
public:
    ObservationOperators(ObservationSetup setup, const HDivSpace& hdiv, const L2Space& l2);

    const ObservationSetup& setup() const { return setup_; }
    const SparseMatrix& G1() const { return G1_; }
    const SparseMatrix& G2() const { return G2_; }
    const SparseMatrix& W1() const { return W1_; }
    const SparseMatrix& W2() const { return W2_; }
    int rows1() const { return static_cast<int>(G1_.rows()); }
    int rows2() const { return static_cast<int>(G2_.rows()); }

    ObsField zero() const;
    ObsField apply(const FieldPair& state) const;
    ObsField apply(const FieldPair& state, const ObsField& noise) const;

    Eigen::VectorXd flatten_flux(const ObsField& u) const;
    Eigen::VectorXd flatten_scalar(const ObsField& u) const;
    ObsField unflatten(const Eigen::VectorXd& flux, const Eigen::VectorXd& scalar) const;
    void check_shape(const ObsField& u) const;

    /// sum_a |K_a| y_a . u_a over all channels.
    double inner(const ObsField& y, const ObsField& u) const;
    double inner_flux(const ObsField& y, const ObsField& u) const;
    double inner_scalar(const ObsField& y, const ObsField& u) const;
    /// Q~ u (scaled weights).
    ObsField apply_weight(const ObsField& u) const;
    /// Q~^{-1} u; zero on inactive channels.
    ObsField apply_inverse_weight(const ObsField& u) const;
    /// (Q~^{-1} u, u) per group; +inf if u is nonzero on an inactive channel.
    double inverse_weight_norm2_flux(const ObsField& u) const;
    double inverse_weight_norm2_scalar(const ObsField& u) const;

    /// Loads (C1^t u, xi_i) and (C2^t u, eta_i).
    std::pair<Eigen::VectorXd, Eigen::VectorXd> adjoint_loads(const ObsField& u) const;
    /// C1^t w and C2^t w as cell-wise constant functions on the whole mesh.
    std::pair<Eigen::MatrixX2d, Eigen::VectorXd> adjoint_fields(const ObsField& w) const;

    /// Sum of |K_a| over all cells of all flux (scalar) channels.
    double measure_flux() const { return measure1_; }
    double measure_scalar() const { return measure2_; }
    const std::vector<double>& channel_areas_flux(int c) const { return areas1_[c]; }
    const std::vector<double>& channel_areas_scalar(int c) const { return areas2_[c]; }
    bool active_flux(int c) const { return active1_[c]; }
    bool active_scalar(int c) const { return active2_[c]; }

private:
    ObservationSetup setup_;
    int n_cells_;
    std::vector<std::vector<double>> areas1_, areas2_;
    std::vector<char> active1_, active2_;
    std::vector<int> off1_, off2_;
    double measure1_ = 0.0, measure2_ = 0.0;
    SparseMatrix G1_, G2_, W1_, W2_;
};

/// y = C(state) + noise.
ObservationData apply_observation(const ObservationOperators& ops, const FieldPair& state,
                                  const std::optional<NoiseRealization>& noise = std::nullopt);

/// a3 = G1^T W1 G1, a4 = G2^T W2 G2.
std::pair<SparseMatrix, SparseMatrix> compose_tilde_kernels(const ObservationOperators& ops);

/// Trace integrals sum_a |K_a| tr(Q~_a R_a), compared with 1.
AdmissibilityReport check_admissibility(const ObservationOperators& ops, const NoiseCovariance& cov);

} // namespace hdivmm
