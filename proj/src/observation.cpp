#include "hdivmm/observation.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hdivmm/errors.hpp"

namespace hdivmm {

FluxChannel identity_flux_channel(std::vector<int> cells, const Eigen::Matrix2d& weight) {
    FluxChannel c;
    c.weight.assign(cells.size(), weight);
    c.cells = std::move(cells);
    return c;
}

ScalarChannel identity_scalar_channel(std::vector<int> cells, double weight) {
    ScalarChannel c;
    c.weight = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cells.size()), weight);
    c.cells = std::move(cells);
    return c;
}

FluxChannel kernel_flux_channel(const Mesh& mesh, std::vector<int> cells, const FluxKernelFn& kernel,
                                const Eigen::Matrix2d& weight) {
    const int m = static_cast<int>(cells.size());
    FluxChannel c;
    c.kind = KernelKind::Matrix;
    c.kernel.resize(2 * m, 2 * m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            c.kernel.block<2, 2>(2 * a, 2 * b) = kernel(mesh.centroid(cells[a]), mesh.centroid(cells[b]));
    c.weight.assign(cells.size(), weight);
    c.cells = std::move(cells);
    return c;
}

ScalarChannel kernel_scalar_channel(const Mesh& mesh, std::vector<int> cells, const ScalarKernelFn& kernel,
                                    double weight) {
    const int m = static_cast<int>(cells.size());
    ScalarChannel c;
    c.kind = KernelKind::Matrix;
    c.kernel.resize(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) c.kernel(a, b) = kernel(mesh.centroid(cells[a]), mesh.centroid(cells[b]));
    c.weight = Eigen::VectorXd::Constant(m, weight);
    c.cells = std::move(cells);
    return c;
}

namespace {

void check_cells(const std::vector<int>& cells, const Mesh& mesh, const std::string& name) {
    if (cells.empty()) throw InvalidArgument(name + ": empty subdomain");
    std::set<int> seen;
    for (int k : cells) {
        if (k < 0 || k >= mesh.num_cells())
            throw InvalidArgument(name + ": cell " + std::to_string(k) + " not in mesh");
        if (!seen.insert(k).second) throw InvalidArgument(name + ": cell " + std::to_string(k) + " listed twice");
    }
}

bool all_zero(const std::vector<Eigen::Matrix2d>& w) {
    for (const auto& m : w)
        if (!m.isZero(0.0)) return false;
    return true;
}

double max_eig(const Eigen::Matrix2d& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m, Eigen::EigenvaluesOnly).eigenvalues()[1];
}

} // namespace

void ObservationSetup::validate(const Mesh& mesh) const {
    if (!(epsilon2 > 0.0) || !(epsilon3 > 0.0) || !std::isfinite(epsilon2) || !std::isfinite(epsilon3))
        throw InvalidArgument("observation: epsilon2 and epsilon3 must be positive");
    for (std::size_t i = 0; i < flux_channels.size(); ++i) {
        const auto& ch = flux_channels[i];
        const std::string name = "flux channel " + std::to_string(i);
        check_cells(ch.cells, mesh, name);
        const auto m = static_cast<Eigen::Index>(ch.cells.size());
        if (ch.weight.size() != ch.cells.size()) throw InvalidArgument(name + ": weight count mismatch");
        if (ch.kind == KernelKind::Matrix && (ch.kernel.rows() != 2 * m || ch.kernel.cols() != 2 * m))
            throw InvalidArgument(name + ": kernel must be " + std::to_string(2 * m) + " square");
        if (ch.kind == KernelKind::Matrix && !ch.kernel.allFinite()) throw InvalidArgument(name + ": non-finite kernel");
        if (all_zero(ch.weight)) continue;
        for (const auto& w : ch.weight) {
            if (!w.allFinite() || std::abs(w(0, 1) - w(1, 0)) > 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff()))
                throw InvalidArgument(name + ": weight must be symmetric");
            if (!(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(w, Eigen::EigenvaluesOnly).eigenvalues()[0] > 0.0))
                throw InvalidArgument(name + ": weight must be positive definite (or zero on the whole channel)");
        }
    }
    for (std::size_t i = 0; i < scalar_channels.size(); ++i) {
        const auto& ch = scalar_channels[i];
        const std::string name = "scalar channel " + std::to_string(i);
        check_cells(ch.cells, mesh, name);
        const auto m = static_cast<Eigen::Index>(ch.cells.size());
        if (ch.weight.size() != m) throw InvalidArgument(name + ": weight count mismatch");
        if (ch.kind == KernelKind::Matrix && (ch.kernel.rows() != m || ch.kernel.cols() != m))
            throw InvalidArgument(name + ": kernel must be " + std::to_string(m) + " square");
        if (ch.kind == KernelKind::Matrix && !ch.kernel.allFinite()) throw InvalidArgument(name + ": non-finite kernel");
        if (ch.weight.isZero(0.0)) continue;
        if (!ch.weight.allFinite() || !(ch.weight.minCoeff() > 0.0))
            throw InvalidArgument(name + ": weight must be positive (or zero on the whole channel)");
    }
}

double ObservationSetup::alpha() const {
    double a = std::numeric_limits<double>::infinity();
    for (const auto& ch : flux_channels) {
        if (all_zero(ch.weight)) continue;
        for (const auto& w : ch.weight) a = std::min(a, epsilon2 / max_eig(w));
    }
    for (const auto& ch : scalar_channels) {
        if (ch.weight.isZero(0.0)) continue;
        a = std::min(a, epsilon3 / ch.weight.maxCoeff());
    }
    return a;
}

ObservationOperators::ObservationOperators(ObservationSetup setup, const HDivSpace& hdiv, const L2Space& l2)
    : setup_(std::move(setup)), n_cells_(l2.n2()) {
    const Mesh& mesh = hdiv.mesh();
    if (&mesh != &l2.mesh()) throw InvalidArgument("observation: spaces on different meshes");
    setup_.validate(mesh);

    const auto nf = setup_.flux_channels.size();
    const auto ns = setup_.scalar_channels.size();
    off1_.assign(nf + 1, 0);
    off2_.assign(ns + 1, 0);
    areas1_.resize(nf);
    areas2_.resize(ns);
    for (std::size_t c = 0; c < nf; ++c) {
        const auto& ch = setup_.flux_channels[c];
        off1_[c + 1] = off1_[c] + 2 * static_cast<int>(ch.cells.size());
        for (int k : ch.cells) areas1_[c].push_back(mesh.area(k));
        active1_.push_back(!all_zero(ch.weight));
    }
    for (std::size_t c = 0; c < ns; ++c) {
        const auto& ch = setup_.scalar_channels[c];
        off2_[c + 1] = off2_[c] + static_cast<int>(ch.cells.size());
        for (int k : ch.cells) areas2_[c].push_back(mesh.area(k));
        active2_.push_back(!ch.weight.isZero(0.0));
    }

    std::vector<Eigen::Triplet<double>> tg, tw;
    for (std::size_t c = 0; c < nf; ++c) {
        const auto& ch = setup_.flux_channels[c];
        const int m = static_cast<int>(ch.cells.size());
        const int off = off1_[c];
        // Basis values at each subdomain centroid: psi(b)(d, l).
        std::vector<Eigen::Matrix<double, 2, 3>> psi(m);
        for (int b = 0; b < m; ++b) {
            const int k = ch.cells[b];
            for (int l = 0; l < 3; ++l) psi[b].col(l) = hdiv.basis(k, l, mesh.centroid(k));
        }
        for (int a = 0; a < m; ++a) {
            if (ch.kind == KernelKind::Identity) {
                for (int d = 0; d < 2; ++d)
                    for (int l = 0; l < 3; ++l) tg.emplace_back(off + 2 * a + d, hdiv.dof(ch.cells[a], l), psi[a](d, l));
            } else {
                for (int b = 0; b < m; ++b) {
                    const Eigen::Matrix<double, 2, 3> blk =
                        ch.kernel.block<2, 2>(2 * a, 2 * b) * psi[b] * areas1_[c][b];
                    for (int d = 0; d < 2; ++d)
                        for (int l = 0; l < 3; ++l) tg.emplace_back(off + 2 * a + d, hdiv.dof(ch.cells[b], l), blk(d, l));
                }
            }
            const Eigen::Matrix2d w = ch.weight[a] * (areas1_[c][a] / setup_.epsilon2);
            for (int d = 0; d < 2; ++d)
                for (int e = 0; e < 2; ++e)
                    if (w(d, e) != 0.0) tw.emplace_back(off + 2 * a + d, off + 2 * a + e, w(d, e));
        }
        for (double s : areas1_[c]) measure1_ += s;
    }
    G1_.resize(off1_.back(), hdiv.n1());
    G1_.setFromTriplets(tg.begin(), tg.end());
    W1_.resize(off1_.back(), off1_.back());
    W1_.setFromTriplets(tw.begin(), tw.end());

    tg.clear();
    tw.clear();
    for (std::size_t c = 0; c < ns; ++c) {
        const auto& ch = setup_.scalar_channels[c];
        const int m = static_cast<int>(ch.cells.size());
        const int off = off2_[c];
        for (int a = 0; a < m; ++a) {
            if (ch.kind == KernelKind::Identity) {
                tg.emplace_back(off + a, ch.cells[a], 1.0);
            } else {
                for (int b = 0; b < m; ++b) tg.emplace_back(off + a, ch.cells[b], ch.kernel(a, b) * areas2_[c][b]);
            }
            const double w = ch.weight[a] * areas2_[c][a] / setup_.epsilon3;
            if (w != 0.0) tw.emplace_back(off + a, off + a, w);
        }
        for (double s : areas2_[c]) measure2_ += s;
    }
    G2_.resize(off2_.back(), l2.n2());
    G2_.setFromTriplets(tg.begin(), tg.end());
    W2_.resize(off2_.back(), off2_.back());
    W2_.setFromTriplets(tw.begin(), tw.end());
}

ObsField ObservationOperators::zero() const {
    ObsField u;
    for (std::size_t c = 0; c + 1 < off1_.size(); ++c) u.flux.push_back(Eigen::VectorXd::Zero(off1_[c + 1] - off1_[c]));
    for (std::size_t c = 0; c + 1 < off2_.size(); ++c)
        u.scalar.push_back(Eigen::VectorXd::Zero(off2_[c + 1] - off2_[c]));
    return u;
}

void ObservationOperators::check_shape(const ObsField& u) const {
    if (u.flux.size() + 1 != off1_.size() || u.scalar.size() + 1 != off2_.size())
        throw InvalidArgument("observation field: channel count mismatch");
    for (std::size_t c = 0; c < u.flux.size(); ++c)
        if (u.flux[c].size() != off1_[c + 1] - off1_[c])
            throw InvalidArgument("observation field: flux channel " + std::to_string(c) + " has the wrong size");
    for (std::size_t c = 0; c < u.scalar.size(); ++c)
        if (u.scalar[c].size() != off2_[c + 1] - off2_[c])
            throw InvalidArgument("observation field: scalar channel " + std::to_string(c) + " has the wrong size");
}

Eigen::VectorXd ObservationOperators::flatten_flux(const ObsField& u) const {
    check_shape(u);
    Eigen::VectorXd v(off1_.back());
    for (std::size_t c = 0; c < u.flux.size(); ++c) v.segment(off1_[c], u.flux[c].size()) = u.flux[c];
    return v;
}

Eigen::VectorXd ObservationOperators::flatten_scalar(const ObsField& u) const {
    check_shape(u);
    Eigen::VectorXd v(off2_.back());
    for (std::size_t c = 0; c < u.scalar.size(); ++c) v.segment(off2_[c], u.scalar[c].size()) = u.scalar[c];
    return v;
}

ObsField ObservationOperators::unflatten(const Eigen::VectorXd& flux, const Eigen::VectorXd& scalar) const {
    if (flux.size() != off1_.back() || scalar.size() != off2_.back())
        throw InvalidArgument("observation field: flat size mismatch");
    ObsField u;
    for (std::size_t c = 0; c + 1 < off1_.size(); ++c) u.flux.push_back(flux.segment(off1_[c], off1_[c + 1] - off1_[c]));
    for (std::size_t c = 0; c + 1 < off2_.size(); ++c)
        u.scalar.push_back(scalar.segment(off2_[c], off2_[c + 1] - off2_[c]));
    return u;
}

ObsField ObservationOperators::apply(const FieldPair& state) const {
    if (state.j.size() != G1_.cols() || state.phi.size() != G2_.cols())
        throw InvalidArgument("apply_observation: state does not match the mesh");
    return unflatten(G1_ * state.j, G2_ * state.phi);
}

ObsField ObservationOperators::apply(const FieldPair& state, const ObsField& noise) const {
    return unflatten(G1_ * state.j + flatten_flux(noise), G2_ * state.phi + flatten_scalar(noise));
}

double ObservationOperators::inner_flux(const ObsField& y, const ObsField& u) const {
    check_shape(y);
    check_shape(u);
    double s = 0.0;
    for (std::size_t c = 0; c < y.flux.size(); ++c)
        for (std::size_t a = 0; a < areas1_[c].size(); ++a)
            s += areas1_[c][a] * y.flux[c].segment<2>(2 * a).dot(u.flux[c].segment<2>(2 * a));
    return s;
}

double ObservationOperators::inner_scalar(const ObsField& y, const ObsField& u) const {
    check_shape(y);
    check_shape(u);
    double s = 0.0;
    for (std::size_t c = 0; c < y.scalar.size(); ++c)
        for (std::size_t a = 0; a < areas2_[c].size(); ++a) s += areas2_[c][a] * y.scalar[c][a] * u.scalar[c][a];
    return s;
}

double ObservationOperators::inner(const ObsField& y, const ObsField& u) const {
    return inner_flux(y, u) + inner_scalar(y, u);
}

ObsField ObservationOperators::apply_weight(const ObsField& u) const {
    check_shape(u);
    ObsField out = u;
    for (std::size_t c = 0; c < u.flux.size(); ++c)
        for (std::size_t a = 0; a < areas1_[c].size(); ++a)
            out.flux[c].segment<2>(2 * a) = setup_.flux_channels[c].weight[a] * u.flux[c].segment<2>(2 * a) / setup_.epsilon2;
    for (std::size_t c = 0; c < u.scalar.size(); ++c)
        out.scalar[c] = setup_.scalar_channels[c].weight.cwiseProduct(u.scalar[c]) / setup_.epsilon3;
    return out;
}

ObsField ObservationOperators::apply_inverse_weight(const ObsField& u) const {
    check_shape(u);
    ObsField out = zero();
    for (std::size_t c = 0; c < u.flux.size(); ++c) {
        if (!active1_[c]) continue;
        for (std::size_t a = 0; a < areas1_[c].size(); ++a)
            out.flux[c].segment<2>(2 * a) =
                setup_.epsilon2 * setup_.flux_channels[c].weight[a].inverse() * u.flux[c].segment<2>(2 * a);
    }
    for (std::size_t c = 0; c < u.scalar.size(); ++c) {
        if (!active2_[c]) continue;
        out.scalar[c] = setup_.epsilon3 * u.scalar[c].cwiseQuotient(setup_.scalar_channels[c].weight);
    }
    return out;
}

double ObservationOperators::inverse_weight_norm2_flux(const ObsField& u) const {
    check_shape(u);
    double s = 0.0;
    for (std::size_t c = 0; c < u.flux.size(); ++c) {
        if (!active1_[c]) {
            if (!u.flux[c].isZero(0.0)) return std::numeric_limits<double>::infinity();
            continue;
        }
        for (std::size_t a = 0; a < areas1_[c].size(); ++a) {
            const Eigen::Vector2d v = u.flux[c].segment<2>(2 * a);
            s += areas1_[c][a] * setup_.epsilon2 * v.dot(setup_.flux_channels[c].weight[a].inverse() * v);
        }
    }
    return s;
}

double ObservationOperators::inverse_weight_norm2_scalar(const ObsField& u) const {
    check_shape(u);
    double s = 0.0;
    for (std::size_t c = 0; c < u.scalar.size(); ++c) {
        if (!active2_[c]) {
            if (!u.scalar[c].isZero(0.0)) return std::numeric_limits<double>::infinity();
            continue;
        }
        for (std::size_t a = 0; a < areas2_[c].size(); ++a)
            s += areas2_[c][a] * setup_.epsilon3 * u.scalar[c][a] * u.scalar[c][a] / setup_.scalar_channels[c].weight[a];
    }
    return s;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ObservationOperators::adjoint_loads(const ObsField& u) const {
    Eigen::VectorXd v1 = flatten_flux(u);
    Eigen::VectorXd v2 = flatten_scalar(u);
    for (std::size_t c = 0; c < u.flux.size(); ++c)
        for (std::size_t a = 0; a < areas1_[c].size(); ++a) v1.segment<2>(off1_[c] + 2 * a) *= areas1_[c][a];
    for (std::size_t c = 0; c < u.scalar.size(); ++c)
        for (std::size_t a = 0; a < areas2_[c].size(); ++a) v2[off2_[c] + a] *= areas2_[c][a];
    return {G1_.transpose() * v1, G2_.transpose() * v2};
}

std::pair<Eigen::MatrixX2d, Eigen::VectorXd> ObservationOperators::adjoint_fields(const ObsField& w) const {
    check_shape(w);
    Eigen::MatrixX2d f1 = Eigen::MatrixX2d::Zero(n_cells_, 2);
    Eigen::VectorXd f2 = Eigen::VectorXd::Zero(n_cells_);
    for (std::size_t c = 0; c < w.flux.size(); ++c) {
        const auto& ch = setup_.flux_channels[c];
        const auto m = ch.cells.size();
        for (std::size_t b = 0; b < m; ++b) {
            Eigen::Vector2d v = Eigen::Vector2d::Zero();
            if (ch.kind == KernelKind::Identity) {
                v = w.flux[c].segment<2>(2 * b);
            } else {
                for (std::size_t a = 0; a < m; ++a)
                    v += ch.kernel.block<2, 2>(2 * a, 2 * b).transpose() * w.flux[c].segment<2>(2 * a) * areas1_[c][a];
            }
            f1.row(ch.cells[b]) += v.transpose();
        }
    }
    for (std::size_t c = 0; c < w.scalar.size(); ++c) {
        const auto& ch = setup_.scalar_channels[c];
        const auto m = ch.cells.size();
        for (std::size_t b = 0; b < m; ++b) {
            double v = 0.0;
            if (ch.kind == KernelKind::Identity) {
                v = w.scalar[c][b];
            } else {
                for (std::size_t a = 0; a < m; ++a) v += ch.kernel(a, b) * w.scalar[c][a] * areas2_[c][a];
            }
            f2[ch.cells[b]] += v;
        }
    }
    return {f1, f2};
}

ObservationData apply_observation(const ObservationOperators& ops, const FieldPair& state,
                                  const std::optional<NoiseRealization>& noise) {
    return noise ? ops.apply(state, *noise) : ops.apply(state);
}

std::pair<SparseMatrix, SparseMatrix> compose_tilde_kernels(const ObservationOperators& ops) {
    SparseMatrix a3 = ops.G1().transpose() * ops.W1() * ops.G1();
    SparseMatrix a4 = ops.G2().transpose() * ops.W2() * ops.G2();
    // Symmetrize away round-off in the triple product.
    a3 = 0.5 * (a3 + SparseMatrix(a3.transpose()));
    a4 = 0.5 * (a4 + SparseMatrix(a4.transpose()));
    a3.prune(0.0);
    a4.prune(0.0);
    return {a3, a4};
}

AdmissibilityReport check_admissibility(const ObservationOperators& ops, const NoiseCovariance& cov) {
    const auto& s = ops.setup();
    if (cov.flux.size() != s.flux_channels.size() || cov.scalar.size() != s.scalar_channels.size())
        throw InvalidArgument("check_admissibility: covariance data missing for some channels");
    AdmissibilityReport r;
    for (std::size_t c = 0; c < cov.flux.size(); ++c) {
        const auto& areas = ops.channel_areas_flux(static_cast<int>(c));
        if (cov.flux[c].size() != areas.size())
            throw InvalidArgument("check_admissibility: flux channel " + std::to_string(c) + " covariance size");
        for (std::size_t a = 0; a < areas.size(); ++a)
            r.trace_flux += areas[a] * (s.flux_channels[c].weight[a] * cov.flux[c][a]).trace() / s.epsilon2;
    }
    for (std::size_t c = 0; c < cov.scalar.size(); ++c) {
        const auto& areas = ops.channel_areas_scalar(static_cast<int>(c));
        if (cov.scalar[c].size() != static_cast<Eigen::Index>(areas.size()))
            throw InvalidArgument("check_admissibility: scalar channel " + std::to_string(c) + " covariance size");
        for (std::size_t a = 0; a < areas.size(); ++a)
            r.trace_scalar += areas[a] * s.scalar_channels[c].weight[a] * cov.scalar[c][a] / s.epsilon3;
    }
    const double tol = 1e-10;
    r.flux_ok = r.trace_flux <= 1.0 + tol;
    r.scalar_ok = r.trace_scalar <= 1.0 + tol;
    return r;
}

} // namespace hdivmm
