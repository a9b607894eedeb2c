#include "hdivmm/femspace.hpp"

#include <cmath>
#include <string>

#include "hdivmm/errors.hpp"

namespace hdivmm {

HDivSpace::HDivSpace(MeshPtr mesh) : mesh_(std::move(mesh)) {
    if (!mesh_) throw InvalidArgument("HDivSpace: null mesh");
    scale_.resize(mesh_->num_cells());
    for (int k = 0; k < mesh_->num_cells(); ++k) {
        for (int l = 0; l < 3; ++l) {
            const auto ce = mesh_->cell_edges()[k][l];
            scale_[k][l] = ce.sign * mesh_->edge_length(ce.edge) / (2.0 * mesh_->area(k));
        }
    }
}

Eigen::Vector2d HDivSpace::eval(const Eigen::VectorXd& coeffs, int cell, const Eigen::Vector2d& x) const {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (int l = 0; l < 3; ++l) v += coeffs[dof(cell, l)] * basis(cell, l, x);
    return v;
}

Eigen::VectorXd HDivSpace::divergence(const Eigen::VectorXd& coeffs) const {
    if (coeffs.size() != n1()) throw InvalidArgument("divergence: coefficient size mismatch");
    Eigen::VectorXd d(mesh_->num_cells());
    for (int k = 0; k < mesh_->num_cells(); ++k) {
        double s = 0.0;
        for (int l = 0; l < 3; ++l) s += coeffs[dof(k, l)] * basis_div(k, l);
        d[k] = s;
    }
    return d;
}

Eigen::MatrixX2d HDivSpace::centroid_values(const Eigen::VectorXd& coeffs) const {
    if (coeffs.size() != n1()) throw InvalidArgument("centroid_values: coefficient size mismatch");
    Eigen::MatrixX2d out(mesh_->num_cells(), 2);
    for (int k = 0; k < mesh_->num_cells(); ++k) out.row(k) = eval(coeffs, k, mesh_->centroid(k)).transpose();
    return out;
}

L2Space::L2Space(MeshPtr mesh) : mesh_(std::move(mesh)) {
    if (!mesh_) throw InvalidArgument("L2Space: null mesh");
    areas_ = Eigen::Map<const Eigen::VectorXd>(mesh_->areas().data(), mesh_->num_cells());
}

Spaces build_spaces(MeshPtr mesh) { return Spaces{HDivSpace(mesh), L2Space(mesh)}; }

Eigen::VectorXd interpolate_hdiv(const HDivSpace& hdiv, const VectorField& field) {
    const Mesh& m = hdiv.mesh();
    const double g = 0.5 / std::sqrt(3.0);
    Eigen::VectorXd out(hdiv.n1());
    for (int e = 0; e < m.num_edges(); ++e) {
        const auto& a = m.vertex(m.edges()[e][0]);
        const auto& b = m.vertex(m.edges()[e][1]);
        const Eigen::Vector2d n = m.edge_normal(e);
        const Eigen::Vector2d v1 = field(a + (0.5 - g) * (b - a));
        const Eigen::Vector2d v2 = field(a + (0.5 + g) * (b - a));
        if (!v1.allFinite() || !v2.allFinite())
            throw NumericalError("interpolate_hdiv: non-finite field value on edge " + std::to_string(e));
        out[e] = 0.5 * (v1 + v2).dot(n);
    }
    return out;
}

Eigen::VectorXd interpolate_l2(const L2Space& l2, const ScalarField& field) {
    const Mesh& m = l2.mesh();
    Eigen::VectorXd out(l2.n2());
    for (int k = 0; k < m.num_cells(); ++k) {
        out[k] = field(m.centroid(k));
        if (!std::isfinite(out[k]))
            throw NumericalError("interpolate_l2: non-finite field value at cell " + std::to_string(k));
    }
    return out;
}

Eigen::MatrixX2d sample_cells(const L2Space& l2, const VectorField& field) {
    const Mesh& m = l2.mesh();
    Eigen::MatrixX2d out(l2.n2(), 2);
    for (int k = 0; k < m.num_cells(); ++k) {
        const Eigen::Vector2d v = field(m.centroid(k));
        if (!v.allFinite()) throw NumericalError("sample_cells: non-finite field value at cell " + std::to_string(k));
        out.row(k) = v.transpose();
    }
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> interpolate_fields(const HDivSpace& hdiv, const L2Space& l2,
                                                               const VectorField& vector_field,
                                                               const ScalarField& scalar_field) {
    return {interpolate_hdiv(hdiv, vector_field), interpolate_l2(l2, scalar_field)};
}

} // namespace hdivmm
