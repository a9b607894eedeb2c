#pragma once

#include <array>
#include <functional>
#include <utility>

#include <Eigen/Core>

#include "hdivmm/mesh.hpp"

namespace hdivmm {

using VectorField = std::function<Eigen::Vector2d(const Eigen::Vector2d&)>;
using ScalarField = std::function<double(const Eigen::Vector2d&)>;

/// Lowest-order Raviart-Thomas space, one dof per edge.
///
/// On cell K the basis function attached to the edge opposite vertex p is
///     psi(x) = sign * |e| / (2|K|) * (x - p),
/// whose normal component along the global edge normal is 1 on that edge and
/// 0 on the other two.  A dof is therefore the mean normal flux across the edge.
class HDivSpace {
public:
    explicit HDivSpace(MeshPtr mesh);

    const Mesh& mesh() const { return *mesh_; }
    const MeshPtr& mesh_ptr() const { return mesh_; }
    int n1() const { return mesh_->num_edges(); }

    int dof(int cell, int local) const { return mesh_->cell_edges()[cell][local].edge; }
    Eigen::Vector2d basis(int cell, int local, const Eigen::Vector2d& x) const {
        return scale_[cell][local] * (x - mesh_->vertex(mesh_->cells()[cell][local]));
    }
    double basis_div(int cell, int local) const { return 2.0 * scale_[cell][local]; }

    /// Value of the field with the given coefficients at a point of `cell`.
    Eigen::Vector2d eval(const Eigen::VectorXd& coeffs, int cell, const Eigen::Vector2d& x) const;
    /// Cell-wise constant divergence.
    Eigen::VectorXd divergence(const Eigen::VectorXd& coeffs) const;
    /// Value at each cell centroid (equal to the cell mean), one row per cell.
    Eigen::MatrixX2d centroid_values(const Eigen::VectorXd& coeffs) const;

private:
    MeshPtr mesh_;
    std::vector<std::array<double, 3>> scale_;
};

/// Piecewise constants, dof i is the indicator of cell i.
class L2Space {
public:
    explicit L2Space(MeshPtr mesh);

    const Mesh& mesh() const { return *mesh_; }
    const MeshPtr& mesh_ptr() const { return mesh_; }
    int n2() const { return mesh_->num_cells(); }
    const Eigen::VectorXd& areas() const { return areas_; }

private:
    MeshPtr mesh_;
    Eigen::VectorXd areas_;
};

struct Spaces {
    HDivSpace hdiv;
    L2Space l2;
};

Spaces build_spaces(MeshPtr mesh);

/// Mean normal flux across every edge, by 2-point Gauss quadrature.
Eigen::VectorXd interpolate_hdiv(const HDivSpace& hdiv, const VectorField& field);
/// Centroid values.
Eigen::VectorXd interpolate_l2(const L2Space& l2, const ScalarField& field);
/// Centroid values of a vector field, one row per cell.
Eigen::MatrixX2d sample_cells(const L2Space& l2, const VectorField& field);

std::pair<Eigen::VectorXd, Eigen::VectorXd> interpolate_fields(const HDivSpace& hdiv, const L2Space& l2,
                                                               const VectorField& vector_field,
                                                               const ScalarField& scalar_field);

} // namespace hdivmm
