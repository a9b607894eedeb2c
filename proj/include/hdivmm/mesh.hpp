#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace hdivmm {

/// Local edge k of a cell is the edge opposite its k-th vertex.
struct CellEdge {
    int edge = -1;
    int sign = 0; // +1 if the cell's outward normal matches the global edge normal
};

/// Conforming triangulation of a 2-D polygon.
///
/// Edges are oriented from the lower to the higher vertex index; the global
/// normal of an edge with tangent t = x_hi - x_lo is (t_y, -t_x).  Cells are
/// stored counterclockwise.  Instances are immutable once built.
class Mesh {
public:
    using Cell = std::array<int, 3>;
    using Edge = std::array<int, 2>;

    /// Reorders clockwise cells, derives edges and validates conformity.
    /// Throws MeshError on degenerate or nonconforming input.
    static Mesh build(std::vector<Eigen::Vector2d> vertices, std::vector<Cell> cells);

    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_cells() const { return static_cast<int>(cells_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }

    const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
    const std::vector<Cell>& cells() const { return cells_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<std::array<CellEdge, 3>>& cell_edges() const { return cell_edges_; }
    const std::vector<int>& boundary_edges() const { return boundary_edges_; }

    const Eigen::Vector2d& vertex(int v) const { return vertices_[v]; }
    double area(int cell) const { return areas_[cell]; }
    const std::vector<double>& areas() const { return areas_; }
    Eigen::Vector2d centroid(int cell) const;
    double edge_length(int edge) const;
    Eigen::Vector2d edge_normal(int edge) const; // unit, global orientation
    Eigen::Vector2d edge_midpoint(int edge) const;

    double total_area() const;
    /// Maximum cell diameter.
    double h() const;

    /// For meshes produced by refine_uniform: parent cell of each cell on the
    /// coarser mesh.  Empty otherwise.
    const std::vector<int>& parents() const { return parents_; }

private:
    friend Mesh refine_uniform(const Mesh& mesh);

    std::vector<Eigen::Vector2d> vertices_;
    std::vector<Cell> cells_;
    std::vector<Edge> edges_;
    std::vector<std::array<CellEdge, 3>> cell_edges_;
    std::vector<int> boundary_edges_;
    std::vector<double> areas_;
    std::vector<int> parents_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Uniform mesh of [0,1]^2, each square split along its (0,0)-(1,1) diagonal.
Mesh generate_unit_square(int n);

/// Reads Triangle `.node` / `.ele` files.  Index base is detected from the
/// first vertex index in the `.node` file.
Mesh load_triangle_mesh(const std::filesystem::path& node_path,
                        const std::filesystem::path& ele_path);

/// Midpoint refinement: every cell is split into four similar children.
Mesh refine_uniform(const Mesh& mesh);

} // namespace hdivmm
