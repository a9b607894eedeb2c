#include "hdivmm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>

#include "hdivmm/errors.hpp"

namespace hdivmm {

namespace {

double signed_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

std::int64_t edge_key(int a, int b, int nv) {
    return static_cast<std::int64_t>(std::min(a, b)) * nv + std::max(a, b);
}

// True if p lies strictly inside segment [a, b].
bool strictly_inside(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d t = b - a;
    const double len2 = t.squaredNorm();
    const double s = (p - a).dot(t) / len2;
    if (s <= 1e-12 || s >= 1.0 - 1e-12) return false;
    const double cross = t.x() * (p.y() - a.y()) - t.y() * (p.x() - a.x());
    return std::abs(cross) <= 1e-12 * len2;
}

} // namespace

Mesh Mesh::build(std::vector<Eigen::Vector2d> vertices, std::vector<Cell> cells) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.cells_ = std::move(cells);
    const int nv = m.num_vertices();

    double extent = 0.0;
    for (const auto& v : m.vertices_) {
        if (!v.allFinite()) throw MeshError(MeshErrorKind::MalformedHeader, "non-finite vertex coordinate");
        extent = std::max(extent, v.cwiseAbs().maxCoeff());
    }
    const double area_tol = 1e-14 * std::max(1.0, extent * extent);

    m.areas_.resize(m.cells_.size());
    for (std::size_t k = 0; k < m.cells_.size(); ++k) {
        auto& c = m.cells_[k];
        for (int v : c) {
            if (v < 0 || v >= nv)
                throw MeshError(MeshErrorKind::InconsistentCounts,
                                "cell " + std::to_string(k) + " references vertex " + std::to_string(v) +
                                    " outside [0, " + std::to_string(nv) + ")");
        }
        if (c[0] == c[1] || c[1] == c[2] || c[0] == c[2])
            throw MeshError(MeshErrorKind::DegenerateCell, "cell " + std::to_string(k) + " repeats a vertex");
        double a = signed_area(m.vertices_[c[0]], m.vertices_[c[1]], m.vertices_[c[2]]);
        if (a < 0.0) {
            std::swap(c[1], c[2]);
            a = -a;
        }
        if (a <= area_tol)
            throw MeshError(MeshErrorKind::DegenerateCell, "cell " + std::to_string(k) + " has zero area");
        m.areas_[k] = a;
    }

    std::unordered_map<std::int64_t, int> index;
    index.reserve(m.cells_.size() * 2);
    std::vector<int> count;
    std::vector<int> first_sign;
    m.cell_edges_.resize(m.cells_.size());
    for (std::size_t k = 0; k < m.cells_.size(); ++k) {
        const auto& c = m.cells_[k];
        for (int l = 0; l < 3; ++l) {
            const int a = c[(l + 1) % 3];
            const int b = c[(l + 2) % 3];
            const int sign = a < b ? 1 : -1;
            auto [it, inserted] = index.try_emplace(edge_key(a, b, nv), m.num_edges());
            if (inserted) {
                m.edges_.push_back({std::min(a, b), std::max(a, b)});
                count.push_back(0);
                first_sign.push_back(sign);
            } else if (count[it->second] >= 2 || first_sign[it->second] == sign) {
                throw MeshError(MeshErrorKind::Nonconforming,
                                "edge (" + std::to_string(a) + "," + std::to_string(b) +
                                    ") shared inconsistently at cell " + std::to_string(k));
            }
            ++count[it->second];
            m.cell_edges_[k][l] = {it->second, sign};
        }
    }

    for (int e = 0; e < m.num_edges(); ++e)
        if (count[e] == 1) m.boundary_edges_.push_back(e);

    // Hanging vertices show up as a vertex inside an edge seen by only one cell.
    std::vector<char> used(nv, 0);
    for (const auto& c : m.cells_)
        for (int v : c) used[v] = 1;
    for (int e : m.boundary_edges_) {
        const auto& a = m.vertices_[m.edges_[e][0]];
        const auto& b = m.vertices_[m.edges_[e][1]];
        for (int v = 0; v < nv; ++v) {
            if (!used[v] || v == m.edges_[e][0] || v == m.edges_[e][1]) continue;
            if (strictly_inside(m.vertices_[v], a, b))
                throw MeshError(MeshErrorKind::Nonconforming,
                                "vertex " + std::to_string(v) + " hangs on edge " + std::to_string(e));
        }
    }
    return m;
}

Eigen::Vector2d Mesh::centroid(int cell) const {
    const auto& c = cells_[cell];
    return (vertices_[c[0]] + vertices_[c[1]] + vertices_[c[2]]) / 3.0;
}

double Mesh::edge_length(int edge) const {
    return (vertices_[edges_[edge][1]] - vertices_[edges_[edge][0]]).norm();
}

Eigen::Vector2d Mesh::edge_normal(int edge) const {
    const Eigen::Vector2d t = vertices_[edges_[edge][1]] - vertices_[edges_[edge][0]];
    return Eigen::Vector2d(t.y(), -t.x()) / t.norm();
}

Eigen::Vector2d Mesh::edge_midpoint(int edge) const {
    return 0.5 * (vertices_[edges_[edge][0]] + vertices_[edges_[edge][1]]);
}

double Mesh::total_area() const {
    double s = 0.0;
    for (double a : areas_) s += a;
    return s;
}

double Mesh::h() const {
    double h = 0.0;
    for (int e = 0; e < num_edges(); ++e) h = std::max(h, edge_length(e));
    return h;
}

Mesh generate_unit_square(int n) {
    if (n < 1) throw InvalidArgument("generate_unit_square: n must be >= 1, got " + std::to_string(n));
    std::vector<Eigen::Vector2d> v;
    v.reserve((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) v.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n);
    std::vector<Mesh::Cell> cells;
    cells.reserve(2 * n * n);
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            cells.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            cells.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return Mesh::build(std::move(v), std::move(cells));
}

namespace {

// Next non-empty, non-comment line split into tokens.
bool next_record(std::istream& in, std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        tokens.clear();
        std::string t;
        while (ls >> t) tokens.push_back(t);
        if (!tokens.empty()) return true;
    }
    return false;
}

long parse_int(const std::string& s, const std::string& where) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size()) throw MeshError(MeshErrorKind::MalformedHeader, where + ": expected integer, got '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& where) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size()) throw MeshError(MeshErrorKind::MalformedHeader, where + ": expected number, got '" + s + "'");
    return v;
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    return in;
}

} // namespace

Mesh load_triangle_mesh(const std::filesystem::path& node_path, const std::filesystem::path& ele_path) {
    std::vector<std::string> tok;

    auto node_in = open_or_throw(node_path);
    const std::string nwhere = node_path.filename().string();
    if (!next_record(node_in, tok) || tok.size() < 2)
        throw MeshError(MeshErrorKind::MalformedHeader, nwhere + ": missing header");
    const long nv = parse_int(tok[0], nwhere);
    const long dim = parse_int(tok[1], nwhere);
    const long nattr = tok.size() > 2 ? parse_int(tok[2], nwhere) : 0;
    const long nmark = tok.size() > 3 ? parse_int(tok[3], nwhere) : 0;
    if (nv < 3 || dim != 2 || nattr < 0 || nmark < 0 || nmark > 1)
        throw MeshError(MeshErrorKind::MalformedHeader, nwhere + ": bad header");

    std::vector<Eigen::Vector2d> vertices(nv);
    long base = -1;
    for (long i = 0; i < nv; ++i) {
        if (!next_record(node_in, tok))
            throw MeshError(MeshErrorKind::InconsistentCounts,
                            nwhere + ": expected " + std::to_string(nv) + " vertices, found " + std::to_string(i));
        if (static_cast<long>(tok.size()) != 3 + nattr + nmark)
            throw MeshError(MeshErrorKind::MalformedHeader, nwhere + ": wrong field count on vertex line");
        const long idx = parse_int(tok[0], nwhere);
        if (base < 0) {
            if (idx != 0 && idx != 1) throw MeshError(MeshErrorKind::MalformedHeader, nwhere + ": first index must be 0 or 1");
            base = idx;
        }
        if (idx != base + i) throw MeshError(MeshErrorKind::InconsistentCounts, nwhere + ": vertex indices not consecutive");
        vertices[i] = {parse_double(tok[1], nwhere), parse_double(tok[2], nwhere)};
    }
    if (next_record(node_in, tok)) throw MeshError(MeshErrorKind::InconsistentCounts, nwhere + ": trailing vertex records");

    auto ele_in = open_or_throw(ele_path);
    const std::string ewhere = ele_path.filename().string();
    if (!next_record(ele_in, tok) || tok.size() < 2)
        throw MeshError(MeshErrorKind::MalformedHeader, ewhere + ": missing header");
    const long nc = parse_int(tok[0], ewhere);
    const long npc = parse_int(tok[1], ewhere);
    const long cattr = tok.size() > 2 ? parse_int(tok[2], ewhere) : 0;
    if (nc < 1 || npc != 3 || cattr < 0) throw MeshError(MeshErrorKind::MalformedHeader, ewhere + ": bad header");

    std::vector<Mesh::Cell> cells(nc);
    for (long i = 0; i < nc; ++i) {
        if (!next_record(ele_in, tok))
            throw MeshError(MeshErrorKind::InconsistentCounts,
                            ewhere + ": expected " + std::to_string(nc) + " cells, found " + std::to_string(i));
        if (static_cast<long>(tok.size()) != 4 + cattr)
            throw MeshError(MeshErrorKind::MalformedHeader, ewhere + ": wrong field count on cell line");
        if (parse_int(tok[0], ewhere) != base + i)
            throw MeshError(MeshErrorKind::InconsistentCounts, ewhere + ": cell indices not consecutive");
        for (int k = 0; k < 3; ++k) {
            const long v = parse_int(tok[1 + k], ewhere) - base;
            if (v < 0 || v >= nv)
                throw MeshError(MeshErrorKind::InconsistentCounts, ewhere + ": vertex reference out of range");
            cells[i][k] = static_cast<int>(v);
        }
    }
    if (next_record(ele_in, tok)) throw MeshError(MeshErrorKind::InconsistentCounts, ewhere + ": trailing cell records");

    return Mesh::build(std::move(vertices), std::move(cells));
}

Mesh refine_uniform(const Mesh& mesh) {
    const int nv = mesh.num_vertices();
    std::vector<Eigen::Vector2d> v = mesh.vertices();
    v.reserve(nv + mesh.num_edges());
    for (int e = 0; e < mesh.num_edges(); ++e) v.push_back(mesh.edge_midpoint(e));

    std::vector<Mesh::Cell> cells;
    std::vector<int> parents;
    cells.reserve(4 * mesh.num_cells());
    parents.reserve(4 * mesh.num_cells());
    for (int k = 0; k < mesh.num_cells(); ++k) {
        const auto& c = mesh.cells()[k];
        const auto& ce = mesh.cell_edges()[k];
        // m[l] is the midpoint of the edge opposite vertex l.
        const int m0 = nv + ce[0].edge, m1 = nv + ce[1].edge, m2 = nv + ce[2].edge;
        cells.push_back({c[0], m2, m1});
        cells.push_back({m2, c[1], m0});
        cells.push_back({m1, m0, c[2]});
        cells.push_back({m0, m1, m2});
        for (int i = 0; i < 4; ++i) parents.push_back(k);
    }
    Mesh fine = Mesh::build(std::move(v), std::move(cells));
    fine.parents_ = std::move(parents);
    return fine;
}

} // namespace hdivmm
