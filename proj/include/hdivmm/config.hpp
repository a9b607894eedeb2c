#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hdivmm/estimator.hpp"
#include "hdivmm/expression.hpp"
#include "hdivmm/mesh.hpp"
#include "hdivmm/stochastic.hpp"

namespace hdivmm {

/// A mesh in a refinement hierarchy together with the base-mesh ancestor of
/// every cell, so tables and subdomains given on the base mesh carry over.
struct MeshLevel {
    MeshPtr mesh;
    MeshPtr base_mesh;
    std::vector<int> base_cell;

    static MeshLevel base(Mesh mesh);
    MeshLevel refined() const;
};

/// Cell-wise scalar: an expression in x, y sampled at centroids, or a table
/// with one value per base cell.
struct CellField {
    std::optional<Expression> expr;
    std::vector<double> table;

    static CellField constant(double v) { return {Expression::constant(v), {}}; }
    Eigen::VectorXd sample(const MeshLevel& level) const;
    bool is_zero() const;
};

struct MeshSpec {
    enum class Kind { UnitSquare, Triangle } kind = Kind::UnitSquare;
    int n = 8;
    std::filesystem::path node, ele;
    int refine = 0;
};

/// Cells of the base mesh, given as index ranges [first, last] or as the
/// cells whose centroid lies in a box.  Refined cells inherit membership.
struct SubdomainSpec {
    enum class Kind { All, Ranges, Box } kind = Kind::All;
    std::vector<std::array<int, 2>> ranges;
    std::array<double, 4> box{}; // xmin, xmax, ymin, ymax

    std::vector<int> resolve(const MeshLevel& level) const;
};

struct ChannelSpec {
    SubdomainSpec subdomain;
    bool identity = true;
    /// Kernel entries in x, y (observation point) and s, t (source point):
    /// k11, k12, k21, k22 for flux channels, k for scalar channels.
    std::vector<Expression> kernel;
    /// w11, w12, w22 for flux channels, w for scalar channels.
    std::vector<CellField> weight;
};

struct FunctionalConfig {
    FunctionalKind kind = FunctionalKind::State;
    std::array<CellField, 2> l1{CellField::constant(0), CellField::constant(0)};
    CellField l2 = CellField::constant(0);
    CellField l0 = CellField::constant(0);

    FunctionalSpec resolve(const MeshLevel& level) const;
};

struct DataConfig {
    enum class Source { Synthetic, File } source = Source::Synthetic;
    std::optional<CellField> truth_f; // defaults to the prior mean
    enum class Noise { None, White } noise = Noise::None;
    double tau = 1.0;
    std::filesystem::path file;
};

struct RunConfig {
    MeshSpec mesh;

    std::array<CellField, 3> A{CellField::constant(1), CellField::constant(0), CellField::constant(1)};
    CellField c = CellField::constant(0);
    bool check_mu = true;

    CellField f0 = CellField::constant(0);
    CellField q = CellField::constant(1);
    double epsilon1 = 1.0;

    double epsilon2 = 1.0;
    double epsilon3 = 1.0;
    std::vector<ChannelSpec> flux_channels;
    std::vector<ChannelSpec> scalar_channels;

    std::optional<FunctionalConfig> functional;

    std::optional<CellField> forward_f;
    std::optional<Expression> exact_phi;
    std::optional<std::array<Expression, 2>> exact_j;

    int converge_levels = 4;

    std::vector<McPolicy> mc_policies{McPolicy::WorstCase};
    int mc_trials = 10000;
    double mc_tau = 1.0;
    double mc_prior_radius = 1.0;

    DataConfig data;

    std::uint64_t seed = 0;
    int threads = 1;
    std::filesystem::path output_dir = ".";

    MeshLevel build_mesh() const;
    CoefficientFields coefficients(const MeshLevel& level) const;
    PriorEllipsoid prior(const MeshLevel& level) const;
    ObservationSetup observation(const MeshLevel& level) const;
};

/// Parses and validates a config document; relative paths resolve against
/// `base_dir`.  Throws ConfigError on any schema violation.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
/// IoError if the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

} // namespace hdivmm
