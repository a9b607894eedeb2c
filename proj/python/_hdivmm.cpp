#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hdivmm/cli.hpp"
#include "hdivmm/errors.hpp"
#include "hdivmm/estimator.hpp"
#include "hdivmm/forward.hpp"
#include "hdivmm/mesh.hpp"
#include "hdivmm/stochastic.hpp"

namespace py = pybind11;
using namespace hdivmm;

namespace {

py::dict obs_to_dict(const ObsField& u) {
    py::dict d;
    d["flux"] = u.flux;
    d["scalar"] = u.scalar;
    return d;
}

ObsField obs_from_dict(const py::dict& d) {
    ObsField u;
    if (d.contains("flux")) u.flux = d["flux"].cast<std::vector<Eigen::VectorXd>>();
    if (d.contains("scalar")) u.scalar = d["scalar"].cast<std::vector<Eigen::VectorXd>>();
    return u;
}

py::dict solution_to_dict(const EstimatorSolution& s) {
    py::dict d;
    d["kind"] = s.kind == FunctionalKind::State ? "state" : "rhs";
    d["z1hat"] = s.z1hat;
    d["z2hat"] = s.z2hat;
    d["p1"] = s.p1;
    d["p2"] = s.p2;
    d["uhat"] = obs_to_dict(s.uhat);
    d["chat"] = s.chat;
    d["sigma"] = s.sigma;
    return d;
}

struct PyMesh {
    MeshPtr mesh;
};

struct PyProblem {
    std::shared_ptr<EstimationProblem> problem;
};

std::vector<Eigen::Matrix2d> coefficient_matrices(const py::object& A, int nc) {
    if (py::isinstance<py::list>(A)) return A.cast<std::vector<Eigen::Matrix2d>>();
    const Eigen::Matrix2d a = A.cast<Eigen::Matrix2d>();
    return std::vector<Eigen::Matrix2d>(static_cast<std::size_t>(nc), a);
}

EstimatorSolution solve_any(const EstimationProblem& p, const FunctionalSpec& f) {
    return f.kind == FunctionalKind::State ? solve_minimax_system(p, f) : solve_rhs_minimax(p, f).solution;
}

FunctionalSpec functional_from(const py::dict& d, int nc) {
    const std::string kind = d["kind"].cast<std::string>();
    if (kind == "state") {
        Eigen::MatrixX2d l1 = d.contains("l1") ? d["l1"].cast<Eigen::MatrixX2d>() : Eigen::MatrixX2d::Zero(nc, 2);
        Eigen::VectorXd l2 = d.contains("l2") ? d["l2"].cast<Eigen::VectorXd>() : Eigen::VectorXd::Zero(nc);
        return FunctionalSpec::state(std::move(l1), std::move(l2));
    }
    if (kind == "rhs") return FunctionalSpec::rhs(d["l0"].cast<Eigen::VectorXd>());
    throw InvalidArgument("functional kind must be 'state' or 'rhs'");
}

} // namespace

PYBIND11_MODULE(_hdivmm, m) {
    m.doc() = "Guaranteed (minimax) estimation with RT0/P0 mixed finite elements";
    m.attr("__version__") = kVersion;

    // later registrations are tried first, so the base class goes first
    const auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<NumericalError>(m, "NumericalError", base);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<MeshError>(m, "MeshError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<PyMesh>(m, "Mesh")
        .def_static("unit_square", [](int n) { return PyMesh{std::make_shared<const Mesh>(generate_unit_square(n))}; },
                    py::arg("n"))
        .def_static("from_triangle",
                    [](const std::filesystem::path& node, const std::filesystem::path& ele) {
                        return PyMesh{std::make_shared<const Mesh>(load_triangle_mesh(node, ele))};
                    },
                    py::arg("node"), py::arg("ele"))
        .def_static("build",
                    [](const Eigen::MatrixX2d& v, const Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>& c) {
                        std::vector<Eigen::Vector2d> vs(static_cast<std::size_t>(v.rows()));
                        for (Eigen::Index i = 0; i < v.rows(); ++i) vs[i] = v.row(i).transpose();
                        std::vector<Mesh::Cell> cs(static_cast<std::size_t>(c.rows()));
                        for (Eigen::Index i = 0; i < c.rows(); ++i) cs[i] = {c(i, 0), c(i, 1), c(i, 2)};
                        return PyMesh{std::make_shared<const Mesh>(Mesh::build(std::move(vs), std::move(cs)))};
                    },
                    py::arg("vertices"), py::arg("cells"))
        .def("refine", [](const PyMesh& m) { return PyMesh{std::make_shared<const Mesh>(refine_uniform(*m.mesh))}; })
        .def_property_readonly("num_vertices", [](const PyMesh& m) { return m.mesh->num_vertices(); })
        .def_property_readonly("num_cells", [](const PyMesh& m) { return m.mesh->num_cells(); })
        .def_property_readonly("num_edges", [](const PyMesh& m) { return m.mesh->num_edges(); })
        .def_property_readonly("h", [](const PyMesh& m) { return m.mesh->h(); })
        .def_property_readonly("areas",
                               [](const PyMesh& m) {
                                   return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
                                       m.mesh->areas().data(), static_cast<Eigen::Index>(m.mesh->areas().size())));
                               })
        .def_property_readonly("centroids",
                               [](const PyMesh& m) {
                                   Eigen::MatrixX2d c(m.mesh->num_cells(), 2);
                                   for (int k = 0; k < m.mesh->num_cells(); ++k) c.row(k) = m.mesh->centroid(k);
                                   return c;
                               })
        .def_property_readonly("vertices",
                               [](const PyMesh& m) {
                                   Eigen::MatrixX2d v(m.mesh->num_vertices(), 2);
                                   for (int i = 0; i < m.mesh->num_vertices(); ++i) v.row(i) = m.mesh->vertex(i);
                                   return v;
                               })
        .def_property_readonly("cells", [](const PyMesh& m) { return m.mesh->cells(); })
        .def_property_readonly("edges", [](const PyMesh& m) { return m.mesh->edges(); })
        .def_property_readonly("parents", [](const PyMesh& m) { return m.mesh->parents(); });

    py::class_<FluxChannel>(m, "FluxChannel")
        .def_readonly("cells", &FluxChannel::cells)
        .def_readonly("weight", &FluxChannel::weight);
    py::class_<ScalarChannel>(m, "ScalarChannel")
        .def_readonly("cells", &ScalarChannel::cells)
        .def_readonly("weight", &ScalarChannel::weight);

    m.def(
        "flux_channel",
        [](std::vector<int> cells, const Eigen::Matrix2d& weight, std::optional<Eigen::MatrixXd> kernel) {
            FluxChannel ch = identity_flux_channel(std::move(cells), weight);
            if (kernel) {
                ch.kind = KernelKind::Matrix;
                ch.kernel = *kernel;
            }
            return ch;
        },
        py::arg("cells"), py::arg("weight") = Eigen::Matrix2d::Identity().eval(), py::arg("kernel") = py::none(),
        "Flux observations on the given cells; kernel is a 2m x 2m block matrix, identity if omitted.");
    m.def(
        "scalar_channel",
        [](std::vector<int> cells, double weight, std::optional<Eigen::MatrixXd> kernel) {
            ScalarChannel ch = identity_scalar_channel(std::move(cells), weight);
            if (kernel) {
                ch.kind = KernelKind::Matrix;
                ch.kernel = *kernel;
            }
            return ch;
        },
        py::arg("cells"), py::arg("weight") = 1.0, py::arg("kernel") = py::none(),
        "State observations on the given cells; kernel is m x m, identity if omitted.");

    py::class_<PyProblem>(m, "Problem")
        .def(py::init([](const PyMesh& mesh, const py::object& A, const Eigen::VectorXd& c, const Eigen::VectorXd& f0,
                         const Eigen::VectorXd& q, double epsilon1, std::vector<FluxChannel> flux,
                         std::vector<ScalarChannel> scalar, double epsilon2, double epsilon3) {
                 ObservationSetup obs;
                 obs.flux_channels = std::move(flux);
                 obs.scalar_channels = std::move(scalar);
                 obs.epsilon2 = epsilon2;
                 obs.epsilon3 = epsilon3;
                 const int nc = mesh.mesh->num_cells();
                 return PyProblem{std::make_shared<EstimationProblem>(
                     mesh.mesh, CoefficientFields::make(coefficient_matrices(A, nc), c),
                     PriorEllipsoid::make(f0, q, epsilon1), std::move(obs))};
             }),
             py::arg("mesh"), py::arg("A"), py::arg("c"), py::arg("f0"), py::arg("q"), py::arg("epsilon1") = 1.0,
             py::arg("flux_channels") = std::vector<FluxChannel>{},
             py::arg("scalar_channels") = std::vector<ScalarChannel>{}, py::arg("epsilon2") = 1.0,
             py::arg("epsilon3") = 1.0)
        .def_property_readonly("n1", [](const PyProblem& p) { return p.problem->hdiv().n1(); })
        .def_property_readonly("n2", [](const PyProblem& p) { return p.problem->l2().n2(); })
        .def_property_readonly("condition_estimate", [](const PyProblem& p) { return p.problem->condition_estimate(); })
        .def(
            "forward",
            [](const PyProblem& p, const Eigen::VectorXd& f) {
                const FieldPair x = p.problem->forward().solve(f);
                return py::make_tuple(x.j, x.phi);
            },
            py::arg("f"), "Solve the forward mixed problem; returns (j, phi) coefficients.")
        .def(
            "observe",
            [](const PyProblem& p, const Eigen::VectorXd& j, const Eigen::VectorXd& phi, std::optional<py::dict> noise) {
                const FieldPair x{j, phi};
                return obs_to_dict(noise ? p.problem->obs().apply(x, obs_from_dict(*noise)) : p.problem->obs().apply(x));
            },
            py::arg("j"), py::arg("phi"), py::arg("noise") = py::none())
        .def(
            "solve",
            [](const PyProblem& p, const py::dict& functional) {
                return solution_to_dict(solve_any(*p.problem, functional_from(functional, p.problem->l2().n2())));
            },
            py::arg("functional"),
            "Minimax gains, offset and error for {'kind': 'state', 'l1', 'l2'} or {'kind': 'rhs', 'l0'}.")
        .def(
            "estimate",
            [](const PyProblem& p, const py::dict& functional, const py::dict& y) {
                const auto f = functional_from(functional, p.problem->l2().n2());
                const Estimate e = estimate_with_sigma(*p.problem, solve_any(*p.problem, f), obs_from_dict(y));
                return py::make_tuple(e.estimate, e.sigma);
            },
            py::arg("functional"), py::arg("y"))
        .def(
            "reconstruct",
            [](const PyProblem& p, const py::dict& y) {
                const StateReconstruction r = solve_state_reconstruction(*p.problem, obs_from_dict(y));
                py::dict d;
                d["jhat"] = r.jhat;
                d["phihat"] = r.phihat;
                d["p1hat"] = r.p1hat;
                d["p2hat"] = r.p2hat;
                d["fhat"] = r.fhat;
                return d;
            },
            py::arg("y"))
        .def(
            "cost",
            [](const PyProblem& p, const py::dict& functional, const py::dict& u) {
                return evaluate_cost_I(*p.problem, functional_from(functional, p.problem->l2().n2()), obs_from_dict(u));
            },
            py::arg("functional"), py::arg("u"), "Guaranteed mean-square error of the estimate with gains u.")
        .def(
            "monte_carlo",
            [](const PyProblem& p, const py::dict& functional, const std::string& policy, int trials,
               std::uint64_t seed, int threads) {
                McOptions opt;
                if (policy == "worst_case") opt.policy = McPolicy::WorstCase;
                else if (policy == "admissible_random") opt.policy = McPolicy::AdmissibleRandom;
                else throw InvalidArgument("policy must be 'worst_case' or 'admissible_random'");
                opt.trials = trials;
                opt.seed = seed;
                opt.threads = threads;
                const FunctionalSpec f = functional_from(functional, p.problem->l2().n2());
                McReport r;
                {
                    py::gil_scoped_release release;
                    r = monte_carlo_mse(*p.problem, f, opt);
                }
                py::dict d;
                d["policy"] = to_string(r.policy);
                d["trials"] = r.trials;
                d["mse"] = r.mse;
                d["sigma_sq"] = r.sigma_sq;
                d["ratio"] = r.ratio;
                d["std_error"] = r.std_error;
                d["ci"] = py::make_tuple(r.ci_low, r.ci_high);
                return d;
            },
            py::arg("functional"), py::arg("policy") = "worst_case", py::arg("trials") = 10000, py::arg("seed") = 0,
            py::arg("threads") = 1);

    m.def(
        "run",
        [](const std::string& command, const std::filesystem::path& config, std::optional<std::filesystem::path> out,
           std::optional<std::uint64_t> seed, std::optional<int> threads) {
            const auto c = parse_command(command);
            if (!c) throw InvalidArgument("unknown command '" + command + "'");
            py::gil_scoped_release release;
            return run(*c, config, RunOverrides{std::move(out), seed, threads});
        },
        py::arg("command"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
        py::arg("threads") = py::none(), "Run a CLI command; returns the exit status.");
}
