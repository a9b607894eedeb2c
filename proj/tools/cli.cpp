#include "hdivmm/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "hdivmm/errors.hpp"
#include "hdivmm/forward.hpp"

namespace hdivmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns) : path_(path) {
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot write " + path.string());
        out_ << "# hdiv-minimax " << kVersion << '\n';
        line(columns);
    }

    void row(const std::vector<std::string>& cells) { line(cells); }

    ~CsvWriter() { out_.flush(); }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
        if (!out_) throw IoError("write failed: " + path_.string());
    }

    std::filesystem::path path_;
    std::ofstream out_;
};

std::string str(long long v) { return std::to_string(v); }

void write_cell_table(const std::filesystem::path& path, const Mesh& mesh,
                      const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns) {
    std::vector<std::string> header{"cell", "cx", "cy"};
    for (const auto& c : columns) header.push_back(c.first);
    CsvWriter w(path, header);
    for (int k = 0; k < mesh.num_cells(); ++k) {
        const Eigen::Vector2d c = mesh.centroid(k);
        std::vector<std::string> r{str(k), num(c.x()), num(c.y())};
        for (const auto& col : columns) r.push_back(num(col.second[k]));
        w.row(r);
    }
}

void write_edge_table(const std::filesystem::path& path, const Mesh& mesh, const std::string& name,
                      const Eigen::VectorXd& coeffs) {
    CsvWriter w(path, {"edge", "v0", "v1", "mx", "my", "nx", "ny", name});
    for (int e = 0; e < mesh.num_edges(); ++e) {
        const Eigen::Vector2d m = mesh.edge_midpoint(e), n = mesh.edge_normal(e);
        w.row({str(e), str(mesh.edges()[e][0]), str(mesh.edges()[e][1]), num(m.x()), num(m.y()), num(n.x()),
               num(n.y()), num(coeffs[e])});
    }
}

void write_gains(const std::filesystem::path& path, const ObservationOperators& ops, const ObsField& u) {
    CsvWriter w(path, {"group", "channel", "cell", "component", "value"});
    const ObservationSetup& s = ops.setup();
    for (std::size_t c = 0; c < s.flux_channels.size(); ++c)
        for (std::size_t a = 0; a < s.flux_channels[c].cells.size(); ++a)
            for (int d = 0; d < 2; ++d)
                w.row({"flux", str(static_cast<long long>(c)), str(s.flux_channels[c].cells[a]), str(d),
                       num(u.flux[c][static_cast<Eigen::Index>(2 * a + d)])});
    for (std::size_t c = 0; c < s.scalar_channels.size(); ++c)
        for (std::size_t a = 0; a < s.scalar_channels[c].cells.size(); ++a)
            w.row({"scalar", str(static_cast<long long>(c)), str(s.scalar_channels[c].cells[a]), "0",
                   num(u.scalar[c][static_cast<Eigen::Index>(a)])});
}

void write_estimate(const std::filesystem::path& path, double estimate, double chat, double sigma) {
    CsvWriter w(path, {"estimate", "chat", "sigma"});
    w.row({num(estimate), num(chat), num(sigma)});
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t\r");
        const auto e = item.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    }
    return out;
}

ObservationData read_observation_file(const std::filesystem::path& path, const ObservationOperators& ops) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read data file " + path.string());
    const ObservationSetup& s = ops.setup();
    ObsField y = ops.zero();
    std::vector<std::vector<char>> seen_flux, seen_scalar;
    std::vector<std::map<int, int>> pos_flux, pos_scalar;
    for (const auto& ch : s.flux_channels) {
        pos_flux.emplace_back();
        for (std::size_t a = 0; a < ch.cells.size(); ++a) pos_flux.back()[ch.cells[a]] = static_cast<int>(a);
        seen_flux.emplace_back(2 * ch.cells.size(), 0);
    }
    for (const auto& ch : s.scalar_channels) {
        pos_scalar.emplace_back();
        for (std::size_t a = 0; a < ch.cells.size(); ++a) pos_scalar.back()[ch.cells[a]] = static_cast<int>(a);
        seen_scalar.emplace_back(ch.cells.size(), 0);
    }
    std::string line;
    int lineno = 0;
    bool header = false;
    auto bad = [&](const std::string& msg) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line);
        if (!header) {
            if (f != std::vector<std::string>{"group", "channel", "cell", "component", "value"})
                bad("expected header group,channel,cell,component,value");
            header = true;
            continue;
        }
        if (f.size() != 5) bad("expected 5 fields");
        int channel = 0, cell = 0, comp = 0;
        double value = 0.0;
        try {
            channel = std::stoi(f[1]);
            cell = std::stoi(f[2]);
            comp = std::stoi(f[3]);
            value = std::stod(f[4]);
        } catch (const std::exception&) {
            bad("malformed number");
        }
        if (f[0] == "flux") {
            if (channel < 0 || channel >= static_cast<int>(pos_flux.size())) bad("no such flux channel");
            const auto it = pos_flux[channel].find(cell);
            if (it == pos_flux[channel].end()) bad("cell outside the channel subdomain");
            if (comp < 0 || comp > 1) bad("flux component must be 0 or 1");
            y.flux[channel][2 * it->second + comp] = value;
            seen_flux[channel][2 * it->second + comp] = 1;
        } else if (f[0] == "scalar") {
            if (channel < 0 || channel >= static_cast<int>(pos_scalar.size())) bad("no such scalar channel");
            const auto it = pos_scalar[channel].find(cell);
            if (it == pos_scalar[channel].end()) bad("cell outside the channel subdomain");
            if (comp != 0) bad("scalar component must be 0");
            y.scalar[channel][it->second] = value;
            seen_scalar[channel][it->second] = 1;
        } else {
            bad("group must be flux or scalar");
        }
    }
    for (const auto& v : seen_flux)
        for (char c : v)
            if (!c) throw ConfigError(path.string() + ": missing flux observations");
    for (const auto& v : seen_scalar)
        for (char c : v)
            if (!c) throw ConfigError(path.string() + ": missing scalar observations");
    return y;
}

std::shared_ptr<EstimationProblem> make_problem(const RunConfig& cfg, const MeshLevel& level) {
    CoefficientFields coeffs = cfg.coefficients(level);
    if (cfg.check_mu) {
        spdlog::info("coefficients: mu = {:.6g}, c in [{:.6g}, {:.6g}]", coeffs.mu, coeffs.c0, coeffs.c1);
        double amax = 0.0;
        for (const auto& a : coeffs.A) amax = std::max(amax, a.cwiseAbs().maxCoeff());
        if (!(coeffs.mu > 1e-12 * amax)) throw ConfigError("coefficients: A is not uniformly positive definite");
    }
    return std::make_shared<EstimationProblem>(level.mesh, std::move(coeffs), cfg.prior(level),
                                               cfg.observation(level));
}

const FunctionalConfig& require_functional(const RunConfig& cfg, std::optional<FunctionalKind> kind,
                                           const char* command) {
    if (!cfg.functional) throw ConfigError(std::string(command) + " needs a 'functional' section");
    if (kind && cfg.functional->kind != *kind)
        throw ConfigError(std::string(command) + " needs a functional of kind \"" +
                          (*kind == FunctionalKind::State ? "state" : "rhs") + "\"");
    return *cfg.functional;
}

void cmd_forward(const RunConfig& cfg) {
    if (!cfg.forward_f) throw ConfigError("forward needs 'forward.f'");
    const MeshLevel level = cfg.build_mesh();
    auto problem = make_problem(cfg, level);
    const Eigen::VectorXd f = cfg.forward_f->sample(level);
    const FieldPair x = problem->forward().solve(f);
    const Eigen::MatrixX2d jc = problem->hdiv().centroid_values(x.j);
    write_cell_table(cfg.output_dir / "fields.csv", *level.mesh,
                     {{"phi", x.phi}, {"jx", jc.col(0)}, {"jy", jc.col(1)}, {"f", f}});
    write_edge_table(cfg.output_dir / "flux.csv", *level.mesh, "j", x.j);
    if (cfg.exact_phi) {
        const Expression& e = *cfg.exact_phi;
        spdlog::info("forward: ||phi - phi_h|| = {:.6e}",
                     l2_error(problem->l2(), x.phi, [&](const Eigen::Vector2d& p) { return e(p.x(), p.y()); }));
    }
}

void cmd_estimate(const RunConfig& cfg) {
    const FunctionalConfig& fc = require_functional(cfg, FunctionalKind::State, "estimate");
    const MeshLevel level = cfg.build_mesh();
    auto problem = make_problem(cfg, level);
    const FunctionalSpec functional = fc.resolve(level);
    const EstimatorSolution sol = solve_minimax_system(*problem, functional);
    const ObservationData y = load_observations(*problem, cfg, level);
    const Estimate est = estimate_with_sigma(*problem, sol, y);
    write_estimate(cfg.output_dir / "estimate.csv", est.estimate, sol.chat, sol.sigma);
    write_gains(cfg.output_dir / "gains.csv", problem->obs(), sol.uhat);
    spdlog::info("estimate: {:.17g} +/- {:.6g}", est.estimate, est.sigma);
}

void cmd_estimate_rhs(const RunConfig& cfg) {
    const FunctionalConfig& fc = require_functional(cfg, FunctionalKind::Rhs, "estimate-rhs");
    const MeshLevel level = cfg.build_mesh();
    auto problem = make_problem(cfg, level);
    const FunctionalSpec functional = fc.resolve(level);
    const ObservationData y = load_observations(*problem, cfg, level);
    const RhsEstimate r = solve_rhs_minimax(*problem, functional, y);
    const Estimate est = estimate_with_sigma(*problem, r.solution, y);
    write_estimate(cfg.output_dir / "estimate.csv", est.estimate, r.solution.chat, r.solution.sigma);
    write_gains(cfg.output_dir / "gains.csv", problem->obs(), r.solution.uhat);
    write_cell_table(cfg.output_dir / "fhat.csv", *level.mesh, {{"fhat", *r.fhat}});
    spdlog::info("estimate-rhs: {:.17g} +/- {:.6g}", est.estimate, est.sigma);
}

void cmd_reconstruct(const RunConfig& cfg) {
    const MeshLevel level = cfg.build_mesh();
    auto problem = make_problem(cfg, level);
    const ObservationData y = load_observations(*problem, cfg, level);
    const StateReconstruction rec = solve_state_reconstruction(*problem, y);
    const Eigen::MatrixX2d jc = problem->hdiv().centroid_values(rec.jhat);
    write_cell_table(cfg.output_dir / "reconstruction.csv", *level.mesh,
                     {{"phihat", rec.phihat}, {"jhat_x", jc.col(0)}, {"jhat_y", jc.col(1)}, {"fhat", rec.fhat}});
    write_edge_table(cfg.output_dir / "reconstruction_flux.csv", *level.mesh, "jhat", rec.jhat);
}

/// ||u_fine - P u_coarse|| where P copies each coarse cell value to its children.
double prolongation_gap(const ObservationOperators& coarse_ops, const ObsField& coarse,
                        const ObservationOperators& fine_ops, const ObsField& fine, const Mesh& fine_mesh) {
    const auto& cs = coarse_ops.setup();
    const auto& fs = fine_ops.setup();
    const auto& parents = fine_mesh.parents();
    double sum = 0.0;
    for (std::size_t c = 0; c < fs.flux_channels.size(); ++c) {
        std::map<int, int> pos;
        for (std::size_t a = 0; a < cs.flux_channels[c].cells.size(); ++a)
            pos[cs.flux_channels[c].cells[a]] = static_cast<int>(a);
        const auto& cells = fs.flux_channels[c].cells;
        for (std::size_t a = 0; a < cells.size(); ++a) {
            const int b = pos.at(parents[cells[a]]);
            for (int d = 0; d < 2; ++d) {
                const double diff = fine.flux[c][2 * a + d] - coarse.flux[c][2 * b + d];
                sum += fine_mesh.area(cells[a]) * diff * diff;
            }
        }
    }
    for (std::size_t c = 0; c < fs.scalar_channels.size(); ++c) {
        std::map<int, int> pos;
        for (std::size_t a = 0; a < cs.scalar_channels[c].cells.size(); ++a)
            pos[cs.scalar_channels[c].cells[a]] = static_cast<int>(a);
        const auto& cells = fs.scalar_channels[c].cells;
        for (std::size_t a = 0; a < cells.size(); ++a) {
            const int b = pos.at(parents[cells[a]]);
            const double diff = fine.scalar[c][a] - coarse.scalar[c][b];
            sum += fine_mesh.area(cells[a]) * diff * diff;
        }
    }
    return std::sqrt(sum);
}

void cmd_converge(const RunConfig& cfg) {
    if (!cfg.forward_f && !cfg.functional) throw ConfigError("converge needs 'forward.f' or a 'functional'");
    struct Row {
        int cells = 0;
        double h = kNaN, sigma = kNaN, sigma_diff = kNaN, uhat_diff = kNaN, err_phi = kNaN, err_j = kNaN;
        double rate_phi = kNaN, rate_j = kNaN;
    };
    std::vector<Row> rows;
    MeshLevel level = cfg.build_mesh();
    std::shared_ptr<EstimationProblem> prev_problem;
    ObsField prev_uhat;
    for (int l = 0; l < cfg.converge_levels; ++l) {
        if (l > 0) level = level.refined();
        auto problem = make_problem(cfg, level);
        Row row;
        row.cells = level.mesh->num_cells();
        row.h = level.mesh->h();
        if (cfg.forward_f) {
            const FieldPair x = problem->forward().solve(cfg.forward_f->sample(level));
            if (cfg.exact_phi) {
                const Expression& e = *cfg.exact_phi;
                row.err_phi =
                    l2_error(problem->l2(), x.phi, [&](const Eigen::Vector2d& p) { return e(p.x(), p.y()); });
            }
            if (cfg.exact_j) {
                const auto& e = *cfg.exact_j;
                row.err_j = l2_error(problem->hdiv(), x.j, [&](const Eigen::Vector2d& p) {
                    return Eigen::Vector2d(e[0](p.x(), p.y()), e[1](p.x(), p.y()));
                });
            }
        }
        if (cfg.functional) {
            const FunctionalSpec functional = cfg.functional->resolve(level);
            const EstimatorSolution sol = functional.kind == FunctionalKind::State
                                              ? solve_minimax_system(*problem, functional)
                                              : solve_rhs_minimax(*problem, functional).solution;
            row.sigma = sol.sigma;
            if (prev_problem) {
                rows.back().sigma_diff = std::abs(sol.sigma - rows.back().sigma);
                rows.back().uhat_diff =
                    prolongation_gap(prev_problem->obs(), prev_uhat, problem->obs(), sol.uhat, *level.mesh);
            }
            prev_uhat = sol.uhat;
        }
        if (!rows.empty()) {
            const Row& p = rows.back();
            const double r = std::log(p.h / row.h);
            row.rate_phi = std::log(p.err_phi / row.err_phi) / r;
            row.rate_j = std::log(p.err_j / row.err_j) / r;
        }
        spdlog::info("converge: level {} cells {} h {:.4g} sigma {:.6g} err_phi {:.4e} err_j {:.4e}", l, row.cells,
                     row.h, row.sigma, row.err_phi, row.err_j);
        rows.push_back(row);
        prev_problem = problem;
    }
    CsvWriter w(cfg.output_dir / "converge.csv", {"level", "cells", "h", "sigma", "sigma_diff", "uhat_diff",
                                                  "err_phi", "err_j", "rate_phi", "rate_j"});
    for (std::size_t l = 0; l < rows.size(); ++l) {
        const Row& r = rows[l];
        w.row({str(static_cast<long long>(l)), str(r.cells), num(r.h), num(r.sigma), num(r.sigma_diff),
               num(r.uhat_diff), num(r.err_phi), num(r.err_j), num(r.rate_phi), num(r.rate_j)});
    }
}

void cmd_montecarlo(const RunConfig& cfg) {
    const FunctionalConfig& fc = require_functional(cfg, std::nullopt, "montecarlo");
    const MeshLevel level = cfg.build_mesh();
    auto problem = make_problem(cfg, level);
    const FunctionalSpec functional = fc.resolve(level);
    CsvWriter w(cfg.output_dir / "mc.csv",
                {"policy", "N", "mse", "sigma_sq", "ratio", "std_error", "ci_low", "ci_high"});
    for (McPolicy policy : cfg.mc_policies) {
        McOptions opt;
        opt.policy = policy;
        opt.trials = cfg.mc_trials;
        opt.seed = cfg.seed;
        opt.threads = cfg.threads;
        opt.tau = cfg.mc_tau;
        opt.prior_radius = cfg.mc_prior_radius;
        const McReport r = monte_carlo_mse(*problem, functional, opt);
        w.row({to_string(policy), str(r.trials), num(r.mse), num(r.sigma_sq), num(r.ratio), num(r.std_error),
               num(r.ci_low), num(r.ci_high)});
        spdlog::info("montecarlo {}: mse {:.6g} sigma^2 {:.6g} ratio {:.4f}", to_string(policy), r.mse, r.sigma_sq,
                     r.ratio);
    }
}

} // namespace

ObservationData load_observations(const EstimationProblem& problem, const RunConfig& cfg, const MeshLevel& level) {
    if (cfg.data.source == DataConfig::Source::File) return read_observation_file(cfg.data.file, problem.obs());
    const Eigen::VectorXd f = cfg.data.truth_f ? cfg.data.truth_f->sample(level) : problem.prior().f0;
    const FieldPair truth = problem.forward().solve(f);
    if (cfg.data.noise == DataConfig::Noise::None) return problem.obs().apply(truth);
    RngStreams rng = RngStreams::make(cfg.seed, 0);
    const NoiseRealization noise =
        sample_admissible_noise(problem.obs(), NoiseModel::white(cfg.data.tau, cfg.data.tau, cfg.seed), rng);
    return problem.obs().apply(truth, noise);
}

std::optional<Command> parse_command(std::string_view name) {
    if (name == "forward") return Command::Forward;
    if (name == "estimate") return Command::Estimate;
    if (name == "reconstruct") return Command::Reconstruct;
    if (name == "estimate-rhs") return Command::EstimateRhs;
    if (name == "converge") return Command::Converge;
    if (name == "montecarlo") return Command::MonteCarlo;
    return std::nullopt;
}

const char* to_string(Command command) {
    switch (command) {
    case Command::Forward: return "forward";
    case Command::Estimate: return "estimate";
    case Command::Reconstruct: return "reconstruct";
    case Command::EstimateRhs: return "estimate-rhs";
    case Command::Converge: return "converge";
    case Command::MonteCarlo: return "montecarlo";
    }
    return "?";
}

void run_command(Command command, const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
    switch (command) {
    case Command::Forward: cmd_forward(cfg); break;
    case Command::Estimate: cmd_estimate(cfg); break;
    case Command::Reconstruct: cmd_reconstruct(cfg); break;
    case Command::EstimateRhs: cmd_estimate_rhs(cfg); break;
    case Command::Converge: cmd_converge(cfg); break;
    case Command::MonteCarlo: cmd_montecarlo(cfg); break;
    }
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const MeshError*>(&e) ||
        dynamic_cast<const InvalidArgument*>(&e))
        return 2;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e)) return 4;
    return 1;
}

int run(Command command, const std::filesystem::path& config_path, const RunOverrides& overrides) {
    try {
        RunConfig cfg = load_config(config_path);
        if (overrides.out) cfg.output_dir = *overrides.out;
        if (overrides.seed) cfg.seed = *overrides.seed;
        if (overrides.threads) {
            if (*overrides.threads < 1) throw ConfigError("--threads must be at least 1");
            cfg.threads = *overrides.threads;
        }
        run_command(command, cfg);
        return 0;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg)
            if (c == '\n') c = ' ';
        std::cerr << "hdiv-minimax " << to_string(command) << ": " << msg << '\n';
        return exit_code_for(e);
    }
}

} // namespace hdivmm
