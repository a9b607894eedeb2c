#include "hdivmm/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hdivmm/errors.hpp"

namespace hdivmm {

using json = nlohmann::json;

MeshLevel MeshLevel::base(Mesh mesh) {
    MeshLevel level;
    level.base_cell.resize(static_cast<std::size_t>(mesh.num_cells()));
    for (int k = 0; k < mesh.num_cells(); ++k) level.base_cell[k] = k;
    level.mesh = std::make_shared<const Mesh>(std::move(mesh));
    level.base_mesh = level.mesh;
    return level;
}

MeshLevel MeshLevel::refined() const {
    MeshLevel level;
    auto fine = std::make_shared<const Mesh>(refine_uniform(*mesh));
    level.base_cell.resize(static_cast<std::size_t>(fine->num_cells()));
    for (int k = 0; k < fine->num_cells(); ++k) level.base_cell[k] = base_cell[fine->parents()[k]];
    level.mesh = std::move(fine);
    level.base_mesh = base_mesh;
    return level;
}

Eigen::VectorXd CellField::sample(const MeshLevel& level) const {
    const Mesh& mesh = *level.mesh;
    if (!expr && static_cast<int>(table.size()) != level.base_mesh->num_cells())
        throw ConfigError("table has " + std::to_string(table.size()) + " entries, base mesh has " +
                          std::to_string(level.base_mesh->num_cells()) + " cells");
    Eigen::VectorXd v(mesh.num_cells());
    for (int k = 0; k < mesh.num_cells(); ++k) {
        if (expr) {
            const Eigen::Vector2d c = mesh.centroid(k);
            v[k] = (*expr)(c.x(), c.y());
        } else {
            v[k] = table[level.base_cell[k]];
        }
    }
    return v;
}

bool CellField::is_zero() const {
    if (expr) return expr->is_constant() && (*expr)(0.0, 0.0) == 0.0;
    return std::all_of(table.begin(), table.end(), [](double v) { return v == 0.0; });
}

std::vector<int> SubdomainSpec::resolve(const MeshLevel& level) const {
    const Mesh& base = *level.base_mesh;
    std::vector<char> member(static_cast<std::size_t>(base.num_cells()), kind == Kind::All);
    if (kind == Kind::Ranges) {
        for (const auto& r : ranges) {
            if (r[0] < 0 || r[1] >= base.num_cells() || r[0] > r[1])
                throw ConfigError("subdomain range [" + std::to_string(r[0]) + ", " + std::to_string(r[1]) +
                                  "] outside the base mesh (" + std::to_string(base.num_cells()) + " cells)");
            for (int k = r[0]; k <= r[1]; ++k) member[k] = 1;
        }
    } else if (kind == Kind::Box) {
        for (int k = 0; k < base.num_cells(); ++k) {
            const Eigen::Vector2d c = base.centroid(k);
            member[k] = c.x() >= box[0] && c.x() <= box[1] && c.y() >= box[2] && c.y() <= box[3];
        }
    }
    std::vector<int> cells;
    for (int k = 0; k < level.mesh->num_cells(); ++k)
        if (member[level.base_cell[k]]) cells.push_back(k);
    if (cells.empty()) throw ConfigError("subdomain contains no cells");
    return cells;
}

FunctionalSpec FunctionalConfig::resolve(const MeshLevel& level) const {
    if (kind == FunctionalKind::Rhs) return FunctionalSpec::rhs(l0.sample(level));
    Eigen::MatrixX2d m(level.mesh->num_cells(), 2);
    m.col(0) = l1[0].sample(level);
    m.col(1) = l1[1].sample(level);
    return FunctionalSpec::state(std::move(m), l2.sample(level));
}

MeshLevel RunConfig::build_mesh() const {
    Mesh m = mesh.kind == MeshSpec::Kind::UnitSquare ? generate_unit_square(mesh.n)
                                                      : load_triangle_mesh(mesh.node, mesh.ele);
    MeshLevel level = MeshLevel::base(std::move(m));
    for (int r = 0; r < mesh.refine; ++r) {
        MeshLevel fine = level.refined();
        // the refined mesh becomes the base for tables and subdomains
        level = MeshLevel::base(Mesh(*fine.mesh));
    }
    return level;
}

CoefficientFields RunConfig::coefficients(const MeshLevel& level) const {
    const Eigen::VectorXd a11 = A[0].sample(level), a12 = A[1].sample(level), a22 = A[2].sample(level);
    std::vector<Eigen::Matrix2d> mats(static_cast<std::size_t>(a11.size()));
    for (Eigen::Index k = 0; k < a11.size(); ++k) mats[k] << a11[k], a12[k], a12[k], a22[k];
    try {
        return CoefficientFields::make(std::move(mats), c.sample(level));
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("coefficients: ") + e.what());
    }
}

PriorEllipsoid RunConfig::prior(const MeshLevel& level) const {
    try {
        return PriorEllipsoid::make(f0.sample(level), q.sample(level), epsilon1);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("prior: ") + e.what());
    }
}

ObservationSetup RunConfig::observation(const MeshLevel& level) const {
    const Mesh& mesh = *level.mesh;
    ObservationSetup setup;
    setup.epsilon2 = epsilon2;
    setup.epsilon3 = epsilon3;
    for (const ChannelSpec& spec : flux_channels) {
        std::vector<int> cells = spec.subdomain.resolve(level);
        FluxChannel ch;
        if (spec.identity) {
            ch = identity_flux_channel(cells, Eigen::Matrix2d::Identity());
        } else {
            const auto& k = spec.kernel;
            ch = kernel_flux_channel(
                mesh, cells,
                [&k](const Eigen::Vector2d& x, const Eigen::Vector2d& s) {
                    const double v[4] = {x.x(), x.y(), s.x(), s.y()};
                    Eigen::Matrix2d m;
                    m << k[0](v), k[1](v), k[2](v), k[3](v);
                    return m;
                },
                Eigen::Matrix2d::Identity());
        }
        const Eigen::VectorXd w11 = spec.weight[0].sample(level), w12 = spec.weight[1].sample(level),
                              w22 = spec.weight[2].sample(level);
        for (std::size_t a = 0; a < cells.size(); ++a) {
            const int cell = cells[a];
            ch.weight[a] << w11[cell], w12[cell], w12[cell], w22[cell];
        }
        setup.flux_channels.push_back(std::move(ch));
    }
    for (const ChannelSpec& spec : scalar_channels) {
        std::vector<int> cells = spec.subdomain.resolve(level);
        ScalarChannel ch;
        if (spec.identity) {
            ch = identity_scalar_channel(cells, 1.0);
        } else {
            const Expression& k = spec.kernel[0];
            ch = kernel_scalar_channel(
                mesh, cells,
                [&k](const Eigen::Vector2d& x, const Eigen::Vector2d& s) {
                    const double v[4] = {x.x(), x.y(), s.x(), s.y()};
                    return k(v);
                },
                1.0);
        }
        const Eigen::VectorXd w = spec.weight[0].sample(level);
        for (std::size_t a = 0; a < cells.size(); ++a) ch.weight[static_cast<Eigen::Index>(a)] = w[cells[a]];
        setup.scalar_channels.push_back(std::move(ch));
    }
    try {
        setup.validate(mesh);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("observation: ") + e.what());
    }
    return setup;
}

namespace {

/// Walks the document keeping a JSON-pointer-like path for diagnostics.
class Reader {
public:
    explicit Reader(std::filesystem::path base_dir) : base_(std::move(base_dir)) {}

    [[noreturn]] static void fail(const std::string& where, const std::string& msg) {
        throw ConfigError("config" + where + ": " + msg);
    }

    static void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
        if (!obj.is_object()) fail(where, "expected an object");
        for (const auto& item : obj.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }))
                fail(where, "unknown key '" + item.key() + "'");
        }
    }

    static double number(const json& v, const std::string& where) {
        if (!v.is_number()) fail(where, "expected a number");
        return v.get<double>();
    }

    static double positive(const json& v, const std::string& where) {
        const double x = number(v, where);
        if (!(x > 0.0)) fail(where, "must be positive");
        return x;
    }

    static int integer(const json& v, const std::string& where, int lo, int hi) {
        if (!v.is_number_integer()) fail(where, "expected an integer");
        const auto x = v.get<long long>();
        if (x < lo || x > hi) fail(where, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return static_cast<int>(x);
    }

    static std::string string(const json& v, const std::string& where) {
        if (!v.is_string()) fail(where, "expected a string");
        return v.get<std::string>();
    }

    static Expression expression(const json& v, const std::string& where,
                                 const std::vector<std::string>& vars = {"x", "y"}) {
        if (v.is_number()) return Expression::constant(v.get<double>());
        try {
            return Expression::parse(string(v, where), vars);
        } catch (const ExpressionError& e) {
            fail(where, e.what());
        }
    }

    static CellField field(const json& v, const std::string& where) {
        if (v.is_object()) {
            only_keys(v, where, {"table"});
            if (!v.contains("table") || !v["table"].is_array()) fail(where, "expected {\"table\": [numbers]}");
            CellField f;
            for (std::size_t i = 0; i < v["table"].size(); ++i)
                f.table.push_back(number(v["table"][i], where + "/table/" + std::to_string(i)));
            if (f.table.empty()) fail(where, "empty table");
            return f;
        }
        return {expression(v, where), {}};
    }

    /// 2x2 symmetric matrix: a scalar field (times identity), a nested array
    /// of fields, or {"table": [[m11, m12, m22], ...]}.
    static std::array<CellField, 3> sym_matrix(const json& v, const std::string& where) {
        if (v.is_object()) {
            only_keys(v, where, {"table"});
            const json& t = v.contains("table") ? v["table"] : json();
            if (!t.is_array() || t.empty()) fail(where, "expected {\"table\": [[m11, m12, m22], ...]}");
            std::array<CellField, 3> out;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const std::string w = where + "/table/" + std::to_string(i);
                if (!t[i].is_array() || t[i].size() != 3) fail(w, "expected [m11, m12, m22]");
                for (int c = 0; c < 3; ++c) out[c].table.push_back(number(t[i][c], w));
            }
            return out;
        }
        if (v.is_array()) {
            if (v.size() != 2 || !v[0].is_array() || !v[1].is_array() || v[0].size() != 2 || v[1].size() != 2)
                fail(where, "expected [[m11, m12], [m21, m22]]");
            if (v[0][1] != v[1][0]) fail(where, "matrix must be symmetric");
            return {field(v[0][0], where + "/0/0"), field(v[0][1], where + "/0/1"), field(v[1][1], where + "/1/1")};
        }
        CellField d = field(v, where);
        return {d, CellField::constant(0), d};
    }

    SubdomainSpec subdomain(const json& v, const std::string& where) const {
        SubdomainSpec s;
        if (v.is_string()) {
            if (v.get<std::string>() != "all") fail(where, "expected \"all\", {\"ranges\": ...} or {\"box\": ...}");
            return s;
        }
        only_keys(v, where, {"ranges", "box"});
        if (v.contains("ranges") == v.contains("box")) fail(where, "give exactly one of 'ranges' and 'box'");
        if (v.contains("ranges")) {
            s.kind = SubdomainSpec::Kind::Ranges;
            const json& r = v["ranges"];
            if (!r.is_array() || r.empty()) fail(where + "/ranges", "expected a non-empty array");
            for (std::size_t i = 0; i < r.size(); ++i) {
                const std::string w = where + "/ranges/" + std::to_string(i);
                if (r[i].is_number_integer()) {
                    const int k = integer(r[i], w, 0, 1 << 30);
                    s.ranges.push_back({k, k});
                } else {
                    if (!r[i].is_array() || r[i].size() != 2) fail(w, "expected [first, last]");
                    s.ranges.push_back({integer(r[i][0], w, 0, 1 << 30), integer(r[i][1], w, 0, 1 << 30)});
                }
            }
        } else {
            s.kind = SubdomainSpec::Kind::Box;
            const json& b = v["box"];
            if (!b.is_array() || b.size() != 4) fail(where + "/box", "expected [xmin, xmax, ymin, ymax]");
            for (int i = 0; i < 4; ++i) s.box[i] = number(b[i], where + "/box");
        }
        return s;
    }

    ChannelSpec channel(const json& v, const std::string& where, bool flux) const {
        only_keys(v, where, {"subdomain", "kernel", "weight"});
        ChannelSpec ch;
        ch.subdomain = subdomain(v.value("subdomain", json("all")), where + "/subdomain");
        const json k = v.value("kernel", json("identity"));
        const std::vector<std::string> vars{"x", "y", "s", "t"};
        if (k.is_string() && k.get<std::string>() == "identity") {
            ch.identity = true;
        } else if (flux) {
            only_keys(k, where + "/kernel", {"matrix"});
            const json& m = k.contains("matrix") ? k["matrix"] : json();
            if (!m.is_array() || m.size() != 2 || !m[0].is_array() || !m[1].is_array() || m[0].size() != 2 ||
                m[1].size() != 2)
                fail(where + "/kernel", "expected \"identity\" or {\"matrix\": [[k11, k12], [k21, k22]]}");
            ch.identity = false;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) ch.kernel.push_back(expression(m[i][j], where + "/kernel/matrix", vars));
        } else {
            only_keys(k, where + "/kernel", {"expression"});
            if (!k.contains("expression")) fail(where + "/kernel", "expected \"identity\" or {\"expression\": ...}");
            ch.identity = false;
            ch.kernel.push_back(expression(k["expression"], where + "/kernel/expression", vars));
        }
        const json w = v.value("weight", json(1.0));
        if (flux) {
            auto m = sym_matrix(w, where + "/weight");
            ch.weight.assign(m.begin(), m.end());
        } else {
            ch.weight.push_back(field(w, where + "/weight"));
        }
        return ch;
    }

    std::filesystem::path path(const json& v, const std::string& where) const {
        std::filesystem::path p = string(v, where);
        return p.is_absolute() ? p : base_ / p;
    }

    RunConfig read(const json& doc) const {
        only_keys(doc, "", {"mesh", "coefficients", "prior", "observation", "functional", "forward", "converge",
                            "montecarlo", "data", "seed", "threads", "output_dir"});
        RunConfig cfg;

        if (!doc.contains("mesh")) fail("", "missing 'mesh'");
        const json& m = doc["mesh"];
        only_keys(m, "/mesh", {"type", "n", "node", "ele", "refine"});
        const std::string type = string(m.value("type", json("unit_square")), "/mesh/type");
        if (type == "unit_square") {
            cfg.mesh.kind = MeshSpec::Kind::UnitSquare;
            if (!m.contains("n")) fail("/mesh", "missing 'n'");
            cfg.mesh.n = integer(m["n"], "/mesh/n", 1, 4096);
        } else if (type == "triangle") {
            cfg.mesh.kind = MeshSpec::Kind::Triangle;
            if (!m.contains("node") || !m.contains("ele")) fail("/mesh", "triangle meshes need 'node' and 'ele'");
            cfg.mesh.node = path(m["node"], "/mesh/node");
            cfg.mesh.ele = path(m["ele"], "/mesh/ele");
            for (const auto& p : {cfg.mesh.node, cfg.mesh.ele})
                if (!std::filesystem::exists(p)) throw IoError("mesh file not found: " + p.string());
        } else {
            fail("/mesh/type", "expected \"unit_square\" or \"triangle\"");
        }
        if (m.contains("refine")) cfg.mesh.refine = integer(m["refine"], "/mesh/refine", 0, 8);

        if (doc.contains("coefficients")) {
            const json& c = doc["coefficients"];
            only_keys(c, "/coefficients", {"A", "c", "check_mu"});
            if (c.contains("A")) cfg.A = sym_matrix(c["A"], "/coefficients/A");
            if (c.contains("c")) cfg.c = field(c["c"], "/coefficients/c");
            if (c.contains("check_mu")) {
                if (!c["check_mu"].is_boolean()) fail("/coefficients/check_mu", "expected a boolean");
                cfg.check_mu = c["check_mu"].get<bool>();
            }
        }

        if (doc.contains("prior")) {
            const json& p = doc["prior"];
            only_keys(p, "/prior", {"f0", "q", "epsilon1"});
            if (p.contains("f0")) cfg.f0 = field(p["f0"], "/prior/f0");
            if (p.contains("q")) cfg.q = field(p["q"], "/prior/q");
            if (p.contains("epsilon1")) cfg.epsilon1 = positive(p["epsilon1"], "/prior/epsilon1");
        }

        if (doc.contains("observation")) {
            const json& o = doc["observation"];
            only_keys(o, "/observation", {"epsilon2", "epsilon3", "flux_channels", "scalar_channels"});
            if (o.contains("epsilon2")) cfg.epsilon2 = positive(o["epsilon2"], "/observation/epsilon2");
            if (o.contains("epsilon3")) cfg.epsilon3 = positive(o["epsilon3"], "/observation/epsilon3");
            for (const char* key : {"flux_channels", "scalar_channels"}) {
                if (!o.contains(key)) continue;
                const std::string w = std::string("/observation/") + key;
                if (!o[key].is_array()) fail(w, "expected an array");
                const bool flux = std::string(key) == "flux_channels";
                for (std::size_t i = 0; i < o[key].size(); ++i) {
                    ChannelSpec ch = channel(o[key][i], w + "/" + std::to_string(i), flux);
                    (flux ? cfg.flux_channels : cfg.scalar_channels).push_back(std::move(ch));
                }
            }
        }

        if (doc.contains("functional")) {
            const json& f = doc["functional"];
            if (!f.is_object() || !f.contains("kind")) fail("/functional", "missing 'kind'");
            FunctionalConfig fc;
            const std::string kind = string(f["kind"], "/functional/kind");
            if (kind == "state") {
                only_keys(f, "/functional", {"kind", "l1", "l2"});
                fc.kind = FunctionalKind::State;
                if (f.contains("l1")) {
                    if (!f["l1"].is_array() || f["l1"].size() != 2) fail("/functional/l1", "expected [l1x, l1y]");
                    fc.l1 = {field(f["l1"][0], "/functional/l1/0"), field(f["l1"][1], "/functional/l1/1")};
                }
                if (f.contains("l2")) fc.l2 = field(f["l2"], "/functional/l2");
            } else if (kind == "rhs") {
                only_keys(f, "/functional", {"kind", "l0"});
                fc.kind = FunctionalKind::Rhs;
                if (f.contains("l0")) fc.l0 = field(f["l0"], "/functional/l0");
            } else {
                fail("/functional/kind", "expected \"state\" or \"rhs\"");
            }
            cfg.functional = std::move(fc);
        }

        if (doc.contains("forward")) {
            const json& f = doc["forward"];
            only_keys(f, "/forward", {"f", "exact"});
            if (f.contains("f")) cfg.forward_f = field(f["f"], "/forward/f");
            if (f.contains("exact")) {
                const json& e = f["exact"];
                only_keys(e, "/forward/exact", {"phi", "j"});
                if (e.contains("phi")) cfg.exact_phi = expression(e["phi"], "/forward/exact/phi");
                if (e.contains("j")) {
                    if (!e["j"].is_array() || e["j"].size() != 2) fail("/forward/exact/j", "expected [jx, jy]");
                    cfg.exact_j = std::array<Expression, 2>{expression(e["j"][0], "/forward/exact/j/0"),
                                                            expression(e["j"][1], "/forward/exact/j/1")};
                }
            }
        }

        if (doc.contains("converge")) {
            const json& c = doc["converge"];
            only_keys(c, "/converge", {"levels"});
            if (c.contains("levels")) cfg.converge_levels = integer(c["levels"], "/converge/levels", 2, 8);
        }

        if (doc.contains("montecarlo")) {
            const json& mc = doc["montecarlo"];
            only_keys(mc, "/montecarlo", {"policies", "trials", "tau", "prior_radius"});
            if (mc.contains("policies")) {
                const json& p = mc["policies"];
                if (!p.is_array() || p.empty()) fail("/montecarlo/policies", "expected a non-empty array");
                cfg.mc_policies.clear();
                for (const auto& item : p) {
                    const std::string s = string(item, "/montecarlo/policies");
                    if (s == "worst_case") cfg.mc_policies.push_back(McPolicy::WorstCase);
                    else if (s == "admissible_random") cfg.mc_policies.push_back(McPolicy::AdmissibleRandom);
                    else fail("/montecarlo/policies", "expected \"worst_case\" or \"admissible_random\"");
                }
            }
            if (mc.contains("trials")) cfg.mc_trials = integer(mc["trials"], "/montecarlo/trials", 100, 100000000);
            if (mc.contains("tau")) cfg.mc_tau = positive(mc["tau"], "/montecarlo/tau");
            if (mc.contains("prior_radius")) {
                cfg.mc_prior_radius = number(mc["prior_radius"], "/montecarlo/prior_radius");
                if (cfg.mc_prior_radius < 0.0 || cfg.mc_prior_radius > 1.0)
                    fail("/montecarlo/prior_radius", "must lie in [0, 1]");
            }
        }

        if (doc.contains("data")) {
            const json& d = doc["data"];
            only_keys(d, "/data", {"source", "f", "noise", "tau", "path"});
            const std::string src = string(d.value("source", json("synthetic")), "/data/source");
            if (src == "synthetic") {
                if (d.contains("path")) fail("/data", "'path' is only valid with source \"file\"");
                if (d.contains("f")) cfg.data.truth_f = field(d["f"], "/data/f");
                const std::string noise = string(d.value("noise", json("none")), "/data/noise");
                if (noise == "none") cfg.data.noise = DataConfig::Noise::None;
                else if (noise == "white") cfg.data.noise = DataConfig::Noise::White;
                else fail("/data/noise", "expected \"none\" or \"white\"");
                if (d.contains("tau")) cfg.data.tau = positive(d["tau"], "/data/tau");
            } else if (src == "file") {
                for (const char* k : {"f", "noise", "tau"})
                    if (d.contains(k)) fail("/data", std::string("'") + k + "' is only valid with source \"synthetic\"");
                cfg.data.source = DataConfig::Source::File;
                if (!d.contains("path")) fail("/data", "missing 'path'");
                cfg.data.file = path(d["path"], "/data/path");
                if (!std::filesystem::exists(cfg.data.file))
                    throw IoError("data file not found: " + cfg.data.file.string());
            } else {
                fail("/data/source", "expected \"synthetic\" or \"file\"");
            }
        }

        if (doc.contains("seed")) {
            if (!doc["seed"].is_number_unsigned()) fail("/seed", "expected a non-negative integer");
            cfg.seed = doc["seed"].get<std::uint64_t>();
        }
        if (doc.contains("threads")) cfg.threads = integer(doc["threads"], "/threads", 1, 1024);
        if (doc.contains("output_dir")) cfg.output_dir = path(doc["output_dir"], "/output_dir");
        return cfg;
    }

private:
    std::filesystem::path base_;
};

} // namespace

RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return Reader(base_dir).read(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

} // namespace hdivmm
