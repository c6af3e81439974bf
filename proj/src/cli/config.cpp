#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "kmp/cli.hpp"
#include "kmp/replicas.hpp"

namespace kmp {

ConfigError::ConfigError(std::string field, const std::string& message, int line)
    : std::runtime_error(field + ": " + message + (line >= 0 ? " (line " + std::to_string(line + 1) + ")" : "")),
      field_(std::move(field)),
      line_(line) {}

namespace {

int line_of(const YAML::Node& n) { return n.IsDefined() ? n.Mark().line : -1; }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

template <class T>
T as(const YAML::Node& n, const std::string& path) {
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(path, "has the wrong type", line_of(n));
    }
}

template <class T>
T required(const YAML::Node& map, const std::string& key, const std::string& path) {
    auto n = map[key];
    if (!n) throw ConfigError(join(path, key), "is required", line_of(map));
    return as<T>(n, join(path, key));
}

template <class T>
T optional_or(const YAML::Node& map, const std::string& key, const std::string& path, T fallback) {
    auto n = map[key];
    return n ? as<T>(n, join(path, key)) : fallback;
}

void allow_keys(const YAML::Node& map, const std::string& path, std::initializer_list<const char*> keys) {
    if (!map.IsMap()) throw ConfigError(path, "must be a mapping", line_of(map));
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key)) throw ConfigError(join(path, key), "is not a known key", line_of(kv.first));
    }
}

double positive(double v, const YAML::Node& n, const std::string& path) {
    if (!(v > 0.0)) throw ConfigError(path, "must be positive", line_of(n));
    return v;
}

int omega_value(const YAML::Node& map, const std::string& key, const std::string& path) {
    const int w = required<int>(map, key, path);
    if (w < 1) throw ConfigError(join(path, key), "must be an integer >= 1", line_of(map[key]));
    return w;
}

double rate_value(const YAML::Node& map, const std::string& key, const std::string& path) {
    return positive(required<double>(map, key, path), map[key], join(path, key));
}

// A number is a constant field; otherwise {type, ...} with the built-in shapes.
ScalarField field(const YAML::Node& n, const std::string& path, const Box& box) {
    if (!n) throw ConfigError(path, "is required");
    if (n.IsScalar()) return ScalarField::constant(as<double>(n, path));
    allow_keys(n, path, {"type", "value", "c0", "grad", "amplitude"});
    const auto type = required<std::string>(n, "type", path);
    if (type == "constant") return ScalarField::constant(required<double>(n, "value", path));
    const double c0 = required<double>(n, "c0", path);
    const auto grad = optional_or<std::vector<double>>(n, "grad", path, {});
    if (type == "affine") return ScalarField::affine(c0, grad);
    if (type == "exponential") return ScalarField::exponential(c0, grad);
    if (type == "affine_bump") return ScalarField::affine_bump(c0, grad, required<double>(n, "amplitude", path), box);
    throw ConfigError(join(path, "type"), "unknown field type '" + type + "'", line_of(n["type"]));
}

// Nonnegative and positive checks at the box corners and centre; the
// built-in fields are monotone or bounded by their affine part there.
void check_field_sign(const ScalarField& f, const Box& box, const std::string& path, const YAML::Node& n,
                      bool strictly) {
    const int d = box.dim();
    std::vector<double> x(d);
    for (int corner = 0; corner <= (1 << d); ++corner) {
        for (int a = 0; a < d; ++a)
            x[a] = corner == (1 << d) ? 0.5 * (box.lo[a] + box.hi[a]) : ((corner >> a) & 1 ? box.hi[a] : box.lo[a]);
        const double v = f(x);
        if (strictly ? !(v > 0.0) : !(v >= 0.0))
            throw ConfigError(path, strictly ? "must be positive on the domain" : "must be nonnegative on the domain",
                              line_of(n));
    }
}

std::vector<double> probe_point(const YAML::Node& n, const std::string& path, int dim) {
    std::vector<double> x = n.IsScalar() ? std::vector<double>{as<double>(n, path)} : as<std::vector<double>>(n, path);
    if (static_cast<int>(x.size()) != dim) throw ConfigError(path, "needs " + std::to_string(dim) + " coordinates", line_of(n));
    return x;
}

void parse_environment(RunConfig& c, const YAML::Node& root) {
    const std::string dpath = "domain";
    auto dom = root["domain"];
    if (!dom) throw ConfigError(dpath, "is required");
    allow_keys(dom, dpath, {"dim", "L", "box"});
    c.dim = optional_or<int>(dom, "dim", dpath, 1);
    if (c.dim < 1 || c.dim > 3) throw ConfigError("domain.dim", "must be 1, 2 or 3", line_of(dom["dim"]));
    c.L = required<int>(dom, "L", dpath);
    if (c.L < 2) throw ConfigError("domain.L", "must be at least 2", line_of(dom["L"]));
    auto box = dom["box"];
    if (!box || (box.IsScalar() && box.as<std::string>() == "default")) {
        c.box = c.dim == 1 ? Box::unit_interval() : Box::symmetric(c.dim);
    } else if (box.IsScalar()) {
        const auto name = box.as<std::string>();
        if (name == "unit") c.box = Box{std::vector<double>(c.dim, 0.0), std::vector<double>(c.dim, 1.0)};
        else if (name == "symmetric") c.box = Box::symmetric(c.dim);
        else throw ConfigError("domain.box", "unknown box '" + name + "'", line_of(box));
    } else {
        allow_keys(box, "domain.box", {"lo", "hi"});
        c.box = Box{required<std::vector<double>>(box, "lo", "domain.box"), required<std::vector<double>>(box, "hi", "domain.box")};
        if (c.box.dim() != c.dim || static_cast<int>(c.box.hi.size()) != c.dim)
            throw ConfigError("domain.box", "lo and hi need one entry per dimension", line_of(box));
        for (int a = 0; a < c.dim; ++a)
            if (!(c.box.lo[a] < c.box.hi[a])) throw ConfigError("domain.box", "lo must be below hi", line_of(box));
    }

    const std::string spath = "scenario";
    auto s = root["scenario"];
    if (!s) throw ConfigError(spath, "is required");
    if (!s.IsMap()) throw ConfigError(spath, "must be a mapping", line_of(s));
    c.environment_kind = required<std::string>(s, "kind", spath);
    const auto& k = c.environment_kind;
    auto temperature = [&] {
        auto f = field(s["temperature"], "scenario.temperature", c.box);
        check_field_sign(f, c.box, "scenario.temperature", s["temperature"], false);
        return f;
    };
    auto one_dim = [&] {
        if (c.dim != 1) throw ConfigError("scenario.kind", "'" + k + "' needs domain.dim = 1", line_of(s["kind"]));
    };
    if (k == "constant") {
        allow_keys(s, spath, {"kind", "omega", "rate", "temperature"});
        c.scenario = scenario::Constant{omega_value(s, "omega", spath), rate_value(s, "rate", spath), temperature()};
    } else if (k == "smooth_rate") {
        allow_keys(s, spath, {"kind", "rate_field", "omega", "temperature"});
        auto R = field(s["rate_field"], "scenario.rate_field", c.box);
        check_field_sign(R, c.box, "scenario.rate_field", s["rate_field"], true);
        c.scenario = scenario::SmoothRate{R, omega_value(s, "omega", spath), temperature()};
    } else if (k == "halfspace_omega") {
        allow_keys(s, spath, {"kind", "omega_neg", "omega_pos", "rate", "temperature"});
        c.scenario = scenario::HalfspaceOmega{omega_value(s, "omega_neg", spath), omega_value(s, "omega_pos", spath),
                                              rate_value(s, "rate", spath), temperature()};
    } else if (k == "halfspace_rate") {
        allow_keys(s, spath, {"kind", "rate_neg", "rate_pos", "omega", "temperature"});
        c.scenario = scenario::HalfspaceRate{rate_value(s, "rate_neg", spath), rate_value(s, "rate_pos", spath),
                                             omega_value(s, "omega", spath), temperature()};
    } else if (k == "random_omega") {
        one_dim();
        allow_keys(s, spath, {"kind", "kappa", "rate", "temperature"});
        auto kap = s["kappa"];
        if (!kap) throw ConfigError("scenario.kappa", "is required", line_of(s));
        allow_keys(kap, "scenario.kappa", {"at0", "at1"});
        try {
            SimplexField kappa(required<std::vector<double>>(kap, "at0", "scenario.kappa"),
                               required<std::vector<double>>(kap, "at1", "scenario.kappa"));
            c.scenario = scenario::RandomOmega{kappa, rate_value(s, "rate", spath), temperature()};
        } catch (const ConstructionError& e) {
            throw ConfigError("scenario.kappa", e.what(), line_of(kap));
        }
    } else if (k == "macroscopic_rate") {
        one_dim();
        allow_keys(s, spath, {"kind", "rho", "omega", "temperature"});
        auto rho = field(s["rho"], "scenario.rho", c.box);
        check_field_sign(rho, c.box, "scenario.rho", s["rho"], true);
        c.scenario = scenario::MacroscopicRate{rho, omega_value(s, "omega", spath), temperature()};
    } else if (k == "chain") {
        one_dim();
        allow_keys(s, spath, {"kind", "omega", "rates", "T0", "T1"});
        c.chain_omega = required<std::vector<int>>(s, "omega", spath);
        c.chain_rates = required<std::vector<double>>(s, "rates", spath);
        if (static_cast<int>(c.chain_omega.size()) != c.L - 1)
            throw ConfigError("scenario.omega", "needs L-1 entries", line_of(s["omega"]));
        if (static_cast<int>(c.chain_rates.size()) != c.L)
            throw ConfigError("scenario.rates", "needs L entries", line_of(s["rates"]));
        for (int w : c.chain_omega)
            if (w < 1) throw ConfigError("scenario.omega", "entries must be >= 1", line_of(s["omega"]));
        for (double r : c.chain_rates)
            if (!(r > 0)) throw ConfigError("scenario.rates", "entries must be positive", line_of(s["rates"]));
    } else if (k == "iid_chain") {
        one_dim();
        allow_keys(s, spath, {"kind", "omega_choices", "rate_lo", "rate_hi", "T0", "T1"});
        c.omega_choices = required<std::vector<int>>(s, "omega_choices", spath);
        if (c.omega_choices.empty()) throw ConfigError("scenario.omega_choices", "must not be empty", line_of(s["omega_choices"]));
        for (int w : c.omega_choices)
            if (w < 1) throw ConfigError("scenario.omega_choices", "entries must be >= 1", line_of(s["omega_choices"]));
        c.rate_lo = rate_value(s, "rate_lo", spath);
        c.rate_hi = rate_value(s, "rate_hi", spath);
        if (c.rate_hi < c.rate_lo) throw ConfigError("scenario.rate_hi", "must not be below rate_lo", line_of(s["rate_hi"]));
    } else {
        throw ConfigError("scenario.kind", "unknown kind '" + k + "'", line_of(s["kind"]));
    }
    if (k == "chain" || k == "iid_chain") {
        c.T0 = required<double>(s, "T0", spath);
        c.T1 = required<double>(s, "T1", spath);
        if (c.T0 < 0) throw ConfigError("scenario.T0", "must be nonnegative", line_of(s["T0"]));
        if (c.T1 < 0) throw ConfigError("scenario.T1", "must be nonnegative", line_of(s["T1"]));
    }
}

void parse_pipelines(RunConfig& c, const YAML::Node& root) {
    auto p = root["pipelines"];
    if (!p) throw ConfigError("pipelines", "is required");
    allow_keys(p, "pipelines", {"duality", "steady_state", "hydro", "absorption", "drift_signs", "equilibrium"});
    if (p.size() == 0) throw ConfigError("pipelines", "must enable at least one pipeline", line_of(p));
    auto need_1d = [&](const char* name) {
        if (c.dim != 1) throw ConfigError(std::string("pipelines.") + name, "needs a one-dimensional chain", line_of(p[name]));
    };
    auto section = [&](const char* name) {
        auto n = p[name];
        // `name: {}` and `name: true` both enable a pipeline with defaults
        if (n.IsNull() || (n.IsScalar() && n.as<std::string>() == "true")) return YAML::Node(YAML::NodeType::Map);
        return n;
    };

    if (p["duality"]) {
        const std::string path = "pipelines.duality";
        auto d = section("duality");
        allow_keys(d, path, {"times", "particles", "initial", "xi0", "sigmas"});
        RunConfig::Duality du;
        du.times = required<std::vector<double>>(d, "times", path);
        for (double t : du.times)
            if (!(t >= 0)) throw ConfigError(path + ".times", "must be nonnegative", line_of(d["times"]));
        auto sets = d["particles"];
        if (!sets || !sets.IsSequence() || sets.size() == 0)
            throw ConfigError(path + ".particles", "must list at least one particle set", line_of(d));
        for (std::size_t i = 0; i < sets.size(); ++i) {
            const std::string sp = path + ".particles[" + std::to_string(i) + "]";
            if (!sets[i].IsSequence() || sets[i].size() == 0) throw ConfigError(sp, "must be a nonempty list of sites", line_of(sets[i]));
            std::vector<std::vector<int>> set;
            for (const auto& site : sets[i]) {
                auto coord = site.IsScalar() ? std::vector<int>{as<int>(site, sp)} : as<std::vector<int>>(site, sp);
                if (static_cast<int>(coord.size()) != c.dim) throw ConfigError(sp, "site needs dim coordinates", line_of(site));
                set.push_back(coord);
            }
            du.particle_sets.push_back(set);
        }
        if (d["xi0"]) du.xi0 = required<std::vector<double>>(d, "xi0", path);
        else du.initial = field(d["initial"] ? d["initial"] : YAML::Node(1.0), path + ".initial", c.box);
        du.sigmas = optional_or<double>(d, "sigmas", path, 3.0);
        c.duality = du;
    }
    if (p["steady_state"]) {
        const std::string path = "pipelines.steady_state";
        need_1d("steady_state");
        auto s = section("steady_state");
        allow_keys(s, path, {"burn_in_factor", "window_factor", "snapshot_spacing_factor", "average_spacing", "probes",
                             "initial", "mean_tolerance", "sigmas", "moment_gates"});
        SteadyStateParams sp;
        sp.plan.burn_in_factor = optional_or<double>(s, "burn_in_factor", path, 10.0);
        if (sp.plan.burn_in_factor < 0) throw ConfigError(path + ".burn_in_factor", "must be nonnegative", line_of(s["burn_in_factor"]));
        sp.plan.window_factor = positive(optional_or<double>(s, "window_factor", path, 40.0), s["window_factor"], path + ".window_factor");
        sp.plan.snapshot_spacing_factor = positive(optional_or<double>(s, "snapshot_spacing_factor", path, 1.0),
                                                   s["snapshot_spacing_factor"], path + ".snapshot_spacing_factor");
        sp.plan.average_spacing = positive(optional_or<double>(s, "average_spacing", path, 1.0), s["average_spacing"],
                                           path + ".average_spacing");
        sp.probes = optional_or<std::vector<double>>(s, "probes", path, {0.25, 0.5, 0.75});
        for (double x : sp.probes)
            if (!(x > 0 && x < 1)) throw ConfigError(path + ".probes", "points must lie in (0,1)", line_of(s["probes"]));
        if (s["initial"]) sp.initial = field(s["initial"], path + ".initial", c.box);
        sp.mean_tolerance = positive(optional_or<double>(s, "mean_tolerance", path, 0.02), s["mean_tolerance"], path + ".mean_tolerance");
        sp.sigmas = positive(optional_or<double>(s, "sigmas", path, 3.0), s["sigmas"], path + ".sigmas");
        sp.moment_gates = optional_or<bool>(s, "moment_gates", path, true);
        c.steady_state = sp;
    }
    if (p["hydro"]) {
        const std::string path = "pipelines.hydro";
        auto h = section("hydro");
        allow_keys(h, path, {"t", "probes", "initial", "h", "tolerance"});
        RunConfig::Hydro hy;
        hy.t = positive(required<double>(h, "t", path), h["t"], path + ".t");
        auto probes = h["probes"];
        if (!probes || !probes.IsSequence() || probes.size() == 0)
            throw ConfigError(path + ".probes", "must list at least one point", line_of(h));
        for (std::size_t i = 0; i < probes.size(); ++i)
            hy.probes.push_back(probe_point(probes[i], path + ".probes[" + std::to_string(i) + "]", c.dim));
        hy.initial = field(h["initial"] ? h["initial"] : YAML::Node(1.0), path + ".initial", c.box);
        hy.h = positive(optional_or<double>(h, "h", path, 1.0 / 64), h["h"], path + ".h");
        hy.tolerance = positive(optional_or<double>(h, "tolerance", path, 0.05), h["tolerance"], path + ".tolerance");
        if (!c.scenario) throw ConfigError(path, "needs one of the built-in scenario kinds", line_of(p["hydro"]));
        c.hydro = hy;
    }
    if (p["absorption"]) {
        const std::string path = "pipelines.absorption";
        need_1d("absorption");
        auto a = section("absorption");
        allow_keys(a, path, {"points", "convention", "ratio_tolerance", "pair", "pair_tolerance"});
        AbsorptionParams ap;
        ap.points = optional_or<std::vector<double>>(a, "points", path, ap.points);
        for (double x : ap.points)
            if (!(x > 0 && x < 1)) throw ConfigError(path + ".points", "points must lie in (0,1)", line_of(a["points"]));
        const auto conv = optional_or<std::string>(a, "convention", path, "literal");
        if (conv == "literal") ap.convention = BoundaryConvention::literal;
        else if (conv == "martingale") ap.convention = BoundaryConvention::martingale;
        else throw ConfigError(path + ".convention", "must be literal or martingale", line_of(a["convention"]));
        ap.ratio_tolerance = positive(optional_or<double>(a, "ratio_tolerance", path, 0.02), a["ratio_tolerance"], path + ".ratio_tolerance");
        ap.pair = optional_or<bool>(a, "pair", path, true);
        ap.pair_tolerance = positive(optional_or<double>(a, "pair_tolerance", path, 0.05), a["pair_tolerance"], path + ".pair_tolerance");
        c.absorption = ap;
    }
    if (auto n = p["drift_signs"]) {
        need_1d("drift_signs");
        if (c.L < 5) throw ConfigError("pipelines.drift_signs", "needs L >= 5", line_of(n));
        c.drift_signs = !(n.IsScalar() && n.as<std::string>() == "false");
    }
    if (p["equilibrium"]) {
        const std::string path = "pipelines.equilibrium";
        auto e = section("equilibrium");
        allow_keys(e, path, {"checkpoints", "max_order", "sigmas"});
        EquilibriumParams ep;
        ep.plan.checkpoints = required<std::vector<double>>(e, "checkpoints", path);
        for (double t : ep.plan.checkpoints)
            if (!(t >= 0)) throw ConfigError(path + ".checkpoints", "must be nonnegative", line_of(e["checkpoints"]));
        ep.plan.max_order = optional_or<int>(e, "max_order", path, 3);
        if (ep.plan.max_order < 1 || ep.plan.max_order > 4)
            throw ConfigError(path + ".max_order", "must be between 1 and 4", line_of(e["max_order"]));
        ep.sigmas = positive(optional_or<double>(e, "sigmas", path, 3.0), e["sigmas"], path + ".sigmas");
        c.equilibrium = ep;
    }
}

}  // namespace

RunConfig parse_config(const std::string& text, const Overrides& overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("<document>", e.msg, e.mark.line);
    }
    if (!root.IsMap()) throw ConfigError("<document>", "must be a mapping");
    allow_keys(root, "", {"schema_version", "seed", "workers", "replicas", "output_dir", "domain", "scenario", "pipelines"});
    if (!root["schema_version"]) throw ConfigError("schema_version", "is required");
    const int version = as<int>(root["schema_version"], "schema_version");
    if (version != kSchemaVersion)
        throw ConfigError("schema_version", "unsupported version " + std::to_string(version), line_of(root["schema_version"]));

    if (overrides.seed) root["seed"] = *overrides.seed;
    if (overrides.output_dir) root["output_dir"] = *overrides.output_dir;

    RunConfig c;
    c.seed = optional_or<std::uint64_t>(root, "seed", "", 1);
    const long workers = overrides.workers ? static_cast<long>(*overrides.workers) : optional_or<long>(root, "workers", "", 0);
    if (workers < 0) throw ConfigError("workers", "must be nonnegative", line_of(root["workers"]));
    c.workers = workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<unsigned>(workers);
    const long replicas = optional_or<long>(root, "replicas", "", 1000);
    if (replicas < 2) throw ConfigError("replicas", "must be at least 2", line_of(root["replicas"]));
    c.replicas = static_cast<std::size_t>(replicas);
    c.output_dir = optional_or<std::string>(root, "output_dir", "", "out");
    // neither the worker count nor the output location changes results, so
    // both stay out of the canonical tree and its hash
    root.remove("workers");
    root.remove("output_dir");

    parse_environment(c, root);
    parse_pipelines(c, root);
    c.tree = root;
    return c;
}

RunConfig load_config(const std::string& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string canonical_config(const RunConfig& config) {
    YAML::Emitter out;
    out << config.tree;
    return std::string(out.c_str()) + "\n";
}

std::string config_hash(const RunConfig& config) {
    const auto text = canonical_config(config);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("config_hash: digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) {
        s += hex[digest[i] >> 4];
        s += hex[digest[i] & 15];
    }
    return s;
}

Environment build_environment(const RunConfig& config) {
    RngStream rng(config.seed, stream_id(StreamPurpose::environment, 0));
    if (config.environment_kind == "chain") return make_chain(config.chain_omega, config.chain_rates, config.T0, config.T1);
    if (config.environment_kind == "iid_chain")
        return make_iid_chain(config.L, config.omega_choices, config.rate_lo, config.rate_hi, config.T0, config.T1, rng);
    return build_scenario(*config.scenario, LatticeDomain(config.L, config.box), rng);
}

std::string scenario_catalog_text() {
    std::ostringstream os;
    for (const auto& e : scenario_catalog()) {
        os << e.kind << "\n"
           << "  regime: " << e.regime << "\n"
           << "  parameters: " << e.parameters << "\n";
    }
    os << "fields: a number (constant) or {type: constant|affine|exponential|affine_bump, value|c0, grad, amplitude}\n";
    return os.str();
}

}  // namespace kmp
