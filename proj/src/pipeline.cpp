#include "geodot/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace geodot {

using nlohmann::json;

const char* run_mode_name(RunMode m) {
    return m == RunMode::Geodesic ? "geodesic" : "transport";
}

const char* cost_selection_name(CostSelection c) {
    switch (c) {
        case CostSelection::Length: return "length";
        case CostSelection::Energy: return "energy";
        default: return "both";
    }
}

const char* ot_method_name(OTMethod m) {
    return m == OTMethod::Assignment ? "assignment" : "sinkhorn";
}

std::shared_ptr<const KernelExpr> ProblemSpec::parse_kernel() const {
    if (kernel_expr.empty()) throw ConfigError("config field 'kernel.expr': missing");
    if (dim < 1) throw ConfigError("config field 'kernel.dim': must be a positive integer");
    return std::make_shared<const KernelExpr>(KernelExpr::parse(kernel_expr, dim));
}

DiscreteMeasure MeasureSpec::realize() const {
    DiscreteMeasure m;
    if (is_box) {
        const int n = static_cast<int>(box_lo.size());
        if (box_hi.size() != n || static_cast<int>(box_counts.size()) != n)
            throw ConfigError("box specification has inconsistent dimensions");
        long total = 1;
        for (int c : box_counts) {
            if (c < 1) throw ConfigError("box counts must be positive");
            total *= c;
        }
        m.points.reserve(static_cast<std::size_t>(total));
        // Row-major over axes: the first axis varies slowest.
        for (long flat = 0; flat < total; ++flat) {
            Eigen::VectorXd p(n);
            long rem = flat;
            for (int d = n - 1; d >= 0; --d) {
                int i = static_cast<int>(rem % box_counts[d]);
                rem /= box_counts[d];
                p[d] = box_counts[d] == 1
                           ? box_lo[d]
                           : box_lo[d] + (box_hi[d] - box_lo[d]) * i / (box_counts[d] - 1);
            }
            m.points.push_back(std::move(p));
        }
        m.weights = Eigen::VectorXd::Constant(total, 1.0 / total);
    } else {
        m.points = points;
        if (weights.size() == 0)
            m.weights =
                Eigen::VectorXd::Constant(static_cast<int>(points.size()),
                                          points.empty() ? 1.0 : 1.0 / points.size());
        else
            m.weights = weights;
    }
    m.validate();
    return m;
}

// ----------------------------------------------------------------------
// Configuration ingestion
// ----------------------------------------------------------------------
namespace {

[[noreturn]] void cfg_fail(const std::string& path, const std::string& msg) {
    throw ConfigError("config field '" + path + "': " + msg);
}

const json& need(const json& j, const std::string& parent, const char* key) {
    if (!j.is_object() || !j.contains(key))
        cfg_fail(parent.empty() ? key : parent + "." + key, "missing");
    return j.at(key);
}

std::string need_string(const json& j, const std::string& path) {
    if (!j.is_string()) cfg_fail(path, "expected a string");
    return j.get<std::string>();
}

double need_number(const json& j, const std::string& path) {
    if (!j.is_number()) cfg_fail(path, "expected a number");
    return j.get<double>();
}

int need_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) cfg_fail(path, "expected an integer");
    return j.get<int>();
}

Eigen::VectorXd need_point(const json& j, const std::string& path, int dim) {
    if (!j.is_array()) cfg_fail(path, "expected an array of numbers");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<int>(i)] = need_number(j.at(i), path + "[" + std::to_string(i) + "]");
    if (dim >= 0 && v.size() != dim)
        cfg_fail(path, "expected " + std::to_string(dim) + " coordinates");
    return v;
}

MeasureSpec parse_measure(const json& j, const std::string& path, int dim) {
    MeasureSpec m;
    if (!j.is_object()) cfg_fail(path, "expected an object with 'points' or 'box'");
    if (j.contains("box")) {
        const json& b = j.at("box");
        m.is_box = true;
        m.box_lo = need_point(need(b, path + ".box", "lo"), path + ".box.lo", dim);
        m.box_hi = need_point(need(b, path + ".box", "hi"), path + ".box.hi", dim);
        const json& counts = need(b, path + ".box", "counts");
        if (!counts.is_array() || static_cast<int>(counts.size()) != dim)
            cfg_fail(path + ".box.counts", "expected " + std::to_string(dim) + " integers");
        for (std::size_t i = 0; i < counts.size(); ++i)
            m.box_counts.push_back(
                need_int(counts.at(i), path + ".box.counts[" + std::to_string(i) + "]"));
    } else if (j.contains("points")) {
        const json& pts = j.at("points");
        if (!pts.is_array() || pts.empty()) cfg_fail(path + ".points", "expected a nonempty array");
        for (std::size_t i = 0; i < pts.size(); ++i)
            m.points.push_back(
                need_point(pts.at(i), path + ".points[" + std::to_string(i) + "]", dim));
        if (j.contains("weights")) {
            m.weights = need_point(j.at("weights"), path + ".weights",
                                   static_cast<int>(m.points.size()));
        }
    } else {
        cfg_fail(path, "expected an object with 'points' or 'box'");
    }
    return m;
}

} // namespace

ProblemSpec load_problem_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");

    ProblemSpec s;
    std::string mode = need_string(need(j, "", "mode"), "mode");
    if (mode == "geodesic")
        s.mode = RunMode::Geodesic;
    else if (mode == "transport")
        s.mode = RunMode::Transport;
    else
        cfg_fail("mode", "expected 'geodesic' or 'transport'");

    const json& jk = need(j, "", "kernel");
    s.kernel_expr = need_string(need(jk, "kernel", "expr"), "kernel.expr");
    s.dim = need_int(need(jk, "kernel", "dim"), "kernel.dim");
    if (s.dim < 1) cfg_fail("kernel.dim", "must be a positive integer");

    if (j.contains("cost")) {
        std::string c = need_string(j.at("cost"), "cost");
        if (c == "length")
            s.cost = CostSelection::Length;
        else if (c == "energy")
            s.cost = CostSelection::Energy;
        else if (c == "both")
            s.cost = CostSelection::Both;
        else
            cfg_fail("cost", "expected 'length', 'energy' or 'both'");
    }

    if (s.mode == RunMode::Geodesic) {
        const json& g = need(j, "", "geodesic");
        s.a = need_point(need(g, "geodesic", "a"), "geodesic.a", s.dim);
        s.b = need_point(need(g, "geodesic", "b"), "geodesic.b", s.dim);
        s.homotopy_steps = 21;
    } else {
        const json& t = need(j, "", "transport");
        s.source = parse_measure(need(t, "transport", "source"), "transport.source", s.dim);
        s.target = parse_measure(need(t, "transport", "target"), "transport.target", s.dim);
        s.homotopy_steps = 5;
    }

    if (j.contains("solver")) {
        const json& sv = j.at("solver");
        if (!sv.is_object()) cfg_fail("solver", "expected an object");
        if (sv.contains("tol")) s.tol = need_number(sv.at("tol"), "solver.tol");
        if (sv.contains("mesh_n")) s.mesh_n = need_int(sv.at("mesh_n"), "solver.mesh_n");
        if (sv.contains("homotopy_steps"))
            s.homotopy_steps = need_int(sv.at("homotopy_steps"), "solver.homotopy_steps");
        if (sv.contains("homotopy_steps_max"))
            s.homotopy_steps_max =
                need_int(sv.at("homotopy_steps_max"), "solver.homotopy_steps_max");
        if (sv.contains("max_newton_iter"))
            s.max_newton_iter = need_int(sv.at("max_newton_iter"), "solver.max_newton_iter");
        if (!(s.tol > 0.0)) cfg_fail("solver.tol", "must be positive");
        if (s.mesh_n < 2) cfg_fail("solver.mesh_n", "must be at least 2");
        if (s.homotopy_steps < 2) cfg_fail("solver.homotopy_steps", "must be at least 2");
        if (s.homotopy_steps > s.homotopy_steps_max)
            cfg_fail("solver.homotopy_steps", "exceeds solver.homotopy_steps_max");
    }

    if (j.contains("ot")) {
        const json& ot = j.at("ot");
        if (!ot.is_object()) cfg_fail("ot", "expected an object");
        if (ot.contains("method")) {
            std::string m = need_string(ot.at("method"), "ot.method");
            if (m == "assignment")
                s.method = OTMethod::Assignment;
            else if (m == "sinkhorn")
                s.method = OTMethod::Sinkhorn;
            else
                cfg_fail("ot.method", "expected 'assignment' or 'sinkhorn'");
        }
        if (ot.contains("epsilon")) s.epsilon = need_number(ot.at("epsilon"), "ot.epsilon");
        if (ot.contains("tol")) s.ot_tol = need_number(ot.at("tol"), "ot.tol");
        if (ot.contains("max_iter")) s.ot_max_iter = need_int(ot.at("max_iter"), "ot.max_iter");
    }
    if (s.mode == RunMode::Transport && s.method == OTMethod::Sinkhorn && !(s.epsilon > 0.0))
        cfg_fail("ot.epsilon", "a positive value is required for the sinkhorn method");

    if (j.contains("output")) {
        const json& o = j.at("output");
        if (!o.is_object()) cfg_fail("output", "expected an object");
        if (o.contains("dir")) s.out_dir = need_string(o.at("dir"), "output.dir");
        if (o.contains("format")) s.format = need_string(o.at("format"), "output.format");
        if (s.format != "csv" && s.format != "structured-text")
            cfg_fail("output.format", "expected 'csv' or 'structured-text'");
    }
    if (j.contains("jobs")) {
        s.jobs = need_int(j.at("jobs"), "jobs");
        if (s.jobs < 1) cfg_fail("jobs", "must be at least 1");
    }
    if (j.contains("cache_dir")) s.cache_dir = need_string(j.at("cache_dir"), "cache_dir");

    s.parse_kernel(); // forward kernel parse errors at load time
    if (s.mode == RunMode::Geodesic && (s.a - s.b).norm() == 0.0)
        cfg_fail("geodesic.b", "endpoints must differ");
    return s;
}

ProblemSpec load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return load_problem_text(os.str());
}

// ----------------------------------------------------------------------
// Preset catalog
// ----------------------------------------------------------------------
namespace {

Eigen::VectorXd pt(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

MeasureSpec box_spec(std::initializer_list<double> lo, std::initializer_list<double> hi,
                     std::initializer_list<int> counts) {
    MeasureSpec m;
    m.is_box = true;
    m.box_lo = pt(lo);
    m.box_hi = pt(hi);
    m.box_counts.assign(counts.begin(), counts.end());
    return m;
}

} // namespace

std::vector<std::string> preset_names() {
    return {"E1", "E2", "E3", "E4", "E5", "E6", "E7"};
}

ProblemSpec preset(const std::string& name) {
    ProblemSpec s;
    s.name = name;
    if (name == "E1") {
        s.mode = RunMode::Geodesic;
        s.kernel_expr = "1/(0.5+norm(x))";
        s.dim = 2;
        s.a = pt({-2, 1});
        s.b = pt({2, 0});
    } else if (name == "E2") {
        s.mode = RunMode::Geodesic;
        s.kernel_expr = "sin(x1)-sin(x2)+3";
        s.dim = 2;
        s.a = pt({-7, -7});
        s.b = pt({7, 7});
    } else if (name == "E3") {
        s.mode = RunMode::Geodesic;
        s.kernel_expr = "norm(x)+0.1";
        s.dim = 3;
        s.a = pt({0.8, 0.8, -0.8});
        s.b = pt({0.8, 0.8, 0.8});
    } else if (name == "E4") {
        s.mode = RunMode::Transport;
        s.kernel_expr = "1/(0.5+norm(x))";
        s.dim = 2;
        s.source = box_spec({-3, -1}, {-2, 0}, {3, 3});
        // The source box is [-3,-2] x [-1,0]; the target is
        // [9/4,13/4] x [1/4,5/4].
        s.target = box_spec({2.25, 0.25}, {3.25, 1.25}, {3, 3});
        s.homotopy_steps = 5;
        s.method = OTMethod::Assignment;
        s.epsilon = 1.0 / 200.0;
    } else if (name == "E5") {
        s.mode = RunMode::Transport;
        s.kernel_expr = "sin(x1)-sin(x2)+3";
        s.dim = 2;
        s.source = box_spec({-5, -4}, {-4, -3}, {3, 3});
        s.target = box_spec({3, 2.75}, {4, 3.75}, {3, 3});
        s.homotopy_steps = 5;
        s.method = OTMethod::Assignment;
        s.epsilon = 0.75;
    } else if (name == "E6") {
        s.mode = RunMode::Transport;
        s.kernel_expr = "norm(x)+0.1";
        s.dim = 3;
        s.source = box_spec({-0.9, 0.6, -0.9}, {-0.6, 0.9, -0.6}, {2, 2, 2});
        s.target = box_spec({0.6, 0.6, 0.6}, {0.9, 0.9, 0.9}, {2, 2, 2});
        s.homotopy_steps = 5;
        s.method = OTMethod::Assignment;
        s.epsilon = 1.0 / 250.0;
    } else if (name == "E7") {
        s.mode = RunMode::Transport;
        s.kernel_expr = "norm(x)+0.1";
        s.dim = 2;
        s.source.points = {pt({-2.5, 3}), pt({-2, 3}), pt({-1.5, 3})};
        s.source.weights = pt({0.25, 0.5, 0.25});
        s.target = box_spec({0.5, 0.75}, {2.5, 2.75}, {10, 10});
        s.homotopy_steps = 5;
        s.method = OTMethod::Sinkhorn;
        s.epsilon = 0.2;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return s;
}

// ----------------------------------------------------------------------
// Orchestration
// ----------------------------------------------------------------------
namespace {

std::vector<CostKind> selected_kinds(CostSelection c) {
    switch (c) {
        case CostSelection::Length: return {CostKind::Length};
        case CostSelection::Energy: return {CostKind::Energy};
        default: return {CostKind::Energy, CostKind::Length};
    }
}

class Timer {
  public:
    explicit Timer(ReportBundle& b, std::string label)
        : bundle_(b), label_(std::move(label)), start_(std::chrono::steady_clock::now()) {}
    ~Timer() {
        auto dt = std::chrono::steady_clock::now() - start_;
        bundle_.timings.emplace_back(
            label_, std::chrono::duration_cast<std::chrono::duration<double>>(dt).count());
    }

  private:
    ReportBundle& bundle_;
    std::string label_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace

ReportBundle run_pipeline(const ProblemSpec& spec) {
    ReportBundle bundle;
    bundle.spec = spec;
    auto kernel = spec.parse_kernel();

    if (spec.mode == RunMode::Geodesic) {
        for (CostKind kind : selected_kinds(spec.cost)) {
            GeodesicProblem p;
            p.a = spec.a;
            p.b = spec.b;
            p.kernel = kernel;
            p.kind = kind;
            p.tol = spec.tol;
            p.mesh_n = spec.mesh_n;
            p.homotopy_steps = spec.homotopy_steps;
            p.homotopy_steps_max = spec.homotopy_steps_max;
            p.max_newton_iter = spec.max_newton_iter;
            GeodesicReport rep;
            rep.kind = kind;
            {
                Timer t(bundle, std::string("solve[") + cost_kind_name(kind) + "]");
                rep.result = solve_geodesic(p);
            }
            if (kind == CostKind::Energy) {
                Timer t(bundle, "verify[energy]");
                rep.optimality = verify_minimizer(*kernel, rep.result.trajectory);
            }
            bundle.geodesic.push_back(std::move(rep));
        }
        const GeodesicReport* energy = nullptr;
        const GeodesicReport* length = nullptr;
        for (const auto& r : bundle.geodesic)
            (r.kind == CostKind::Energy ? energy : length) = &r;
        if (energy && length) {
            double E = energy->result.cost;
            double L = length->result.cost;
            double Ly = path_cost(*kernel, energy->result.trajectory, CostKind::Length);
            bundle.eq_sq_residual = std::abs(L * L - 2.0 * E);
            bundle.eq_len_residual = std::abs(Ly - L);
        }
    } else {
        DiscreteMeasure mu = spec.source.realize();
        DiscreteMeasure nu = spec.target.realize();
        CostMatrixConfig cfg;
        cfg.tol = spec.tol;
        cfg.mesh_n = spec.mesh_n;
        cfg.homotopy_steps = spec.homotopy_steps;
        cfg.homotopy_steps_max = spec.homotopy_steps_max;
        cfg.max_newton_iter = spec.max_newton_iter;
        cfg.jobs = spec.jobs;
        cfg.cache_dir = spec.cache_dir;
        if (spec.method == OTMethod::Sinkhorn && !(spec.epsilon > 0.0))
            throw ConfigError("config field 'ot.epsilon': a positive value is required for "
                              "the sinkhorn method");
        for (CostKind kind : selected_kinds(spec.cost)) {
            TransportReport rep;
            rep.kind = kind;
            {
                Timer t(bundle, std::string("cost_matrix[") + cost_kind_name(kind) + "]");
                rep.matrix = build_cost_matrix(kernel, mu, nu, kind, cfg);
            }
            {
                Timer t(bundle, std::string(ot_method_name(spec.method)) + "[" +
                                    cost_kind_name(kind) + "]");
                rep.plan = spec.method == OTMethod::Assignment
                               ? solve_assignment(rep.matrix, mu, nu)
                               : sinkhorn(rep.matrix, mu, nu, spec.epsilon, spec.ot_tol,
                                          spec.ot_max_iter);
            }
            bundle.transport.push_back(std::move(rep));
        }
    }
    return bundle;
}

// ----------------------------------------------------------------------
// Export
// ----------------------------------------------------------------------
namespace {

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64_bytes(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string trajectory_csv(const Trajectory& t) {
    std::ostringstream os;
    const int n = t.dim();
    os << "t";
    for (int i = 1; i <= n; ++i) os << ",x" << i;
    for (int i = 1; i <= n; ++i) os << ",v" << i;
    os << "\n";
    for (int k = 0; k < t.num_nodes(); ++k) {
        os << fmt(t.times[k]);
        for (int i = 0; i < n; ++i) os << ',' << fmt(t.states(k, i));
        for (int i = 0; i < n; ++i) os << ',' << fmt(t.derivs(k, i));
        os << "\n";
    }
    return os.str();
}

std::string homotopy_csv(const std::vector<std::pair<double, Trajectory>>& trace) {
    std::ostringstream os;
    const int n = trace.empty() ? 0 : trace.front().second.dim();
    os << "alpha,t";
    for (int i = 1; i <= n; ++i) os << ",x" << i;
    for (int i = 1; i <= n; ++i) os << ",v" << i;
    os << "\n";
    for (const auto& [alpha, t] : trace)
        for (int k = 0; k < t.num_nodes(); ++k) {
            os << fmt(alpha) << ',' << fmt(t.times[k]);
            for (int i = 0; i < n; ++i) os << ',' << fmt(t.states(k, i));
            for (int i = 0; i < n; ++i) os << ',' << fmt(t.derivs(k, i));
            os << "\n";
        }
    return os.str();
}

std::string series_csv(const char* name, const Eigen::VectorXd& times,
                       const Eigen::VectorXd& vals) {
    std::ostringstream os;
    os << "t," << name << "\n";
    for (int k = 0; k < vals.size() && k < times.size(); ++k)
        os << fmt(times[k]) << ',' << fmt(vals[k]) << "\n";
    return os.str();
}

std::string matrix_csv(const Eigen::MatrixXd& M) {
    std::ostringstream os;
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
            if (j) os << ',';
            os << fmt(M(i, j));
        }
        os << "\n";
    }
    return os.str();
}

std::string plan_csv(const TransportPlan& plan, const DiscreteMeasure& mu,
                     const DiscreteMeasure& nu) {
    std::ostringstream os;
    const int n = mu.dim();
    os << "i,j";
    for (int d = 1; d <= n; ++d) os << ",x" << d;
    for (int d = 1; d <= n; ++d) os << ",y" << d;
    os << ",mass\n";
    for (int i = 0; i < plan.coupling.rows(); ++i)
        for (int j = 0; j < plan.coupling.cols(); ++j) {
            if (!(plan.coupling(i, j) > 0.0)) continue;
            os << i << ',' << j;
            for (int d = 0; d < n; ++d) os << ',' << fmt(mu.points[i][d]);
            for (int d = 0; d < n; ++d) os << ',' << fmt(nu.points[j][d]);
            os << ',' << fmt(plan.coupling(i, j)) << "\n";
        }
    return os.str();
}

json spec_json(const ProblemSpec& s) {
    json j;
    j["mode"] = run_mode_name(s.mode);
    j["kernel"] = {{"expr", s.kernel_expr}, {"dim", s.dim}};
    j["cost"] = cost_selection_name(s.cost);
    if (!s.name.empty()) j["preset"] = s.name;
    j["solver"] = {{"tol", s.tol},
                   {"mesh_n", s.mesh_n},
                   {"homotopy_steps", s.homotopy_steps},
                   {"homotopy_steps_max", s.homotopy_steps_max},
                   {"max_newton_iter", s.max_newton_iter}};
    if (s.mode == RunMode::Geodesic) {
        j["geodesic"] = {{"a", std::vector<double>(s.a.data(), s.a.data() + s.a.size())},
                         {"b", std::vector<double>(s.b.data(), s.b.data() + s.b.size())}};
    } else {
        j["ot"] = {{"method", ot_method_name(s.method)},
                   {"epsilon", s.epsilon},
                   {"tol", s.ot_tol},
                   {"max_iter", s.ot_max_iter}};
        j["jobs"] = s.jobs;
    }
    return j;
}

json optimality_json(const OptimalityReport& rep) {
    json j;
    j["legendre_ok"] = rep.legendre_ok;
    j["legendre_min_eig"] = rep.legendre_min_eig;
    j["scanned"] = rep.scanned;
    if (rep.conjugate_point)
        j["conjugate_point"] = {{"node", rep.conjugate_point->node},
                                {"time", rep.conjugate_point->time}};
    else
        j["conjugate_point"] = nullptr;
    j["min_det"] = rep.min_det;
    j["symplectic_residual"] = rep.symplectic_residual;
    j["speed_range"] = rep.speed_range;
    j["speed_mean"] = rep.speed_mean;
    j["is_minimizer"] = rep.is_minimizer;
    j["hess_method"] = rep.hess_method;
    return j;
}

json summary_json(const ReportBundle& bundle) {
    json j;
    j["config"] = spec_json(bundle.spec);
    if (!bundle.geodesic.empty()) {
        json arr = json::array();
        for (const auto& rep : bundle.geodesic) {
            json g;
            g["kind"] = cost_kind_name(rep.kind);
            g["cost"] = rep.result.cost;
            g["alpha"] = rep.result.trajectory.alpha;
            g["residual"] = rep.result.trajectory.residual;
            g["nodes"] = rep.result.trajectory.num_nodes();
            g["homotopy_steps_used"] = rep.result.homotopy_steps_used;
            g["init_used"] = rep.result.init_used;
            g["multistart_checked"] = rep.result.multistart_checked;
            if (rep.optimality) g["optimality"] = optimality_json(*rep.optimality);
            arr.push_back(std::move(g));
        }
        j["geodesic"] = std::move(arr);
        if (bundle.eq_sq_residual && bundle.eq_len_residual)
            j["equivalence"] = {{"length_sq_minus_2energy", *bundle.eq_sq_residual},
                                {"length_gap", *bundle.eq_len_residual}};
    }
    if (!bundle.transport.empty()) {
        json arr = json::array();
        for (const auto& rep : bundle.transport) {
            json t;
            t["kind"] = cost_kind_name(rep.kind);
            t["rows"] = static_cast<int>(rep.matrix.entries.rows());
            t["cols"] = static_cast<int>(rep.matrix.entries.cols());
            t["method"] = rep.plan.method;
            if (rep.plan.method == "sinkhorn") {
                t["epsilon"] = rep.plan.epsilon;
                t["iterations"] = rep.plan.iterations;
                t["converged"] = rep.plan.converged;
            }
            t["total_cost"] = rep.plan.total_cost;
            t["plan_cost"] = plan_cost(rep.matrix, rep.plan);
            t["row_residual"] = rep.plan.row_residual;
            t["col_residual"] = rep.plan.col_residual;
            int verified = 0, minimizers = 0;
            for (const auto& e : rep.matrix.info) {
                verified += e.verified;
                minimizers += e.verified && e.is_minimizer;
            }
            t["entries_verified"] = verified;
            t["entries_minimizers"] = minimizers;
            arr.push_back(std::move(t));
        }
        j["transport"] = std::move(arr);
    }
    return j;
}

} // namespace

std::vector<ManifestEntry> export_outputs(const ReportBundle& bundle, const std::string& outdir,
                                          const std::string& format) {
    if (outdir.empty()) throw ConfigError("export requires an output directory");
    if (format != "csv" && format != "structured-text")
        throw ConfigError("config field 'output.format': expected 'csv' or 'structured-text'");
    namespace fs = std::filesystem;
    fs::create_directories(outdir);

    const bool both = bundle.geodesic.size() > 1 || bundle.transport.size() > 1;
    auto suffix = [&](CostKind kind) {
        return both && kind == CostKind::Length ? std::string("_length") : std::string();
    };

    std::map<std::string, std::string> files;
    for (const auto& rep : bundle.geodesic) {
        const std::string sfx = suffix(rep.kind);
        files["trajectory" + sfx + ".csv"] = trajectory_csv(rep.result.trajectory);
        files["homotopy_trace" + sfx + ".csv"] = homotopy_csv(rep.result.trace);
        if (rep.optimality) {
            const OptimalityReport& o = *rep.optimality;
            files["speed" + sfx + ".csv"] =
                series_csv("speed", rep.result.trajectory.times, o.speeds);
            if (o.scanned)
                files["detU" + sfx + ".csv"] =
                    series_csv("detU", rep.result.trajectory.times, o.det_sequence);
        } else {
            auto kernel = bundle.spec.parse_kernel();
            SpeedProfile sp = speed_profile(*kernel, rep.result.trajectory);
            files["speed" + sfx + ".csv"] =
                series_csv("speed", rep.result.trajectory.times, sp.speeds);
        }
    }
    if (!bundle.transport.empty()) {
        DiscreteMeasure mu = bundle.spec.source.realize();
        DiscreteMeasure nu = bundle.spec.target.realize();
        for (const auto& rep : bundle.transport) {
            const std::string sfx = suffix(rep.kind);
            files["cost_matrix" + sfx + ".csv"] = matrix_csv(rep.matrix.entries);
            files["plan" + sfx + ".csv"] = plan_csv(rep.plan, mu, nu);
        }
    }
    files["summary.json"] = summary_json(bundle).dump(2) + "\n";

    std::vector<ManifestEntry> manifest;
    json jm = json::array();
    for (const auto& [name, content] : files) {
        std::ofstream out(fs::path(outdir) / name, std::ios::binary);
        if (!out) throw ConfigError("cannot write output file '" + name + "'");
        out << content;
        ManifestEntry e{name, content.size(), hex16(fnv1a64_bytes(content))};
        jm.push_back({{"path", e.path}, {"bytes", e.bytes}, {"fnv1a64", e.fnv1a64}});
        manifest.push_back(std::move(e));
    }
    std::ofstream out(fs::path(outdir) / "manifest.json", std::ios::binary);
    out << json{{"files", jm}}.dump(2) << "\n";
    return manifest;
}

// ----------------------------------------------------------------------
// Console report
// ----------------------------------------------------------------------
std::string summarize(const ReportBundle& bundle) {
    std::ostringstream os;
    const ProblemSpec& s = bundle.spec;
    os << (s.name.empty() ? std::string("problem") : "preset " + s.name) << " ("
       << run_mode_name(s.mode) << ", kernel \"" << s.kernel_expr << "\", dim " << s.dim
       << ")\n";
    for (const auto& rep : bundle.geodesic) {
        os << "  " << cost_kind_name(rep.kind) << ": cost " << fmt(rep.result.cost) << "  nodes "
           << rep.result.trajectory.num_nodes() << "  residual "
           << fmt(rep.result.trajectory.residual) << "  homotopy steps "
           << rep.result.homotopy_steps_used
           << (rep.result.init_used == 0
                   ? ""
                   : rep.result.init_used > 0 ? "  init bump(+)" : "  init bump(-)")
           << "\n";
        if (rep.optimality) {
            const OptimalityReport& o = *rep.optimality;
            os << "    optimality: legendre " << (o.legendre_ok ? "ok" : "FAILED");
            if (o.scanned) {
                os << ", min det(U) " << fmt(o.min_det);
                if (o.conjugate_point)
                    os << ", conjugate point at t = " << fmt(o.conjugate_point->time);
                else
                    os << ", no conjugate point";
            } else {
                os << ", scan skipped";
            }
            os << ", speed range " << fmt(o.speed_range) << " (mean " << fmt(o.speed_mean)
               << ")\n    verdict: " << (o.is_minimizer ? "minimizer" : "not certified") << "\n";
        }
    }
    if (bundle.eq_sq_residual && bundle.eq_len_residual)
        os << "  equivalence: |L^2 - 2E| = " << fmt(*bundle.eq_sq_residual)
           << ", |L(z) - L(y)| = " << fmt(*bundle.eq_len_residual) << "\n";
    for (const auto& rep : bundle.transport) {
        os << "  " << cost_kind_name(rep.kind) << ": " << rep.plan.method;
        if (rep.plan.method == "sinkhorn")
            os << " (epsilon " << fmt(rep.plan.epsilon) << ", " << rep.plan.iterations
               << " iterations" << (rep.plan.converged ? "" : ", NOT CONVERGED") << ")";
        os << " total cost " << fmt(rep.plan.total_cost) << "  matrix "
           << rep.matrix.entries.rows() << "x" << rep.matrix.entries.cols()
           << "  marginal residuals (" << fmt(rep.plan.row_residual) << ", "
           << fmt(rep.plan.col_residual) << ")\n";
    }
    if (!bundle.timings.empty()) {
        os << "  timings:";
        for (const auto& [label, secs] : bundle.timings) {
            std::ostringstream t;
            t.setf(std::ios::fixed);
            t.precision(2);
            t << secs;
            os << " " << label << " " << t.str() << "s";
        }
        os << "\n";
    }
    return os.str();
}

} // namespace geodot
