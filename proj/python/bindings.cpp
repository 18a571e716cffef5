#include <memory>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "geodot/pipeline.hpp"

namespace py = pybind11;
using namespace geodot;

namespace {

CostKind kind_from(const std::string& name) {
    if (name == "energy") return CostKind::Energy;
    if (name == "length") return CostKind::Length;
    throw ConfigError("kind must be 'energy' or 'length', got '" + name + "'");
}

std::shared_ptr<const KernelExpr> make_kernel(const std::string& expr, int dim) {
    return std::make_shared<const KernelExpr>(KernelExpr::parse(expr, dim));
}

Trajectory make_traj(const Eigen::VectorXd& times, const Eigen::MatrixXd& states,
                     const Eigen::MatrixXd& derivs, CostKind kind) {
    if (states.rows() != times.size() || derivs.rows() != times.size() ||
        states.cols() != derivs.cols())
        throw ConfigError("trajectory arrays must share shapes (N+1, n)");
    Trajectory t;
    t.times = times;
    t.states = states;
    t.derivs = derivs;
    t.alpha = 1.0;
    t.kind = kind;
    return t;
}

DiscreteMeasure measure_from(const Eigen::MatrixXd& pts, const py::object& weights) {
    std::vector<Eigen::VectorXd> points;
    points.reserve(static_cast<std::size_t>(pts.rows()));
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        points.push_back(pts.row(i).transpose());
    DiscreteMeasure m = DiscreteMeasure::uniform(std::move(points));
    if (!weights.is_none()) {
        m.weights = weights.cast<Eigen::VectorXd>();
        m.validate();
    }
    return m;
}

py::dict traj_dict(const Trajectory& t) {
    py::dict d;
    d["times"] = t.times;
    d["states"] = t.states;
    d["derivs"] = t.derivs;
    d["residual"] = t.residual;
    d["alpha"] = t.alpha;
    d["kind"] = std::string(cost_kind_name(t.kind));
    return d;
}

py::dict report_dict(const OptimalityReport& rep) {
    py::dict d;
    d["speeds"] = rep.speeds;
    d["speed_range"] = rep.speed_range;
    d["speed_mean"] = rep.speed_mean;
    d["legendre_ok"] = rep.legendre_ok;
    d["legendre_min_eig"] = rep.legendre_min_eig;
    d["scanned"] = rep.scanned;
    if (rep.conjugate_point) {
        py::dict cp;
        cp["node"] = rep.conjugate_point->node;
        cp["time"] = rep.conjugate_point->time;
        d["conjugate_point"] = cp;
    } else {
        d["conjugate_point"] = py::none();
    }
    d["min_det"] = rep.min_det;
    d["symplectic_residual"] = rep.symplectic_residual;
    d["det_sequence"] = rep.det_sequence;
    d["is_minimizer"] = rep.is_minimizer;
    d["hess_method"] = rep.hess_method;
    return d;
}

py::dict plan_dict(const TransportPlan& plan) {
    py::dict d;
    d["coupling"] = plan.coupling;
    d["method"] = plan.method;
    d["epsilon"] = plan.epsilon;
    d["total_cost"] = plan.total_cost;
    d["row_residual"] = plan.row_residual;
    d["col_residual"] = plan.col_residual;
    d["iterations"] = plan.iterations;
    d["converged"] = plan.converged;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "geodesic trajectories and optimal transport in nonuniform environments";

    py::class_<KernelExpr, std::shared_ptr<KernelExpr>>(m, "Kernel")
        .def(py::init([](const std::string& expr, int dim) {
                 return std::make_shared<KernelExpr>(KernelExpr::parse(expr, dim));
             }),
             py::arg("expr"), py::arg("dim"))
        .def("value", [](const KernelExpr& k, const Eigen::VectorXd& x) { return k.value(x); },
             py::arg("x"))
        .def("gradient",
             [](const KernelExpr& k, const Eigen::VectorXd& x) { return k.gradient(x); },
             py::arg("x"))
        .def("hessian",
             [](const KernelExpr& k, const Eigen::VectorXd& x) { return k.hessian(x); },
             py::arg("x"))
        .def_property_readonly("dim", &KernelExpr::dim)
        .def_property_readonly("expr", &KernelExpr::source)
        .def_property_readonly("uses_norm", &KernelExpr::uses_norm)
        .def("__repr__", [](const KernelExpr& k) {
            return "Kernel(\"" + k.source() + "\", dim=" + std::to_string(k.dim()) + ")";
        });

    m.def(
        "solve_geodesic",
        [](const std::string& expr, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
           const std::string& kind, double tol, int mesh_n, int homotopy_steps,
           int homotopy_steps_max, int max_newton_iter) {
            GeodesicProblem p;
            p.kernel = make_kernel(expr, static_cast<int>(a.size()));
            p.a = a;
            p.b = b;
            p.kind = kind_from(kind);
            p.tol = tol;
            p.mesh_n = mesh_n;
            p.homotopy_steps = homotopy_steps;
            p.homotopy_steps_max = homotopy_steps_max;
            p.max_newton_iter = max_newton_iter;
            GeodesicResult r = solve_geodesic(p);
            py::dict d = traj_dict(r.trajectory);
            d["cost"] = r.cost;
            d["homotopy_steps_used"] = r.homotopy_steps_used;
            d["init_used"] = r.init_used;
            d["multistart_checked"] = r.multistart_checked;
            return d;
        },
        py::arg("expr"), py::arg("a"), py::arg("b"), py::arg("kind") = "energy",
        py::arg("tol") = 1e-4, py::arg("mesh_n") = 101, py::arg("homotopy_steps") = 21,
        py::arg("homotopy_steps_max") = 51, py::arg("max_newton_iter") = 50,
        "Solve the two-point trajectory problem; returns a dict with the mesh, "
        "the cost, and solver diagnostics.");

    m.def(
        "path_cost",
        [](const std::string& expr, const Eigen::VectorXd& times,
           const Eigen::MatrixXd& states, const Eigen::MatrixXd& derivs,
           const std::string& kind) {
            auto k = make_kernel(expr, static_cast<int>(states.cols()));
            return path_cost(*k, make_traj(times, states, derivs, kind_from(kind)),
                             kind_from(kind));
        },
        py::arg("expr"), py::arg("times"), py::arg("states"), py::arg("derivs"),
        py::arg("kind") = "energy",
        "Composite-trapezoid cost of a discrete trajectory under the kernel.");

    m.def(
        "verify_minimizer",
        [](const std::string& expr, const Eigen::VectorXd& times,
           const Eigen::MatrixXd& states, const Eigen::MatrixXd& derivs,
           const std::string& kind) {
            auto k = make_kernel(expr, static_cast<int>(states.cols()));
            return report_dict(
                verify_minimizer(*k, make_traj(times, states, derivs, kind_from(kind))));
        },
        py::arg("expr"), py::arg("times"), py::arg("states"), py::arg("derivs"),
        py::arg("kind") = "energy",
        "Speed profile, Legendre condition, and conjugate-point scan for an "
        "energy trajectory.");

    m.def(
        "build_cost_matrix",
        [](const std::string& expr, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
           const std::string& kind, const py::object& mu_weights,
           const py::object& nu_weights, double tol, int mesh_n, int homotopy_steps,
           int homotopy_steps_max, int jobs, bool verify, const std::string& cache_dir) {
            if (X.cols() != Y.cols())
                throw ConfigError("source and target points must share a dimension");
            auto kernel = make_kernel(expr, static_cast<int>(X.cols()));
            DiscreteMeasure mu = measure_from(X, mu_weights);
            DiscreteMeasure nu = measure_from(Y, nu_weights);
            CostMatrixConfig cfg;
            cfg.tol = tol;
            cfg.mesh_n = mesh_n;
            cfg.homotopy_steps = homotopy_steps;
            cfg.homotopy_steps_max = homotopy_steps_max;
            cfg.jobs = jobs;
            cfg.verify = verify;
            cfg.cache_dir = cache_dir;
            CostMatrix cm = build_cost_matrix(kernel, mu, nu, kind_from(kind), cfg);
            py::dict d;
            d["entries"] = cm.entries;
            d["kind"] = std::string(cost_kind_name(cm.kind));
            int verified = 0, minimizers = 0;
            for (const auto& e : cm.info) {
                verified += e.verified;
                minimizers += e.verified && e.is_minimizer;
            }
            d["entries_verified"] = verified;
            d["entries_minimizers"] = minimizers;
            return d;
        },
        py::arg("expr"), py::arg("X"), py::arg("Y"), py::arg("kind") = "energy",
        py::arg("mu_weights") = py::none(), py::arg("nu_weights") = py::none(),
        py::arg("tol") = 1e-4, py::arg("mesh_n") = 101, py::arg("homotopy_steps") = 5,
        py::arg("homotopy_steps_max") = 51, py::arg("jobs") = 1, py::arg("verify") = true,
        py::arg("cache_dir") = std::string(),
        "Pairwise geodesic costs between the rows of X and the rows of Y.");

    m.def(
        "solve_assignment",
        [](const Eigen::MatrixXd& C, const std::string& kind) {
            CostMatrix cm;
            cm.entries = C;
            cm.kind = kind_from(kind);
            cm.info.resize(static_cast<std::size_t>(C.size()));
            std::vector<Eigen::VectorXd> xs, ys;
            for (Eigen::Index i = 0; i < C.rows(); ++i)
                xs.push_back(Eigen::VectorXd::Constant(1, double(i)));
            for (Eigen::Index j = 0; j < C.cols(); ++j)
                ys.push_back(Eigen::VectorXd::Constant(1, double(j)));
            return plan_dict(solve_assignment(cm, DiscreteMeasure::uniform(std::move(xs)),
                                              DiscreteMeasure::uniform(std::move(ys))));
        },
        py::arg("C"), py::arg("kind") = "energy",
        "Exact optimal matching between uniform measures for a square cost "
        "matrix.");

    m.def(
        "sinkhorn",
        [](const Eigen::MatrixXd& C, double epsilon, const py::object& mu_weights,
           const py::object& nu_weights, double tol, int max_iter,
           const std::string& kind) {
            CostMatrix cm;
            cm.entries = C;
            cm.kind = kind_from(kind);
            cm.info.resize(static_cast<std::size_t>(C.size()));
            std::vector<Eigen::VectorXd> xs, ys;
            for (Eigen::Index i = 0; i < C.rows(); ++i)
                xs.push_back(Eigen::VectorXd::Constant(1, double(i)));
            for (Eigen::Index j = 0; j < C.cols(); ++j)
                ys.push_back(Eigen::VectorXd::Constant(1, double(j)));
            DiscreteMeasure mu = DiscreteMeasure::uniform(std::move(xs));
            DiscreteMeasure nu = DiscreteMeasure::uniform(std::move(ys));
            if (!mu_weights.is_none()) {
                mu.weights = mu_weights.cast<Eigen::VectorXd>();
                mu.validate();
            }
            if (!nu_weights.is_none()) {
                nu.weights = nu_weights.cast<Eigen::VectorXd>();
                nu.validate();
            }
            return plan_dict(sinkhorn(cm, mu, nu, epsilon, tol, max_iter));
        },
        py::arg("C"), py::arg("epsilon"), py::arg("mu_weights") = py::none(),
        py::arg("nu_weights") = py::none(), py::arg("tol") = 1e-9,
        py::arg("max_iter") = 100000, py::arg("kind") = "energy",
        "Entropic-regularized coupling by Sinkhorn iteration (log-domain when "
        "needed).");

    m.def("preset_names", &preset_names, "Names of the bundled example configurations.");

    m.def(
        "run_preset",
        [](const std::string& name, const std::string& out_dir) {
            ProblemSpec spec = preset(name);
            if (!out_dir.empty()) spec.out_dir = out_dir;
            ReportBundle bundle = run_pipeline(spec);
            if (!spec.out_dir.empty())
                export_outputs(bundle, spec.out_dir, spec.format);
            return summarize(bundle);
        },
        py::arg("name"), py::arg("out_dir") = std::string(),
        "Run a bundled example end to end; returns the human-readable report.");
}
