#include "geodot/transport.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "geodot/optimality.hpp"

namespace geodot {

double path_cost(const KernelExpr& k, const Trajectory& traj, CostKind kind) {
    const int m = traj.num_nodes();
    double total = 0.0;
    double w_prev = 0.0;
    for (int i = 0; i < m; ++i) {
        double K = k.value(traj.states.row(i).transpose());
        double sp = traj.derivs.row(i).norm();
        double w = kind == CostKind::Length ? K * sp : 0.5 * K * K * sp * sp;
        if (i > 0) total += 0.5 * (traj.times[i] - traj.times[i - 1]) * (w_prev + w);
        w_prev = w;
    }
    return total;
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Eigen::VectorXd> pts) {
    DiscreteMeasure m;
    m.weights = Eigen::VectorXd::Constant(static_cast<int>(pts.size()), 1.0 / pts.size());
    m.points = std::move(pts);
    return m;
}

void DiscreteMeasure::validate() const {
    if (points.empty()) throw DomainError("measure has no support points");
    if (weights.size() != static_cast<int>(points.size()))
        throw DomainError("measure weights and points disagree in count");
    const int n = static_cast<int>(points.front().size());
    for (const auto& p : points)
        if (p.size() != n) throw DomainError("measure points have inconsistent dimensions");
    for (int i = 0; i < weights.size(); ++i)
        if (!(weights[i] > 0.0)) throw DomainError("measure weights must be strictly positive");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw DomainError("measure weights must sum to 1");
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if (points[i] == points[j])
                throw DomainError("measure support points must be pairwise distinct");
}

// ----------------------------------------------------------------------
// Cost-matrix assembly
// ----------------------------------------------------------------------
namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string cache_key(const KernelExpr& kernel, const DiscreteMeasure& X,
                      const DiscreteMeasure& Y, CostKind kind, const CostMatrixConfig& cfg) {
    std::ostringstream os;
    os << kernel.source() << '\n'
       << kernel.dim() << '\n'
       << cost_kind_name(kind) << '\n'
       << fmt17(cfg.tol) << ' ' << cfg.mesh_n << ' ' << cfg.homotopy_steps << ' '
       << cfg.homotopy_steps_max << ' ' << cfg.max_newton_iter << ' ' << cfg.verify << '\n';
    for (const auto& p : X.points)
        for (int i = 0; i < p.size(); ++i) os << fmt17(p[i]) << ' ';
    os << '\n';
    for (int i = 0; i < X.weights.size(); ++i) os << fmt17(X.weights[i]) << ' ';
    os << '\n';
    for (const auto& p : Y.points)
        for (int i = 0; i < p.size(); ++i) os << fmt17(p[i]) << ' ';
    os << '\n';
    for (int i = 0; i < Y.weights.size(); ++i) os << fmt17(Y.weights[i]) << ' ';
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(os.str())));
    return hex;
}

bool load_cached_matrix(const std::string& path, int k0, int k1, CostKind kind, CostMatrix& out) {
    std::ifstream in(path);
    if (!in) return false;
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("kind").get<std::string>() != cost_kind_name(kind)) return false;
        if (j.at("rows").get<int>() != k0 || j.at("cols").get<int>() != k1) return false;
        const auto& e = j.at("entries");
        const auto& info = j.at("info");
        if (static_cast<int>(e.size()) != k0 * k1 || info.size() != e.size()) return false;
        out.entries.resize(k0, k1);
        out.info.resize(static_cast<std::size_t>(k0) * k1);
        for (int i = 0; i < k0; ++i)
            for (int c = 0; c < k1; ++c)
                out.entries(i, c) = e.at(static_cast<std::size_t>(i) * k1 + c).get<double>();
        for (std::size_t t = 0; t < out.info.size(); ++t) {
            const auto& ji = info.at(t);
            out.info[t].residual = ji.at("residual").get<double>();
            out.info[t].homotopy_steps_used = ji.at("homotopy_steps_used").get<int>();
            out.info[t].init_used = ji.at("init_used").get<int>();
            out.info[t].multistart_checked = ji.at("multistart_checked").get<bool>();
            out.info[t].verified = ji.at("verified").get<bool>();
            out.info[t].is_minimizer = ji.at("is_minimizer").get<bool>();
        }
        out.kind = kind;
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

void store_cached_matrix(const std::string& path, const CostMatrix& cm) {
    nlohmann::json j;
    j["kind"] = cost_kind_name(cm.kind);
    j["rows"] = static_cast<int>(cm.entries.rows());
    j["cols"] = static_cast<int>(cm.entries.cols());
    auto entries = nlohmann::json::array();
    for (int i = 0; i < cm.entries.rows(); ++i)
        for (int c = 0; c < cm.entries.cols(); ++c) entries.push_back(cm.entries(i, c));
    j["entries"] = std::move(entries);
    auto info = nlohmann::json::array();
    for (const auto& e : cm.info)
        info.push_back({{"residual", e.residual},
                        {"homotopy_steps_used", e.homotopy_steps_used},
                        {"init_used", e.init_used},
                        {"multistart_checked", e.multistart_checked},
                        {"verified", e.verified},
                        {"is_minimizer", e.is_minimizer}});
    j["info"] = std::move(info);
    std::ofstream out(path);
    if (out) out << j.dump();
}

} // namespace

CostMatrix build_cost_matrix(std::shared_ptr<const KernelExpr> kernel,
                             const DiscreteMeasure& X, const DiscreteMeasure& Y,
                             CostKind kind, const CostMatrixConfig& cfg) {
    if (!kernel) throw ConfigError("cost matrix requires a kernel");
    X.validate();
    Y.validate();
    if (X.dim() != kernel->dim() || Y.dim() != kernel->dim())
        throw ConfigError("measure dimension does not match the kernel");

    const int k0 = X.size();
    const int k1 = Y.size();

    std::string cache_path;
    if (!cfg.cache_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.cache_dir, ec);
        cache_path = (std::filesystem::path(cfg.cache_dir) /
                      ("costmatrix_" + cache_key(*kernel, X, Y, kind, cfg) + ".json"))
                         .string();
        CostMatrix cached;
        if (load_cached_matrix(cache_path, k0, k1, kind, cached)) return cached;
    }

    CostMatrix cm;
    cm.kind = kind;
    cm.entries.resize(k0, k1);
    cm.info.resize(static_cast<std::size_t>(k0) * k1);

    std::vector<char> failed(static_cast<std::size_t>(k0) * k1, 0);

    auto solve_entry = [&](int t) {
        int i = t / k1;
        int j = t % k1;
        GeodesicProblem gp;
        gp.a = X.points[i];
        gp.b = Y.points[j];
        gp.kernel = kernel;
        gp.kind = kind;
        gp.tol = cfg.tol;
        gp.mesh_n = cfg.mesh_n;
        gp.homotopy_steps = cfg.homotopy_steps;
        gp.homotopy_steps_max = cfg.homotopy_steps_max;
        gp.max_newton_iter = cfg.max_newton_iter;
        try {
            GeodesicResult r = solve_geodesic(gp);
            cm.entries(i, j) = r.cost;
            CostEntryInfo& info = cm.info[static_cast<std::size_t>(t)];
            info.residual = r.trajectory.residual;
            info.homotopy_steps_used = r.homotopy_steps_used;
            info.init_used = r.init_used;
            info.multistart_checked = r.multistart_checked;
            if (kind == CostKind::Energy && cfg.verify) {
                OptimalityReport rep = verify_minimizer(*kernel, r.trajectory);
                info.verified = true;
                info.is_minimizer = rep.is_minimizer;
            }
        } catch (const std::runtime_error&) {
            failed[static_cast<std::size_t>(t)] = 1;
        }
    };

    const int total = k0 * k1;
    const int jobs = std::max(1, std::min(cfg.jobs, total));
    if (jobs == 1) {
        for (int t = 0; t < total; ++t) solve_entry(t);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (int w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (;;) {
                    int t = next.fetch_add(1);
                    if (t >= total) break;
                    solve_entry(t);
                }
            });
        for (auto& w : workers) w.join();
    }

    std::vector<std::pair<int, int>> bad;
    for (int t = 0; t < total; ++t)
        if (failed[static_cast<std::size_t>(t)]) bad.emplace_back(t / k1, t % k1);
    if (!bad.empty()) {
        std::ostringstream os;
        os << bad.size() << " cost-matrix entr" << (bad.size() == 1 ? "y" : "ies")
           << " failed to solve after maximal homotopy escalation:";
        for (std::size_t t = 0; t < bad.size() && t < 8; ++t)
            os << " (" << bad[t].first << "," << bad[t].second << ")";
        if (bad.size() > 8) os << " ...";
        throw UnsolvedEntriesError(os.str(), std::move(bad));
    }

    if (!cache_path.empty()) store_cached_matrix(cache_path, cm);
    return cm;
}

// ----------------------------------------------------------------------
// Exact assignment: shortest augmenting paths with dual potentials
// ----------------------------------------------------------------------
namespace {

void require_uniform_square(const CostMatrix& C, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu) {
    const int k0 = static_cast<int>(C.entries.rows());
    const int k1 = static_cast<int>(C.entries.cols());
    if (k0 != k1) throw DomainError("assignment requires a square cost matrix");
    if (mu.size() != k0 || nu.size() != k1)
        throw DomainError("assignment measure sizes do not match the cost matrix");
    for (int i = 0; i < k0; ++i)
        if (std::abs(mu.weights[i] - 1.0 / k0) > 1e-12 ||
            std::abs(nu.weights[i] - 1.0 / k0) > 1e-12)
            throw DomainError("assignment requires uniform weights 1/k (mass cannot split)");
}

TransportPlan plan_from_permutation(const CostMatrix& C, const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu, const std::vector<int>& col_of_row) {
    const int k = static_cast<int>(C.entries.rows());
    TransportPlan plan;
    plan.method = "assignment";
    plan.coupling = Eigen::MatrixXd::Zero(k, k);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        plan.coupling(i, col_of_row[i]) = 1.0 / k;
        total += C.entries(i, col_of_row[i]);
    }
    plan.total_cost = total / k;
    Eigen::VectorXd rs = plan.coupling.rowwise().sum();
    Eigen::VectorXd cs = plan.coupling.colwise().sum().transpose();
    plan.row_residual = (rs - mu.weights).cwiseAbs().maxCoeff();
    plan.col_residual = (cs - nu.weights).cwiseAbs().maxCoeff();
    plan.converged = true;
    return plan;
}

} // namespace

TransportPlan solve_assignment(const CostMatrix& C, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu) {
    require_uniform_square(C, mu, nu);
    if (!C.entries.allFinite()) throw DomainError("cost matrix has non-finite entries");
    const int n = static_cast<int>(C.entries.rows());
    const double inf = std::numeric_limits<double>::infinity();

    // O(n^3) shortest augmenting path with potentials; 1-based with a
    // virtual column 0.  p[j] is the row matched to column j.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    double cur = C.entries(i0 - 1, j - 1) - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> col_of_row(n, -1);
    for (int j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
    return plan_from_permutation(C, mu, nu, col_of_row);
}

TransportPlan brute_force_assignment(const CostMatrix& C) {
    const int k = static_cast<int>(C.entries.rows());
    if (k != C.entries.cols()) throw DomainError("assignment requires a square cost matrix");
    if (k > 9) throw DomainError("brute-force assignment supports k <= 9");
    std::vector<int> perm(k), best(k);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (int i = 0; i < k; ++i) c += C.entries(i, perm[i]);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    TransportPlan plan;
    plan.method = "brute-force";
    plan.coupling = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) plan.coupling(i, best[i]) = 1.0 / k;
    plan.total_cost = best_cost / k;
    plan.row_residual = 0.0;
    plan.col_residual = 0.0;
    return plan;
}

// ----------------------------------------------------------------------
// Entropic regularization
// ----------------------------------------------------------------------
namespace {

double logsumexp(const Eigen::VectorXd& x) {
    double m = x.maxCoeff();
    return m + std::log((x.array() - m).exp().sum());
}

} // namespace

TransportPlan sinkhorn(const CostMatrix& C, const DiscreteMeasure& mu,
                       const DiscreteMeasure& nu, double epsilon, double tol, int max_iter) {
    if (!(epsilon > 0.0)) throw DomainError("sinkhorn requires epsilon > 0");
    const int k0 = static_cast<int>(C.entries.rows());
    const int k1 = static_cast<int>(C.entries.cols());
    if (mu.size() != k0 || nu.size() != k1)
        throw DomainError("sinkhorn measure sizes do not match the cost matrix");
    if (!C.entries.allFinite()) throw DomainError("cost matrix has non-finite entries");

    TransportPlan plan;
    plan.method = "sinkhorn";
    plan.epsilon = epsilon;
    const bool log_domain = C.entries.maxCoeff() / epsilon > 500.0;

    Eigen::MatrixXd pi(k0, k1);
    int it = 0;
    bool converged = false;

    if (!log_domain) {
        Eigen::MatrixXd G = (-C.entries / epsilon).array().exp();
        Eigen::VectorXd u = Eigen::VectorXd::Ones(k0);
        Eigen::VectorXd v = Eigen::VectorXd::Ones(k1);
        while (it < max_iter) {
            ++it;
            v = nu.weights.array() / (G.transpose() * u).array();
            u = mu.weights.array() / (G * v).array();
            pi = u.asDiagonal() * G * v.asDiagonal();
            double col_l1 = (pi.colwise().sum().transpose() - nu.weights).cwiseAbs().sum();
            if (col_l1 < tol) {
                converged = true;
                break;
            }
        }
    } else {
        Eigen::VectorXd f = Eigen::VectorXd::Zero(k0);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(k1);
        while (it < max_iter) {
            ++it;
            for (int j = 0; j < k1; ++j)
                g[j] = epsilon * (std::log(nu.weights[j]) -
                                  logsumexp((f - C.entries.col(j)) / epsilon));
            for (int i = 0; i < k0; ++i)
                f[i] = epsilon * (std::log(mu.weights[i]) -
                                  logsumexp((g - C.entries.row(i).transpose()) / epsilon));
            for (int i = 0; i < k0; ++i)
                for (int j = 0; j < k1; ++j)
                    pi(i, j) = std::exp((f[i] + g[j] - C.entries(i, j)) / epsilon);
            double col_l1 = (pi.colwise().sum().transpose() - nu.weights).cwiseAbs().sum();
            if (col_l1 < tol) {
                converged = true;
                break;
            }
        }
    }

    plan.coupling = pi;
    plan.iterations = it;
    plan.converged = converged;
    plan.total_cost = (C.entries.array() * pi.array()).sum();
    plan.row_residual = (pi.rowwise().sum() - mu.weights).cwiseAbs().maxCoeff();
    plan.col_residual = (pi.colwise().sum().transpose() - nu.weights).cwiseAbs().maxCoeff();
    return plan;
}

double plan_cost(const CostMatrix& C, const TransportPlan& plan) {
    if (C.entries.rows() != plan.coupling.rows() || C.entries.cols() != plan.coupling.cols())
        throw DomainError("cost matrix and plan shapes disagree");
    return (C.entries.array() * plan.coupling.array()).sum();
}

} // namespace geodot
