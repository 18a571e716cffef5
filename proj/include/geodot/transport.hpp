#pragma once

#include <string>
#include <vector>

#include "geodot/geodesic.hpp"

namespace geodot {

// Discrete measure: support points with strictly positive weights summing
// to 1.
struct DiscreteMeasure {
    std::vector<Eigen::VectorXd> points;
    Eigen::VectorXd weights;

    static DiscreteMeasure uniform(std::vector<Eigen::VectorXd> pts);
    void validate() const;
    int size() const { return static_cast<int>(points.size()); }
    int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
};

// Composite-trapezoid quadrature of K|v| (length) or (1/2) K^2 |v|^2
// (energy) on the trajectory mesh.
double path_cost(const KernelExpr& k, const Trajectory& traj, CostKind kind);

// Per-entry solver provenance for a cost matrix.
struct CostEntryInfo {
    double residual = 0.0;
    int homotopy_steps_used = 0;
    int init_used = 0;                // 0 straight line, +1/-1 transverse bump
    bool multistart_checked = false;
    bool verified = false;            // optimality verification ran (energy)
    bool is_minimizer = false;        // its verdict
};

struct CostMatrix {
    Eigen::MatrixXd entries; // k0 x k1, nonnegative
    CostKind kind = CostKind::Energy;
    std::vector<CostEntryInfo> info; // row-major, k0*k1

    const CostEntryInfo& entry_info(int i, int j) const {
        return info[static_cast<std::size_t>(i) * entries.cols() + j];
    }
};

struct CostMatrixConfig {
    double tol = 1e-4;
    int mesh_n = 101;
    int homotopy_steps = 5; // per-entry default; escalates to the max
    int homotopy_steps_max = 51;
    int max_newton_iter = 50;
    int jobs = 1;                // parallel workers over entries
    bool verify = true;          // verify optimality of energy entries
    std::string cache_dir;       // empty disables the disk cache
};

// Entry (i, j) is the geodesic cost from X.points[i] to Y.points[j]; energy
// entries are verified a posteriori and the verdict recorded.  Entries are
// independent and are fanned out over `jobs` workers.  Throws
// UnsolvedEntriesError listing every failed pair after maximal escalation.
CostMatrix build_cost_matrix(std::shared_ptr<const KernelExpr> kernel,
                             const DiscreteMeasure& X, const DiscreteMeasure& Y,
                             CostKind kind, const CostMatrixConfig& cfg = {});

struct TransportPlan {
    Eigen::MatrixXd coupling; // k0 x k1, nonnegative
    std::string method;       // "assignment" | "sinkhorn" | "brute-force"
    double epsilon = 0.0;     // sinkhorn only
    double total_cost = 0.0;
    double row_residual = 0.0; // max_i |sum_j pi_ij - mu_i|
    double col_residual = 0.0; // max_j |sum_i pi_ij - nu_j|
    int iterations = 0;        // sinkhorn sweeps
    bool converged = true;
};

// Exact optimal matching by shortest augmenting paths with dual potentials
// (Jonker-Volgenant family).  Requires k0 = k1 and uniform weights 1/k; plan
// entries are 0 or 1/k.  Deterministic: ties resolve to the lowest index.
TransportPlan solve_assignment(const CostMatrix& C, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu);

// Entropic regularization: Gibbs kernel exp(-c/eps), alternating scaling
// v = nu/(K^T u), u = mu/(K v), stopping when the L1 violation of the
// column marginal falls below tol.  Switches to log-domain soft-min updates
// automatically when any c_ij/eps exceeds 500.
TransportPlan sinkhorn(const CostMatrix& C, const DiscreteMeasure& mu,
                       const DiscreteMeasure& nu, double epsilon,
                       double tol = 1e-9, int max_iter = 100000);

// Exhaustive minimum over permutations (k <= 9); ties broken by the
// lexicographically smallest permutation.  Test oracle.
TransportPlan brute_force_assignment(const CostMatrix& C);

// sum_ij c_ij pi_ij.
double plan_cost(const CostMatrix& C, const TransportPlan& plan);

} // namespace geodot
