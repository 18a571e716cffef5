#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "geodot/kernel.hpp"

namespace geodot {

enum class CostKind { Length, Energy };

inline const char* cost_kind_name(CostKind k) {
    return k == CostKind::Length ? "length" : "energy";
}

// Two-point boundary value problem for a weighted geodesic on [0, 1].
struct GeodesicProblem {
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    std::shared_ptr<const KernelExpr> kernel;
    CostKind kind = CostKind::Energy;
    double tol = 1e-4;          // absolute and relative cost tolerance
    int mesh_n = 101;           // initial node count
    int homotopy_steps = 21;    // equispaced levels including alpha=0 and 1
    int homotopy_steps_max = 51;
    int max_newton_iter = 50;
};

// Discretized path x(t) with per-node first derivatives.  Boundary states
// are imposed exactly; derivs come from the collocation stages.
struct Trajectory {
    Eigen::VectorXd times;   // t_0 = 0 < ... < t_N = 1
    Eigen::MatrixXd states;  // (N+1) x n
    Eigen::MatrixXd derivs;  // (N+1) x n
    double alpha = 0.0;      // homotopy level attained
    double residual = 0.0;   // max norm of the discrete EL residual
    CostKind kind = CostKind::Energy;

    int num_nodes() const { return static_cast<int>(times.size()); }
    int dim() const { return static_cast<int>(states.cols()); }
};

// Euler-Lagrange right-hand sides, as accelerations xdd = f(x, v):
//   energy: (|v|^2/K) grad K - (2 (grad K . v)/K) v
//   length: (|v|^2/K) grad K
Eigen::VectorXd el_rhs_energy(const HomotopyKernel& k, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v);
Eigen::VectorXd el_rhs_length(const HomotopyKernel& k, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v);
Eigen::VectorXd el_rhs_energy(const KernelExpr& k, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v);
Eigen::VectorXd el_rhs_length(const KernelExpr& k, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v);

Trajectory straight_line_init(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int mesh_n);

// One Newton solve of the collocation system at a fixed homotopy level,
// starting from `init` (which must satisfy the boundary conditions).
// Throws SolveError on Newton non-convergence; callers escalate the
// homotopy schedule.
Trajectory solve_bvp(const GeodesicProblem& p, const Trajectory& init, double alpha);

struct GeodesicResult {
    Trajectory trajectory;                            // converged at alpha = 1
    std::vector<std::pair<double, Trajectory>> trace; // winning homotopy ladder
    double cost = 0.0;                                // converged cost functional
    int homotopy_steps_used = 0;                      // levels in the winning ladder
    int init_used = 0;               // 0 straight line, +1/-1 transverse bump
    bool multistart_checked = false; // extra starts ran (near-kink safeguard)
};

// Full pipeline for one geodesic: homotopy continuation from the straight
// line, escalating the schedule on failure, with Richardson mesh halving at
// alpha = 1 until the cost is converged to p.tol (and, for energy, the speed
// profile K|v| is constant to 1e-6 relative).
//
// When the straight-line ladder fails outright -- or converges while grazing
// the kink of a norm()-bearing kernel, where a symmetric saddle can capture
// the iteration -- the solve is retried from transverse sine-bump
// initializations on both sides and the cheapest converged path wins.
GeodesicResult solve_geodesic(const GeodesicProblem& p);

} // namespace geodot
