#pragma once

#include <optional>
#include <string>
#include <vector>

#include "geodot/geodesic.hpp"

namespace geodot {

// Second-variation data A = L_xx, B = L_xv, C = L_vv for the energy
// Lagrangian L = (1/2) K(x)^2 |v|^2, evaluated on the trajectory mesh, plus
// the derived scan blocks P = C and Q = A - sym(Bdot).  Bdot uses forward
// differences, so P and Q live on nodes 0..N-1 (the last node is dropped).
struct SecondVariationBlocks {
    std::vector<Eigen::MatrixXd> A, B, C; // nodes 0..N
    std::vector<Eigen::MatrixXd> P, Q;    // nodes 0..N-1
    std::string hess_method;              // "autodiff" or "central-difference"
};

struct ConjugatePoint {
    int node = 0;
    double time = 0.0;
};

struct SpeedProfile {
    Eigen::VectorXd speeds; // K(x_k) |v_k| per node
    double range = 0.0;     // max - min
    double mean = 0.0;
};

struct OptimalityReport {
    Eigen::VectorXd speeds;
    double speed_range = 0.0;
    double speed_mean = 0.0;
    bool legendre_ok = false;
    double legendre_min_eig = 0.0; // min eigenvalue of P over scan nodes
    bool scanned = false;          // conjugate-point scan actually ran
    std::optional<ConjugatePoint> conjugate_point;
    double min_det = 1.0;
    double symplectic_residual = 0.0; // max_k |U_k^T V_k - V_k^T U_k|_inf
    Eigen::VectorXd det_sequence;     // det(U_k), k = 0..N
    bool is_minimizer = false;
    std::string hess_method;
};

SpeedProfile speed_profile(const KernelExpr& k, const Trajectory& traj);

// Analytic blocks for the energy Lagrangian:
//   A = (grad K grad K^T + K hess K) |v|^2,  B = 2 K grad K v^T,  C = K^2 I.
// The kernel Hessian uses nested forward-mode duals, falling back to central
// differences of the gradient where the duals are unavailable; the method
// used is recorded.
SecondVariationBlocks second_variation_blocks(const KernelExpr& k, const Trajectory& traj);

// Symplectic-Euler scan of the linear Hamiltonian system
//   V_{k+1} = V_k - h_k Q_k U_k,   P_k Z_k = V_{k+1},   U_{k+1} = U_k - h_k Z_k
// from U_0 = I, V_0 = 0.  A conjugate point is declared when any det(U_k)
// falls to <= 1e-12 or changes sign.  Requires P_k positive definite at all
// scan nodes; otherwise the report carries legendre_ok = false and the scan
// is skipped.  No inverse of P and no Riccati solution W is ever formed.
OptimalityReport conjugate_point_scan(const SecondVariationBlocks& blocks,
                                      const Eigen::VectorXd& times);

// Full a-posteriori verification of an energy trajectory: speed profile,
// Legendre condition, conjugate-point scan.  For a length trajectory the
// Legendre condition fails structurally (L_vv is only positive
// semidefinite), so the report carries legendre_ok = false and no scan runs.
OptimalityReport verify_minimizer(const KernelExpr& k, const Trajectory& traj);

} // namespace geodot
