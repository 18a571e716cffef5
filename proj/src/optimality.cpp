#include "geodot/optimality.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace geodot {

SpeedProfile speed_profile(const KernelExpr& k, const Trajectory& traj) {
    const int m = traj.num_nodes();
    SpeedProfile sp;
    sp.speeds.resize(m);
    for (int i = 0; i < m; ++i)
        sp.speeds[i] = k.value(traj.states.row(i).transpose()) * traj.derivs.row(i).norm();
    sp.range = sp.speeds.maxCoeff() - sp.speeds.minCoeff();
    sp.mean = sp.speeds.mean();
    return sp;
}

namespace {

Eigen::MatrixXd hessian_central_diff(const KernelExpr& k, const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    double h = 1e-5 * (1.0 + x.norm());
    Eigen::MatrixXd H(n, n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        H.col(i) = (k.gradient(xp) - k.gradient(xm)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

} // namespace

SecondVariationBlocks second_variation_blocks(const KernelExpr& k, const Trajectory& traj) {
    const int m = traj.num_nodes();
    const int n = traj.dim();
    SecondVariationBlocks blk;
    blk.A.reserve(m);
    blk.B.reserve(m);
    blk.C.reserve(m);
    blk.hess_method = "autodiff";
    for (int i = 0; i < m; ++i) {
        Eigen::VectorXd x = traj.states.row(i).transpose();
        Eigen::VectorXd v = traj.derivs.row(i).transpose();
        double K = k.value(x);
        Eigen::VectorXd g = k.gradient(x);
        Eigen::MatrixXd H;
        bool fell_back = false;
        try {
            H = k.hessian(x);
            if (!H.allFinite()) fell_back = true;
        } catch (const DomainError&) {
            fell_back = true;
        }
        if (fell_back) {
            H = hessian_central_diff(k, x);
            blk.hess_method = "central-difference";
        }
        if (!H.allFinite()) throw DomainError("kernel second derivatives are not finite");
        double s = v.squaredNorm();
        blk.A.push_back(((g * g.transpose() + K * H) * s).eval());
        blk.B.push_back((2.0 * K * g * v.transpose()).eval());
        blk.C.push_back((K * K * Eigen::MatrixXd::Identity(n, n)).eval());
    }
    blk.P.reserve(m - 1);
    blk.Q.reserve(m - 1);
    for (int i = 0; i + 1 < m; ++i) {
        double h = traj.times[i + 1] - traj.times[i];
        Eigen::MatrixXd Bdot = (blk.B[i + 1] - blk.B[i]) / h;
        blk.P.push_back(blk.C[i]);
        blk.Q.push_back((blk.A[i] - 0.5 * (Bdot + Bdot.transpose())).eval());
    }
    return blk;
}

OptimalityReport conjugate_point_scan(const SecondVariationBlocks& blocks,
                                      const Eigen::VectorXd& times) {
    const int steps = static_cast<int>(blocks.P.size());
    if (steps == 0 || times.size() != steps + 1)
        throw DomainError("scan blocks and mesh sizes are inconsistent");
    const int n = static_cast<int>(blocks.P.front().rows());

    OptimalityReport rep;
    rep.hess_method = blocks.hess_method;

    double min_eig = std::numeric_limits<double>::infinity();
    for (const auto& P : blocks.P) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    rep.legendre_min_eig = min_eig;
    rep.legendre_ok = min_eig > 0.0;
    if (!rep.legendre_ok) return rep;

    Eigen::MatrixXd U = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
    rep.det_sequence.resize(steps + 1);
    rep.det_sequence[0] = 1.0;
    rep.min_det = 1.0;
    rep.symplectic_residual = 0.0;
    double prev_det = 1.0;
    for (int k = 0; k < steps; ++k) {
        double h = times[k + 1] - times[k];
        V -= h * blocks.Q[k] * U;
        Eigen::MatrixXd Z = blocks.P[k].ldlt().solve(V);
        U -= h * Z;
        double det = U.determinant();
        rep.det_sequence[k + 1] = det;
        rep.min_det = std::min(rep.min_det, det);
        Eigen::MatrixXd S = U.transpose() * V - V.transpose() * U;
        rep.symplectic_residual = std::max(rep.symplectic_residual, S.cwiseAbs().maxCoeff());
        if (!rep.conjugate_point && (det <= 1e-12 || det * prev_det < 0.0))
            rep.conjugate_point = ConjugatePoint{k + 1, times[k + 1]};
        prev_det = det;
    }
    rep.scanned = true;
    return rep;
}

OptimalityReport verify_minimizer(const KernelExpr& k, const Trajectory& traj) {
    OptimalityReport rep;
    SpeedProfile sp = speed_profile(k, traj);
    rep.speeds = sp.speeds;
    rep.speed_range = sp.range;
    rep.speed_mean = sp.mean;

    if (traj.kind == CostKind::Length) {
        // L_vv for the length Lagrangian is (K/|v|)(I - vhat vhat^T), which
        // annihilates v: the Legendre condition fails structurally and the
        // sufficiency machinery does not apply.
        rep.legendre_ok = false;
        rep.legendre_min_eig = 0.0;
        rep.is_minimizer = false;
        return rep;
    }

    SecondVariationBlocks blocks = second_variation_blocks(k, traj);
    OptimalityReport scan = conjugate_point_scan(blocks, traj.times);
    rep.legendre_ok = scan.legendre_ok;
    rep.legendre_min_eig = scan.legendre_min_eig;
    rep.scanned = scan.scanned;
    rep.conjugate_point = scan.conjugate_point;
    rep.min_det = scan.min_det;
    rep.symplectic_residual = scan.symplectic_residual;
    rep.det_sequence = scan.det_sequence;
    rep.hess_method = scan.hess_method;
    rep.is_minimizer = rep.legendre_ok && !rep.conjugate_point;
    return rep;
}

} // namespace geodot
