#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"

#include "geodot/geodesic.hpp"
#include "geodot/transport.hpp"

using namespace geodot;

namespace {

std::shared_ptr<const KernelExpr> make_kernel(const std::string& src, int dim) {
    return std::make_shared<const KernelExpr>(KernelExpr::parse(src, dim));
}

Eigen::VectorXd vec2(double x, double y) {
    Eigen::VectorXd v(2);
    v << x, y;
    return v;
}

Eigen::VectorXd vec3(double x, double y, double z) {
    Eigen::VectorXd v(3);
    v << x, y, z;
    return v;
}

GeodesicProblem standard_problem(const std::string& ker, int dim, const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b, CostKind kind) {
    GeodesicProblem p;
    p.a = a;
    p.b = b;
    p.kernel = make_kernel(ker, dim);
    p.kind = kind;
    return p;
}

GeodesicProblem e1_problem(CostKind kind) {
    return standard_problem("1/(0.5+norm(x))", 2, vec2(-2, 1), vec2(2, 0), kind);
}

GeodesicProblem e2_problem(CostKind kind) {
    return standard_problem("sin(x1)-sin(x2)+3", 2, vec2(-7, -7), vec2(7, 7), kind);
}

GeodesicProblem e3_problem(CostKind kind) {
    return standard_problem("norm(x)+0.1", 3, vec3(0.8, 0.8, -0.8), vec3(0.8, 0.8, 0.8), kind);
}

} // namespace

TEST_CASE("euler-lagrange right-hand sides match hand evaluations") {
    auto one = make_kernel("1", 2);
    auto cone = make_kernel("norm(x)+0.1", 2);
    Eigen::VectorXd x = vec2(1, 0), v = vec2(0, 1);

    CHECK(el_rhs_energy(*one, x, v).norm() == 0.0);
    CHECK(el_rhs_length(*one, x, v).norm() == 0.0);
    CHECK(el_rhs_energy(*cone, x, Eigen::VectorXd::Zero(2)).norm() == 0.0);

    // K = |x|+0.1 at x=(1,0), v=(0,1): grad K = (1,0), grad.v = 0, so both
    // kinds give (|v|^2/K) grad K = (1/1.1, 0).
    Eigen::VectorXd ae = el_rhs_energy(*cone, x, v);
    Eigen::VectorXd al = el_rhs_length(*cone, x, v);
    CHECK(ae[0] == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
    CHECK(ae[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((ae - al).norm() < 1e-14);

    // |v|^2 homogeneity of the length RHS.
    Eigen::VectorXd al2 = el_rhs_length(*cone, x, 2.0 * v);
    CHECK((al2 - 4.0 * al).norm() < 1e-12);

    // The length Lagrangian is singular at v = 0.
    CHECK_THROWS_AS(el_rhs_length(*cone, x, Eigen::VectorXd::Zero(2)), DomainError);

    // Nonpositive kernel value.
    auto bad = make_kernel("x1", 1);
    Eigen::VectorXd xm = Eigen::VectorXd::Constant(1, -1.0);
    Eigen::VectorXd vm = Eigen::VectorXd::Constant(1, 1.0);
    CHECK_THROWS_AS(el_rhs_energy(*bad, xm, vm), PositivityError);
}

TEST_CASE("straight_line_init lays out the chord") {
    Trajectory t = straight_line_init(vec2(0, 0), vec2(1, 1), 3);
    REQUIRE(t.num_nodes() == 3);
    CHECK(t.states(0, 0) == 0.0);
    CHECK(t.states(1, 0) == doctest::Approx(0.5));
    CHECK(t.states(1, 1) == doctest::Approx(0.5));
    CHECK(t.states(2, 0) == 1.0);
    for (int k = 0; k < 3; ++k) {
        CHECK(t.derivs(k, 0) == doctest::Approx(1.0));
        CHECK(t.derivs(k, 1) == doctest::Approx(1.0));
    }
    CHECK(t.alpha == 0.0);

    Trajectory c = straight_line_init(vec2(2, 3), vec2(2, 3), 5);
    CHECK((c.states.rowwise() - vec2(2, 3).transpose().eval()).norm() == 0.0);
    CHECK(c.derivs.norm() == 0.0);
}

TEST_CASE("solve_bvp reproduces the straight line in a uniform environment") {
    GeodesicProblem p = standard_problem("1", 2, vec2(-1, 2), vec2(3, -1), CostKind::Energy);
    Trajectory init = straight_line_init(p.a, p.b, p.mesh_n);
    Trajectory t = solve_bvp(p, init, 1.0);
    CHECK(t.residual <= p.tol);
    double dev = 0.0;
    for (int k = 0; k < t.num_nodes(); ++k) {
        Eigen::VectorXd line = p.a + t.times[k] * (p.b - p.a);
        dev = std::max(dev, (t.states.row(k).transpose() - line).cwiseAbs().maxCoeff());
    }
    CHECK(dev <= 1e-10);
}

TEST_CASE("solve_bvp at alpha=1 attains the reported two-point costs") {
    // Warm-started from the penultimate homotopy level: the straight line is
    // in the basin of a different critical point for this kernel.
    for (CostKind kind : {CostKind::Energy, CostKind::Length}) {
        GeodesicProblem p = e1_problem(kind);
        GeodesicResult r = solve_geodesic(p);
        REQUIRE(r.trace.size() >= 2);
        const Trajectory& warm = r.trace[r.trace.size() - 2].second;
        Trajectory t = solve_bvp(p, warm, 1.0);
        double c = path_cost(*p.kernel, t, kind);
        double target = kind == CostKind::Energy ? 2.2917 : 2.1409;
        CHECK(std::abs(c - target) <= 1e-3 * target);
    }
}

TEST_CASE("solve_geodesic matches the reported costs on the two-point examples") {
    struct Row {
        GeodesicProblem p;
        double target;
    };
    const std::vector<Row> rows = {
        {e1_problem(CostKind::Energy), 2.2917}, {e1_problem(CostKind::Length), 2.1409},
        {e3_problem(CostKind::Energy), 1.9684}, {e3_problem(CostKind::Length), 1.9841},
    };
    for (const auto& row : rows) {
        GeodesicResult r = solve_geodesic(row.p);
        CHECK(std::abs(r.cost - row.target) <= 1e-3 * row.target);
        CHECK(r.trajectory.alpha == 1.0);
        // Boundary conditions are imposed, not solved for.
        CHECK((r.trajectory.states.row(0).transpose() - row.p.a).norm() == 0.0);
        CHECK((r.trajectory.states.bottomRows(1).transpose() - row.p.b).norm() == 0.0);
    }
}

TEST_CASE("solve_geodesic handles the large-amplitude oscillatory kernel") {
    GeodesicResult e = solve_geodesic(e2_problem(CostKind::Energy));
    CHECK(std::abs(e.cost - 1410.8) <= 1e-3 * 1410.8);
    GeodesicResult l = solve_geodesic(e2_problem(CostKind::Length));
    CHECK(std::abs(l.cost - 53.119) <= 1e-3 * 53.119);
}

TEST_CASE("uniform environment: solved trajectory stays on the straight line") {
    std::mt19937 rng(20240817);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int dim = 1; dim <= 3; ++dim) {
        for (int rep = 0; rep < 3; ++rep) {
            Eigen::VectorXd a(dim), b(dim);
            for (int i = 0; i < dim; ++i) {
                a[i] = U(rng);
                b[i] = U(rng);
            }
            if ((a - b).norm() < 1e-3) b[0] += 1.0;
            for (CostKind kind : {CostKind::Energy, CostKind::Length}) {
                GeodesicProblem p;
                p.a = a;
                p.b = b;
                p.kernel = make_kernel("1", dim);
                p.kind = kind;
                GeodesicResult r = solve_geodesic(p);
                double dev = 0.0;
                const Trajectory& t = r.trajectory;
                for (int k = 0; k < t.num_nodes(); ++k) {
                    Eigen::VectorXd line = a + t.times[k] * (b - a);
                    dev = std::max(dev,
                                   (t.states.row(k).transpose() - line).cwiseAbs().maxCoeff());
                }
                CHECK(dev <= 10.0 * p.tol);
                // The homotopy trace is a stack of identical straight lines.
                for (const auto& [alpha, traj] : r.trace) {
                    (void)alpha;
                    double tdev = 0.0;
                    for (int k = 0; k < traj.num_nodes(); ++k) {
                        Eigen::VectorXd line = a + traj.times[k] * (b - a);
                        tdev = std::max(
                            tdev, (traj.states.row(k).transpose() - line).cwiseAbs().maxCoeff());
                    }
                    CHECK(tdev <= 10.0 * p.tol);
                }
            }
        }
    }
}

TEST_CASE("energy solutions have constant speed K|v|") {
    for (auto p : {e1_problem(CostKind::Energy), e3_problem(CostKind::Energy)}) {
        GeodesicResult r = solve_geodesic(p);
        const Trajectory& t = r.trajectory;
        double mn = std::numeric_limits<double>::infinity(), mx = 0.0, mean = 0.0;
        for (int k = 0; k < t.num_nodes(); ++k) {
            double s = p.kernel->value(t.states.row(k).transpose()) * t.derivs.row(k).norm();
            mn = std::min(mn, s);
            mx = std::max(mx, s);
            mean += s;
        }
        mean /= t.num_nodes();
        CHECK(mx - mn <= 1e-6 * mean);
    }
}

TEST_CASE("length and energy minimizers trace the same curve") {
    for (auto make : {e1_problem, e3_problem}) {
        GeodesicResult ey = solve_geodesic(make(CostKind::Energy));
        GeodesicResult lz = solve_geodesic(make(CostKind::Length));
        double E = ey.cost, L = lz.cost;
        CHECK(std::abs(L * L - 2.0 * E) <= 1e-3 * (1.0 + 2.0 * E));
        // Parameterization independence: the length functional evaluated on
        // the energy minimizer agrees with the length minimum.
        double Ly = path_cost(*make(CostKind::Energy).kernel, ey.trajectory, CostKind::Length);
        CHECK(std::abs(Ly - L) <= 1e-4 * (1.0 + L));
    }
}

TEST_CASE("derivs are consistent with a finite-difference reconstruction") {
    GeodesicResult r = solve_geodesic(e1_problem(CostKind::Energy));
    const Trajectory& t = r.trajectory;
    double h = t.times[1] - t.times[0];
    double dev = 0.0;
    for (int k = 1; k + 1 < t.num_nodes(); ++k) {
        Eigen::VectorXd fd =
            (t.states.row(k + 1) - t.states.row(k - 1)).transpose() / (t.times[k + 1] - t.times[k - 1]);
        dev = std::max(dev, (fd - t.derivs.row(k).transpose()).cwiseAbs().maxCoeff());
    }
    double vmax = t.derivs.cwiseAbs().maxCoeff();
    CHECK(dev <= 10.0 * h * (1.0 + vmax));
}

TEST_CASE("length integrand Hessian in v has the expected eigenstructure") {
    // (K/|v|^3)(|v|^2 I - v v^T) annihilates v and acts as K/|v| on its
    // orthogonal complement.
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    auto k2 = make_kernel("1/(0.5+norm(x))", 2);
    auto k3 = make_kernel("norm(x)+0.1", 3);
    int checked = 0;
    while (checked < 50) {
        const bool use3 = checked % 2 == 0;
        const int n = use3 ? 3 : 2;
        Eigen::VectorXd x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = U(rng);
            v[i] = U(rng);
        }
        if (v.norm() < 1e-2 || x.norm() < 1e-2) continue;
        double K = use3 ? k3->value(x) : k2->value(x);
        double s = v.norm();
        Eigen::MatrixXd M =
            (K / (s * s * s)) * (s * s * Eigen::MatrixXd::Identity(n, n) - v * v.transpose());
        CHECK((M * v).norm() <= 1e-10 * (1.0 + K / s));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        Eigen::VectorXd ev = es.eigenvalues();
        std::sort(ev.data(), ev.data() + n);
        CHECK(std::abs(ev[0]) <= 1e-10 * (1.0 + K / s));
        for (int i = 1; i < n; ++i) CHECK(std::abs(ev[i] - K / s) <= 1e-10 * (K / s));
        ++checked;
    }
}

TEST_CASE("solve_geodesic reports the last good homotopy level on failure") {
    // 1/x1 changes sign across the chord, so every ladder dies once the
    // blended kernel loses positivity along the path.
    GeodesicProblem p =
        standard_problem("1/x1", 2, vec2(-1.0, -0.5), vec2(1.0, 0.5), CostKind::Energy);
    p.homotopy_steps = 5;
    p.homotopy_steps_max = 11;
    try {
        solve_geodesic(p);
        FAIL("expected SolveError");
    } catch (const SolveError& e) {
        CHECK(e.last_alpha >= 0.0);
        CHECK(e.last_alpha < 0.6);
    }
}

TEST_CASE("coincident endpoints yield the trivial zero-cost path") {
    GeodesicProblem p = standard_problem("norm(x)+0.1", 2, vec2(1, 1), vec2(1, 1), CostKind::Energy);
    GeodesicResult r = solve_geodesic(p);
    CHECK(r.cost == 0.0);
    CHECK(r.trajectory.derivs.norm() == 0.0);
}

TEST_CASE("config validation rejects malformed problems") {
    GeodesicProblem p = e1_problem(CostKind::Energy);
    p.tol = 0.0;
    CHECK_THROWS_AS(solve_geodesic(p), ConfigError);
    p = e1_problem(CostKind::Energy);
    p.homotopy_steps = 60;
    CHECK_THROWS_AS(solve_geodesic(p), ConfigError);
    p = e1_problem(CostKind::Energy);
    p.kernel.reset();
    CHECK_THROWS_AS(solve_geodesic(p), ConfigError);
    p = e1_problem(CostKind::Energy);
    p.a = vec3(0, 0, 0);
    CHECK_THROWS_AS(solve_geodesic(p), ConfigError);
}
