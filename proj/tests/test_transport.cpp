#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <random>

#include "doctest.h"

#include "geodot/optimality.hpp"
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

DiscreteMeasure uniform_measure(std::vector<Eigen::VectorXd> pts) {
    return DiscreteMeasure::uniform(std::move(pts));
}

CostMatrix matrix_of(std::initializer_list<std::initializer_list<double>> rows) {
    CostMatrix cm;
    cm.entries.resize(static_cast<int>(rows.size()),
                      static_cast<int>(rows.begin()->size()));
    int i = 0;
    for (const auto& row : rows) {
        int j = 0;
        for (double v : row) cm.entries(i, j++) = v;
        ++i;
    }
    return cm;
}

CostMatrix random_matrix(int k, std::mt19937& rng, double lo = 0.0, double hi = 2.0) {
    std::uniform_real_distribution<double> U(lo, hi);
    CostMatrix cm;
    cm.entries.resize(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) cm.entries(i, j) = U(rng);
    return cm;
}

DiscreteMeasure uniform_weights_only(int k) {
    DiscreteMeasure m;
    m.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    m.points.resize(k, Eigen::VectorXd::Zero(1));
    for (int i = 0; i < k; ++i) m.points[i][0] = i;
    return m;
}

} // namespace

TEST_CASE("path_cost quadrature is exact for uniform straight lines") {
    auto one = make_kernel("1", 2);
    Trajectory t = straight_line_init(vec2(1, 2), vec2(4, 6), 101);
    CHECK(path_cost(*one, t, CostKind::Length) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(path_cost(*one, t, CostKind::Energy) == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("path_cost agrees with the constant-speed energy estimator") {
    GeodesicProblem p;
    p.a = vec2(-2, 1);
    p.b = vec2(2, 0);
    p.kernel = make_kernel("1/(0.5+norm(x))", 2);
    p.kind = CostKind::Energy;
    GeodesicResult r = solve_geodesic(p);
    CHECK(std::abs(r.cost - 2.2917) <= 1e-3 * 2.2917);
    CHECK(path_cost(*p.kernel, r.trajectory, CostKind::Energy) == doctest::Approx(r.cost));

    // E = (1/2) mean(K |v|)^2 on a constant-speed minimizer.
    SpeedProfile sp = speed_profile(*p.kernel, r.trajectory);
    double est = 0.5 * sp.mean * sp.mean;
    CHECK(std::abs(r.cost - est) <= 1e-6 * est);
}

TEST_CASE("discrete measures validate their invariants") {
    DiscreteMeasure m = uniform_measure({vec2(0, 0), vec2(1, 0), vec2(0, 1)});
    CHECK(m.weights[0] == doctest::Approx(1.0 / 3));
    m.validate();

    DiscreteMeasure bad = m;
    bad.weights[0] = -bad.weights[0];
    CHECK_THROWS_AS(bad.validate(), DomainError);

    bad = m;
    bad.weights[0] *= 1.5;
    CHECK_THROWS_AS(bad.validate(), DomainError);

    bad = m;
    bad.points[1] = bad.points[0];
    CHECK_THROWS_AS(bad.validate(), DomainError);

    bad = m;
    bad.points[2] = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("single-entry cost matrices match closed forms in a uniform environment") {
    auto one = make_kernel("1", 2);
    DiscreteMeasure X = uniform_measure({vec2(0, 0)});
    DiscreteMeasure Y = uniform_measure({vec2(1, 1)});
    CostMatrixConfig cfg;
    CostMatrix L = build_cost_matrix(one, X, Y, CostKind::Length, cfg);
    CHECK(L.entries(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
    CostMatrix E = build_cost_matrix(one, X, Y, CostKind::Energy, cfg);
    CHECK(E.entries(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(E.entry_info(0, 0).verified);
    CHECK(E.entry_info(0, 0).is_minimizer);
}

TEST_CASE("cost-matrix entries equal independently solved two-point problems") {
    auto ker = make_kernel("1/(0.5+norm(x))", 2);
    DiscreteMeasure X = uniform_measure({vec2(-2, 1), vec2(-1.5, 0.5)});
    DiscreteMeasure Y = uniform_measure({vec2(2, 0), vec2(1.5, -0.5)});
    CostMatrixConfig cfg;
    cfg.jobs = 2;
    CostMatrix C = build_cost_matrix(ker, X, Y, CostKind::Energy, cfg);
    REQUIRE(C.entries.rows() == 2);
    REQUIRE(C.entries.cols() == 2);
    CHECK(C.entries.minCoeff() > 0.0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            CHECK(C.entry_info(i, j).verified);
            CHECK(C.entry_info(i, j).is_minimizer);
        }

    GeodesicProblem p;
    p.a = X.points[1];
    p.b = Y.points[0];
    p.kernel = ker;
    p.kind = CostKind::Energy;
    p.homotopy_steps = cfg.homotopy_steps;
    GeodesicResult r = solve_geodesic(p);
    CHECK(std::abs(C.entries(1, 0) - r.cost) <= 1e-6 * (1.0 + r.cost));
}

TEST_CASE("cost matrices are symmetric under endpoint swap") {
    auto ker = make_kernel("1/(0.5+norm(x))", 2);
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    for (int rep = 0; rep < 2; ++rep) {
        Eigen::VectorXd a = vec2(U(rng), U(rng));
        Eigen::VectorXd b = vec2(U(rng), U(rng));
        if ((a - b).norm() < 0.5) b[0] += 1.0;
        for (CostKind kind : {CostKind::Energy, CostKind::Length}) {
            GeodesicProblem p;
            p.kernel = ker;
            p.kind = kind;
            p.homotopy_steps = 5;
            p.a = a;
            p.b = b;
            double fwd = solve_geodesic(p).cost;
            std::swap(p.a, p.b);
            double rev = solve_geodesic(p).cost;
            CHECK(std::abs(fwd - rev) <= 1e-4 * std::max(fwd, rev));
        }
    }
}

TEST_CASE("unsolvable entries are reported with their indices") {
    auto ker = make_kernel("1/x1", 2);
    DiscreteMeasure X = uniform_measure({vec2(-1.0, -0.5)});
    DiscreteMeasure Y = uniform_measure({vec2(1.0, 0.5)});
    CostMatrixConfig cfg;
    cfg.homotopy_steps = 5;
    cfg.homotopy_steps_max = 11;
    try {
        build_cost_matrix(ker, X, Y, CostKind::Energy, cfg);
        FAIL("expected UnsolvedEntriesError");
    } catch (const UnsolvedEntriesError& e) {
        REQUIRE(e.entries.size() == 1);
        CHECK(e.entries[0].first == 0);
        CHECK(e.entries[0].second == 0);
    }
}

TEST_CASE("cost matrices round-trip through the disk cache") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "geodot_cache_test";
    fs::remove_all(dir);
    auto ker = make_kernel("1/(0.5+norm(x))", 2);
    DiscreteMeasure X = uniform_measure({vec2(-2, 1), vec2(-1.5, 0.5)});
    DiscreteMeasure Y = uniform_measure({vec2(2, 0)});
    CostMatrixConfig cfg;
    cfg.cache_dir = dir.string();
    CostMatrix first = build_cost_matrix(ker, X, Y, CostKind::Length, cfg);
    bool has_file = false;
    for (const auto& ent : fs::directory_iterator(dir)) {
        (void)ent;
        has_file = true;
    }
    CHECK(has_file);
    CostMatrix second = build_cost_matrix(ker, X, Y, CostKind::Length, cfg);
    CHECK((first.entries - second.entries).norm() == 0.0);
    CHECK(second.info.size() == first.info.size());
    // A different kind misses the cache and recomputes.
    CostMatrix energy = build_cost_matrix(ker, X, Y, CostKind::Energy, cfg);
    CHECK(energy.entries(0, 0) != doctest::Approx(first.entries(0, 0)).epsilon(1e-3));
    fs::remove_all(dir);
}

TEST_CASE("assignment solves the textbook instances") {
    DiscreteMeasure m2 = uniform_weights_only(2);
    TransportPlan p1 = solve_assignment(matrix_of({{1, 2}, {2, 1}}), m2, m2);
    CHECK(p1.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(p1.coupling(1, 1) == doctest::Approx(0.5));
    CHECK(p1.total_cost == doctest::Approx(1.0));

    TransportPlan p2 = solve_assignment(matrix_of({{0, 1}, {1, 0}}), m2, m2);
    CHECK(p2.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(p2.total_cost == doctest::Approx(0.0));

    // Ties resolve to the lowest row index: constant matrix gives identity.
    TransportPlan p3 = solve_assignment(matrix_of({{1, 1}, {1, 1}}), m2, m2);
    CHECK(p3.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(p3.coupling(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("assignment rejects non-square or non-uniform inputs") {
    DiscreteMeasure m2 = uniform_weights_only(2);
    DiscreteMeasure m3 = uniform_weights_only(3);
    CostMatrix rect;
    rect.entries = Eigen::MatrixXd::Ones(2, 3);
    CHECK_THROWS_AS(solve_assignment(rect, m2, m3), DomainError);

    DiscreteMeasure skew = m2;
    skew.weights << 0.3, 0.7;
    CHECK_THROWS_AS(solve_assignment(matrix_of({{1, 2}, {2, 1}}), skew, m2), DomainError);
}

TEST_CASE("assignment equals the brute-force oracle on random instances") {
    std::mt19937 rng(20250816);
    for (int rep = 0; rep < 60; ++rep) {
        int k = 2 + rep % 7; // sizes 2..8
        CostMatrix C = random_matrix(k, rng);
        DiscreteMeasure m = uniform_weights_only(k);
        TransportPlan fast = solve_assignment(C, m, m);
        TransportPlan exact = brute_force_assignment(C);
        CHECK(std::abs(fast.total_cost - exact.total_cost) <= 1e-12 * (1.0 + k));
        // Permutation structure: one entry of 1/k per row and column.
        for (int i = 0; i < k; ++i) {
            CHECK(fast.coupling.row(i).sum() == doctest::Approx(1.0 / k).epsilon(1e-12));
            CHECK(fast.coupling.col(i).sum() == doctest::Approx(1.0 / k).epsilon(1e-12));
            CHECK((fast.coupling.row(i).array() > 0.0).count() == 1);
        }
        CHECK(fast.row_residual <= 1e-8);
        CHECK(fast.col_residual <= 1e-8);
    }
}

TEST_CASE("brute force breaks ties lexicographically and bounds its size") {
    TransportPlan p = brute_force_assignment(matrix_of({{1, 1}, {1, 1}}));
    CHECK(p.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(p.coupling(1, 1) == doctest::Approx(0.5));
    CostMatrix big;
    big.entries = Eigen::MatrixXd::Ones(10, 10);
    CHECK_THROWS_AS(brute_force_assignment(big), DomainError);
}

TEST_CASE("sinkhorn on a constant cost returns the product plan") {
    DiscreteMeasure mu = uniform_weights_only(3);
    DiscreteMeasure nu = uniform_weights_only(4);
    mu.weights << 0.2, 0.3, 0.5;
    nu.weights = Eigen::VectorXd::Constant(4, 0.25);
    CostMatrix C;
    C.entries = Eigen::MatrixXd::Constant(3, 4, 0.7);
    TransportPlan p = sinkhorn(C, mu, nu, 0.5);
    CHECK(p.converged);
    Eigen::MatrixXd prod = mu.weights * nu.weights.transpose();
    CHECK((p.coupling - prod).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(p.total_cost == doctest::Approx(0.7));
}

TEST_CASE("sinkhorn matches the 2x2 entropic fixed point solved by bisection") {
    DiscreteMeasure m2 = uniform_weights_only(2);
    CostMatrix C = matrix_of({{0, 1}, {1, 0}});
    const double eps = 1.0;
    TransportPlan p = sinkhorn(C, m2, m2, eps);
    REQUIRE(p.converged);

    // By symmetry pi = [[p, 1/2-p], [1/2-p, p]]; stationarity of the
    // entropic objective gives log(p/(1/2-p)) = 1/eps, solved by bisection.
    double lo = 1e-12, hi = 0.5 - 1e-12;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double f = std::log(mid / (0.5 - mid)) - 1.0 / eps;
        (f < 0.0 ? lo : hi) = mid;
    }
    double pstar = 0.5 * (lo + hi);
    CHECK(std::abs(p.coupling(0, 0) - pstar) <= 1e-7);
    CHECK(std::abs(p.coupling(1, 1) - pstar) <= 1e-7);
    CHECK(std::abs(p.coupling(0, 1) - (0.5 - pstar)) <= 1e-7);
}

TEST_CASE("sinkhorn marginals are feasible and the plan is entropically suboptimal") {
    std::mt19937 rng(31337);
    for (int rep = 0; rep < 5; ++rep) {
        CostMatrix C = random_matrix(5, rng);
        DiscreteMeasure m = uniform_weights_only(5);
        TransportPlan sink = sinkhorn(C, m, m, 0.5);
        CHECK(sink.converged);
        CHECK(sink.row_residual <= 1e-8);
        CHECK(sink.col_residual <= 1e-8);
        TransportPlan assign = solve_assignment(C, m, m);
        CHECK(plan_cost(C, sink) >= plan_cost(C, assign) - 1e-10);
    }
}

TEST_CASE("sinkhorn cost is monotone as epsilon decreases") {
    std::mt19937 rng(4242);
    CostMatrix C = random_matrix(5, rng);
    DiscreteMeasure m = uniform_weights_only(5);
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1.0, 0.5, 0.25, 0.125}) {
        TransportPlan p = sinkhorn(C, m, m, eps);
        REQUIRE(p.converged);
        CHECK(p.total_cost <= prev + 1e-8);
        prev = p.total_cost;
    }
}

TEST_CASE("log-domain stabilization agrees with the plain iteration") {
    // Shifting every cost by a constant multiplies the Gibbs kernel by a
    // scalar that the scalings absorb, so the optimal coupling is unchanged;
    // the shift pushes max c/eps far beyond the switch threshold.
    std::mt19937 rng(777);
    CostMatrix C = random_matrix(3, rng, 0.0, 0.8);
    DiscreteMeasure m = uniform_weights_only(3);
    const double eps = 0.1; // max c/eps <= 8: plain domain
    TransportPlan plain = sinkhorn(C, m, m, eps);
    REQUIRE(plain.converged);
    CostMatrix shifted = C;
    shifted.entries.array() += 100.0; // max c/eps >= 1000: log domain
    TransportPlan logdom = sinkhorn(shifted, m, m, eps);
    REQUIRE(logdom.converged);
    CHECK((plain.coupling - logdom.coupling).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(std::abs(logdom.total_cost - plain.total_cost - 100.0) <= 1e-6);
    CHECK(logdom.row_residual <= 1e-8);
    CHECK(logdom.col_residual <= 1e-8);
}

TEST_CASE("sinkhorn flags non-convergence at the iteration cap") {
    std::mt19937 rng(11);
    CostMatrix C = random_matrix(4, rng, 1.0, 2.0);
    DiscreteMeasure m = uniform_weights_only(4);
    TransportPlan p = sinkhorn(C, m, m, 0.002, 1e-9, 2);
    CHECK(!p.converged);
    CHECK(p.iterations == 2);
}

TEST_CASE("plan_cost recomputes totals and validates shapes") {
    CostMatrix C = matrix_of({{1, 2}, {2, 1}});
    TransportPlan zero;
    zero.coupling = Eigen::MatrixXd::Zero(2, 2);
    CHECK(plan_cost(C, zero) == 0.0);

    DiscreteMeasure m2 = uniform_weights_only(2);
    TransportPlan ident = solve_assignment(C, m2, m2);
    CHECK(plan_cost(C, ident) == doctest::Approx(1.0));
    CHECK(plan_cost(C, ident) == doctest::Approx(ident.total_cost).epsilon(1e-12));

    TransportPlan bad;
    bad.coupling = Eigen::MatrixXd::Zero(3, 2);
    CHECK_THROWS_AS(plan_cost(C, bad), DomainError);
}
