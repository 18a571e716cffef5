#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geodot/optimality.hpp"
#include "geodot/transport.hpp"

namespace geodot {

enum class RunMode { Geodesic, Transport };
enum class CostSelection { Length, Energy, Both };
enum class OTMethod { Assignment, Sinkhorn };

const char* run_mode_name(RunMode m);
const char* cost_selection_name(CostSelection c);
const char* ot_method_name(OTMethod m);

// A measure given either as explicit points (with optional weights,
// defaulting to uniform) or as an axis-aligned box carrying a per-axis
// count; boxes realize to the inclusive uniform grid in row-major axis
// order (first axis slowest).
struct MeasureSpec {
    std::vector<Eigen::VectorXd> points;
    Eigen::VectorXd weights; // empty -> uniform
    bool is_box = false;
    Eigen::VectorXd box_lo, box_hi;
    std::vector<int> box_counts;

    DiscreteMeasure realize() const;
};

struct ProblemSpec {
    RunMode mode = RunMode::Geodesic;
    std::string kernel_expr;
    int dim = 0;
    CostSelection cost = CostSelection::Both;

    Eigen::VectorXd a, b;          // geodesic mode
    MeasureSpec source, target;    // transport mode

    double tol = 1e-4;
    int mesh_n = 101;
    int homotopy_steps = 21; // default 21 (geodesic), 5 (transport)
    int homotopy_steps_max = 51;
    int max_newton_iter = 50;

    OTMethod method = OTMethod::Assignment;
    double epsilon = 0.0; // required > 0 for sinkhorn
    double ot_tol = 1e-9;
    int ot_max_iter = 100000;

    std::string out_dir;
    std::string format = "csv"; // csv | structured-text
    int jobs = 1;
    std::string cache_dir;
    std::string name; // preset name when applicable

    std::shared_ptr<const KernelExpr> parse_kernel() const;
};

struct GeodesicReport {
    CostKind kind = CostKind::Energy;
    GeodesicResult result;
    std::optional<OptimalityReport> optimality;
};

struct TransportReport {
    CostKind kind = CostKind::Energy;
    CostMatrix matrix;
    TransportPlan plan;
};

struct ReportBundle {
    ProblemSpec spec;
    std::vector<GeodesicReport> geodesic;
    std::optional<double> eq_sq_residual;  // |L^2 - 2E|
    std::optional<double> eq_len_residual; // |L(z) - L(y)|
    std::vector<TransportReport> transport;
    std::vector<std::pair<std::string, double>> timings; // seconds; not exported
};

// Structured-text (JSON) configuration; throws ConfigError naming the
// offending field path.
ProblemSpec load_problem(const std::string& path);
ProblemSpec load_problem_text(const std::string& text);

// Catalog of the documented example configurations E1..E7, reproducing
// their kernels, endpoints, grids, and Sinkhorn epsilon values exactly.
ProblemSpec preset(const std::string& name);
std::vector<std::string> preset_names();

ReportBundle run_pipeline(const ProblemSpec& spec);

struct ManifestEntry {
    std::string path;
    std::uint64_t bytes = 0;
    std::string fnv1a64;
};

// Writes the plot-ready artifacts (trajectory/homotopy/detU/speed CSVs,
// cost matrix and plan CSVs, summary.json) plus manifest.json; returns the
// manifest.  Exports are deterministic: an unchanged bundle re-exports
// byte-identically.
std::vector<ManifestEntry> export_outputs(const ReportBundle& bundle, const std::string& outdir,
                                          const std::string& format);

// Human-readable run report for the CLI (includes wall-clock timings).
std::string summarize(const ReportBundle& bundle);

} // namespace geodot
