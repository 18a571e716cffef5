#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "geodot/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::string preset_name;
    std::string cost;
    std::string method;
    double epsilon = 0.0;
    bool epsilon_set = false;
    std::string out;
    int jobs = 0;
    std::string cache_dir;
};

void add_common(CLI::App* cmd, Options& o, bool transport_flags) {
    cmd->add_option("--config", o.config, "problem configuration file (JSON)");
    cmd->add_option("--preset", o.preset_name, "named example configuration (E1..E7)");
    cmd->add_option("--cost", o.cost, "cost functional to run")
        ->check(CLI::IsMember({"length", "energy", "both"}));
    if (transport_flags) {
        cmd->add_option("--method", o.method, "transport solver")
            ->check(CLI::IsMember({"assignment", "sinkhorn"}));
        cmd->add_option("--epsilon", o.epsilon, "entropic regularization strength")
            ->each([&o](const std::string&) { o.epsilon_set = true; });
    }
    cmd->add_option("--out", o.out, "export directory for run artifacts");
    cmd->add_option("--jobs", o.jobs, "worker threads for cost matrices")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--cache-dir", o.cache_dir, "cost-matrix cache directory");
}

geodot::ProblemSpec resolve_spec(const Options& o) {
    using geodot::ConfigError;
    if (!o.config.empty() && !o.preset_name.empty())
        throw ConfigError("pass either --config or --preset, not both");
    geodot::ProblemSpec spec;
    if (!o.preset_name.empty())
        spec = geodot::preset(o.preset_name);
    else if (!o.config.empty())
        spec = geodot::load_problem(o.config);
    else
        throw ConfigError("a problem is required: pass --config PATH or --preset NAME");

    if (o.cost == "length")
        spec.cost = geodot::CostSelection::Length;
    else if (o.cost == "energy")
        spec.cost = geodot::CostSelection::Energy;
    else if (o.cost == "both")
        spec.cost = geodot::CostSelection::Both;

    if (o.method == "assignment")
        spec.method = geodot::OTMethod::Assignment;
    else if (o.method == "sinkhorn")
        spec.method = geodot::OTMethod::Sinkhorn;
    if (o.epsilon_set) spec.epsilon = o.epsilon;
    if (!o.out.empty()) spec.out_dir = o.out;
    if (o.jobs > 0) spec.jobs = o.jobs;
    if (!o.cache_dir.empty()) spec.cache_dir = o.cache_dir;

    if (spec.mode == geodot::RunMode::Transport &&
        spec.method == geodot::OTMethod::Sinkhorn && !(spec.epsilon > 0.0))
        throw ConfigError("the sinkhorn method requires a positive epsilon "
                          "(--epsilon or ot.epsilon)");
    return spec;
}

int run_and_report(const geodot::ProblemSpec& spec) {
    geodot::ReportBundle bundle = geodot::run_pipeline(spec);
    std::cout << geodot::summarize(bundle);
    if (!spec.out_dir.empty()) {
        auto manifest = geodot::export_outputs(bundle, spec.out_dir, spec.format);
        std::cout << "wrote " << manifest.size() << " files + manifest.json to "
                  << spec.out_dir << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"geodesic trajectories and optimal transport in nonuniform environments"};
    app.require_subcommand(1);

    Options o;
    CLI::App* cmd_geo =
        app.add_subcommand("geodesic", "solve a two-point trajectory problem");
    add_common(cmd_geo, o, false);
    CLI::App* cmd_tr =
        app.add_subcommand("transport", "assemble a cost matrix and couple two measures");
    add_common(cmd_tr, o, true);
    CLI::App* cmd_pre =
        app.add_subcommand("preset", "run a named example configuration");
    add_common(cmd_pre, o, true);
    CLI::App* cmd_ver =
        app.add_subcommand("verify", "certify an energy trajectory as a minimizer");
    add_common(cmd_ver, o, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_pre->parsed() && o.config.empty() && o.preset_name.empty()) {
            for (const auto& name : geodot::preset_names()) {
                geodot::ProblemSpec p = geodot::preset(name);
                std::cout << name << "  " << geodot::run_mode_name(p.mode) << "  kernel \""
                          << p.kernel_expr << "\"  dim " << p.dim << "\n";
            }
            return 0;
        }
        geodot::ProblemSpec spec = resolve_spec(o);
        if (cmd_geo->parsed() && spec.mode != geodot::RunMode::Geodesic)
            throw geodot::ConfigError(
                "the configuration describes a transport problem; use the transport "
                "subcommand");
        if (cmd_tr->parsed() && spec.mode != geodot::RunMode::Transport)
            throw geodot::ConfigError(
                "the configuration describes a geodesic problem; use the geodesic "
                "subcommand");
        if (cmd_ver->parsed()) {
            if (spec.mode != geodot::RunMode::Geodesic)
                throw geodot::ConfigError(
                    "verify works on geodesic problems; transport runs verify each "
                    "matrix entry instead");
            spec.cost = geodot::CostSelection::Energy;
            geodot::ReportBundle bundle = geodot::run_pipeline(spec);
            std::cout << geodot::summarize(bundle);
            if (!spec.out_dir.empty()) {
                auto manifest = geodot::export_outputs(bundle, spec.out_dir, spec.format);
                std::cout << "wrote " << manifest.size() << " files + manifest.json to "
                          << spec.out_dir << "\n";
            }
            const auto& rep = bundle.geodesic.at(0);
            if (!rep.optimality || !rep.optimality->is_minimizer) {
                std::cerr << "verification did not certify a minimizer\n";
                return 1;
            }
            return 0;
        }
        return run_and_report(spec);
    } catch (const geodot::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const geodot::ParseError& e) {
        std::cerr << "kernel parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
