// bon: train, export and compare boundary-optimizing runs.
//
//   bon run <config.ini> [--set section.key=value ...]
//   bon run --preset iris-paper [--set ...]
//   bon export-boundary <run-dir> [--out file]
//   bon export-cloud <run-dir> [--epoch N] [--out file]
//   bon compare <run-dir> <run-dir>... [--out file]
//   bon presets

#include <bon/experiment.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

void emit(const std::string& out_path, const std::function<void(std::ostream&)>& write) {
    if (out_path.empty() || out_path == "-") {
        write(std::cout);
        return;
    }
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw bon::IoError("cannot write " + out_path);
    write(os);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-optimizing network experiments"};
    app.require_subcommand(1);

    std::string config_path, preset_name;
    std::vector<std::string> overrides;
    auto* run_cmd = app.add_subcommand("run", "train per a config file or preset and write a run directory");
    run_cmd->add_option("config", config_path, "config file (INI)");
    run_cmd->add_option("--preset", preset_name, "named preset instead of a config file");
    run_cmd->add_option("--set", overrides, "override, e.g. bon.K=10");

    std::string run_dir, out_path;
    auto* boundary_cmd = app.add_subcommand("export-boundary", "recompute the decision-boundary grid of a run");
    boundary_cmd->add_option("run-dir", run_dir, "run directory")->required();
    boundary_cmd->add_option("--out", out_path, "output CSV (default: <run-dir>/boundary.csv, '-' for stdout)");

    std::optional<std::size_t> epoch;
    auto* cloud_cmd = app.add_subcommand("export-cloud", "synthetic-point cloud of a run");
    cloud_cmd->add_option("run-dir", run_dir, "run directory")->required();
    cloud_cmd->add_option("--epoch", epoch, "snapshot epoch (default: final models)");
    cloud_cmd->add_option("--out", out_path, "output CSV (default: stdout)");

    std::vector<std::string> run_dirs;
    auto* compare_cmd = app.add_subcommand("compare", "summarize two or more runs");
    compare_cmd->add_option("run-dirs", run_dirs, "run directories")->required()->expected(2, -1);
    compare_cmd->add_option("--out", out_path, "output CSV (default: stdout)");

    auto* presets_cmd = app.add_subcommand("presets", "list named presets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            if (config_path.empty() == preset_name.empty()) {
                std::cerr << "run: give exactly one of <config> or --preset\n";
                return 2;
            }
            bon::RunConfig cfg = preset_name.empty() ? bon::load_config(config_path) : bon::preset(preset_name);
            for (const auto& o : overrides) bon::apply_override(cfg, o);
            const auto result = bon::run(cfg, {nullptr, [&](const bon::Experiment& ex) {
                                                   const auto& m = ex.state.history.back();
                                                   if (m.epoch % 50 == 0 || m.epoch == cfg.bon.epochs)
                                                       std::cerr << "epoch " << m.epoch << " acc_real " << m.acc_real
                                                                 << " acc_synth " << m.acc_synth << " mse "
                                                                 << m.mean_synth_mse << '\n';
                                               }});
            std::cout << result.dir.string() << '\n';
        } else if (*boundary_cmd) {
            const auto grid = bon::export_boundary_from_run(run_dir);
            if (out_path.empty()) out_path = (bon::fs::path(run_dir) / "boundary.csv").string();
            emit(out_path, [&](std::ostream& os) { bon::write_boundary_csv(os, grid); });
        } else if (*cloud_cmd) {
            const auto rows = bon::export_cloud_from_run(run_dir, epoch);
            const std::size_t dim = rows.empty() ? 0 : rows.front().source.size();
            emit(out_path, [&](std::ostream& os) { bon::write_cloud_csv(os, rows, dim); });
        } else if (*compare_cmd) {
            std::vector<bon::fs::path> dirs(run_dirs.begin(), run_dirs.end());
            const auto summary = bon::compare_runs(dirs);
            emit(out_path, [&](std::ostream& os) { bon::write_summary_csv(os, summary); });
        } else if (*presets_cmd) {
            for (const auto& [name, make] : bon::presets()) std::cout << name << '\n';
        }
    } catch (const bon::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const bon::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
