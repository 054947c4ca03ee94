#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "semmatch/error.hpp"
#include "semmatch/experiment.hpp"
#include "semmatch/ingest.hpp"
#include "semmatch/predicate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitRuntimeError = 2;

semmatch::ReportFormat report_format(const semmatch::OutputsConfig& outputs) {
    if (outputs.format) return *outputs.format;
    return outputs.report_path.extension() == ".json" ? semmatch::ReportFormat::json
                                                      : semmatch::ReportFormat::csv;
}

int run_command(const std::string& config_path, int threads) {
    const auto config = semmatch::load_experiment_config(config_path);
    semmatch::RunOptions run;
    run.threads = threads;
    run.keep_reference_distances = config.outputs.charts_dir.has_value();

    const auto result = semmatch::run_experiment(config, run);
    if (result.model_auc)
        std::cerr << "model held-out AUC: " << semmatch::format_double(*result.model_auc)
                  << "\n";

    bool any_cell_failed = false;
    for (const auto& cell : result.cells) {
        if (!cell.error) continue;
        any_cell_failed = true;
        std::cerr << "error: hypothesis '" << cell.hypothesis << "'";
        if (cell.z) std::cerr << " at z=" << semmatch::format_double(*cell.z);
        std::cerr << ": " << *cell.error << "\n";
    }

    semmatch::emit_report(result.cells, config.outputs.report_path, report_format(config.outputs));
    std::cerr << "report written to " << config.outputs.report_path.string() << "\n";
    if (config.outputs.charts_dir) {
        semmatch::emit_charts(result.cells, *config.outputs.charts_dir,
                              config.outputs.histogram_bin_width);
        std::cerr << "charts written to " << config.outputs.charts_dir->string() << "\n";
    }
    return any_cell_failed ? kExitRuntimeError : kExitOk;
}

int validate_command(const std::string& bundle_path, bool lenient) {
    semmatch::BundleLoadOptions options;
    options.strict = !lenient;
    const auto dataset = semmatch::load_bundle(bundle_path, options);
    std::cerr << "bundle OK: " << dataset.samples.size() << " samples, "
              << dataset.attributions.size() << " attributions\n";
    return kExitOk;
}

int export_synthetic_command(const std::string& config_path, const std::string& out_path,
                             int threads) {
    const auto config = semmatch::load_experiment_config(config_path);
    const auto* synthetic = std::get_if<semmatch::SyntheticSource>(&config.source);
    if (!synthetic)
        throw semmatch::ConfigError("export-synthetic needs a config with a synthetic source");

    auto artifacts = semmatch::build_tabular_dataset(
        *synthetic, config.attribution.background_size, threads);
    std::cerr << "model held-out AUC: " << semmatch::format_double(artifacts.model_auc) << "\n";

    // The bundle format carries no feature vectors; expose them as metadata
    // so applicability predicates can be written against meta.x0, meta.x1, ...
    for (auto& sample : artifacts.evaluation.samples) {
        for (std::size_t i = 0; i < sample.features->size(); ++i)
            sample.metadata["x" + std::to_string(i)] = (*sample.features)[i];
        sample.features.reset();
    }
    semmatch::export_bundle(artifacts.evaluation, out_path);
    std::cerr << "bundle written to " << out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semmatch: hypothesis testing over feature-attribution explanations"};
    app.require_subcommand(1);

    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;

    std::string config_path, bundle_path, out_path;
    bool lenient = false;

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--threads", threads, "worker threads (default: hardware concurrency)");

    auto* validate = app.add_subcommand("validate", "validate an attribution bundle");
    validate->add_option("--bundle", bundle_path, "bundle JSON")->required();
    validate->add_flag("--lenient", lenient, "warn on unknown fields instead of rejecting");

    auto* export_synth =
        app.add_subcommand("export-synthetic", "export the synthetic experiment as a bundle");
    export_synth->add_option("--config", config_path, "experiment config JSON")->required();
    export_synth->add_option("--out", out_path, "output bundle path")->required();
    export_synth->add_option("--threads", threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_command(config_path, threads);
        if (validate->parsed()) return validate_command(bundle_path, lenient);
        if (export_synth->parsed())
            return export_synthetic_command(config_path, out_path, threads);
    } catch (const semmatch::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}
