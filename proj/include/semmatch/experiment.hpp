#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "semmatch/core.hpp"
#include "semmatch/distance.hpp"
#include "semmatch/ingest.hpp"
#include "semmatch/metrics.hpp"
#include "semmatch/tabular.hpp"

namespace semmatch {

struct SyntheticSource {
    SyntheticConfig data;
    ForestParams forest;
};

struct BundleSource {
    std::filesystem::path path;
    BundleLoadOptions load_options;
};

struct AttributionConfig {
    enum class Kind { exact_shapley, from_bundle };
    Kind kind = Kind::exact_shapley;
    std::int64_t background_size = 100;
};

enum class ReportFormat { csv, json };

struct OutputsConfig {
    std::filesystem::path report_path;
    std::optional<std::filesystem::path> charts_dir;
    std::optional<ReportFormat> format;  // defaults to the report extension
    double histogram_bin_width = 0.1;
};

struct HypothesisSpec {
    std::string name;
    std::string applicability;
    std::string behavior;
    std::vector<double> sweep_values;
    std::optional<DistanceSpec> distance;  // overrides the experiment-level spec
};

struct ExperimentConfig {
    std::variant<SyntheticSource, BundleSource> source;
    AttributionConfig attribution;
    DistanceSpec distance;
    std::vector<HypothesisSpec> hypotheses;
    PopulationMode population = PopulationMode::applicable;
    ReferencePolicy reference_policy;
    OutputsConfig outputs;
    bool allow_outcome_in_behavior = false;
};

// Strict-schema config reader; throws ConfigError / SchemaError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// One hypothesis x sweep-value cell: either a report or the error it hit.
struct CellResult {
    std::string hypothesis;
    std::optional<double> z;
    std::optional<MatchReport> report;
    std::optional<std::string> error;
    std::vector<std::vector<double>> reference_distances;  // for charts
};

struct ExperimentResult {
    Dataset dataset;
    std::vector<CellResult> cells;
    std::optional<double> model_auc;  // held-out forest AUC (synthetic runs)
};

struct RunOptions {
    int threads = 1;
    bool keep_reference_distances = true;  // needed for chart emission
};

// Build or load the dataset, attribute it, evaluate every hypothesis at
// every sweep value, and return per-cell reports in config order.
// Deterministic for fixed seeds, independent of the thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& run = {});

// Synthetic pipeline pieces, exposed for reuse and cross-checking: train on
// the train block, predict on everything, attribute the test block with the
// exact Shapley engine, and return the evaluation-ready test dataset.
struct TabularArtifacts {
    Dataset evaluation;   // test block with predictions and attributions
    double model_auc = 0.0;
};
TabularArtifacts build_tabular_dataset(const SyntheticSource& source,
                                       std::int64_t background_size, int threads);

void emit_report(const std::vector<CellResult>& cells, const std::filesystem::path& path,
                 ReportFormat format);

// Per-hypothesis distance histograms plus MD and AUC boxplots across the
// sweep. File names derive from the hypothesis name.
void emit_charts(const std::vector<CellResult>& cells, const std::filesystem::path& directory,
                 double histogram_bin_width);

// Shortest-round-trip decimal rendering used for all report numbers.
std::string format_double(double v);

}  // namespace semmatch
