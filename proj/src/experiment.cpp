#include "semmatch/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "semmatch/charts.hpp"
#include "semmatch/error.hpp"
#include "semmatch/parallel.hpp"
#include "semmatch/predicate.hpp"
#include "semmatch/shapley.hpp"

namespace semmatch {

namespace {

using json = nlohmann::json;

[[noreturn]] void config_fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

const json& member(const json& obj, const std::string& path, const std::string& key) {
    auto it = obj.find(key);
    if (it == obj.end()) config_fail(path, "missing required field '" + key + "'");
    return *it;
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
    for (const auto& [key, _] : obj.items())
        if (!known.count(key)) config_fail(path, "unknown field '" + key + "'");
}

double number_at(const json& j, const std::string& path) {
    if (!j.is_number()) config_fail(path, "expected a number");
    return j.get<double>();
}

std::int64_t int_at(const json& j, const std::string& path) {
    if (!j.is_number_integer() && !j.is_number_unsigned())
        config_fail(path, "expected an integer");
    return j.get<std::int64_t>();
}

std::string string_at(const json& j, const std::string& path) {
    if (!j.is_string()) config_fail(path, "expected a string");
    return j.get<std::string>();
}

ZeroTotalPolicy zero_policy_at(const json& j, const std::string& path) {
    const auto text = string_at(j, path);
    if (text == "error") return ZeroTotalPolicy::error;
    if (text == "zero") return ZeroTotalPolicy::zero;
    config_fail(path, "expected \"error\" or \"zero\"");
}

DistanceSpec parse_distance(const json& j, const std::string& path) {
    if (!j.is_object()) config_fail(path, "expected an object");
    check_keys(j, path, {"kind", "subset", "mask_name", "zero_total_policy"});
    DistanceSpec spec;
    const auto kind = string_at(member(j, path, "kind"), path + ".kind");
    if (kind == "euclidean") spec.kind = DistanceSpec::Kind::euclidean;
    else if (kind == "euclidean_subset") spec.kind = DistanceSpec::Kind::euclidean_subset;
    else if (kind == "proportion") spec.kind = DistanceSpec::Kind::proportion;
    else config_fail(path + ".kind", "expected \"euclidean\", \"euclidean_subset\" or \"proportion\"");

    if (j.contains("subset")) {
        if (spec.kind != DistanceSpec::Kind::euclidean_subset)
            config_fail(path + ".subset", "subset is only valid for euclidean_subset");
        for (std::size_t i = 0; i < j["subset"].size(); ++i)
            spec.subset.push_back(int_at(j["subset"][i],
                                         path + ".subset[" + std::to_string(i) + "]"));
        if (spec.subset.empty()) config_fail(path + ".subset", "subset must be non-empty");
    } else if (spec.kind == DistanceSpec::Kind::euclidean_subset) {
        config_fail(path, "euclidean_subset requires 'subset'");
    }

    if (j.contains("mask_name")) {
        if (spec.kind != DistanceSpec::Kind::proportion)
            config_fail(path + ".mask_name", "mask_name is only valid for proportion");
        spec.mask_name = string_at(j["mask_name"], path + ".mask_name");
    } else if (spec.kind == DistanceSpec::Kind::proportion) {
        config_fail(path, "proportion requires 'mask_name'");
    }

    if (j.contains("zero_total_policy"))
        spec.zero_total_policy = zero_policy_at(j["zero_total_policy"],
                                                path + ".zero_total_policy");
    return spec;
}

std::filesystem::path resolve_relative(const std::filesystem::path& base,
                                       const std::filesystem::path& p) {
    return p.is_absolute() ? p : base / p;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    const auto base = path.parent_path();

    if (!root.is_object()) throw ConfigError("config root must be an object");
    check_keys(root, "$", {"source", "attribution", "distance", "hypotheses", "population",
                           "reference_policy", "outputs", "allow_outcome_in_behavior"});

    ExperimentConfig config;

    const auto& source = member(root, "$", "source");
    if (!source.is_object() || source.size() != 1)
        config_fail("$.source", "expected exactly one of 'synthetic' or 'bundle'");
    if (source.contains("synthetic")) {
        const auto& s = source["synthetic"];
        check_keys(s, "$.source.synthetic",
                   {"n_train", "n_test", "seed", "p_binary", "forest"});
        SyntheticSource synthetic;
        if (s.contains("n_train")) synthetic.data.n_train = int_at(s["n_train"], "$.source.synthetic.n_train");
        if (s.contains("n_test")) synthetic.data.n_test = int_at(s["n_test"], "$.source.synthetic.n_test");
        if (s.contains("seed"))
            synthetic.data.seed = static_cast<std::uint64_t>(int_at(s["seed"], "$.source.synthetic.seed"));
        if (s.contains("p_binary")) synthetic.data.p_binary = number_at(s["p_binary"], "$.source.synthetic.p_binary");
        synthetic.forest.seed = synthetic.data.seed;
        if (s.contains("forest")) {
            const auto& f = s["forest"];
            check_keys(f, "$.source.synthetic.forest",
                       {"n_trees", "max_depth", "min_samples_split", "feature_subsample", "seed"});
            if (f.contains("n_trees")) synthetic.forest.n_trees = static_cast<int>(int_at(f["n_trees"], "$.source.synthetic.forest.n_trees"));
            if (f.contains("max_depth")) synthetic.forest.tree.max_depth = static_cast<int>(int_at(f["max_depth"], "$.source.synthetic.forest.max_depth"));
            if (f.contains("min_samples_split")) synthetic.forest.tree.min_samples_split = static_cast<int>(int_at(f["min_samples_split"], "$.source.synthetic.forest.min_samples_split"));
            if (f.contains("feature_subsample")) synthetic.forest.tree.feature_subsample = static_cast<int>(int_at(f["feature_subsample"], "$.source.synthetic.forest.feature_subsample"));
            if (f.contains("seed")) synthetic.forest.seed = static_cast<std::uint64_t>(int_at(f["seed"], "$.source.synthetic.forest.seed"));
        }
        config.source = std::move(synthetic);
    } else if (source.contains("bundle")) {
        const auto& b = source["bundle"];
        check_keys(b, "$.source.bundle", {"path", "strict", "token_reduction", "abs_first",
                                          "zero_total_policy"});
        BundleSource bundle;
        bundle.path = resolve_relative(base, string_at(member(b, "$.source.bundle", "path"),
                                                       "$.source.bundle.path"));
        if (b.contains("strict")) {
            if (!b["strict"].is_boolean()) config_fail("$.source.bundle.strict", "expected a boolean");
            bundle.load_options.strict = b["strict"].get<bool>();
        }
        if (b.contains("token_reduction")) {
            const auto r = string_at(b["token_reduction"], "$.source.bundle.token_reduction");
            if (r == "average") bundle.load_options.reduction = TokenReduction::average;
            else if (r == "maximum") bundle.load_options.reduction = TokenReduction::maximum;
            else config_fail("$.source.bundle.token_reduction", "expected \"average\" or \"maximum\"");
        }
        if (b.contains("abs_first")) {
            if (!b["abs_first"].is_boolean()) config_fail("$.source.bundle.abs_first", "expected a boolean");
            bundle.load_options.abs_first = b["abs_first"].get<bool>();
        }
        if (b.contains("zero_total_policy"))
            bundle.load_options.zero_total_policy =
                zero_policy_at(b["zero_total_policy"], "$.source.bundle.zero_total_policy");
        config.source = std::move(bundle);
    } else {
        config_fail("$.source", "expected 'synthetic' or 'bundle'");
    }

    const auto& attribution = member(root, "$", "attribution");
    if (attribution.is_string()) {
        if (attribution.get<std::string>() != "from_bundle")
            config_fail("$.attribution", "expected \"from_bundle\" or an exact_shapley object");
        config.attribution.kind = AttributionConfig::Kind::from_bundle;
    } else if (attribution.is_object() && attribution.contains("exact_shapley")) {
        check_keys(attribution, "$.attribution", {"exact_shapley"});
        const auto& e = attribution["exact_shapley"];
        check_keys(e, "$.attribution.exact_shapley", {"background_size"});
        config.attribution.kind = AttributionConfig::Kind::exact_shapley;
        if (e.contains("background_size"))
            config.attribution.background_size =
                int_at(e["background_size"], "$.attribution.exact_shapley.background_size");
    } else {
        config_fail("$.attribution", "expected \"from_bundle\" or {\"exact_shapley\": {...}}");
    }
    if (std::holds_alternative<BundleSource>(config.source) &&
        config.attribution.kind != AttributionConfig::Kind::from_bundle)
        config_fail("$.attribution", "bundle sources require attribution \"from_bundle\"");
    if (std::holds_alternative<SyntheticSource>(config.source) &&
        config.attribution.kind != AttributionConfig::Kind::exact_shapley)
        config_fail("$.attribution", "synthetic sources require exact_shapley attribution");

    config.distance = parse_distance(member(root, "$", "distance"), "$.distance");

    const auto& hypotheses = member(root, "$", "hypotheses");
    if (!hypotheses.is_array() || hypotheses.empty())
        config_fail("$.hypotheses", "expected a non-empty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const std::string hpath = "$.hypotheses[" + std::to_string(i) + "]";
        const auto& h = hypotheses[i];
        if (!h.is_object()) config_fail(hpath, "expected an object");
        check_keys(h, hpath, {"name", "applicability", "behavior", "sweep_values", "distance"});
        HypothesisSpec spec;
        spec.name = string_at(member(h, hpath, "name"), hpath + ".name");
        if (!names.insert(spec.name).second)
            config_fail(hpath + ".name", "duplicate hypothesis name '" + spec.name + "'");
        spec.applicability = string_at(member(h, hpath, "applicability"), hpath + ".applicability");
        spec.behavior = string_at(member(h, hpath, "behavior"), hpath + ".behavior");
        if (h.contains("sweep_values")) {
            for (std::size_t k = 0; k < h["sweep_values"].size(); ++k) {
                const double z = number_at(h["sweep_values"][k],
                                           hpath + ".sweep_values[" + std::to_string(k) + "]");
                if (z < 0.0 || z > 1.0)
                    config_fail(hpath + ".sweep_values", "sweep values are proportions in [0,1]");
                spec.sweep_values.push_back(z);
            }
        }
        if (h.contains("distance"))
            spec.distance = parse_distance(h["distance"], hpath + ".distance");
        config.hypotheses.push_back(std::move(spec));
    }

    if (root.contains("population")) {
        const auto p = string_at(root["population"], "$.population");
        if (p == "applicable") config.population = PopulationMode::applicable;
        else if (p == "all") config.population = PopulationMode::all;
        else config_fail("$.population", "expected \"applicable\" or \"all\"");
    }

    if (root.contains("reference_policy")) {
        const auto& rp = root["reference_policy"];
        if (rp.is_string()) {
            if (rp.get<std::string>() != "all_satisfying")
                config_fail("$.reference_policy", "expected \"all_satisfying\" or {\"sampled\": {...}}");
        } else if (rp.is_object() && rp.contains("sampled")) {
            check_keys(rp, "$.reference_policy", {"sampled"});
            const auto& s = rp["sampled"];
            check_keys(s, "$.reference_policy.sampled", {"k", "seed"});
            config.reference_policy.kind = ReferencePolicy::Kind::sampled;
            config.reference_policy.k = int_at(member(s, "$.reference_policy.sampled", "k"),
                                               "$.reference_policy.sampled.k");
            if (s.contains("seed"))
                config.reference_policy.seed = static_cast<std::uint64_t>(
                    int_at(s["seed"], "$.reference_policy.sampled.seed"));
        } else {
            config_fail("$.reference_policy", "expected \"all_satisfying\" or {\"sampled\": {...}}");
        }
    }

    const auto& outputs = member(root, "$", "outputs");
    check_keys(outputs, "$.outputs", {"report", "charts", "format", "histogram_bin_width"});
    config.outputs.report_path = resolve_relative(
        base, string_at(member(outputs, "$.outputs", "report"), "$.outputs.report"));
    if (outputs.contains("charts"))
        config.outputs.charts_dir =
            resolve_relative(base, string_at(outputs["charts"], "$.outputs.charts"));
    if (outputs.contains("format")) {
        const auto f = string_at(outputs["format"], "$.outputs.format");
        if (f == "csv") config.outputs.format = ReportFormat::csv;
        else if (f == "json") config.outputs.format = ReportFormat::json;
        else config_fail("$.outputs.format", "expected \"csv\" or \"json\"");
    }
    if (outputs.contains("histogram_bin_width"))
        config.outputs.histogram_bin_width =
            number_at(outputs["histogram_bin_width"], "$.outputs.histogram_bin_width");

    if (root.contains("allow_outcome_in_behavior")) {
        if (!root["allow_outcome_in_behavior"].is_boolean())
            config_fail("$.allow_outcome_in_behavior", "expected a boolean");
        config.allow_outcome_in_behavior = root["allow_outcome_in_behavior"].get<bool>();
    }

    return config;
}

TabularArtifacts build_tabular_dataset(const SyntheticSource& source,
                                       std::int64_t background_size, int threads) {
    Dataset full = generate_synthetic(source.data);
    const auto n_train = source.data.n_train;
    const std::span<const Sample> train_block{full.samples.data(),
                                              static_cast<std::size_t>(n_train)};
    const std::span<const Sample> test_block{full.samples.data() + n_train,
                                             static_cast<std::size_t>(source.data.n_test)};

    const TrainingData train = to_training_data(train_block);
    const Forest forest = train_forest(train, source.forest, threads);
    const ForestPredictor predictor(forest, train.cols);

    // Held-out discrimination of the trained model.
    const TrainingData test = to_training_data(test_block);
    std::vector<int> labels(test.y.begin(), test.y.end());
    std::vector<double> scores(static_cast<std::size_t>(test.rows));
    for (std::int64_t r = 0; r < test.rows; ++r)
        scores[r] = predictor.predict_probability(test.row(r));
    const auto model_auc = auc_from_scores(labels, scores);

    // Background rows drawn from the training block with the experiment seed.
    if (background_size < 1 || background_size > n_train)
        throw ConfigError("background_size must lie in [1, n_train]");
    BackgroundSet background;
    {
        std::vector<std::int64_t> indices(static_cast<std::size_t>(n_train));
        std::iota(indices.begin(), indices.end(), 0);
        std::mt19937_64 rng(source.data.seed);
        for (std::int64_t i = 0; i < background_size; ++i) {
            std::uniform_int_distribution<std::int64_t> pick(i, n_train - 1);
            std::swap(indices[i], indices[pick(rng)]);
        }
        background.rows.reserve(static_cast<std::size_t>(background_size));
        for (std::int64_t i = 0; i < background_size; ++i) {
            auto row = train.row(indices[i]);
            background.rows.emplace_back(row.begin(), row.end());
        }
    }

    TabularArtifacts artifacts;
    artifacts.model_auc = model_auc.value_or(0.0);
    artifacts.evaluation.samples.assign(test_block.begin(), test_block.end());
    for (auto& sample : artifacts.evaluation.samples) {
        const double p = predictor.predict_probability(*sample.features);
        sample.predicted_probability = p;
        sample.prediction = p > 0.5 ? 1 : 0;
    }

    std::vector<Attribution> attributions(artifacts.evaluation.samples.size());
    parallel_for(artifacts.evaluation.samples.size(), threads, [&](std::size_t i) {
        const auto& sample = artifacts.evaluation.samples[i];
        attributions[i] = exact_shapley(predictor, *sample.features, background, sample.id);
    });
    for (auto& attribution : attributions)
        artifacts.evaluation.attributions[attribution.sample_id] = std::move(attribution);
    return artifacts;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& run) {
    ExperimentResult result;

    if (const auto* synthetic = std::get_if<SyntheticSource>(&config.source)) {
        TabularArtifacts artifacts =
            build_tabular_dataset(*synthetic, config.attribution.background_size, run.threads);
        result.dataset = std::move(artifacts.evaluation);
        result.model_auc = artifacts.model_auc;
    } else {
        const auto& bundle = std::get<BundleSource>(config.source);
        result.dataset = load_bundle(bundle.path, bundle.load_options);
    }

    ParseOptions parse_options;
    parse_options.allow_outcome_in_behavior = config.allow_outcome_in_behavior;

    for (const auto& spec : config.hypotheses) {
        Hypothesis hypothesis;
        try {
            hypothesis = make_hypothesis(spec.name, spec.applicability, spec.behavior,
                                         spec.sweep_values, parse_options);
        } catch (const Error& e) {
            CellResult cell;
            cell.hypothesis = spec.name;
            cell.error = e.what();
            result.cells.push_back(std::move(cell));
            continue;
        }
        const DistanceSpec& distance = spec.distance ? *spec.distance : config.distance;

        std::vector<std::optional<double>> z_values;
        if (hypothesis.sweep_values.empty()) z_values.push_back(std::nullopt);
        else
            for (double z : hypothesis.sweep_values) z_values.emplace_back(z);

        for (const auto& z : z_values) {
            CellResult cell;
            cell.hypothesis = spec.name;
            cell.z = z;
            EvaluateOptions options;
            options.z = z;
            options.population = config.population;
            options.reference_policy = config.reference_policy;
            options.behavior_zero_total_policy = distance.zero_total_policy;
            options.threads = run.threads;
            try {
                cell.report = evaluate_match(result.dataset, hypothesis, distance, options,
                                             run.keep_reference_distances
                                                 ? &cell.reference_distances
                                                 : nullptr);
            } catch (const Error& e) {
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

namespace {

std::string csv_optional(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

void append_summary_csv(std::string& line, const std::optional<FiveNumberSummary>& s) {
    if (!s) {
        line += ",,,,,";
        return;
    }
    line += ',' + format_double(s->min) + ',' + format_double(s->q1) + ',' +
            format_double(s->median) + ',' + format_double(s->q3) + ',' +
            format_double(s->max);
}

json summary_json(const std::optional<FiveNumberSummary>& s) {
    if (!s) return nullptr;
    return {{"min", s->min}, {"q1", s->q1}, {"median", s->median}, {"q3", s->q3},
            {"max", s->max}};
}

}  // namespace

void emit_report(const std::vector<CellResult>& cells, const std::filesystem::path& path,
                 ReportFormat format) {
    if (cells.empty()) throw EvalError("no report rows to emit");
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open report file '" + path.string() + "' for writing");

    if (format == ReportFormat::csv) {
        out << "hypothesis,z,validity,coverage,sharpness,n_references,n_undefined_auc,"
               "md_min,md_q1,md_median,md_q3,md_max,auc_min,auc_q1,auc_median,auc_q3,auc_max\n";
        for (const auto& cell : cells) {
            if (!cell.report) continue;
            const auto& r = *cell.report;
            std::string line = r.hypothesis_name;
            line += ',' + csv_optional(r.z);
            line += ',' + format_double(r.validity);
            line += ',' + format_double(r.coverage);
            line += ',' + csv_optional(r.sharpness);
            line += ',' + std::to_string(r.n_references);
            line += ',' + std::to_string(r.n_undefined_auc);
            append_summary_csv(line, r.md_summary);
            append_summary_csv(line, r.auc_summary);
            out << line << "\n";
        }
    } else {
        json rows = json::array();
        for (const auto& cell : cells) {
            json row;
            row["hypothesis"] = cell.hypothesis;
            row["z"] = cell.z ? json(*cell.z) : json(nullptr);
            if (cell.error) {
                row["error"] = *cell.error;
            } else if (cell.report) {
                const auto& r = *cell.report;
                row["validity"] = r.validity;
                row["coverage"] = r.coverage;
                row["sharpness"] = r.sharpness ? json(*r.sharpness) : json(nullptr);
                row["n_references"] = r.n_references;
                row["n_undefined_auc"] = r.n_undefined_auc;
                row["md_values"] = r.md_values;
                json aucs = json::array();
                for (const auto& a : r.auc_values) aucs.push_back(a ? json(*a) : json(nullptr));
                row["auc_values"] = std::move(aucs);
                row["md_summary"] = summary_json(r.md_summary);
                row["auc_summary"] = summary_json(r.auc_summary);
            }
            rows.push_back(std::move(row));
        }
        out << rows.dump(2) << "\n";
    }
    if (!out) throw Error("failed while writing '" + path.string() + "'");
}

namespace {

std::string sanitize_name(const std::string& name) {
    std::string out;
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

std::string z_suffix(const std::optional<double>& z) {
    return z ? "_z" + sanitize_name(format_double(*z)) : std::string();
}

std::string percent_label(double z) {
    return format_double(z * 100.0) + "%";
}

}  // namespace

void emit_charts(const std::vector<CellResult>& cells, const std::filesystem::path& directory,
                 double histogram_bin_width) {
    std::filesystem::create_directories(directory);

    // Group cells per hypothesis, preserving sweep order.
    std::vector<std::string> order;
    for (const auto& cell : cells)
        if (std::find(order.begin(), order.end(), cell.hypothesis) == order.end())
            order.push_back(cell.hypothesis);

    for (const auto& name : order) {
        std::vector<const CellResult*> group;
        for (const auto& cell : cells)
            if (cell.hypothesis == name && cell.report) group.push_back(&cell);
        if (group.empty()) continue;
        const std::string stem = sanitize_name(name);

        for (const auto* cell : group) {
            std::vector<double> pooled;
            for (const auto& row : cell->reference_distances)
                pooled.insert(pooled.end(), row.begin(), row.end());
            if (pooled.empty()) continue;
            const auto histogram = build_histogram(pooled, histogram_bin_width);
            write_histogram_svg(directory / (stem + "_distances" + z_suffix(cell->z) + ".svg"),
                                histogram,
                                name + (cell->z ? " @ z=" + percent_label(*cell->z) : ""),
                                "distance to reference");
        }

        std::vector<std::string> labels;
        std::vector<std::vector<double>> md_groups, auc_groups;
        for (const auto* cell : group) {
            labels.push_back(cell->z ? percent_label(*cell->z) : "all");
            md_groups.push_back(cell->report->md_values);
            std::vector<double> defined;
            for (const auto& a : cell->report->auc_values)
                if (a) defined.push_back(*a);
            auc_groups.push_back(std::move(defined));
        }
        write_box_series_svg(directory / (stem + "_md.svg"), labels, md_groups,
                             name + ": median distance", "median distance");
        write_box_series_svg(directory / (stem + "_auc.svg"), labels, auc_groups,
                             name + ": discrimination AUC", "AUC", 0.0, 1.0);
    }
}

}  // namespace semmatch
