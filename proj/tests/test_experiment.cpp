#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "semmatch/charts.hpp"
#include "semmatch/error.hpp"
#include "semmatch/experiment.hpp"
#include "semmatch/predicate.hpp"

using namespace semmatch;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() : path(std::filesystem::temp_directory_path() /
                     ("semmatch_exp_" + std::to_string(::getpid()))) {
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Ten-sample proportion bundle: masses spread over {0.05,...,0.95} on a
// two-position attribution with a fixed mask on position 0.
std::string proportion_bundle() {
    nlohmann::json items = nlohmann::json::array();
    for (int i = 0; i < 10; ++i) {
        const double mass = 0.05 + 0.1 * i;
        nlohmann::json item;
        item["id"] = "s" + std::string(1, static_cast<char>('a' + i));
        item["label"] = 1;
        item["prediction"] = i < 8 ? 1 : 0;
        item["shape"] = {2};
        item["values"] = {mass, 1.0 - mass};
        item["masks"] = {{"m", {{"indices", {0}}}}};
        item["metadata"] = {{"answer_sentence", i % 2 + 1}};
        items.push_back(item);
    }
    nlohmann::json root;
    root["format_version"] = 1;
    root["mode"] = "flat";
    root["items"] = items;
    return root.dump(2);
}

}  // namespace

TEST_CASE("experiment config: bundle source round-trips through the parser") {
    TempDir dir;
    write_file(dir.path / "bundle.json", proportion_bundle());
    write_file(dir.path / "config.json", R"({
      "source": {"bundle": {"path": "bundle.json"}},
      "attribution": "from_bundle",
      "distance": {"kind": "proportion", "mask_name": "m"},
      "hypotheses": [
        {"name": "sweep", "applicability": "0 < 1",
         "behavior": "prop(m) >= $z",
         "sweep_values": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]},
        {"name": "fixed", "applicability": "correct", "behavior": "prop(m) >= 0.5"}
      ],
      "population": "applicable",
      "reference_policy": "all_satisfying",
      "outputs": {"report": "out/report.csv"}
    })");

    const auto config = load_experiment_config(dir.path / "config.json");
    CHECK(std::holds_alternative<BundleSource>(config.source));
    CHECK(config.attribution.kind == AttributionConfig::Kind::from_bundle);
    CHECK(config.hypotheses.size() == 2);
    CHECK(config.hypotheses[0].sweep_values.size() == 11);
    CHECK(config.outputs.report_path == dir.path / "out/report.csv");

    SUBCASE("a sweep with 11 z values produces exactly 11 rows per hypothesis") {
        const auto result = run_experiment(config);
        int sweep_rows = 0, fixed_rows = 0;
        for (const auto& cell : result.cells) {
            if (cell.hypothesis == "sweep") ++sweep_rows;
            if (cell.hypothesis == "fixed") ++fixed_rows;
            CHECK((cell.report.has_value() || cell.error.has_value()));
        }
        CHECK(sweep_rows == 11);
        CHECK(fixed_rows == 1);
    }

    SUBCASE("emitted CSV has the documented header and one line per report") {
        auto result = run_experiment(config);
        const auto report_path = dir.path / "report.csv";
        emit_report(result.cells, report_path, ReportFormat::csv);
        std::istringstream csv(read_file(report_path));
        std::string header;
        std::getline(csv, header);
        CHECK(header ==
              "hypothesis,z,validity,coverage,sharpness,n_references,n_undefined_auc,"
              "md_min,md_q1,md_median,md_q3,md_max,auc_min,auc_q1,auc_median,auc_q3,auc_max");
        int lines = 0;
        std::string line;
        while (std::getline(csv, line))
            if (!line.empty()) ++lines;
        int reports = 0;
        for (const auto& cell : result.cells)
            if (cell.report) ++reports;
        CHECK(lines == reports);
    }

    SUBCASE("JSON emission round-trips the report values") {
        auto result = run_experiment(config);
        const auto report_path = dir.path / "report.json";
        emit_report(result.cells, report_path, ReportFormat::json);
        const auto parsed = nlohmann::json::parse(read_file(report_path));
        REQUIRE(parsed.is_array());
        REQUIRE(parsed.size() == result.cells.size());
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            const auto& row = parsed[i];
            const auto& cell = result.cells[i];
            CHECK(row["hypothesis"] == cell.hypothesis);
            if (cell.report) {
                CHECK(row["validity"].get<double>() == cell.report->validity);
                CHECK(row["coverage"].get<double>() == cell.report->coverage);
                const auto md = row["md_values"].get<std::vector<double>>();
                CHECK(md == cell.report->md_values);
            }
        }
    }

    SUBCASE("charts are emitted for every hypothesis") {
        auto result = run_experiment(config);
        emit_charts(result.cells, dir.path / "charts", 0.1);
        CHECK(std::filesystem::exists(dir.path / "charts" / "sweep_md.svg"));
        CHECK(std::filesystem::exists(dir.path / "charts" / "sweep_auc.svg"));
        CHECK(std::filesystem::exists(dir.path / "charts" / "fixed_md.svg"));
        CHECK(std::filesystem::exists(dir.path / "charts" / "fixed_distances.svg"));
    }
}

TEST_CASE("experiment config rejects inconsistencies") {
    TempDir dir;
    write_file(dir.path / "bundle.json", proportion_bundle());

    SUBCASE("bundle source with exact_shapley attribution") {
        write_file(dir.path / "bad.json", R"({
          "source": {"bundle": {"path": "bundle.json"}},
          "attribution": {"exact_shapley": {}},
          "distance": {"kind": "euclidean"},
          "hypotheses": [{"name": "h", "applicability": "0 < 1", "behavior": "attr[0] > 0"}],
          "outputs": {"report": "r.csv"}
        })");
        CHECK_THROWS_AS(load_experiment_config(dir.path / "bad.json"), ConfigError);
    }
    SUBCASE("sweep values outside [0,1]") {
        write_file(dir.path / "bad.json", R"({
          "source": {"bundle": {"path": "bundle.json"}},
          "attribution": "from_bundle",
          "distance": {"kind": "euclidean"},
          "hypotheses": [{"name": "h", "applicability": "0 < 1",
                          "behavior": "prop(m) > $z", "sweep_values": [30]}],
          "outputs": {"report": "r.csv"}
        })");
        CHECK_THROWS_AS(load_experiment_config(dir.path / "bad.json"), ConfigError);
    }
    SUBCASE("unknown top-level field") {
        write_file(dir.path / "bad.json", R"({
          "source": {"bundle": {"path": "bundle.json"}},
          "attribution": "from_bundle",
          "distance": {"kind": "euclidean"},
          "hypotheses": [{"name": "h", "applicability": "0 < 1", "behavior": "attr[0] > 0"}],
          "outputs": {"report": "r.csv"},
          "typo_field": 1
        })");
        CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "bad.json"),
                             doctest::Contains("typo_field"), ConfigError);
    }
    SUBCASE("duplicate hypothesis names") {
        write_file(dir.path / "bad.json", R"({
          "source": {"bundle": {"path": "bundle.json"}},
          "attribution": "from_bundle",
          "distance": {"kind": "euclidean"},
          "hypotheses": [
            {"name": "h", "applicability": "0 < 1", "behavior": "attr[0] > 0"},
            {"name": "h", "applicability": "0 < 1", "behavior": "attr[0] < 0"}],
          "outputs": {"report": "r.csv"}
        })");
        CHECK_THROWS_AS(load_experiment_config(dir.path / "bad.json"), ConfigError);
    }
}

TEST_CASE("cell errors carry the hypothesis coordinates, others still run") {
    TempDir dir;
    write_file(dir.path / "bundle.json", proportion_bundle());
    write_file(dir.path / "config.json", R"({
      "source": {"bundle": {"path": "bundle.json"}},
      "attribution": "from_bundle",
      "distance": {"kind": "proportion", "mask_name": "m"},
      "hypotheses": [
        {"name": "impossible", "applicability": "0 < 1", "behavior": "prop(m) >= 2"},
        {"name": "works", "applicability": "0 < 1", "behavior": "prop(m) >= 0.5"}
      ],
      "outputs": {"report": "out.csv"}
    })");
    const auto result = run_experiment(load_experiment_config(dir.path / "config.json"));
    REQUIRE(result.cells.size() == 2);
    CHECK(result.cells[0].hypothesis == "impossible");
    REQUIRE(result.cells[0].error.has_value());
    CHECK(result.cells[0].error->find("empty reference set") != std::string::npos);
    CHECK(result.cells[1].report.has_value());
}

TEST_CASE("per-hypothesis distance override is honored") {
    TempDir dir;
    write_file(dir.path / "bundle.json", proportion_bundle());
    write_file(dir.path / "config.json", R"({
      "source": {"bundle": {"path": "bundle.json"}},
      "attribution": "from_bundle",
      "distance": {"kind": "euclidean"},
      "hypotheses": [
        {"name": "overridden", "applicability": "0 < 1", "behavior": "prop(m) >= 0.5",
         "distance": {"kind": "proportion", "mask_name": "m"}}
      ],
      "outputs": {"report": "out.csv"}
    })");
    const auto config = load_experiment_config(dir.path / "config.json");
    REQUIRE(config.hypotheses[0].distance.has_value());
    const auto result = run_experiment(config);
    REQUIRE(result.cells[0].report.has_value());
    // Proportion distances are bounded by 1; the euclidean ones on this
    // fixture would not be distinguishable this way, the MD max confirms the
    // override took effect.
    CHECK(result.cells[0].report->md_summary->max <= 1.0);
}

TEST_CASE("synthetic export cross-check: bundle path reproduces the in-memory run") {
    TempDir dir;
    SyntheticSource source;
    source.data.n_train = 600;
    source.data.n_test = 120;
    source.forest.n_trees = 25;
    source.forest.tree.max_depth = 6;
    auto artifacts = build_tabular_dataset(source, /*background_size=*/30, /*threads=*/2);

    // In-memory evaluation against the feature-based applicability.
    const auto h = make_hypothesis("t", "x[0] < 0 && x[2] == 0", "attr[0] > 0");
    EvaluateOptions options;
    const auto direct = evaluate_match(artifacts.evaluation, h, DistanceSpec{}, options);

    // Bundle-side evaluation: features move into metadata on export.
    for (auto& sample : artifacts.evaluation.samples) {
        for (std::size_t i = 0; i < sample.features->size(); ++i)
            sample.metadata["x" + std::to_string(i)] = (*sample.features)[i];
        sample.features.reset();
    }
    export_bundle(artifacts.evaluation, dir.path / "export.json");
    const auto loaded = load_bundle(dir.path / "export.json");
    const auto h_meta = make_hypothesis("t", "meta.x0 < 0 && meta.x2 == 0", "attr[0] > 0");
    const auto via_bundle = evaluate_match(loaded, h_meta, DistanceSpec{}, options);

    CHECK(via_bundle.validity == direct.validity);
    CHECK(via_bundle.coverage == direct.coverage);
    CHECK(via_bundle.reference_ids == direct.reference_ids);
    CHECK(via_bundle.md_values == direct.md_values);
    for (std::size_t i = 0; i < direct.auc_values.size(); ++i)
        CHECK(via_bundle.auc_values[i] == direct.auc_values[i]);
}

TEST_CASE("histogram binning: {0,0,0,0.8,0.8} with width 0.1 fills bins 0 and 8") {
    const auto h = build_histogram({0.0, 0.0, 0.0, 0.8, 0.8}, 0.1);
    REQUIRE(h.counts.size() == 9);
    CHECK(h.counts[0] == 3);
    CHECK(h.counts[8] == 2);
    for (std::size_t i = 1; i < 8; ++i) CHECK(h.counts[i] == 0);
}

TEST_CASE("histogram binning resolves edge quotients against exact edge products") {
    // double(0.3) sits just below 3*double(0.1), so the exact-edge rule puts
    // it in bin 2; naive floor(v/w) arithmetic is what this guards against.
    const auto h = build_histogram({0.3}, 0.1);
    REQUIRE(h.counts.size() == 3);
    CHECK(h.counts[2] == 1);
    // And double(0.8) equals 8*double(0.1) exactly, landing in bin 8.
    const auto h2 = build_histogram({0.8}, 0.1);
    REQUIRE(h2.counts.size() == 9);
    CHECK(h2.counts[8] == 1);
}

TEST_CASE("shipped bundle configs run without cell errors") {
    const std::filesystem::path configs = std::filesystem::path(SEMMATCH_SOURCE_DIR) / "configs";
    for (const char* name :
         {"malevic_theta1-8.json", "voc_sweep.json", "squad_theta1-3.json"}) {
        CAPTURE(name);
        auto config = load_experiment_config(configs / name);
        RunOptions run;
        run.keep_reference_distances = false;
        const auto result = run_experiment(config, run);
        CHECK_FALSE(result.cells.empty());
        for (const auto& cell : result.cells) {
            CAPTURE(cell.hypothesis);
            CHECK_MESSAGE(cell.report.has_value(),
                          "cell error: ", cell.error.value_or(""));
            if (cell.report) {
                CHECK(cell.report->validity >= 0.0);
                CHECK(cell.report->validity <= 1.0);
                CHECK(cell.report->coverage >= 0.0);
                CHECK(cell.report->coverage <= 1.0);
                CHECK(cell.report->n_references >= 1);
            }
        }
    }
}

TEST_CASE("format_double renders shortest round-trip decimals") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.30000000000000004) == "0.30000000000000004");
}
