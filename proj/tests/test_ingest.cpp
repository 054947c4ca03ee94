#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "semmatch/error.hpp"
#include "semmatch/ingest.hpp"

using namespace semmatch;

namespace {

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() { std::error_code ec; std::filesystem::remove(path, ec); }

    void write(const std::string& text) const {
        std::ofstream out(path);
        out << text;
    }
};

constexpr const char* kMinimalFlat = R"({
  "format_version": 1,
  "mode": "flat",
  "items": [
    {"id": "a", "label": 1, "prediction": 1, "shape": [3],
     "values": [0.5, -0.25, 0.25],
     "masks": {"m": {"indices": [0, 2]}},
     "metadata": {"score": 1.5, "flag": true, "count": 3}}
  ]
})";

}  // namespace

TEST_CASE("load_bundle: minimal flat bundle") {
    TempFile file("semmatch_minimal_flat.json");
    file.write(kMinimalFlat);
    const auto dataset = load_bundle(file.path);
    REQUIRE(dataset.samples.size() == 1);
    const auto& s = dataset.samples[0];
    CHECK(s.id == "a");
    CHECK(s.label == 1);
    CHECK(s.prediction == 1);
    CHECK(std::get<double>(s.metadata.at("score")) == 1.5);
    CHECK(std::get<bool>(s.metadata.at("flag")) == true);
    CHECK(std::get<std::int64_t>(s.metadata.at("count")) == 3);
    REQUIRE(dataset.attributions.count("a") == 1);
    CHECK(dataset.attributions.at("a").values.size() == 3);
    CHECK(dataset.masks_for("a").count("m") == 1);
}

TEST_CASE("load_bundle: grid box exceeding the shape names the item") {
    TempFile file("semmatch_bad_box.json");
    file.write(R"({
      "format_version": 1, "mode": "grid",
      "items": [
        {"id": "img7", "label": 0, "prediction": 0, "shape": [2, 2],
         "values": [1, 2, 3, 4], "masks": {"target": {"box": [0, 0, 3, 2]}},
         "metadata": {}}
      ]
    })");
    CHECK_THROWS_WITH_AS(load_bundle(file.path), doctest::Contains("img7"), ValidationError);
}

TEST_CASE("load_bundle rejects schema problems with a field path") {
    TempFile file("semmatch_schema.json");
    SUBCASE("version mismatch") {
        file.write(R"({"format_version": 2, "mode": "flat", "items": []})");
        CHECK_THROWS_WITH_AS(load_bundle(file.path), doctest::Contains("format_version"),
                             SchemaError);
    }
    SUBCASE("unknown field in strict mode") {
        file.write(R"({"format_version": 1, "mode": "flat", "items": [], "extra": 1})");
        CHECK_THROWS_WITH_AS(load_bundle(file.path), doctest::Contains("extra"), SchemaError);
    }
    SUBCASE("unknown field tolerated in lenient mode") {
        file.write(R"({"format_version": 1, "mode": "flat", "items": [], "extra": 1})");
        BundleLoadOptions lenient;
        lenient.strict = false;
        CHECK_NOTHROW(load_bundle(file.path, lenient));
    }
    SUBCASE("metadata rejects nested structures") {
        file.write(R"({"format_version": 1, "mode": "flat", "items": [
          {"id": "a", "label": 0, "prediction": 0, "shape": [1], "values": [1],
           "masks": {}, "metadata": {"nested": {"x": 1}}}]})");
        CHECK_THROWS_WITH_AS(load_bundle(file.path), doctest::Contains("metadata"), SchemaError);
    }
    SUBCASE("token fields are invalid outside token mode") {
        file.write(R"({"format_version": 1, "mode": "flat", "items": [
          {"id": "a", "label": 0, "prediction": 0, "shape": [1], "values": [1],
           "masks": {}, "metadata": {}, "token_sentence_map": [1]}]})");
        CHECK_THROWS_AS(load_bundle(file.path), SchemaError);
    }
}

TEST_CASE("token aggregation: worked examples") {
    // Symmetric case: per-token (0.2, 0.2) -> proportions (0.5, 0.5).
    const auto symmetric = aggregate_token_contributions({{0.3, 0.1}}, {{0.1, 0.3}}, {1, 2});
    REQUIRE(symmetric.size() == 2);
    CHECK(symmetric[0] == doctest::Approx(0.5));
    CHECK(symmetric[1] == doctest::Approx(0.5));

    // Single-sentence mass.
    const auto single = aggregate_token_contributions({{0.4, 0.0}}, {{0.4, 0.0}}, {1, 2});
    CHECK(single[0] == doctest::Approx(1.0));
    CHECK(single[1] == doctest::Approx(0.0));

    // Two answer tokens: combined rows (0.2, 0.2) and (0.6, 0.0); the
    // answer-token average is (0.4, 0.1) giving proportions (0.8, 0.2).
    const auto multi = aggregate_token_contributions({{0.2, 0.2}, {0.6, 0.0}},
                                                     {{0.2, 0.2}, {0.6, 0.0}}, {1, 2});
    CHECK(multi[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(multi[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("token aggregation: maximum reduction and abs-first variant") {
    const auto max_red = aggregate_token_contributions({{0.3, 0.1}}, {{0.1, 0.3}}, {1, 2},
                                                       TokenReduction::maximum);
    CHECK(max_red[0] == doctest::Approx(0.5));
    CHECK(max_red[1] == doctest::Approx(0.5));

    // Cancellation across answer tokens: abs-first keeps the mass.
    const auto cancel = aggregate_token_contributions({{0.4, 0.1}, {-0.4, 0.1}},
                                                      {{0.4, 0.1}, {-0.4, 0.1}}, {1, 2});
    CHECK(cancel[0] == doctest::Approx(0.0));
    const auto abs_first = aggregate_token_contributions({{0.4, 0.1}, {-0.4, 0.1}},
                                                         {{0.4, 0.1}, {-0.4, 0.1}}, {1, 2},
                                                         TokenReduction::average, true);
    CHECK(abs_first[0] == doctest::Approx(0.8));
}

TEST_CASE("token aggregation validates shapes and zero totals") {
    CHECK_THROWS_AS(aggregate_token_contributions({{0.1}}, {{0.1, 0.2}}, {1, 2}), EvalError);
    CHECK_THROWS_AS(aggregate_token_contributions({{0.1, 0.2}}, {{0.1, 0.2}}, {1, 3}),
                    EvalError);
    CHECK_THROWS_AS(aggregate_token_contributions({{0.0, 0.0}}, {{0.0, 0.0}}, {1, 2}),
                    EvalError);
    const auto zeros = aggregate_token_contributions({{0.0, 0.0}}, {{0.0, 0.0}}, {1, 2},
                                                     TokenReduction::average, false,
                                                     ZeroTotalPolicy::zero);
    CHECK(zeros == std::vector<double>{0.0, 0.0});
}

TEST_CASE("token aggregation output is a probability vector, scale-invariant") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n_tokens = 2 + rng() % 8;
        const std::size_t n_answer = 1 + rng() % 3;
        const int n_sentences = 1 + static_cast<int>(rng() % 3);
        std::vector<int> map(n_tokens);
        for (std::size_t t = 0; t < n_tokens; ++t)
            map[t] = 1 + static_cast<int>(rng() % n_sentences);
        for (int s = 1; s <= n_sentences && s <= static_cast<int>(n_tokens); ++s)
            map[s - 1] = s;  // keep indices contiguous
        std::vector<std::vector<double>> start(n_answer), end(n_answer);
        for (std::size_t a = 0; a < n_answer; ++a)
            for (std::size_t t = 0; t < n_tokens; ++t) {
                start[a].push_back(unit(rng));
                end[a].push_back(unit(rng));
            }
        std::vector<double> out;
        try {
            out = aggregate_token_contributions(start, end, map);
        } catch (const EvalError&) {
            continue;  // zero-total draw
        }
        double total = 0.0;
        for (double v : out) {
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        auto scaled_start = start;
        auto scaled_end = end;
        for (auto& row : scaled_start)
            for (auto& v : row) v *= 5.5;
        for (auto& row : scaled_end)
            for (auto& v : row) v *= 5.5;
        const auto scaled = aggregate_token_contributions(scaled_start, scaled_end, map);
        for (std::size_t i = 0; i < out.size(); ++i)
            CHECK(scaled[i] == doctest::Approx(out[i]).epsilon(1e-12));
    }
}

TEST_CASE("load_bundle: token mode builds sentence masks and proportions") {
    TempFile file("semmatch_token.json");
    file.write(R"({
      "format_version": 1, "mode": "token",
      "items": [
        {"id": "q1", "label": 1, "prediction": 1, "shape": [2],
         "values": [0, 0],
         "metadata": {"answer_sentence": 1},
         "start_values": [[0.3, 0.1]], "end_values": [[0.1, 0.3]],
         "token_sentence_map": [1, 2]}
      ]
    })");
    const auto dataset = load_bundle(file.path);
    REQUIRE(dataset.samples.size() == 1);
    const auto& attribution = dataset.attributions.at("q1");
    REQUIRE(attribution.values.size() == 2);
    CHECK(attribution.values[0] == doctest::Approx(0.5));
    CHECK(attribution.values[1] == doctest::Approx(0.5));
    const auto& masks = dataset.masks_for("q1");
    CHECK(masks.count("sentence_1") == 1);
    CHECK(masks.count("sentence_2") == 1);
    REQUIRE(masks.count("first_sentence") == 1);
    CHECK(std::get<std::vector<std::int64_t>>(masks.at("first_sentence").selector) ==
          std::vector<std::int64_t>{0});
}

TEST_CASE("round-trip: load of export is structurally identical") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);

    Dataset d;
    for (int i = 0; i < 6; ++i) {
        Sample s;
        s.id = "g" + std::to_string(i);
        s.label = static_cast<int>(rng() % 2);
        s.predicted_probability = 0.25 + 0.5 * (i % 2);
        s.prediction = *s.predicted_probability > 0.5 ? 1 : 0;
        s.metadata["area"] = static_cast<std::int64_t>(rng() % 100);
        s.metadata["weird"] = unit(rng);
        s.metadata["ok"] = (rng() % 2) == 0;
        d.samples.push_back(s);
        Attribution a;
        a.sample_id = s.id;
        const std::int64_t h = 2 + static_cast<std::int64_t>(i % 3);
        a.shape.dims = {h, 3};
        for (std::int64_t k = 0; k < h * 3; ++k) a.values.push_back(unit(rng));
        d.attributions[s.id] = a;
        Mask box;
        box.name = "target";
        box.selector = Box{0, 0, 1 + (i % 2), 2};
        d.masks[s.id]["target"] = box;
        Mask idx;
        idx.name = "union";
        idx.selector = std::vector<std::int64_t>{0, 2, 4};
        d.masks[s.id]["union"] = idx;
    }

    TempFile file("semmatch_roundtrip.json");
    export_bundle(d, file.path);
    const auto loaded = load_bundle(file.path);
    CHECK(loaded == d);

    // A second export of the loaded dataset produces identical bytes.
    TempFile file2("semmatch_roundtrip2.json");
    export_bundle(loaded, file2.path);
    std::ifstream f1(file.path), f2(file2.path);
    const std::string text1((std::istreambuf_iterator<char>(f1)), {});
    const std::string text2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(text1 == text2);
}

TEST_CASE("export refuses token mode and feature-carrying datasets") {
    Dataset d;
    Sample s;
    s.id = "a";
    s.label = 1;
    s.prediction = 1;
    d.samples.push_back(s);
    Attribution a;
    a.sample_id = "a";
    a.shape.dims = {2};
    a.values = {0.5, 0.5};
    d.attributions["a"] = a;

    TempFile file("semmatch_export_err.json");
    CHECK_THROWS_WITH_AS(export_bundle(d, file.path, BundleMode::token),
                         doctest::Contains("ingest-only"), InputError);

    d.samples[0].features = std::vector<double>{1.0, 2.0};
    CHECK_THROWS_WITH_AS(export_bundle(d, file.path), doctest::Contains("feature"),
                         InputError);

    d.samples[0].features.reset();
    d.samples[0].prediction.reset();
    CHECK_THROWS_WITH_AS(export_bundle(d, file.path), doctest::Contains("prediction"),
                         InputError);
}
