#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "semmatch/error.hpp"
#include "semmatch/shapley.hpp"
#include "semmatch/tabular.hpp"

using namespace semmatch;

namespace {

// Independent oracle: average marginal contribution over all n!
// permutations (feasible for the small n used in tests).
std::vector<double> shapley_by_permutations(const Predictor& f, std::span<const double> x,
                                            const BackgroundSet& bg) {
    const int n = f.feature_count();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> phi(n, 0.0);
    std::int64_t count = 0;
    do {
        std::vector<int> prefix;
        double previous = coalition_value(f, x, prefix, bg);
        for (int i : order) {
            prefix.push_back(i);
            const double next = coalition_value(f, x, prefix, bg);
            phi[i] += next - previous;
            previous = next;
        }
        ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    for (auto& v : phi) v /= static_cast<double>(count);
    return phi;
}

BackgroundSet single_row(std::vector<double> row) {
    BackgroundSet bg;
    bg.rows.push_back(std::move(row));
    return bg;
}

}  // namespace

TEST_CASE("coalition_value endpoints") {
    const FunctionPredictor f(2, [](std::span<const double> x) { return x[0]; });
    const std::vector<double> x{2.0, 5.0};
    const auto bg = single_row({0.0, 1.0});

    // Full coalition: no replacement, exactly f(x).
    const std::vector<int> full{0, 1};
    CHECK(coalition_value(f, x, full, bg) == 2.0);
    // Empty coalition: mean of f over the background.
    CHECK(coalition_value(f, x, {}, bg) == 0.0);
    // Singleton coalition on the linear function.
    const std::vector<int> s0{0};
    CHECK(coalition_value(f, x, s0, bg) == 2.0);
}

TEST_CASE("coalition_value averages over background rows") {
    const FunctionPredictor f(2, [](std::span<const double> x) { return x[0] + x[1]; });
    BackgroundSet bg;
    bg.rows = {{0.0, 0.0}, {2.0, 4.0}};
    const std::vector<double> x{1.0, 1.0};
    CHECK(coalition_value(f, x, {}, bg) == doctest::Approx(3.0));  // mean(0, 6)
    const std::vector<int> s0{0};
    CHECK(coalition_value(f, x, s0, bg) == doctest::Approx(3.0));  // mean(1, 5)
}

TEST_CASE("coalition_value rejects an empty background") {
    const FunctionPredictor f(1, [](std::span<const double> x) { return x[0]; });
    const std::vector<double> x{1.0};
    CHECK_THROWS_AS(coalition_value(f, x, {}, BackgroundSet{}), EvalError);
}

TEST_CASE("exact_shapley: constant predictor gets zero attribution") {
    const FunctionPredictor f(3, [](std::span<const double>) { return 0.7; });
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto attribution = exact_shapley(f, x, single_row({0, 0, 0}), "s");
    for (double v : attribution.values) CHECK(v == 0.0);
}

TEST_CASE("exact_shapley: additive predictor splits exactly") {
    const FunctionPredictor f(2, [](std::span<const double> x) { return x[0] + x[1]; });
    const std::vector<double> x{1.0, 2.0};
    const auto attribution = exact_shapley(f, x, single_row({0.0, 0.0}), "s");
    CHECK(attribution.values[0] == doctest::Approx(1.0));
    CHECK(attribution.values[1] == doctest::Approx(2.0));
}

TEST_CASE("exact_shapley: symmetric product splits evenly") {
    const FunctionPredictor f(2, [](std::span<const double> x) { return x[0] * x[1]; });
    const std::vector<double> x{1.0, 1.0};
    const auto attribution = exact_shapley(f, x, single_row({0.0, 0.0}), "s");
    CHECK(attribution.values[0] == doctest::Approx(0.5));
    CHECK(attribution.values[1] == doctest::Approx(0.5));
}

TEST_CASE("exact_shapley agrees with the permutation oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 3);  // up to 4 features
        // Random multilinear-ish function: quadratic with cross terms.
        std::vector<double> a(n), b(n * n);
        for (auto& v : a) v = unit(rng);
        for (auto& v : b) v = unit(rng);
        const FunctionPredictor f(n, [n, a, b](std::span<const double> x) {
            double out = 0.0;
            for (int i = 0; i < n; ++i) {
                out += a[i] * x[i];
                for (int j = 0; j < n; ++j) out += b[i * n + j] * x[i] * x[j] * 0.1;
            }
            return out;
        });
        std::vector<double> x(n);
        for (auto& v : x) v = unit(rng);
        BackgroundSet bg;
        for (int r = 0; r < 3; ++r) {
            std::vector<double> row(n);
            for (auto& v : row) v = unit(rng);
            bg.rows.push_back(std::move(row));
        }
        const auto fast = exact_shapley(f, x, bg, "s");
        const auto slow = shapley_by_permutations(f, x, bg);
        for (int i = 0; i < n; ++i)
            CHECK(fast.values[i] == doctest::Approx(slow[i]).epsilon(1e-10));
    }
}

TEST_CASE("efficiency: attributions sum to f(x) - v(empty)") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);

    // A small trained forest as the black box.
    SyntheticConfig cfg;
    cfg.n_train = 400;
    cfg.n_test = 1;
    const auto data = generate_synthetic(cfg);
    const auto train = to_training_data({data.samples.data(), 400});
    ForestParams params;
    params.n_trees = 20;
    params.tree.max_depth = 5;
    const auto forest = train_forest(train, params);
    const ForestPredictor predictor(forest, 3);

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x{unit(rng), unit(rng), static_cast<double>(rng() % 2)};
        BackgroundSet bg;
        for (int r = 0; r < 8; ++r)
            bg.rows.push_back({unit(rng), unit(rng), static_cast<double>(rng() % 2)});
        const auto attribution = exact_shapley(predictor, x, bg, "s");
        const double total =
            std::accumulate(attribution.values.begin(), attribution.values.end(), 0.0);
        const double expected =
            predictor.predict_probability(x) - coalition_value(predictor, x, {}, bg);
        CHECK(std::abs(total - expected) < 1e-9);
    }
}

TEST_CASE("symmetry: interchangeable features receive equal attribution") {
    const FunctionPredictor f(3, [](std::span<const double> x) {
        return x[0] * x[1] + 0.3 * (x[0] + x[1]) + x[2];
    });
    // x0 and x1 play symmetric roles and share values everywhere.
    const std::vector<double> x{0.8, 0.8, -0.4};
    BackgroundSet bg;
    bg.rows = {{0.1, 0.1, 0.5}, {-0.7, -0.7, 0.2}};
    const auto attribution = exact_shapley(f, x, bg, "s");
    CHECK(attribution.values[0] == attribution.values[1]);  // exact
}

TEST_CASE("dummy: an unread feature gets exactly zero") {
    const FunctionPredictor f(3, [](std::span<const double> x) { return x[0] * 2.0 + x[2]; });
    const std::vector<double> x{1.5, 99.0, -0.5};
    BackgroundSet bg;
    bg.rows = {{0.0, -5.0, 1.0}, {1.0, 7.0, 0.0}};
    const auto attribution = exact_shapley(f, x, bg, "s");
    CHECK(attribution.values[1] == 0.0);
}

TEST_CASE("linearity: phi(a*f + b*g) = a*phi(f) + b*phi(g)") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double alpha = unit(rng), beta = unit(rng);
        const FunctionPredictor f(2, [](std::span<const double> x) { return x[0] * x[1]; });
        const FunctionPredictor g(2, [](std::span<const double> x) { return x[0] - 2.0 * x[1]; });
        const FunctionPredictor combined(2, [&](std::span<const double> x) {
            return alpha * f.predict_probability(x) + beta * g.predict_probability(x);
        });
        std::vector<double> x{unit(rng), unit(rng)};
        BackgroundSet bg;
        bg.rows = {{unit(rng), unit(rng)}, {unit(rng), unit(rng)}};
        const auto pf = exact_shapley(f, x, bg, "s");
        const auto pg = exact_shapley(g, x, bg, "s");
        const auto pc = exact_shapley(combined, x, bg, "s");
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(pc.values[i] - (alpha * pf.values[i] + beta * pg.values[i])) < 1e-9);
    }
}

TEST_CASE("feature-count cap raises a helpful error") {
    const FunctionPredictor f(16, [](std::span<const double>) { return 0.5; });
    const std::vector<double> x(16, 0.0);
    CHECK_THROWS_WITH_AS(exact_shapley(f, x, single_row(std::vector<double>(16, 0.0)), "s"),
                         doctest::Contains("sampling"), EvalError);
}
