#include "semmatch/shapley.hpp"

#include <bit>
#include <cmath>

#include "semmatch/error.hpp"

namespace semmatch {

double coalition_value(const Predictor& f, std::span<const double> x,
                       std::span<const int> coalition, const BackgroundSet& background) {
    const int n = f.feature_count();
    if (background.rows.empty()) throw EvalError("coalition value needs a non-empty background");
    if (static_cast<int>(x.size()) != n)
        throw EvalError("input vector length does not match the predictor's feature count");
    for (const auto& row : background.rows)
        if (static_cast<int>(row.size()) != n)
            throw EvalError("background row length does not match the predictor's feature count");
    std::uint32_t bits = 0;
    for (int i : coalition) {
        if (i < 0 || i >= n)
            throw EvalError("coalition index " + std::to_string(i) + " out of range");
        bits |= 1u << i;
    }
    double sum = 0.0;
    std::vector<double> hybrid(x.begin(), x.end());
    for (const auto& row : background.rows) {
        for (int i = 0; i < n; ++i)
            hybrid[i] = (bits >> i) & 1u ? x[i] : row[i];
        sum += f.predict_probability(hybrid);
    }
    return sum / static_cast<double>(background.rows.size());
}

Attribution exact_shapley(const Predictor& f, std::span<const double> x,
                          const BackgroundSet& background, const std::string& sample_id,
                          int max_features) {
    const int n = f.feature_count();
    if (n > max_features)
        throw EvalError("exact Shapley enumerates 2^n coalitions; " + std::to_string(n) +
                        " features exceed the cap of " + std::to_string(max_features) +
                        " (use a sampling approximation instead)");
    if (background.rows.empty()) throw EvalError("exact Shapley needs a non-empty background");
    if (static_cast<int>(x.size()) != n)
        throw EvalError("input vector length does not match the predictor's feature count");

    // Every coalition value once, shared by all features.
    const std::uint32_t n_coalitions = 1u << n;
    std::vector<double> value(n_coalitions);
    std::vector<double> hybrid(x.begin(), x.end());
    for (std::uint32_t bits = 0; bits < n_coalitions; ++bits) {
        double sum = 0.0;
        for (const auto& row : background.rows) {
            for (int i = 0; i < n; ++i)
                hybrid[i] = (bits >> i) & 1u ? x[i] : row[i];
            sum += f.predict_probability(hybrid);
        }
        value[bits] = sum / static_cast<double>(background.rows.size());
    }

    // w(s) = s! (n-1-s)! / n!  — exact in double for n <= 15.
    std::vector<double> factorial(n + 1, 1.0);
    for (int i = 1; i <= n; ++i) factorial[i] = factorial[i - 1] * i;
    std::vector<double> weight(n);
    for (int s = 0; s < n; ++s)
        weight[s] = factorial[s] * factorial[n - 1 - s] / factorial[n];

    Attribution attribution;
    attribution.sample_id = sample_id;
    attribution.shape.dims = {n};
    attribution.values.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const std::uint32_t bit = 1u << i;
        double phi = 0.0;
        for (std::uint32_t bits = 0; bits < n_coalitions; ++bits) {
            if (bits & bit) continue;
            const int size = std::popcount(bits);
            phi += weight[size] * (value[bits | bit] - value[bits]);
        }
        attribution.values[i] = phi;
    }
    return attribution;
}

}  // namespace semmatch
