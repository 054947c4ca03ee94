#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semmatch/core.hpp"

namespace semmatch {

// What to do when an attribution's total absolute mass is zero: a zero map
// usually signals an upstream fault, so the default is to error out.
enum class ZeroTotalPolicy { error, zero };

// Hypothesis-driven distance between explanations.
struct DistanceSpec {
    enum class Kind { euclidean, euclidean_subset, proportion };

    Kind kind = Kind::euclidean;
    std::vector<std::int64_t> subset;  // euclidean_subset: feature indices to keep
    std::string mask_name;             // proportion: per-sample mask to compare
    ZeroTotalPolicy zero_total_policy = ZeroTotalPolicy::error;
};

// ||e_i - e_c|| over all positions, or over `subset` when non-empty.
// Requires equal shapes.
double euclidean(const Attribution& e_i, const Attribution& e_c,
                 std::span<const std::int64_t> subset = {});

struct ProportionResult {
    double value = 0.0;      // in [0,1]
    bool zero_total = false; // set when policy==zero swallowed a zero-mass map
};

// Share of total absolute attribution inside the mask:
// sum_{k in mask} |e[k]| / sum_k |e[k]|.
ProportionResult mask_proportion(const Attribution& e, const Mask& mask,
                                 ZeroTotalPolicy policy = ZeroTotalPolicy::error);

// |p_i - p_c| of the two masked proportions. Shapes may differ; the masks
// are resolved against their own attribution's shape.
double proportion_distance(const Attribution& e_i, const Mask& mask_i,
                           const Attribution& e_c, const Mask& mask_c,
                           ZeroTotalPolicy policy = ZeroTotalPolicy::error);

// Distance between two samples of a dataset per the distance spec.
// For proportion distances each sample must carry the named mask.
double pair_distance(const Dataset& dataset, const DistanceSpec& spec,
                     const std::string& id_i, const std::string& id_c);

struct DistanceMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;  // row-major

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Entry (r, j) = d(e_population[j], e_references[r]).
DistanceMatrix distance_matrix(const Dataset& dataset, const DistanceSpec& spec,
                               const std::vector<std::string>& references,
                               const std::vector<std::string>& population);

}  // namespace semmatch
