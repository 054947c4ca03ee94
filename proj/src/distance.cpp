#include "semmatch/distance.hpp"

#include <cmath>

#include "semmatch/error.hpp"

namespace semmatch {

double euclidean(const Attribution& e_i, const Attribution& e_c,
                 std::span<const std::int64_t> subset) {
    if (e_i.shape != e_c.shape)
        throw EvalError("euclidean distance requires equal shapes ('" + e_i.sample_id +
                        "' vs '" + e_c.sample_id + "')");
    double sum = 0.0;
    if (subset.empty()) {
        for (std::size_t k = 0; k < e_i.values.size(); ++k) {
            const double d = e_i.values[k] - e_c.values[k];
            sum += d * d;
        }
    } else {
        const auto n = static_cast<std::int64_t>(e_i.values.size());
        for (auto k : subset) {
            if (k < 0 || k >= n)
                throw EvalError("euclidean subset index " + std::to_string(k) +
                                " out of range for length " + std::to_string(n));
            const double d = e_i.values[k] - e_c.values[k];
            sum += d * d;
        }
    }
    return std::sqrt(sum);
}

ProportionResult mask_proportion(const Attribution& e, const Mask& mask,
                                 ZeroTotalPolicy policy) {
    const auto indices = flatten_mask(mask, e.shape, e.sample_id);
    double total = 0.0;
    for (double v : e.values) total += std::abs(v);
    if (total == 0.0) {
        if (policy == ZeroTotalPolicy::error)
            throw EvalError("attribution for sample '" + e.sample_id +
                            "' has zero total absolute mass");
        return {0.0, true};
    }
    double masked = 0.0;
    for (auto k : indices) masked += std::abs(e.values[k]);
    return {masked / total, false};
}

double proportion_distance(const Attribution& e_i, const Mask& mask_i,
                           const Attribution& e_c, const Mask& mask_c,
                           ZeroTotalPolicy policy) {
    const double p_i = mask_proportion(e_i, mask_i, policy).value;
    const double p_c = mask_proportion(e_c, mask_c, policy).value;
    return std::abs(p_i - p_c);
}

namespace {

const Attribution& attribution_or_throw(const Dataset& dataset, const std::string& id) {
    const auto* attr = dataset.find_attribution(id);
    if (!attr) throw EvalError("sample '" + id + "' has no attribution");
    return *attr;
}

const Mask& mask_or_throw(const Dataset& dataset, const std::string& id,
                          const std::string& mask_name) {
    const auto& masks = dataset.masks_for(id);
    auto it = masks.find(mask_name);
    if (it == masks.end())
        throw EvalError("sample '" + id + "' has no mask named '" + mask_name + "'");
    return it->second;
}

}  // namespace

double pair_distance(const Dataset& dataset, const DistanceSpec& spec,
                     const std::string& id_i, const std::string& id_c) {
    const auto& e_i = attribution_or_throw(dataset, id_i);
    const auto& e_c = attribution_or_throw(dataset, id_c);
    switch (spec.kind) {
        case DistanceSpec::Kind::euclidean:
            return euclidean(e_i, e_c);
        case DistanceSpec::Kind::euclidean_subset:
            if (spec.subset.empty())
                throw ConfigError("euclidean_subset distance requires a non-empty subset");
            return euclidean(e_i, e_c, spec.subset);
        case DistanceSpec::Kind::proportion: {
            if (spec.mask_name.empty())
                throw ConfigError("proportion distance requires a mask name");
            const auto& m_i = mask_or_throw(dataset, id_i, spec.mask_name);
            const auto& m_c = mask_or_throw(dataset, id_c, spec.mask_name);
            return proportion_distance(e_i, m_i, e_c, m_c, spec.zero_total_policy);
        }
    }
    throw EvalError("unknown distance kind");
}

DistanceMatrix distance_matrix(const Dataset& dataset, const DistanceSpec& spec,
                               const std::vector<std::string>& references,
                               const std::vector<std::string>& population) {
    DistanceMatrix m;
    m.rows = references.size();
    m.cols = population.size();
    m.data.resize(m.rows * m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            try {
                m.data[r * m.cols + j] =
                    population[j] == references[r]
                        ? 0.0
                        : pair_distance(dataset, spec, population[j], references[r]);
            } catch (const Error& e) {
                throw EvalError("distance(" + population[j] + ", " + references[r] +
                                "): " + e.what());
            }
        }
    }
    return m;
}

}  // namespace semmatch
