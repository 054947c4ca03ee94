#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semmatch/core.hpp"
#include "semmatch/distance.hpp"
#include "semmatch/predicate.hpp"

namespace semmatch {

// Per-sample satisfaction flags for one hypothesis (at one sweep value).
struct EvaluationRecord {
    std::string sample_id;
    bool satisfies_A = false;
    std::optional<bool> satisfies_B;  // present when the behavior was evaluable
    bool satisfies_theta = false;     // A and B
};

struct FiveNumberSummary {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

// val(theta) = |{A and B}| / |{A}|. Requires every A-satisfying record to
// carry a behavior verdict and at least one A-satisfying record.
double validity(std::span<const EvaluationRecord> records);

// P(A) over all records.
double coverage(std::span<const EvaluationRecord> records);

// P(A | B) = |{A and B}| / |{B}|. Requires the behavior to be evaluable on
// every record (otherwise instructs to supply attributions for all samples)
// and at least one B-satisfying record.
double sharpness(std::span<const EvaluationRecord> records);

// Statistical median; even counts average the two middle order statistics.
double median_distance(std::vector<double> distances);

// Mann-Whitney AUC of scores -d against the labels, midrank tie handling.
// Returns nullopt when either class is empty.
std::optional<double> auc(std::span<const int> labels, std::span<const double> distances);

// AUC where larger scores indicate the positive class (no sign flip).
std::optional<double> auc_from_scores(std::span<const int> labels,
                                      std::span<const double> scores);

// Linear-interpolation quantiles over the defined values.
FiveNumberSummary five_number_summary(std::vector<double> values);

enum class PopulationMode { applicable, all };

struct ReferencePolicy {
    enum class Kind { all_satisfying, sampled };
    Kind kind = Kind::all_satisfying;
    std::int64_t k = 0;      // sampled: number of references drawn
    std::uint64_t seed = 0;  // sampled: draw seed
};

struct MatchReport {
    std::string hypothesis_name;
    std::optional<double> z;
    double validity = 0.0;
    double coverage = 0.0;
    std::optional<double> sharpness;  // absent when B is not evaluable everywhere
    std::int64_t n_references = 0;
    std::vector<std::string> reference_ids;           // sorted by id
    std::vector<double> md_values;                    // one per reference
    std::vector<std::optional<double>> auc_values;    // one per reference
    std::optional<FiveNumberSummary> md_summary;
    std::optional<FiveNumberSummary> auc_summary;     // over defined AUCs only
    std::int64_t n_undefined_auc = 0;
};

struct EvaluateOptions {
    std::optional<double> z;
    PopulationMode population = PopulationMode::applicable;
    ReferencePolicy reference_policy;
    ZeroTotalPolicy behavior_zero_total_policy = ZeroTotalPolicy::error;
    int threads = 1;
};

// Satisfaction flags for every sample in dataset order. A-satisfying
// samples must be evaluable under B (missing attribution or mask raises
// EvalError); elsewhere the B verdict is recorded only when evaluable.
std::vector<EvaluationRecord> evaluate_records(const Dataset& dataset, const Hypothesis& h,
                                               std::optional<double> z,
                                               ZeroTotalPolicy zero_total_policy =
                                                   ZeroTotalPolicy::error);

// Full semantic-match scoring of one hypothesis at one sweep value:
// validity/coverage/sharpness over the records, then per-reference median
// distance over the population and discrimination AUC over the A-restricted
// relabeling. References are the theta-satisfying samples in id order (all
// of them, or k sampled without replacement with the policy seed).
// `reference_distances`, when non-null, receives one population-distance
// vector per reference for chart emission.
MatchReport evaluate_match(const Dataset& dataset, const Hypothesis& h,
                           const DistanceSpec& distance_spec, const EvaluateOptions& options,
                           std::vector<std::vector<double>>* reference_distances = nullptr);

}  // namespace semmatch
