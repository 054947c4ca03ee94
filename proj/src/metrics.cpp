#include "semmatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "semmatch/error.hpp"
#include "semmatch/parallel.hpp"

namespace semmatch {

namespace {

struct Counts {
    std::int64_t n = 0, n_a = 0, n_b = 0, n_ab = 0;
    bool b_everywhere = true;  // behavior evaluable on every record
};

Counts count_records(std::span<const EvaluationRecord> records) {
    Counts c;
    c.n = static_cast<std::int64_t>(records.size());
    for (const auto& r : records) {
        if (r.satisfies_A) ++c.n_a;
        if (!r.satisfies_B) {
            c.b_everywhere = false;
            continue;
        }
        if (*r.satisfies_B) {
            ++c.n_b;
            if (r.satisfies_A) ++c.n_ab;
        }
    }
    return c;
}

}  // namespace

double validity(std::span<const EvaluationRecord> records) {
    const Counts c = count_records(records);
    if (c.n_a == 0) throw EvalError("validity is undefined: no record satisfies A");
    for (const auto& r : records)
        if (r.satisfies_A && !r.satisfies_B)
            throw EvalError("validity needs a behavior verdict for every A-satisfying record "
                            "(sample '" + r.sample_id + "' has none)");
    return static_cast<double>(c.n_ab) / static_cast<double>(c.n_a);
}

double coverage(std::span<const EvaluationRecord> records) {
    if (records.empty()) throw EvalError("coverage is undefined on an empty record set");
    const Counts c = count_records(records);
    return static_cast<double>(c.n_a) / static_cast<double>(c.n);
}

double sharpness(std::span<const EvaluationRecord> records) {
    if (records.empty()) throw EvalError("sharpness is undefined on an empty record set");
    const Counts c = count_records(records);
    if (!c.b_everywhere)
        throw EvalError("sharpness needs the behavior evaluated on every record; "
                        "supply attributions (and masks) for all samples");
    if (c.n_b == 0) throw EvalError("sharpness is undefined: no record satisfies B");
    return static_cast<double>(c.n_ab) / static_cast<double>(c.n_b);
}

double median_distance(std::vector<double> distances) {
    if (distances.empty()) throw EvalError("median of an empty distance list");
    std::sort(distances.begin(), distances.end());
    const std::size_t n = distances.size();
    if (n % 2 == 1) return distances[n / 2];
    return 0.5 * (distances[n / 2 - 1] + distances[n / 2]);
}

std::optional<double> auc_from_scores(std::span<const int> labels,
                                      std::span<const double> scores) {
    if (labels.size() != scores.size())
        throw EvalError("auc: labels and scores must have equal length");
    std::int64_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over ascending scores, then the rank-sum form of Mann-Whitney.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> auc(std::span<const int> labels, std::span<const double> distances) {
    std::vector<double> scores(distances.size());
    for (std::size_t k = 0; k < distances.size(); ++k) scores[k] = -distances[k];
    return auc_from_scores(labels, scores);
}

FiveNumberSummary five_number_summary(std::vector<double> values) {
    if (values.empty()) throw EvalError("five-number summary of an empty list");
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        const double h = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, values.size() - 1);
        const double frac = h - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

std::vector<EvaluationRecord> evaluate_records(const Dataset& dataset, const Hypothesis& h,
                                               std::optional<double> z,
                                               ZeroTotalPolicy zero_total_policy) {
    const auto needed_masks = h.behavior.referenced_masks();
    std::vector<EvaluationRecord> records;
    records.reserve(dataset.samples.size());
    for (const auto& sample : dataset.samples) {
        EvaluationRecord rec;
        rec.sample_id = sample.id;
        rec.satisfies_A = eval_applicability(h, sample);

        const auto* attr = dataset.find_attribution(sample.id);
        const auto& masks = dataset.masks_for(sample.id);
        bool evaluable = attr != nullptr;
        for (const auto& name : needed_masks)
            if (!masks.count(name)) evaluable = false;

        if (evaluable) {
            rec.satisfies_B =
                eval_behavior(h, *attr, masks, z, &sample, zero_total_policy);
        } else if (rec.satisfies_A) {
            throw EvalError("sample '" + sample.id + "' satisfies the applicability condition "
                            "but its behavior is not evaluable (missing attribution or mask)");
        }
        rec.satisfies_theta = rec.satisfies_A && rec.satisfies_B.value_or(false);
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

// Theta-satisfying ids in lexicographic order, so results do not depend on
// dataset ordering. Sampling without replacement indexes this sorted list.
std::vector<std::string> select_references(const std::vector<EvaluationRecord>& records,
                                           const ReferencePolicy& policy) {
    std::vector<std::string> satisfying;
    for (const auto& r : records)
        if (r.satisfies_theta) satisfying.push_back(r.sample_id);
    std::sort(satisfying.begin(), satisfying.end());
    if (satisfying.empty()) throw EvalError("empty reference set: no sample satisfies the hypothesis");
    if (policy.kind == ReferencePolicy::Kind::all_satisfying) return satisfying;
    if (policy.k <= 0) throw ConfigError("sampled reference policy requires k >= 1");
    const auto k = std::min<std::int64_t>(policy.k,
                                          static_cast<std::int64_t>(satisfying.size()));
    std::mt19937_64 rng(policy.seed);
    for (std::int64_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::int64_t> pick(
            i, static_cast<std::int64_t>(satisfying.size()) - 1);
        std::swap(satisfying[i], satisfying[pick(rng)]);
    }
    satisfying.resize(k);
    std::sort(satisfying.begin(), satisfying.end());
    return satisfying;
}

}  // namespace

MatchReport evaluate_match(const Dataset& dataset, const Hypothesis& h,
                           const DistanceSpec& distance_spec, const EvaluateOptions& options,
                           std::vector<std::vector<double>>* reference_distances) {
    const auto records = evaluate_records(dataset, h, options.z,
                                          options.behavior_zero_total_policy);

    MatchReport report;
    report.hypothesis_name = h.name;
    report.z = options.z;
    report.validity = validity(records);
    report.coverage = coverage(records);
    const Counts counts = count_records(records);
    if (counts.b_everywhere && counts.n_b > 0)
        report.sharpness = sharpness(records);

    report.reference_ids = select_references(records, options.reference_policy);
    report.n_references = static_cast<std::int64_t>(report.reference_ids.size());

    // Population for median distance; AUC always ranks the A-restricted set.
    std::vector<std::string> population;
    std::vector<int> a_labels;            // theta indicator per A-satisfying sample
    std::vector<std::size_t> a_positions; // index into `population`
    for (const auto& r : records) {
        const bool in_population =
            options.population == PopulationMode::all || r.satisfies_A;
        if (in_population) population.push_back(r.sample_id);
        if (r.satisfies_A) {
            a_labels.push_back(r.satisfies_theta ? 1 : 0);
            a_positions.push_back(population.size() - 1);
        }
    }

    report.md_values.resize(report.reference_ids.size());
    report.auc_values.resize(report.reference_ids.size());
    if (reference_distances) reference_distances->resize(report.reference_ids.size());

    parallel_for(report.reference_ids.size(), options.threads, [&](std::size_t r) {
        const auto& ref_id = report.reference_ids[r];
        std::vector<double> distances(population.size());
        for (std::size_t j = 0; j < population.size(); ++j) {
            try {
                distances[j] = population[j] == ref_id
                                   ? 0.0
                                   : pair_distance(dataset, distance_spec, population[j], ref_id);
            } catch (const Error& e) {
                throw EvalError("distance(" + population[j] + ", " + ref_id + "): " + e.what());
            }
        }
        report.md_values[r] = median_distance(distances);
        std::vector<double> a_distances(a_positions.size());
        for (std::size_t k = 0; k < a_positions.size(); ++k)
            a_distances[k] = distances[a_positions[k]];
        report.auc_values[r] = auc(a_labels, a_distances);
        if (reference_distances) (*reference_distances)[r] = std::move(distances);
    });

    std::vector<double> defined_aucs;
    for (const auto& v : report.auc_values)
        if (v) defined_aucs.push_back(*v);
    report.n_undefined_auc =
        static_cast<std::int64_t>(report.auc_values.size() - defined_aucs.size());
    report.md_summary = five_number_summary(report.md_values);
    if (!defined_aucs.empty()) report.auc_summary = five_number_summary(defined_aucs);
    return report;
}

}  // namespace semmatch
