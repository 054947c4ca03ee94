#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace semmatch {

// Attribution shape: one dimension (flat vector of length n) or two
// dimensions (h x w grid, values stored row-major).
struct Shape {
    std::vector<std::int64_t> dims;

    bool is_flat() const { return dims.size() == 1; }
    bool is_grid() const { return dims.size() == 2; }
    std::int64_t flat_size() const {
        std::int64_t n = 1;
        for (auto d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }

    friend bool operator==(const Shape&, const Shape&) = default;
};

// Scalar metadata value. Nested structures are rejected at ingest time to
// keep the predicate language decidable.
using MetaValue = std::variant<double, bool, std::int64_t>;
using MetadataMap = std::map<std::string, MetaValue>;

struct Sample {
    std::string id;
    std::optional<std::vector<double>> features;  // tabular mode only
    int label = 0;                                // {0,1}
    std::optional<int> prediction;                // {0,1}, filled once a model ran
    std::optional<double> predicted_probability;  // [0,1]
    MetadataMap metadata;

    bool correct() const { return prediction.has_value() && *prediction == label; }

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Attribution {
    std::string sample_id;
    Shape shape;
    std::vector<double> values;  // row-major, length == shape.flat_size()

    friend bool operator==(const Attribution&, const Attribution&) = default;
};

// Half-open box over a 2-D shape: rows [x0, x1), columns [y0, y1).
struct Box {
    std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    friend bool operator==(const Box&, const Box&) = default;
};

// Named index-selector over attribution positions. Explicit index sets are
// stored sorted and deduplicated; boxes are resolved against a shape when
// flattened.
struct Mask {
    std::string name;
    std::variant<std::vector<std::int64_t>, Box> selector;

    bool is_box() const { return std::holds_alternative<Box>(selector); }

    friend bool operator==(const Mask&, const Mask&) = default;
};

using MaskMap = std::map<std::string, Mask>;

struct Dataset {
    std::vector<Sample> samples;
    std::map<std::string, Attribution> attributions;  // sample_id -> attribution
    std::map<std::string, MaskMap> masks;             // sample_id -> name -> mask

    const Sample* find_sample(const std::string& id) const;
    const Attribution* find_attribution(const std::string& id) const;
    // Masks registered for one sample; empty map when none.
    const MaskMap& masks_for(const std::string& id) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Expand a mask to the sorted set of flattened indices it selects on the
// given shape. Boxes require a 2-D shape; explicit sets pass through
// (sorted, deduplicated). Throws ValidationError on out-of-bounds or empty
// selections; `sample_id` is only used for error text.
std::vector<std::int64_t> flatten_mask(const Mask& mask, const Shape& shape,
                                       const std::string& sample_id = {});

struct Violation {
    std::string sample_id;  // empty for dataset-level problems
    std::string field;
    std::string message;
};

// Check every dataset invariant; returns one entry per violation, empty
// means valid. Never throws, never mutates.
std::vector<Violation> validate_dataset(const Dataset& dataset);

// Render a violation list for error messages, one violation per line.
std::string describe_violations(const std::vector<Violation>& violations);

}  // namespace semmatch
