#include "semmatch/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "semmatch/error.hpp"

namespace semmatch {

const Sample* Dataset::find_sample(const std::string& id) const {
    for (const auto& s : samples)
        if (s.id == id) return &s;
    return nullptr;
}

const Attribution* Dataset::find_attribution(const std::string& id) const {
    auto it = attributions.find(id);
    return it == attributions.end() ? nullptr : &it->second;
}

const MaskMap& Dataset::masks_for(const std::string& id) const {
    static const MaskMap empty;
    auto it = masks.find(id);
    return it == masks.end() ? empty : it->second;
}

namespace {

std::string mask_error_prefix(const Mask& mask, const std::string& sample_id) {
    std::string where = "mask '" + mask.name + "'";
    if (!sample_id.empty()) where += " on sample '" + sample_id + "'";
    return where;
}

}  // namespace

std::vector<std::int64_t> flatten_mask(const Mask& mask, const Shape& shape,
                                       const std::string& sample_id) {
    const auto where = mask_error_prefix(mask, sample_id);
    if (shape.dims.empty() || shape.dims.size() > 2)
        throw ValidationError(where + ": shape must have one or two dimensions");
    for (auto d : shape.dims)
        if (d <= 0) throw ValidationError(where + ": shape dimensions must be positive");

    if (const auto* box = std::get_if<Box>(&mask.selector)) {
        if (!shape.is_grid())
            throw ValidationError(where + ": box selector requires a 2-D shape");
        const auto h = shape.dims[0], w = shape.dims[1];
        if (box->x0 < 0 || box->y0 < 0 || box->x1 > h || box->y1 > w)
            throw ValidationError(where + ": box exceeds shape bounds");
        if (box->x0 >= box->x1 || box->y0 >= box->y1)
            throw ValidationError(where + ": box selects no positions");
        std::vector<std::int64_t> indices;
        indices.reserve(static_cast<std::size_t>((box->x1 - box->x0) * (box->y1 - box->y0)));
        for (std::int64_t r = box->x0; r < box->x1; ++r)
            for (std::int64_t c = box->y0; c < box->y1; ++c) indices.push_back(r * w + c);
        return indices;
    }

    auto indices = std::get<std::vector<std::int64_t>>(mask.selector);
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    if (indices.empty()) throw ValidationError(where + ": index set is empty");
    const auto n = shape.flat_size();
    if (indices.front() < 0 || indices.back() >= n)
        throw ValidationError(where + ": index out of range for flattened length " +
                              std::to_string(n));
    return indices;
}

namespace {

bool all_finite(const std::vector<double>& values) {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

}  // namespace

std::vector<Violation> validate_dataset(const Dataset& dataset) {
    std::vector<Violation> out;
    auto add = [&](const std::string& id, const std::string& field, std::string msg) {
        out.push_back({id, field, std::move(msg)});
    };

    std::set<std::string> ids;
    for (const auto& s : dataset.samples) {
        if (!ids.insert(s.id).second) add(s.id, "id", "duplicate sample id");
        if (s.label != 0 && s.label != 1) add(s.id, "label", "label must be 0 or 1");
        if (s.prediction && *s.prediction != 0 && *s.prediction != 1)
            add(s.id, "prediction", "prediction must be 0 or 1");
        if (s.predicted_probability) {
            const double p = *s.predicted_probability;
            if (!std::isfinite(p) || p < 0.0 || p > 1.0)
                add(s.id, "predicted_probability", "probability must lie in [0,1]");
            else if (s.prediction && *s.prediction != (p > 0.5 ? 1 : 0))
                add(s.id, "prediction", "prediction inconsistent with probability threshold 0.5");
        }
        if (s.features && !all_finite(*s.features))
            add(s.id, "features", "feature values must be finite");
    }

    std::size_t expected_arity = 0;
    for (const auto& [id, attr] : dataset.attributions) {
        if (!ids.count(id)) add(id, "attribution", "attribution references unknown sample id");
        if (attr.sample_id != id)
            add(id, "attribution", "attribution keyed under '" + id + "' carries sample_id '" +
                                       attr.sample_id + "'");
        const auto arity = attr.shape.dims.size();
        if (arity != 1 && arity != 2) {
            add(id, "shape", "shape must have one or two dimensions");
            continue;
        }
        bool bad_dim = false;
        for (auto d : attr.shape.dims)
            if (d <= 0) bad_dim = true;
        if (bad_dim) {
            add(id, "shape", "shape dimensions must be positive");
            continue;
        }
        if (expected_arity == 0) expected_arity = arity;
        if (arity != expected_arity)
            add(id, "shape", "mixed flat and 2-D attributions within one dataset");
        if (static_cast<std::int64_t>(attr.values.size()) != attr.shape.flat_size())
            add(id, "values", "values length does not match shape");
        if (!all_finite(attr.values)) add(id, "values", "attribution values must be finite");
    }

    for (const auto& [id, mask_map] : dataset.masks) {
        if (!ids.count(id)) {
            add(id, "masks", "masks reference unknown sample id");
            continue;
        }
        const auto* attr = dataset.find_attribution(id);
        for (const auto& [name, mask] : mask_map) {
            if (name != mask.name)
                add(id, "masks." + name, "mask keyed under '" + name + "' is named '" +
                                             mask.name + "'");
            if (!attr) {
                add(id, "masks." + name, "mask present but sample has no attribution");
                continue;
            }
            try {
                flatten_mask(mask, attr->shape, id);
            } catch (const ValidationError& e) {
                add(id, "masks." + name, e.what());
            }
        }
    }

    return out;
}

std::string describe_violations(const std::vector<Violation>& violations) {
    std::ostringstream os;
    for (const auto& v : violations) {
        if (!v.sample_id.empty()) os << v.sample_id << ": ";
        os << v.field << ": " << v.message << "\n";
    }
    return os.str();
}

}  // namespace semmatch
