#include "semmatch/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "semmatch/error.hpp"

namespace semmatch {

namespace {

using json = nlohmann::json;

[[noreturn]] void schema_fail(const std::string& path, const std::string& what) {
    throw SchemaError(path + ": " + what);
}

const json& member(const json& obj, const std::string& path, const std::string& key) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_fail(path, "missing required field '" + key + "'");
    return *it;
}

std::int64_t expect_int(const json& j, const std::string& path) {
    if (!j.is_number_integer() && !j.is_number_unsigned())
        schema_fail(path, "expected an integer");
    return j.get<std::int64_t>();
}

double expect_number(const json& j, const std::string& path) {
    if (!j.is_number()) schema_fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) schema_fail(path, "number must be finite");
    return v;
}

std::string expect_string(const json& j, const std::string& path) {
    if (!j.is_string()) schema_fail(path, "expected a string");
    return j.get<std::string>();
}

const json& expect_array(const json& j, const std::string& path) {
    if (!j.is_array()) schema_fail(path, "expected an array");
    return j;
}

const json& expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) schema_fail(path, "expected an object");
    return j;
}

int expect_binary(const json& j, const std::string& path) {
    const auto v = expect_int(j, path);
    if (v != 0 && v != 1) schema_fail(path, "expected 0 or 1");
    return static_cast<int>(v);
}

void check_known_keys(const json& obj, const std::string& path,
                      const std::set<std::string>& known, bool strict) {
    for (const auto& [key, _] : obj.items()) {
        if (known.count(key)) continue;
        if (strict) schema_fail(path, "unknown field '" + key + "' (strict mode)");
        std::cerr << "warning: " << path << ": ignoring unknown field '" << key << "'\n";
    }
}

std::vector<double> expect_number_array(const json& j, const std::string& path) {
    std::vector<double> out;
    out.reserve(expect_array(j, path).size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(expect_number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<std::vector<double>> expect_matrix(const json& j, const std::string& path) {
    std::vector<std::vector<double>> out;
    out.reserve(expect_array(j, path).size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(expect_number_array(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

Mask parse_mask(const json& j, const std::string& name, const std::string& path,
                BundleMode mode, bool strict) {
    expect_object(j, path);
    check_known_keys(j, path, {"indices", "box"}, strict);
    const bool has_indices = j.contains("indices");
    const bool has_box = j.contains("box");
    if (has_indices == has_box)
        schema_fail(path, "a mask needs exactly one of 'indices' or 'box'");
    Mask mask;
    mask.name = name;
    if (has_indices) {
        std::vector<std::int64_t> indices;
        const auto& arr = expect_array(j["indices"], path + ".indices");
        for (std::size_t i = 0; i < arr.size(); ++i)
            indices.push_back(expect_int(arr[i], path + ".indices[" + std::to_string(i) + "]"));
        std::sort(indices.begin(), indices.end());
        indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
        mask.selector = std::move(indices);
    } else {
        if (mode == BundleMode::flat)
            schema_fail(path, "box masks are only valid in grid mode");
        const auto& arr = expect_array(j["box"], path + ".box");
        if (arr.size() != 4) schema_fail(path + ".box", "expected [x0, y0, x1, y1]");
        Box box;
        box.x0 = expect_int(arr[0], path + ".box[0]");
        box.y0 = expect_int(arr[1], path + ".box[1]");
        box.x1 = expect_int(arr[2], path + ".box[2]");
        box.y1 = expect_int(arr[3], path + ".box[3]");
        mask.selector = box;
    }
    return mask;
}

MetadataMap parse_metadata(const json& j, const std::string& path) {
    MetadataMap out;
    expect_object(j, path);
    for (const auto& [key, value] : j.items()) {
        const std::string vpath = path + "." + key;
        if (value.is_boolean())
            out[key] = value.get<bool>();
        else if (value.is_number_integer() || value.is_number_unsigned())
            out[key] = value.get<std::int64_t>();
        else if (value.is_number_float())
            out[key] = expect_number(value, vpath);
        else
            schema_fail(vpath, "metadata values must be scalar numbers or booleans");
    }
    return out;
}

}  // namespace

std::vector<double> aggregate_token_contributions(
    const std::vector<std::vector<double>>& start_values,
    const std::vector<std::vector<double>>& end_values,
    const std::vector<int>& token_sentence_map, TokenReduction reduction, bool abs_first,
    ZeroTotalPolicy zero_total_policy) {
    const std::size_t n_answer = start_values.size();
    const std::size_t n_context = token_sentence_map.size();
    if (n_answer == 0) throw EvalError("token aggregation needs at least one answer token");
    if (end_values.size() != n_answer)
        throw EvalError("start_values and end_values must have one row per answer token");
    for (const auto& row : start_values)
        if (row.size() != n_context)
            throw EvalError("start_values rows must match the context token count");
    for (const auto& row : end_values)
        if (row.size() != n_context)
            throw EvalError("end_values rows must match the context token count");

    int n_sentences = 0;
    for (int s : token_sentence_map) {
        if (s < 1) throw EvalError("sentence indices are 1-based");
        n_sentences = std::max(n_sentences, s);
    }
    std::vector<bool> seen(static_cast<std::size_t>(n_sentences), false);
    for (int s : token_sentence_map) seen[s - 1] = true;
    for (int s = 0; s < n_sentences; ++s)
        if (!seen[s])
            throw EvalError("sentence indices must be contiguous from 1 (sentence " +
                            std::to_string(s + 1) + " has no tokens)");

    // Combine start/end per token, then average across answer tokens.
    std::vector<double> per_token(n_context, 0.0);
    for (std::size_t a = 0; a < n_answer; ++a) {
        for (std::size_t t = 0; t < n_context; ++t) {
            double combined = reduction == TokenReduction::average
                                  ? 0.5 * (start_values[a][t] + end_values[a][t])
                                  : std::max(start_values[a][t], end_values[a][t]);
            if (abs_first) combined = std::abs(combined);
            per_token[t] += combined;
        }
    }
    for (auto& v : per_token) v /= static_cast<double>(n_answer);

    std::vector<double> per_sentence(static_cast<std::size_t>(n_sentences), 0.0);
    for (std::size_t t = 0; t < n_context; ++t)
        per_sentence[token_sentence_map[t] - 1] += std::abs(per_token[t]);

    double total = 0.0;
    for (double v : per_sentence) total += v;
    if (total == 0.0) {
        if (zero_total_policy == ZeroTotalPolicy::error)
            throw EvalError("token contributions sum to zero; nothing to normalize");
        return per_sentence;  // all zeros, flagged by policy choice
    }
    for (auto& v : per_sentence) v /= total;
    return per_sentence;
}

Dataset load_bundle(const std::filesystem::path& path, const BundleLoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open bundle file '" + path.string() + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("bundle '" + path.string() + "' is not valid JSON: " + e.what());
    }

    expect_object(root, "$");
    check_known_keys(root, "$", {"format_version", "mode", "items"}, options.strict);
    const auto version = expect_int(member(root, "$", "format_version"), "$.format_version");
    if (version != 1)
        schema_fail("$.format_version", "unsupported version " + std::to_string(version) +
                                            " (this reader handles version 1)");
    const auto mode_text = expect_string(member(root, "$", "mode"), "$.mode");
    BundleMode mode;
    if (mode_text == "flat") mode = BundleMode::flat;
    else if (mode_text == "grid") mode = BundleMode::grid;
    else if (mode_text == "token") mode = BundleMode::token;
    else schema_fail("$.mode", "expected \"flat\", \"grid\" or \"token\"");

    const auto& items = expect_array(member(root, "$", "items"), "$.items");

    static const std::set<std::string> base_keys = {
        "id", "label", "prediction", "predicted_probability", "shape", "values",
        "masks", "metadata"};
    static const std::set<std::string> token_keys = {
        "id", "label", "prediction", "predicted_probability", "shape", "values", "masks",
        "metadata", "start_values", "end_values", "token_sentence_map"};

    Dataset dataset;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string ipath = "$.items[" + std::to_string(i) + "]";
        const auto& item = expect_object(items[i], ipath);
        check_known_keys(item, ipath, mode == BundleMode::token ? token_keys : base_keys,
                         options.strict);
        if (mode != BundleMode::token)
            for (const char* key : {"start_values", "end_values", "token_sentence_map"})
                if (item.contains(key))
                    schema_fail(ipath, std::string("field '") + key +
                                           "' is only valid in token mode");

        Sample sample;
        sample.id = expect_string(member(item, ipath, "id"), ipath + ".id");
        sample.label = expect_binary(member(item, ipath, "label"), ipath + ".label");
        sample.prediction =
            expect_binary(member(item, ipath, "prediction"), ipath + ".prediction");
        if (item.contains("predicted_probability"))
            sample.predicted_probability =
                expect_number(item["predicted_probability"], ipath + ".predicted_probability");
        if (item.contains("metadata"))
            sample.metadata = parse_metadata(item["metadata"], ipath + ".metadata");

        Shape shape;
        const auto& shape_json = expect_array(member(item, ipath, "shape"), ipath + ".shape");
        for (std::size_t d = 0; d < shape_json.size(); ++d)
            shape.dims.push_back(expect_int(shape_json[d],
                                            ipath + ".shape[" + std::to_string(d) + "]"));
        if (mode == BundleMode::grid ? shape.dims.size() != 2 : shape.dims.size() != 1)
            schema_fail(ipath + ".shape",
                        mode == BundleMode::grid ? "grid mode requires [h, w]"
                                                 : "expected a one-element shape [n]");

        auto values = expect_number_array(member(item, ipath, "values"), ipath + ".values");

        Attribution attribution;
        attribution.sample_id = sample.id;
        MaskMap mask_map;

        if (mode == BundleMode::token) {
            if (item.contains("masks") && !expect_object(item["masks"], ipath + ".masks").empty())
                schema_fail(ipath + ".masks",
                            "token mode generates per-sentence masks; remove producer masks");
            const auto start =
                expect_matrix(member(item, ipath, "start_values"), ipath + ".start_values");
            const auto end =
                expect_matrix(member(item, ipath, "end_values"), ipath + ".end_values");
            std::vector<int> sentence_map;
            const auto& map_json = expect_array(member(item, ipath, "token_sentence_map"),
                                                ipath + ".token_sentence_map");
            for (std::size_t t = 0; t < map_json.size(); ++t)
                sentence_map.push_back(static_cast<int>(expect_int(
                    map_json[t], ipath + ".token_sentence_map[" + std::to_string(t) + "]")));
            if (shape.dims[0] != static_cast<std::int64_t>(sentence_map.size()) ||
                values.size() != sentence_map.size())
                schema_fail(ipath, "token mode expects shape [n] and values of context length");
            std::vector<double> proportions;
            try {
                proportions = aggregate_token_contributions(
                    start, end, sentence_map, options.reduction, options.abs_first,
                    options.zero_total_policy);
            } catch (const Error& e) {
                schema_fail(ipath, e.what());
            }
            attribution.shape.dims = {static_cast<std::int64_t>(proportions.size())};
            attribution.values = std::move(proportions);
            for (std::size_t s = 0; s < attribution.values.size(); ++s) {
                Mask m;
                m.name = "sentence_" + std::to_string(s + 1);
                m.selector = std::vector<std::int64_t>{static_cast<std::int64_t>(s)};
                mask_map[m.name] = m;
            }
            Mask first = mask_map["sentence_1"];
            first.name = "first_sentence";
            mask_map["first_sentence"] = std::move(first);
        } else {
            attribution.shape = shape;
            attribution.values = std::move(values);
            if (item.contains("masks")) {
                const auto& masks_json = expect_object(item["masks"], ipath + ".masks");
                for (const auto& [name, mask_json] : masks_json.items())
                    mask_map[name] = parse_mask(mask_json, name, ipath + ".masks." + name, mode,
                                                options.strict);
            }
        }

        dataset.samples.push_back(std::move(sample));
        const std::string& id = dataset.samples.back().id;
        dataset.attributions[id] = std::move(attribution);
        if (!mask_map.empty()) dataset.masks[id] = std::move(mask_map);
    }

    const auto violations = validate_dataset(dataset);
    if (!violations.empty())
        throw ValidationError("bundle '" + path.string() + "' failed validation:\n" +
                              describe_violations(violations));
    return dataset;
}

void export_bundle(const Dataset& dataset, const std::filesystem::path& path,
                   std::optional<BundleMode> mode) {
    if (mode && *mode == BundleMode::token)
        throw InputError("token mode is ingest-only; aggregated data exports as flat");

    const auto violations = validate_dataset(dataset);
    if (!violations.empty())
        throw ValidationError("cannot export an invalid dataset:\n" +
                              describe_violations(violations));

    BundleMode effective = BundleMode::flat;
    bool inferred = false;
    for (const auto& [id, attr] : dataset.attributions) {
        effective = attr.shape.is_grid() ? BundleMode::grid : BundleMode::flat;
        inferred = true;
        break;
    }
    if (mode) {
        if (inferred && *mode != effective)
            throw InputError("requested bundle mode does not match the attribution shapes");
        effective = *mode;
    }

    nlohmann::ordered_json root;
    root["format_version"] = 1;
    root["mode"] = effective == BundleMode::grid ? "grid" : "flat";
    root["items"] = nlohmann::ordered_json::array();

    for (const auto& sample : dataset.samples) {
        const auto* attr = dataset.find_attribution(sample.id);
        if (!attr)
            throw InputError("sample '" + sample.id + "' has no attribution; bundles carry one "
                             "attribution per item");
        if (!sample.prediction)
            throw InputError("sample '" + sample.id + "' has no prediction; run a model first");
        if (sample.features)
            throw InputError("sample '" + sample.id + "' carries a feature vector, which the "
                             "bundle format does not store; move features into metadata");

        nlohmann::ordered_json item;
        item["id"] = sample.id;
        item["label"] = sample.label;
        item["prediction"] = *sample.prediction;
        if (sample.predicted_probability)
            item["predicted_probability"] = *sample.predicted_probability;
        item["shape"] = attr->shape.dims;
        item["values"] = attr->values;
        nlohmann::ordered_json masks = nlohmann::ordered_json::object();
        for (const auto& [name, mask] : dataset.masks_for(sample.id)) {
            if (const auto* box = std::get_if<Box>(&mask.selector))
                masks[name] = {{"box", {box->x0, box->y0, box->x1, box->y1}}};
            else
                masks[name] = {{"indices", std::get<std::vector<std::int64_t>>(mask.selector)}};
        }
        item["masks"] = std::move(masks);
        nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
        for (const auto& [key, value] : sample.metadata) {
            if (std::holds_alternative<bool>(value)) metadata[key] = std::get<bool>(value);
            else if (std::holds_alternative<std::int64_t>(value))
                metadata[key] = std::get<std::int64_t>(value);
            else metadata[key] = std::get<double>(value);
        }
        item["metadata"] = std::move(metadata);
        root["items"].push_back(std::move(item));
    }

    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << root.dump(2) << "\n";
    if (!out) throw Error("failed while writing '" + path.string() + "'");
}

}  // namespace semmatch
