#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semmatch/core.hpp"
#include "semmatch/distance.hpp"

namespace semmatch {

// How start/end contributions are combined per context token.
enum class TokenReduction { average, maximum };

struct BundleLoadOptions {
    bool strict = true;                 // reject unknown fields (else warn on stderr)
    TokenReduction reduction = TokenReduction::average;
    bool abs_first = false;             // absolute values before answer-token averaging
    ZeroTotalPolicy zero_total_policy = ZeroTotalPolicy::error;
};

// Load an attribution bundle (see docs/bundle-format in the README) into a
// validated dataset. Token-mode items are converted to flat per-sentence
// attributions with one mask per sentence (`sentence_k`, 1-based) plus a
// `first_sentence` alias. Throws SchemaError / ValidationError.
Dataset load_bundle(const std::filesystem::path& path, const BundleLoadOptions& options = {});

// Token-to-sentence aggregation: combine start/end contributions per
// context token with `reduction`, average across answer tokens, then sum
// absolute values per sentence and normalize to a probability vector.
// `token_sentence_map` holds 1-based sentence indices, contiguous from 1.
// With abs_first, absolute values are taken before the answer-token average.
std::vector<double> aggregate_token_contributions(
    const std::vector<std::vector<double>>& start_values,
    const std::vector<std::vector<double>>& end_values,
    const std::vector<int>& token_sentence_map,
    TokenReduction reduction = TokenReduction::average, bool abs_first = false,
    ZeroTotalPolicy zero_total_policy = ZeroTotalPolicy::error);

enum class BundleMode { flat, grid, token };

// Write a dataset as a bundle. The mode is inferred from the attribution
// shapes unless forced; token mode is ingest-only and always an error.
// Every sample needs a prediction and an attribution, and feature vectors
// are not part of the format (move them into metadata first).
void export_bundle(const Dataset& dataset, const std::filesystem::path& path,
                   std::optional<BundleMode> mode = std::nullopt);

}  // namespace semmatch
