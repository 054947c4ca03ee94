#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "semmatch/core.hpp"

namespace semmatch {

// Black-box predictor returning the positive-class probability. Must be
// deterministic and tolerate concurrent read-only evaluation.
class Predictor {
  public:
    virtual ~Predictor() = default;
    virtual double predict_probability(std::span<const double> x) const = 0;
    virtual int feature_count() const = 0;
};

// Wrap a plain function as a predictor (handy for tests and oracles).
class FunctionPredictor : public Predictor {
  public:
    FunctionPredictor(int feature_count, std::function<double(std::span<const double>)> fn)
        : feature_count_(feature_count), fn_(std::move(fn)) {}
    double predict_probability(std::span<const double> x) const override { return fn_(x); }
    int feature_count() const override { return feature_count_; }

  private:
    int feature_count_;
    std::function<double(std::span<const double>)> fn_;
};

// Reference rows for the interventional value function.
struct BackgroundSet {
    std::vector<std::vector<double>> rows;
};

// Interventional coalition value v(S): mean over background rows b of
// f(x_S concatenated with b outside S).
double coalition_value(const Predictor& f, std::span<const double> x,
                       std::span<const int> coalition, const BackgroundSet& background);

// Exact Shapley attribution by full coalition enumeration with memoized
// values (2^n predictor sweeps). Errors above `max_features` since the cost
// is exponential; sampling approximations are out of scope.
Attribution exact_shapley(const Predictor& f, std::span<const double> x,
                          const BackgroundSet& background, const std::string& sample_id,
                          int max_features = 15);

}  // namespace semmatch
