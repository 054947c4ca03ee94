#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semmatch/core.hpp"
#include "semmatch/distance.hpp"

namespace semmatch {

// Which side of a hypothesis an expression lives on. Applicability (A)
// predicates see the sample; behavior (B) predicates see the explanation.
enum class PredicateContext { applicability, behavior };

enum class CompareOp { lt, le, gt, ge, eq, ne };

enum class AtomKind {
    feature,     // x[i] — input feature i
    attr,        // attr[i] — raw signed attribution component i
    label,       // ground-truth class as a number
    prediction,  // predicted class as a number
    correct,     // boolean shorthand for label == prediction
    meta,        // meta.<key> — scalar metadata
    prop,        // prop(<mask>) — masked absolute-value proportion
    sweep        // $z — sweep placeholder
};

// Leaf of a comparison: a decimal literal or an atom.
struct Term {
    enum class Kind { number, atom };
    Kind kind = Kind::number;
    double number = 0.0;
    AtomKind atom = AtomKind::label;
    std::int64_t index = 0;  // feature / attr subscript
    std::string key;         // meta key or prop mask name

    friend bool operator==(const Term&, const Term&) = default;
};

// Immutable predicate expression tree.
class PredicateAst {
  public:
    struct Node;
    using NodePtr = std::shared_ptr<const Node>;

    struct Node {
        enum class Kind { logical_and, logical_or, negation, comparison, boolean_term };
        Kind kind;
        std::vector<NodePtr> children;  // and/or: 2+, negation: 1
        CompareOp op = CompareOp::lt;   // comparison only
        Term lhs, rhs;                  // comparison; boolean_term uses lhs
    };

    NodePtr root;

    bool uses_sweep_placeholder() const;
    // Mask names referenced through prop(...) atoms.
    std::vector<std::string> referenced_masks() const;

    friend bool operator==(const PredicateAst& a, const PredicateAst& b) {
        return structurally_equal(a.root, b.root);
    }

  private:
    static bool structurally_equal(const NodePtr& a, const NodePtr& b);
};

struct ParseOptions {
    // Permit label/prediction/correct inside behavior expressions. Off by
    // default: applicability says which tuples, behavior says what the
    // explanation does.
    bool allow_outcome_in_behavior = false;
};

// Recursive-descent parser for the predicate grammar:
//   expr  := or
//   or    := and ("||" and)*
//   and   := unary ("&&" unary)*
//   unary := "!" unary | "(" expr ")" | cmp
//   cmp   := term (op term)?        (a bare term must be boolean-valued)
//   op    := < | <= | > | >= | == | !=
//   term  := number | atom
// Throws ParseError on syntax errors and InputError on context violations.
PredicateAst parse_predicate(const std::string& text, PredicateContext context,
                             const ParseOptions& options = {});

// Structure-preserving rendering: parse(pretty_print(ast)) == ast.
std::string pretty_print(const PredicateAst& ast);

struct Hypothesis {
    std::string name;
    PredicateAst applicability;        // A-context
    PredicateAst behavior;             // B-context
    std::vector<double> sweep_values;  // empty when no sweep is configured
};

// Parse both predicate strings and validate context and sweep consistency:
// `$z` may appear only when sweep values are supplied, and vice versa.
Hypothesis make_hypothesis(const std::string& name, const std::string& applicability,
                           const std::string& behavior,
                           std::vector<double> sweep_values = {},
                           const ParseOptions& options = {});

// Evaluate the applicability predicate on one sample. Missing feature
// indices or metadata keys raise EvalError naming the atom and sample.
bool eval_applicability(const Hypothesis& h, const Sample& sample);

// Evaluate the behavior predicate on one explanation. `masks` holds the
// sample's named masks for prop(...) atoms; `z` binds `$z`. `sample` is
// only consulted when outcome atoms were allowed into B.
bool eval_behavior(const Hypothesis& h, const Attribution& attribution,
                   const MaskMap& masks, std::optional<double> z = std::nullopt,
                   const Sample* sample = nullptr,
                   ZeroTotalPolicy zero_total_policy = ZeroTotalPolicy::error);

// New labels per the hypothesis, restricted to A-satisfying samples:
// value 1 iff the sample additionally satisfies B. A-satisfying samples
// without an attribution raise EvalError.
std::map<std::string, int> relabel(const Dataset& dataset, const Hypothesis& h,
                                   std::optional<double> z = std::nullopt,
                                   ZeroTotalPolicy zero_total_policy = ZeroTotalPolicy::error);

}  // namespace semmatch
