#include "semmatch/predicate.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "semmatch/error.hpp"

namespace semmatch {

namespace {

// ---------------------------------------------------------------------------
// Tokenizer

enum class TokenKind {
    number, identifier, meta_atom, sweep_atom,
    lparen, rparen, lbracket, rbracket,
    op_lt, op_le, op_gt, op_ge, op_eq, op_ne,
    op_and, op_or, op_not,
    end
};

struct Token {
    TokenKind kind;
    std::size_t position;
    double number = 0.0;
    std::string text;  // identifier / meta key
};

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        const std::size_t start = i;
        auto push = [&](TokenKind k) { tokens.push_back({k, start, 0.0, {}}); };
        switch (c) {
            case '(': push(TokenKind::lparen); ++i; continue;
            case ')': push(TokenKind::rparen); ++i; continue;
            case '[': push(TokenKind::lbracket); ++i; continue;
            case ']': push(TokenKind::rbracket); ++i; continue;
            case '<':
                if (i + 1 < n && text[i + 1] == '=') { push(TokenKind::op_le); i += 2; }
                else { push(TokenKind::op_lt); ++i; }
                continue;
            case '>':
                if (i + 1 < n && text[i + 1] == '=') { push(TokenKind::op_ge); i += 2; }
                else { push(TokenKind::op_gt); ++i; }
                continue;
            case '=':
                if (i + 1 < n && text[i + 1] == '=') { push(TokenKind::op_eq); i += 2; continue; }
                throw ParseError("expected '==' (assignment is not part of the grammar)", start);
            case '!':
                if (i + 1 < n && text[i + 1] == '=') { push(TokenKind::op_ne); i += 2; }
                else { push(TokenKind::op_not); ++i; }
                continue;
            case '&':
                if (i + 1 < n && text[i + 1] == '&') { push(TokenKind::op_and); i += 2; continue; }
                throw ParseError("expected '&&'", start);
            case '|':
                if (i + 1 < n && text[i + 1] == '|') { push(TokenKind::op_or); i += 2; continue; }
                throw ParseError("expected '||'", start);
            case '$': {
                std::size_t j = i + 1;
                while (j < n && is_ident_char(text[j])) ++j;
                if (text.substr(i, j - i) != "$z")
                    throw ParseError("unknown placeholder '" + text.substr(i, j - i) + "'", start);
                tokens.push_back({TokenKind::sweep_atom, start, 0.0, {}});
                i = j;
                continue;
            }
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
            (c == '-' && i + 1 < n &&
             (std::isdigit(static_cast<unsigned char>(text[i + 1])) || text[i + 1] == '.'))) {
            double value = 0.0;
            const char* begin = text.data() + i;
            const char* end = text.data() + n;
            auto [ptr, ec] = std::from_chars(begin, end, value);
            if (ec != std::errc() || ptr == begin)
                throw ParseError("malformed number", start);
            tokens.push_back({TokenKind::number, start, value, {}});
            i = static_cast<std::size_t>(ptr - text.data());
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < n && is_ident_char(text[j])) ++j;
            std::string word = text.substr(i, j - i);
            if (word == "meta") {
                if (j >= n || text[j] != '.')
                    throw ParseError("'meta' must be followed by '.<key>'", start);
                std::size_t k = j + 1;
                while (k < n && is_ident_char(text[k])) ++k;
                if (k == j + 1) throw ParseError("missing metadata key after 'meta.'", start);
                tokens.push_back({TokenKind::meta_atom, start, 0.0, text.substr(j + 1, k - j - 1)});
                i = k;
                continue;
            }
            tokens.push_back({TokenKind::identifier, start, 0.0, std::move(word)});
            i = j;
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", start);
    }
    tokens.push_back({TokenKind::end, n, 0.0, {}});
    return tokens;
}

// ---------------------------------------------------------------------------
// Parser

using Node = PredicateAst::Node;
using NodePtr = PredicateAst::NodePtr;

class Parser {
  public:
    explicit Parser(const std::string& text) : tokens_(tokenize(text)) {}

    NodePtr parse() {
        auto node = parse_or();
        expect(TokenKind::end, "trailing input after expression");
        return node;
    }

  private:
    const Token& peek() const { return tokens_[pos_]; }
    Token take() { return tokens_[pos_++]; }
    void expect(TokenKind k, const std::string& what) {
        if (peek().kind != k) throw ParseError(what, peek().position);
        ++pos_;
    }

    NodePtr parse_or() {
        std::vector<NodePtr> parts{parse_and()};
        while (peek().kind == TokenKind::op_or) {
            take();
            parts.push_back(parse_and());
        }
        if (parts.size() == 1) return parts.front();
        auto node = std::make_shared<Node>();
        node->kind = Node::Kind::logical_or;
        node->children = std::move(parts);
        return node;
    }

    NodePtr parse_and() {
        std::vector<NodePtr> parts{parse_unary()};
        while (peek().kind == TokenKind::op_and) {
            take();
            parts.push_back(parse_unary());
        }
        if (parts.size() == 1) return parts.front();
        auto node = std::make_shared<Node>();
        node->kind = Node::Kind::logical_and;
        node->children = std::move(parts);
        return node;
    }

    NodePtr parse_unary() {
        if (peek().kind == TokenKind::op_not) {
            take();
            auto node = std::make_shared<Node>();
            node->kind = Node::Kind::negation;
            node->children.push_back(parse_unary());
            return node;
        }
        if (peek().kind == TokenKind::lparen) {
            take();
            auto inner = parse_or();
            expect(TokenKind::rparen, "expected ')'");
            return inner;
        }
        return parse_cmp();
    }

    NodePtr parse_cmp() {
        Term lhs = parse_term();
        std::optional<CompareOp> op;
        switch (peek().kind) {
            case TokenKind::op_lt: op = CompareOp::lt; break;
            case TokenKind::op_le: op = CompareOp::le; break;
            case TokenKind::op_gt: op = CompareOp::gt; break;
            case TokenKind::op_ge: op = CompareOp::ge; break;
            case TokenKind::op_eq: op = CompareOp::eq; break;
            case TokenKind::op_ne: op = CompareOp::ne; break;
            default: break;
        }
        auto node = std::make_shared<Node>();
        if (!op) {
            // Bare term: legal only for boolean-valued atoms like `correct`.
            node->kind = Node::Kind::boolean_term;
            node->lhs = lhs;
            return node;
        }
        take();
        node->kind = Node::Kind::comparison;
        node->op = *op;
        node->lhs = lhs;
        node->rhs = parse_term();
        return node;
    }

    Term parse_term() {
        const Token tok = take();
        Term term;
        switch (tok.kind) {
            case TokenKind::number:
                term.kind = Term::Kind::number;
                term.number = tok.number;
                return term;
            case TokenKind::sweep_atom:
                term.kind = Term::Kind::atom;
                term.atom = AtomKind::sweep;
                return term;
            case TokenKind::meta_atom:
                term.kind = Term::Kind::atom;
                term.atom = AtomKind::meta;
                term.key = tok.text;
                return term;
            case TokenKind::identifier:
                return parse_named_atom(tok);
            default:
                throw ParseError("expected a number or atom", tok.position);
        }
    }

    Term parse_named_atom(const Token& tok) {
        Term term;
        term.kind = Term::Kind::atom;
        if (tok.text == "label") { term.atom = AtomKind::label; return term; }
        if (tok.text == "prediction") { term.atom = AtomKind::prediction; return term; }
        if (tok.text == "correct") { term.atom = AtomKind::correct; return term; }
        if (tok.text == "x" || tok.text == "attr") {
            term.atom = tok.text == "x" ? AtomKind::feature : AtomKind::attr;
            expect(TokenKind::lbracket, "expected '[' after '" + tok.text + "'");
            const Token idx = take();
            if (idx.kind != TokenKind::number || idx.number < 0 ||
                idx.number != std::floor(idx.number))
                throw ParseError("subscript must be a non-negative integer", idx.position);
            term.index = static_cast<std::int64_t>(idx.number);
            expect(TokenKind::rbracket, "expected ']'");
            return term;
        }
        if (tok.text == "prop") {
            term.atom = AtomKind::prop;
            expect(TokenKind::lparen, "expected '(' after 'prop'");
            const Token name = take();
            if (name.kind != TokenKind::identifier)
                throw ParseError("expected a mask name inside prop(...)", name.position);
            term.key = name.text;
            expect(TokenKind::rparen, "expected ')'");
            return term;
        }
        throw ParseError("unknown atom '" + tok.text + "'", tok.position);
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Context validation

const char* atom_name(AtomKind kind) {
    switch (kind) {
        case AtomKind::feature: return "x[i]";
        case AtomKind::attr: return "attr[i]";
        case AtomKind::label: return "label";
        case AtomKind::prediction: return "prediction";
        case AtomKind::correct: return "correct";
        case AtomKind::meta: return "meta.<key>";
        case AtomKind::prop: return "prop(...)";
        case AtomKind::sweep: return "$z";
    }
    return "?";
}

void collect_atoms(const NodePtr& node, std::vector<const Term*>& out) {
    if (!node) return;
    if (node->kind == Node::Kind::comparison || node->kind == Node::Kind::boolean_term) {
        if (node->lhs.kind == Term::Kind::atom) out.push_back(&node->lhs);
        if (node->kind == Node::Kind::comparison && node->rhs.kind == Term::Kind::atom)
            out.push_back(&node->rhs);
        return;
    }
    for (const auto& child : node->children) collect_atoms(child, out);
}

void validate_context(const PredicateAst& ast, PredicateContext context,
                      const ParseOptions& options) {
    std::vector<const Term*> atoms;
    collect_atoms(ast.root, atoms);
    for (const auto* term : atoms) {
        const auto kind = term->atom;
        if (context == PredicateContext::applicability) {
            if (kind == AtomKind::attr || kind == AtomKind::prop)
                throw InputError(std::string("atom ") + atom_name(kind) +
                                 " is not allowed in an applicability expression");
            // $z has no binding in applicability evaluation.
            if (kind == AtomKind::sweep)
                throw InputError("$z is not allowed in an applicability expression");
        } else {
            if (kind == AtomKind::feature)
                throw InputError("atom x[i] is not allowed in a behavior expression");
            if (kind == AtomKind::meta)
                throw InputError("atom meta.<key> is not allowed in a behavior expression");
            if (!options.allow_outcome_in_behavior &&
                (kind == AtomKind::label || kind == AtomKind::prediction ||
                 kind == AtomKind::correct))
                throw InputError(std::string("atom ") + atom_name(kind) +
                                 " is not allowed in a behavior expression "
                                 "(set allow_outcome_in_behavior to permit it)");
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalInputs {
    const Sample* sample = nullptr;
    const Attribution* attribution = nullptr;
    const MaskMap* masks = nullptr;
    std::optional<double> z;
    ZeroTotalPolicy zero_total_policy = ZeroTotalPolicy::error;
};

struct Value {
    bool is_bool = false;
    double number = 0.0;
    bool boolean = false;
};

[[noreturn]] void eval_fail(const std::string& what, const EvalInputs& in) {
    std::string msg = what;
    if (in.sample) msg += " (sample '" + in.sample->id + "')";
    else if (in.attribution) msg += " (sample '" + in.attribution->sample_id + "')";
    throw EvalError(msg);
}

Value eval_term(const Term& term, const EvalInputs& in) {
    if (term.kind == Term::Kind::number) return {false, term.number, false};
    switch (term.atom) {
        case AtomKind::feature: {
            if (!in.sample || !in.sample->features)
                eval_fail("x[" + std::to_string(term.index) + "]: sample has no features", in);
            const auto& f = *in.sample->features;
            if (term.index < 0 || term.index >= static_cast<std::int64_t>(f.size()))
                eval_fail("x[" + std::to_string(term.index) + "]: feature index out of range", in);
            return {false, f[term.index], false};
        }
        case AtomKind::attr: {
            if (!in.attribution) eval_fail("attr[i]: no attribution bound", in);
            const auto& v = in.attribution->values;
            if (term.index < 0 || term.index >= static_cast<std::int64_t>(v.size()))
                eval_fail("attr[" + std::to_string(term.index) + "]: index out of range", in);
            return {false, v[term.index], false};
        }
        case AtomKind::label:
            if (!in.sample) eval_fail("label: no sample bound", in);
            return {false, static_cast<double>(in.sample->label), false};
        case AtomKind::prediction:
            if (!in.sample || !in.sample->prediction)
                eval_fail("prediction: sample has no prediction", in);
            return {false, static_cast<double>(*in.sample->prediction), false};
        case AtomKind::correct:
            if (!in.sample || !in.sample->prediction)
                eval_fail("correct: sample has no prediction", in);
            return {true, 0.0, in.sample->correct()};
        case AtomKind::meta: {
            if (!in.sample) eval_fail("meta." + term.key + ": no sample bound", in);
            auto it = in.sample->metadata.find(term.key);
            if (it == in.sample->metadata.end())
                eval_fail("meta." + term.key + ": metadata key not present", in);
            const auto& mv = it->second;
            if (std::holds_alternative<bool>(mv)) return {true, 0.0, std::get<bool>(mv)};
            if (std::holds_alternative<std::int64_t>(mv))
                return {false, static_cast<double>(std::get<std::int64_t>(mv)), false};
            return {false, std::get<double>(mv), false};
        }
        case AtomKind::prop: {
            if (!in.attribution) eval_fail("prop(" + term.key + "): no attribution bound", in);
            if (!in.masks) eval_fail("prop(" + term.key + "): no masks bound", in);
            auto it = in.masks->find(term.key);
            if (it == in.masks->end())
                eval_fail("prop(" + term.key + "): mask not present", in);
            return {false,
                    mask_proportion(*in.attribution, it->second, in.zero_total_policy).value,
                    false};
        }
        case AtomKind::sweep:
            if (!in.z) eval_fail("$z: no sweep value supplied", in);
            return {false, *in.z, false};
    }
    eval_fail("unknown atom", in);
}

bool compare(CompareOp op, double a, double b) {
    switch (op) {
        case CompareOp::lt: return a < b;
        case CompareOp::le: return a <= b;
        case CompareOp::gt: return a > b;
        case CompareOp::ge: return a >= b;
        case CompareOp::eq: return a == b;
        case CompareOp::ne: return a != b;
    }
    return false;
}

bool eval_node(const NodePtr& node, const EvalInputs& in) {
    switch (node->kind) {
        case Node::Kind::logical_and:
            for (const auto& c : node->children)
                if (!eval_node(c, in)) return false;
            return true;
        case Node::Kind::logical_or:
            for (const auto& c : node->children)
                if (eval_node(c, in)) return true;
            return false;
        case Node::Kind::negation:
            return !eval_node(node->children.front(), in);
        case Node::Kind::comparison: {
            const Value a = eval_term(node->lhs, in);
            const Value b = eval_term(node->rhs, in);
            if (a.is_bool != b.is_bool)
                eval_fail("comparison mixes boolean and numeric operands", in);
            if (a.is_bool) {
                if (node->op == CompareOp::eq) return a.boolean == b.boolean;
                if (node->op == CompareOp::ne) return a.boolean != b.boolean;
                eval_fail("ordered comparison of boolean operands", in);
            }
            return compare(node->op, a.number, b.number);
        }
        case Node::Kind::boolean_term: {
            const Value v = eval_term(node->lhs, in);
            if (!v.is_bool) eval_fail("bare term in predicate position is not boolean", in);
            return v.boolean;
        }
    }
    eval_fail("unknown node kind", in);
}

// ---------------------------------------------------------------------------
// Pretty printing

void print_term(std::ostream& os, const Term& term) {
    if (term.kind == Term::Kind::number) {
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), term.number);
        os.write(buf, ptr - buf);
        return;
    }
    switch (term.atom) {
        case AtomKind::feature: os << "x[" << term.index << "]"; return;
        case AtomKind::attr: os << "attr[" << term.index << "]"; return;
        case AtomKind::label: os << "label"; return;
        case AtomKind::prediction: os << "prediction"; return;
        case AtomKind::correct: os << "correct"; return;
        case AtomKind::meta: os << "meta." << term.key; return;
        case AtomKind::prop: os << "prop(" << term.key << ")"; return;
        case AtomKind::sweep: os << "$z"; return;
    }
}

const char* op_text(CompareOp op) {
    switch (op) {
        case CompareOp::lt: return "<";
        case CompareOp::le: return "<=";
        case CompareOp::gt: return ">";
        case CompareOp::ge: return ">=";
        case CompareOp::eq: return "==";
        case CompareOp::ne: return "!=";
    }
    return "?";
}

void print_node(std::ostream& os, const NodePtr& node) {
    switch (node->kind) {
        case Node::Kind::logical_and:
        case Node::Kind::logical_or: {
            const char* sep = node->kind == Node::Kind::logical_and ? " && " : " || ";
            os << "(";
            for (std::size_t i = 0; i < node->children.size(); ++i) {
                if (i) os << sep;
                print_node(os, node->children[i]);
            }
            os << ")";
            return;
        }
        case Node::Kind::negation:
            os << "!";
            print_node(os, node->children.front());
            return;
        case Node::Kind::comparison:
            os << "(";
            print_term(os, node->lhs);
            os << " " << op_text(node->op) << " ";
            print_term(os, node->rhs);
            os << ")";
            return;
        case Node::Kind::boolean_term:
            print_term(os, node->lhs);
            return;
    }
}

// Parenthesized printing re-parses to a nested binary chain; normalize by
// collapsing single-child groups is unnecessary because every printed group
// corresponds to one AST node.

}  // namespace

bool PredicateAst::structurally_equal(const NodePtr& a, const NodePtr& b) {
    if (!a || !b) return a == b;
    if (a->kind != b->kind) return false;
    if (a->kind == Node::Kind::comparison)
        return a->op == b->op && a->lhs == b->lhs && a->rhs == b->rhs;
    if (a->kind == Node::Kind::boolean_term) return a->lhs == b->lhs;
    if (a->children.size() != b->children.size()) return false;
    for (std::size_t i = 0; i < a->children.size(); ++i)
        if (!structurally_equal(a->children[i], b->children[i])) return false;
    return true;
}

bool PredicateAst::uses_sweep_placeholder() const {
    std::vector<const Term*> atoms;
    collect_atoms(root, atoms);
    for (const auto* t : atoms)
        if (t->atom == AtomKind::sweep) return true;
    return false;
}

std::vector<std::string> PredicateAst::referenced_masks() const {
    std::vector<const Term*> atoms;
    collect_atoms(root, atoms);
    std::set<std::string> names;
    for (const auto* t : atoms)
        if (t->atom == AtomKind::prop) names.insert(t->key);
    return {names.begin(), names.end()};
}

PredicateAst parse_predicate(const std::string& text, PredicateContext context,
                             const ParseOptions& options) {
    PredicateAst ast;
    ast.root = Parser(text).parse();
    validate_context(ast, context, options);
    return ast;
}

std::string pretty_print(const PredicateAst& ast) {
    std::ostringstream os;
    print_node(os, ast.root);
    return os.str();
}

Hypothesis make_hypothesis(const std::string& name, const std::string& applicability,
                           const std::string& behavior, std::vector<double> sweep_values,
                           const ParseOptions& options) {
    Hypothesis h;
    h.name = name;
    try {
        h.applicability = parse_predicate(applicability, PredicateContext::applicability, options);
    } catch (const Error& e) {
        throw InputError("hypothesis '" + name + "' applicability: " + e.what());
    }
    try {
        h.behavior = parse_predicate(behavior, PredicateContext::behavior, options);
    } catch (const Error& e) {
        throw InputError("hypothesis '" + name + "' behavior: " + e.what());
    }
    h.sweep_values = std::move(sweep_values);
    const bool uses_z = h.behavior.uses_sweep_placeholder();
    if (uses_z && h.sweep_values.empty())
        throw InputError("hypothesis '" + name + "' uses $z but no sweep values are configured");
    if (!uses_z && !h.sweep_values.empty())
        throw InputError("hypothesis '" + name + "' has sweep values but never uses $z");
    return h;
}

bool eval_applicability(const Hypothesis& h, const Sample& sample) {
    EvalInputs in;
    in.sample = &sample;
    return eval_node(h.applicability.root, in);
}

bool eval_behavior(const Hypothesis& h, const Attribution& attribution, const MaskMap& masks,
                   std::optional<double> z, const Sample* sample,
                   ZeroTotalPolicy zero_total_policy) {
    EvalInputs in;
    in.sample = sample;
    in.attribution = &attribution;
    in.masks = &masks;
    in.z = z;
    in.zero_total_policy = zero_total_policy;
    return eval_node(h.behavior.root, in);
}

std::map<std::string, int> relabel(const Dataset& dataset, const Hypothesis& h,
                                   std::optional<double> z,
                                   ZeroTotalPolicy zero_total_policy) {
    std::map<std::string, int> labels;
    for (const auto& sample : dataset.samples) {
        if (!eval_applicability(h, sample)) continue;
        const auto* attr = dataset.find_attribution(sample.id);
        if (!attr)
            throw EvalError("sample '" + sample.id +
                            "' satisfies the applicability condition but has no attribution");
        const bool b = eval_behavior(h, *attr, dataset.masks_for(sample.id), z, &sample,
                                     zero_total_policy);
        labels[sample.id] = b ? 1 : 0;
    }
    return labels;
}

}  // namespace semmatch
