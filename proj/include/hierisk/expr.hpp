#pragma once

// Scalar expression language over the variables t, x, u, v, y, z.
// Operators: + - * / ^ and unary minus. Functions: abs, min, max, exp, log,
// sqrt, pos, neg, where pos(a) = max(a,0) and neg(a) = max(-a,0).
// Precedence, tightest first: ^  unary-  * /  + -.  ^ is right associative.

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "hierisk/common.hpp"

namespace hierisk {

enum class Var : std::uint8_t { t = 0, x = 1, u = 2, v = 3, y = 4, z = 5 };

inline const char* var_name(Var v) {
    constexpr const char* names[6] = {"t", "x", "u", "v", "y", "z"};
    return names[static_cast<int>(v)];
}

struct Env {
    std::array<double, 6> val{};
    std::uint8_t bound = 0;

    Env& set(Var v, double x) {
        val[static_cast<int>(v)] = x;
        bound = static_cast<std::uint8_t>(bound | (1u << static_cast<int>(v)));
        return *this;
    }
    bool has(Var v) const { return (bound >> static_cast<int>(v)) & 1u; }
};

class Expr {
public:
    enum class Op : std::uint8_t {
        num, var, neg,
        add, sub, mul, div, pow,
        f_abs, f_min, f_max, f_exp, f_log, f_sqrt, f_pos, f_neg
    };

    struct Node {
        Op op;
        std::uint8_t var = 0;    // slot for Op::var
        std::int32_t a = -1;     // child indices; children precede parents
        std::int32_t b = -1;
        double num = 0.0;
    };

    Expr() = default;

    static Expr parse(std::string_view src);

    bool empty() const { return nodes_.empty(); }

    double eval(const Env& env) const {
        if (nodes_.empty()) throw EvalError("empty expression");
        double local[kLocal];
        std::vector<double> heap;
        double* vals = local;
        if (nodes_.size() > kLocal) {
            heap.resize(nodes_.size());
            vals = heap.data();
        }
        const std::size_t n = nodes_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Node& nd = nodes_[i];
            double r;
            switch (nd.op) {
                case Op::num: r = nd.num; break;
                case Op::var:
                    if (!((env.bound >> nd.var) & 1u))
                        throw EvalError(std::string("unbound variable '") +
                                        var_name(static_cast<Var>(nd.var)) + "'");
                    r = env.val[nd.var];
                    break;
                case Op::neg: r = -vals[nd.a]; break;
                case Op::add: r = vals[nd.a] + vals[nd.b]; break;
                case Op::sub: r = vals[nd.a] - vals[nd.b]; break;
                case Op::mul: r = vals[nd.a] * vals[nd.b]; break;
                case Op::div:
                    if (vals[nd.b] == 0.0) throw EvalError("division by zero");
                    r = vals[nd.a] / vals[nd.b];
                    break;
                case Op::pow: r = std::pow(vals[nd.a], vals[nd.b]); break;
                case Op::f_abs: r = std::fabs(vals[nd.a]); break;
                case Op::f_min: r = std::fmin(vals[nd.a], vals[nd.b]); break;
                case Op::f_max: r = std::fmax(vals[nd.a], vals[nd.b]); break;
                case Op::f_exp: r = std::exp(vals[nd.a]); break;
                case Op::f_log:
                    if (vals[nd.a] <= 0.0) throw EvalError("log of a non-positive value");
                    r = std::log(vals[nd.a]);
                    break;
                case Op::f_sqrt:
                    if (vals[nd.a] < 0.0) throw EvalError("sqrt of a negative value");
                    r = std::sqrt(vals[nd.a]);
                    break;
                case Op::f_pos: r = vals[nd.a] > 0.0 ? vals[nd.a] : 0.0; break;
                case Op::f_neg: r = vals[nd.a] < 0.0 ? -vals[nd.a] : 0.0; break;
                default: throw EvalError("corrupt expression");
            }
            if (!std::isfinite(r) && nd.op != Op::num)
                throw EvalError(std::string("non-finite result in '") + op_label(nd.op) + "'");
            vals[i] = r;
        }
        return vals[n - 1];
    }

    std::string str() const {
        if (nodes_.empty()) return "";
        return print(static_cast<std::int32_t>(nodes_.size() - 1), 0);
    }

    bool references(Var v) const {
        for (const Node& nd : nodes_)
            if (nd.op == Op::var && nd.var == static_cast<std::uint8_t>(v)) return true;
        return false;
    }

    friend bool operator==(const Expr& lhs, const Expr& rhs) {
        if (lhs.nodes_.size() != rhs.nodes_.size()) return false;
        for (std::size_t i = 0; i < lhs.nodes_.size(); ++i) {
            const Node &a = lhs.nodes_[i], &b = rhs.nodes_[i];
            if (a.op != b.op || a.var != b.var || a.a != b.a || a.b != b.b) return false;
            if (a.op == Op::num) {
                std::uint64_t ba, bb;
                static_assert(sizeof(double) == 8);
                std::memcpy(&ba, &a.num, 8);
                std::memcpy(&bb, &b.num, 8);
                if (ba != bb) return false;
            }
        }
        return true;
    }
    friend bool operator!=(const Expr& lhs, const Expr& rhs) { return !(lhs == rhs); }

    const std::vector<Node>& nodes() const { return nodes_; }

private:
    static constexpr std::size_t kLocal = 96;
    std::vector<Node> nodes_;

    static const char* op_label(Op op) {
        switch (op) {
            case Op::num: return "number";
            case Op::var: return "variable";
            case Op::neg: return "-";
            case Op::add: return "+";
            case Op::sub: return "-";
            case Op::mul: return "*";
            case Op::div: return "/";
            case Op::pow: return "^";
            case Op::f_abs: return "abs";
            case Op::f_min: return "min";
            case Op::f_max: return "max";
            case Op::f_exp: return "exp";
            case Op::f_log: return "log";
            case Op::f_sqrt: return "sqrt";
            case Op::f_pos: return "pos";
            case Op::f_neg: return "neg";
        }
        return "?";
    }

    // precedence levels: add/sub 1, mul/div 2, unary minus 3, pow 4, atom 5
    static int prec(Op op) {
        switch (op) {
            case Op::add: case Op::sub: return 1;
            case Op::mul: case Op::div: return 2;
            case Op::neg: return 3;
            case Op::pow: return 4;
            default: return 5;
        }
    }

    // min_prec: parenthesize when this node binds looser than the context demands
    std::string print(std::int32_t i, int min_prec) const {
        const Node& nd = nodes_[i];
        std::string s;
        switch (nd.op) {
            case Op::num: s = fmt_shortest(nd.num); break;
            case Op::var: s = var_name(static_cast<Var>(nd.var)); break;
            case Op::neg: s = "-" + print(nd.a, 3); break;
            case Op::add: s = print(nd.a, 1) + "+" + print(nd.b, 2); break;
            case Op::sub: s = print(nd.a, 1) + "-" + print(nd.b, 2); break;
            case Op::mul: s = print(nd.a, 2) + "*" + print(nd.b, 3); break;
            case Op::div: s = print(nd.a, 2) + "/" + print(nd.b, 3); break;
            case Op::pow: s = print(nd.a, 5) + "^" + print(nd.b, 3); break;
            case Op::f_min: s = "min(" + print(nd.a, 0) + "," + print(nd.b, 0) + ")"; break;
            case Op::f_max: s = "max(" + print(nd.a, 0) + "," + print(nd.b, 0) + ")"; break;
            default:
                s = std::string(op_label(nd.op)) + "(" + print(nd.a, 0) + ")";
                return s;  // function call never needs outer parens
        }
        if (prec(nd.op) < min_prec) s = "(" + s + ")";
        return s;
    }

    struct Parser;
};

struct Expr::Parser {
    std::string_view src;
    std::size_t pos = 0;
    std::vector<Node>* out;

    void skip_ws() {
        while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' ||
                                    src[pos] == '\n' || src[pos] == '\r'))
            ++pos;
    }

    bool at_end() {
        skip_ws();
        return pos >= src.size();
    }

    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }

    std::int32_t push(Node nd) {
        out->push_back(nd);
        return static_cast<std::int32_t>(out->size() - 1);
    }

    std::int32_t parse_expr() {
        std::int32_t lhs = parse_term();
        for (;;) {
            const char c = peek();
            if (c != '+' && c != '-') return lhs;
            ++pos;
            const std::int32_t rhs = parse_term();
            lhs = push({c == '+' ? Op::add : Op::sub, 0, lhs, rhs, 0.0});
        }
    }

    std::int32_t parse_term() {
        std::int32_t lhs = parse_factor();
        for (;;) {
            const char c = peek();
            if (c != '*' && c != '/') return lhs;
            ++pos;
            const std::int32_t rhs = parse_factor();
            lhs = push({c == '*' ? Op::mul : Op::div, 0, lhs, rhs, 0.0});
        }
    }

    std::int32_t parse_factor() {
        if (peek() == '-') {
            ++pos;
            const std::int32_t a = parse_factor();
            return push({Op::neg, 0, a, -1, 0.0});
        }
        return parse_power();
    }

    std::int32_t parse_power() {
        const std::int32_t base = parse_atom();
        if (peek() == '^') {
            ++pos;
            const std::int32_t e = parse_factor();  // right associative; allows x^-2
            return push({Op::pow, 0, base, e, 0.0});
        }
        return base;
    }

    std::int32_t parse_atom() {
        skip_ws();
        if (pos >= src.size()) throw ParseError("unexpected end of expression", pos);
        const char c = src[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        if (c == '(') {
            ++pos;
            const std::int32_t e = parse_expr();
            if (peek() != ')') throw ParseError("expected ')'", pos);
            ++pos;
            return e;
        }
        throw ParseError(std::string("unexpected '") + c + "'", pos);
    }

    std::int32_t parse_number() {
        const std::size_t start = pos;
        while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
        if (pos < src.size() && src[pos] == '.') {
            ++pos;
            while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
        }
        if (pos < src.size() && (src[pos] == 'e' || src[pos] == 'E')) {
            std::size_t mark = pos;
            ++pos;
            if (pos < src.size() && (src[pos] == '+' || src[pos] == '-')) ++pos;
            if (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
                while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
            } else {
                pos = mark;  // 'e' begins an identifier, not an exponent
            }
        }
        const std::string text(src.substr(start, pos - start));
        if (text == ".") throw ParseError("malformed number", start);
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size()) throw ParseError("malformed number", start);
        if (!std::isfinite(v)) throw ParseError("numeric literal out of range", start);
        return push({Op::num, 0, -1, -1, v});
    }

    std::int32_t parse_ident() {
        const std::size_t start = pos;
        while (pos < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
            ++pos;
        const std::string_view name = src.substr(start, pos - start);

        constexpr struct { const char* name; Var v; } vars[] = {
            {"t", Var::t}, {"x", Var::x}, {"u", Var::u},
            {"v", Var::v}, {"y", Var::y}, {"z", Var::z}};
        for (const auto& entry : vars)
            if (name == entry.name)
                return push({Op::var, static_cast<std::uint8_t>(entry.v), -1, -1, 0.0});

        constexpr struct { const char* name; Op op; int arity; } fns[] = {
            {"abs", Op::f_abs, 1}, {"min", Op::f_min, 2}, {"max", Op::f_max, 2},
            {"exp", Op::f_exp, 1}, {"log", Op::f_log, 1}, {"sqrt", Op::f_sqrt, 1},
            {"pos", Op::f_pos, 1}, {"neg", Op::f_neg, 1}};
        for (const auto& fn : fns) {
            if (name != fn.name) continue;
            if (peek() != '(')
                throw ParseError(std::string("expected '(' after '") + fn.name + "'", pos);
            ++pos;
            const std::int32_t a = parse_expr();
            std::int32_t b = -1;
            if (fn.arity == 2) {
                if (peek() != ',')
                    throw ParseError(std::string("'") + fn.name + "' takes two arguments", pos);
                ++pos;
                b = parse_expr();
            } else if (peek() == ',') {
                throw ParseError(std::string("'") + fn.name + "' takes one argument", pos);
            }
            if (peek() != ')') throw ParseError("expected ')'", pos);
            ++pos;
            return push({fn.op, 0, a, b, 0.0});
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }
};

inline Expr Expr::parse(std::string_view src) {
    Expr e;
    Parser p{src, 0, &e.nodes_};
    if (p.at_end()) throw ParseError("empty expression", 0);
    p.parse_expr();
    if (!p.at_end()) throw ParseError("unexpected trailing input", p.pos);
    return e;
}

}  // namespace hierisk
