#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "hierisk/expr.hpp"

using hierisk::Env;
using hierisk::EvalError;
using hierisk::Expr;
using hierisk::ParseError;
using hierisk::Var;

namespace {

double ev(const std::string& src, const Env& env = Env{}) {
    return Expr::parse(src).eval(env);
}

Env all_vars(double t, double x, double u, double v, double y, double z) {
    Env e;
    e.set(Var::t, t).set(Var::x, x).set(Var::u, u).set(Var::v, v).set(Var::y, y).set(Var::z, z);
    return e;
}

TEST(Expr, Precedence) {
    EXPECT_DOUBLE_EQ(ev("1+2*3"), 7.0);
    EXPECT_DOUBLE_EQ(ev("(1+2)*3"), 9.0);
    EXPECT_DOUBLE_EQ(ev("2^3^2"), 512.0);      // right associative
    EXPECT_DOUBLE_EQ(ev("(2^3)^2"), 64.0);
    EXPECT_DOUBLE_EQ(ev("-2^2"), -4.0);        // ^ binds tighter than unary minus
    EXPECT_DOUBLE_EQ(ev("(0-2)^2"), 4.0);
    EXPECT_DOUBLE_EQ(ev("2^-2"), 0.25);
    EXPECT_DOUBLE_EQ(ev("6/3/2"), 1.0);
    EXPECT_DOUBLE_EQ(ev("1-2-3"), -4.0);
    EXPECT_DOUBLE_EQ(ev("1-2*3+4"), -1.0);
    EXPECT_DOUBLE_EQ(ev("2*3^2"), 18.0);
}

TEST(Expr, UnaryMinusVsPow) {
    Env e;
    e.set(Var::x, 3.0);
    EXPECT_DOUBLE_EQ(ev("-x^2", e), -9.0);
    EXPECT_DOUBLE_EQ(ev("(-x)^2", e), 9.0);
    EXPECT_DOUBLE_EQ(ev("--x", e), 3.0);
}

TEST(Expr, Functions) {
    EXPECT_DOUBLE_EQ(ev("abs(0-3)"), 3.0);
    EXPECT_DOUBLE_EQ(ev("min(2,5)"), 2.0);
    EXPECT_DOUBLE_EQ(ev("max(2,5)"), 5.0);
    EXPECT_DOUBLE_EQ(ev("exp(0)"), 1.0);
    EXPECT_DOUBLE_EQ(ev("log(exp(2))"), 2.0);
    EXPECT_DOUBLE_EQ(ev("sqrt(16)"), 4.0);
    EXPECT_DOUBLE_EQ(ev("pos(2)"), 2.0);
    EXPECT_DOUBLE_EQ(ev("pos(-2)"), 0.0);
    EXPECT_DOUBLE_EQ(ev("neg(2)"), 0.0);
    EXPECT_DOUBLE_EQ(ev("neg(-2)"), 2.0);
    Env e;
    e.set(Var::x, 0.25);
    EXPECT_DOUBLE_EQ(ev("pos(1-x)", e), 0.75);
}

TEST(Expr, Variables) {
    const Env e = all_vars(1, 2, 3, 4, 5, 6);
    EXPECT_DOUBLE_EQ(ev("t+x+u+v+y+z", e), 21.0);
    EXPECT_DOUBLE_EQ(ev("0.2*x", e), 0.4);
    EXPECT_DOUBLE_EQ(ev("0.3*abs(z)", e), 1.8);
}

TEST(Expr, UnboundVariable) {
    Env e;
    e.set(Var::x, 1.0);
    EXPECT_THROW(ev("x+y", e), EvalError);
    EXPECT_NO_THROW(ev("x+1", e));
}

TEST(Expr, ParseErrorOffsets) {
    try {
        Expr::parse("x +* 2");
        FAIL() << "expected ParseError";
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 3u);
    }
    try {
        Expr::parse("foo(2)");
        FAIL() << "expected ParseError";
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 0u);
        EXPECT_NE(std::string(err.what()).find("foo"), std::string::npos);
    }
    EXPECT_THROW(Expr::parse(""), ParseError);
    EXPECT_THROW(Expr::parse("  "), ParseError);
    EXPECT_THROW(Expr::parse("(x"), ParseError);
    EXPECT_THROW(Expr::parse("x)"), ParseError);
    EXPECT_THROW(Expr::parse("min(x)"), ParseError);
    EXPECT_THROW(Expr::parse("abs(x,y)"), ParseError);
    EXPECT_THROW(Expr::parse("pos()"), ParseError);
    EXPECT_THROW(Expr::parse("1e999"), ParseError);
    EXPECT_THROW(Expr::parse("x 2"), ParseError);
    EXPECT_THROW(Expr::parse("exp"), ParseError);
}

TEST(Expr, DomainErrors) {
    Env e;
    e.set(Var::x, 0.0);
    EXPECT_THROW(ev("1/x", e), EvalError);
    EXPECT_THROW(ev("log(x)", e), EvalError);
    EXPECT_THROW(ev("sqrt(x-1)", e), EvalError);
    EXPECT_THROW(ev("(0-2)^0.5"), EvalError);
    EXPECT_THROW(ev("exp(1000)"), EvalError);
    EXPECT_NO_THROW(ev("exp(-1000)"));
}

TEST(Expr, RoundTripFixedCases) {
    const char* cases[] = {
        "x",          "0.2*x",      "x^-2",        "-x^2",        "x-(y-z)",
        "x-y-z",      "x*(y+z)",    "x/(y*z)",     "(x^y)^z",     "x^y^z",
        "-(x+y)",     "--x",        "min(x,max(y,z))",            "pos(1-x)",
        "u^2+x^2",    "0.3*abs(z)", "neg(y-x)",    "exp(-x^2/2)", "1e-06*t",
        "x*-y",       "2^-x",       "sqrt(abs(x))+log(2.5)",
    };
    for (const char* src : cases) {
        const Expr a = Expr::parse(src);
        const Expr b = Expr::parse(a.str());
        EXPECT_EQ(a, b) << "source: " << src << " printed: " << a.str();
    }
}

// Random structural round-trip: print then reparse must give the identical tree.
TEST(Expr, RoundTripRandomTrees) {
    std::mt19937_64 gen(915u);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);

    struct Builder {
        std::mt19937_64& gen;
        std::uniform_real_distribution<double>& coef;
        std::string build(int depth) {
            std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 11);
            switch (pick(gen)) {
                case 0: {
                    const double c = coef(gen);
                    return hierisk::fmt_shortest(c < 0 ? -c : c);
                }
                case 1: {
                    const char* vars[6] = {"t", "x", "u", "v", "y", "z"};
                    std::uniform_int_distribution<int> pv(0, 5);
                    return vars[pv(gen)];
                }
                case 2: return build(depth - 1) + "+" + build(depth - 1);
                case 3: return build(depth - 1) + "-" + build(depth - 1);
                case 4: return build(depth - 1) + "*" + build(depth - 1);
                case 5: return build(depth - 1) + "/" + build(depth - 1);
                case 6: return "(" + build(depth - 1) + ")^(" + build(depth - 1) + ")";
                case 7: return "-(" + build(depth - 1) + ")";
                case 8: return "abs(" + build(depth - 1) + ")";
                case 9: return "min(" + build(depth - 1) + "," + build(depth - 1) + ")";
                case 10: return "pos(" + build(depth - 1) + ")";
                default: return "exp(" + build(depth - 1) + ")";
            }
        }
    } builder{gen, coef};

    for (int i = 0; i < 200; ++i) {
        const std::string src = builder.build(4);
        const Expr a = Expr::parse(src);
        const Expr b = Expr::parse(a.str());
        EXPECT_EQ(a, b) << "source: " << src << "\nprinted: " << a.str();
        const Expr c = Expr::parse(b.str());
        EXPECT_EQ(b, c);
    }
}

TEST(Expr, References) {
    const Expr g = Expr::parse("0.3*abs(z)");
    EXPECT_TRUE(g.references(Var::z));
    EXPECT_FALSE(g.references(Var::y));
    EXPECT_FALSE(g.references(Var::x));
}

TEST(Expr, EmptyExprThrows) {
    Expr e;
    EXPECT_TRUE(e.empty());
    EXPECT_THROW(e.eval(Env{}), EvalError);
}

TEST(Expr, NumericLiteralsRoundTrip) {
    for (double v : {0.2, 1.0 / 3.0, 6.02e23, 1e-300, 123456789.123456789}) {
        const Expr a = Expr::parse(hierisk::fmt_shortest(v));
        EXPECT_DOUBLE_EQ(a.eval(Env{}), v);
        EXPECT_EQ(Expr::parse(a.str()), a);
    }
}

}  // namespace
