#include <catch2/catch_amalgamated.hpp>

#include <dlfp/interval.hpp>
#include <dlfp/parser.hpp>

#include <random>

#include "test_support.hpp"

using namespace dlfp;

namespace {

// Parses the expression of "t(x) <- t(x), <expr> >= 0." — a convenient way
// to get an ExprPtr from source text.
ExprPtr expr_of(const std::string& text) {
  Program p = parse_program("t(x) -> int[64](x).\nt(x) <- t(x), " + text + " >= 0.\n");
  return as_compare(as_rule(p.clauses[1])->body[1])->lhs;
}

}  // namespace

TEST_CASE("extended integer arithmetic saturates at infinities", "[interval]") {
  CHECK(ext_add(ExtInt::fin(2), ExtInt::fin(3)) == ExtInt::fin(5));
  CHECK(ext_add(ExtInt::pos_inf(), ExtInt::fin(-7)).is_pos_inf());
  CHECK(ext_sub(ExtInt::fin(0), ExtInt::pos_inf()).is_neg_inf());
  CHECK(ext_mul(ExtInt::fin(0), ExtInt::pos_inf()) == ExtInt::fin(0));
  CHECK(ext_mul(ExtInt::fin(-2), ExtInt::pos_inf()).is_neg_inf());
  // Finite overflow widens to infinity instead of wrapping.
  CHECK(ext_add(ExtInt::fin(INT64_MAX), ExtInt::fin(1)).is_pos_inf());
  CHECK(ext_mul(ExtInt::fin(INT64_MAX), ExtInt::fin(2)).is_pos_inf());
}

TEST_CASE("interval operators", "[interval]") {
  Interval a = Interval::of(1, 4), b = Interval::of(-2, 3);
  CHECK(interval_add(a, b) == Interval::of(-1, 7));
  CHECK(interval_sub(a, b) == Interval::of(-2, 6));
  CHECK(interval_mul(a, b) == Interval::of(-8, 12));
  CHECK(interval_min(a, b) == Interval::of(-2, 3));
  CHECK(interval_max(a, b) == Interval::of(1, 4));
  CHECK(interval_intersect(a, b) == Interval::of(1, 3));
  CHECK(interval_intersect(Interval::of(5, 6), Interval::of(7, 8)).empty);
}

TEST_CASE("eval_interval on the cryptarithm expressions", "[interval]") {
  IntervalEnv env;
  for (auto v : {"va", "vm", "vs", "vi"}) env[v] = Interval::of(0, 9);
  // 100*vs + 10*va + vm over three digit variables spans 0..999.
  CHECK(eval_interval(expr_of("100*vs + 10*va + vm"), env) == Interval::of(0, 999));
  // vi*(10*va + vm) spans 0..9*99 = 891.
  CHECK(eval_interval(expr_of("vi*(10*va + vm)"), env) == Interval::of(0, 891));
}

TEST_CASE("eval_interval point-in-enclosure soundness, 1e5 samples", "[interval]") {
  // For random expressions and random variable boxes, any concrete point in
  // the box must evaluate into the computed enclosure. 64-bit evaluation of
  // the concrete point uses 128-bit intermediate math as the oracle.
  std::mt19937_64 rng(20260826);
  const char* vars[] = {"a", "b", "c"};
  std::uniform_int_distribution<int> small(-100, 100);
  std::uniform_int_distribution<int> opd(0, 4);
  std::uniform_int_distribution<int> leafd(0, 3);

  // Random expression tree of depth ≤ 3 over a,b,c and constants.
  std::function<ExprPtr(int)> gen = [&](int depth) -> ExprPtr {
    if (depth == 0 || leafd(rng) == 0) {
      if (leafd(rng) < 2) return expr_const(small(rng));
      return expr_var(vars[(std::size_t)(rng() % 3)]);
    }
    ExprOp ops[] = {ExprOp::Add, ExprOp::Sub, ExprOp::Mul, ExprOp::Min, ExprOp::Max};
    return expr_bin(ops[(std::size_t)opd(rng)], gen(depth - 1), gen(depth - 1));
  };
  auto eval128 = [&](const ExprPtr& e, const std::map<std::string, std::int64_t>& pt)
      -> __int128 {
    std::function<__int128(const ExprPtr&)> go = [&](const ExprPtr& x) -> __int128 {
      switch (x->kind) {
        case Expr::Kind::Const: return x->value;
        case Expr::Kind::Var: return pt.at(x->name);
        case Expr::Kind::Bin: {
          __int128 l = go(x->lhs), r = go(x->rhs);
          switch (x->op) {
            case ExprOp::Add: return l + r;
            case ExprOp::Sub: return l - r;
            case ExprOp::Mul: return l * r;
            case ExprOp::Min: return l < r ? l : r;
            case ExprOp::Max: return l < r ? r : l;
          }
        }
        default: return 0;
      }
    };
    return go(e);
  };

  int failures = 0;
  for (int iter = 0; iter < 20000 && failures == 0; ++iter) {
    ExprPtr e = gen(3);
    IntervalEnv env;
    std::map<std::string, std::int64_t> pt;
    for (auto v : vars) {
      std::int64_t x = small(rng), y = small(rng);
      if (x > y) std::swap(x, y);
      env[v] = Interval::of(x, y);
      pt[v] = x + (std::int64_t)(rng() % (std::uint64_t)(y - x + 1));
    }
    Interval enc = eval_interval(e, env);
    __int128 val = eval128(e, pt);
    // 5 sample points per expression ≈ 1e5 total point checks.
    for (int s = 0; s < 5; ++s) {
      bool inside = !enc.empty &&
                    !(enc.lo.is_fin() && (__int128)enc.lo.v > val) &&
                    !(enc.hi.is_fin() && (__int128)enc.hi.v < val);
      if (!inside) ++failures;
      for (auto v : vars) {
        std::int64_t lo = env[v].lo.v, hi = env[v].hi.v;
        pt[v] = lo + (std::int64_t)(rng() % (std::uint64_t)(hi - lo + 1));
      }
      val = eval128(e, pt);
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("symbolic bounds of a monotone product", "[interval]") {
  // With va,vm in [lb,ub] (non-negative) the product vi*(10*va+vm) has the
  // upper bound vi*(10*ub+ub) when vi is the point target.
  SymEnv env;
  env["vi"] = BoundExprPair::point(expr_var("vi"), true);
  env["va"] = {expr_var("t1"), expr_var("t2"), true};
  env["vm"] = {expr_var("t1"), expr_var("t2"), true};
  BoundExprPair b = detail::sym_bounds(expr_of("vi*(10*va + vm)"), env);
  REQUIRE(b.lo);
  REQUIRE(b.hi);
  CHECK(format_expr(*b.lo) == "vi*(10*t1 + t1)");
  CHECK(format_expr(*b.hi) == "vi*(10*t2 + t2)");
}

TEST_CASE("lower_constraint emits both directions of an equality", "[interval]") {
  Program p = parse_program(
      "t(x) -> int[64](x).\n"
      "t(x) <- t(x), vi*(10*va + vm) = 100*vs + 10*va + vm.\n");
  Compare cmp = *as_compare(as_rule(p.clauses[1])->body[1]);
  SymEnv env;
  for (auto v : {"va", "vm", "vs"})
    env[v] = BoundExprPair{expr_var("t1"), expr_var("t2"), true};
  LowerResult r = lower_constraint(cmp, "vi", env, true);
  REQUIRE(r.conditions.size() == 2);
  CHECK(format_expr(r.conditions[0].lhs) == "vi*(10*t1 + t1)");
  CHECK(format_expr(r.conditions[0].rhs) == "100*t2 + 10*t2 + t2");
  CHECK(format_expr(r.conditions[1].lhs) == "100*t1 + 10*t1 + t1");
  CHECK(format_expr(r.conditions[1].rhs) == "vi*(10*t2 + t2)");
}

TEST_CASE("lower_constraint drops unbounded sides and != entirely", "[interval]") {
  Program p = parse_program(
      "t(x) -> int[64](x).\n"
      "t(x) <- t(x), x <= y, x != y.\n");
  auto* r = as_rule(p.clauses[1]);
  Compare le = *as_compare(r->body[1]);
  Compare ne = *as_compare(r->body[2]);
  SymEnv env;
  env["y"] = BoundExprPair::unbounded();  // known variable, no bounds
  LowerResult a = lower_constraint(le, "x", env, false);
  CHECK(a.conditions.empty());  // x <= upper(y) with y unbounded: dropped
  CHECK_FALSE(a.error);
  LowerResult b = lower_constraint(ne, "x", env, false);
  CHECK(b.conditions.empty());
  // A variable absent from the env entirely poisons the constraint.
  SymEnv empty;
  LowerResult c = lower_constraint(le, "x", empty, false);
  CHECK(c.conditions.empty());
  CHECK(c.error.has_value());
  CHECK(c.error->var == "y");
}

TEST_CASE("lower_constraint soundness by enumeration", "[interval]") {
  // For every condition produced, any concrete solution of the original
  // constraint (with the other variables inside their boxes) must satisfy
  // the condition at the box endpoints.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> cd(-6, 6);
  std::uniform_int_distribution<int> opd(0, 4);
  CmpOp ops[] = {CmpOp::Le, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt, CmpOp::Eq};
  for (int iter = 0; iter < 400; ++iter) {
    // Constraint: a*x + b*y <op> c*z + d with x the target, y,z boxed.
    int a = cd(rng) | 1, b = cd(rng), c = cd(rng), d = cd(rng);
    Compare cmp{ops[(std::size_t)opd(rng)],
                expr_bin(ExprOp::Add, expr_bin(ExprOp::Mul, expr_const(a), expr_var("x")),
                         expr_bin(ExprOp::Mul, expr_const(b), expr_var("y"))),
                expr_bin(ExprOp::Add, expr_bin(ExprOp::Mul, expr_const(c), expr_var("z")),
                         expr_const(d))};
    int ylo = cd(rng), yhi = ylo + (int)(rng() % 5);
    int zlo = cd(rng), zhi = zlo + (int)(rng() % 5);
    SymEnv env;
    env["y"] = {expr_const(ylo), expr_const(yhi), ylo >= 0};
    env["z"] = {expr_const(zlo), expr_const(zhi), zlo >= 0};
    LowerResult lr = lower_constraint(cmp, "x", env, false);
    auto sat = [&](CmpOp op, long lhs, long rhs) {
      switch (op) {
        case CmpOp::Le: return lhs <= rhs;
        case CmpOp::Lt: return lhs < rhs;
        case CmpOp::Ge: return lhs >= rhs;
        case CmpOp::Gt: return lhs > rhs;
        case CmpOp::Eq: return lhs == rhs;
        case CmpOp::Ne: return lhs != rhs;
      }
      return false;
    };
    auto evalc = [&](const ExprPtr& e, long x) -> long {
      std::function<long(const ExprPtr&)> go = [&](const ExprPtr& q) -> long {
        switch (q->kind) {
          case Expr::Kind::Const: return q->value;
          case Expr::Kind::Var: return x;  // only x remains in conditions
          case Expr::Kind::Bin: {
            long l = go(q->lhs), r = go(q->rhs);
            switch (q->op) {
              case ExprOp::Add: return l + r;
              case ExprOp::Sub: return l - r;
              case ExprOp::Mul: return l * r;
              case ExprOp::Min: return std::min(l, r);
              case ExprOp::Max: return std::max(l, r);
            }
          }
          default: return 0;
        }
      };
      return go(e);
    };
    for (long x = -40; x <= 40; ++x)
      for (int y = ylo; y <= yhi; ++y)
        for (int z = zlo; z <= zhi; ++z) {
          long lhs = a * x + b * y, rhs = c * (long)z + d;
          if (!sat(cmp.op, lhs, rhs)) continue;
          // x participates in a solution: every condition must admit it.
          for (auto& cond : lr.conditions) {
            INFO("a=" << a << " b=" << b << " c=" << c << " d=" << d
                      << " op=" << (int)cmp.op << " x=" << x);
            REQUIRE(sat(cond.op, evalc(cond.lhs, x), evalc(cond.rhs, x)));
          }
        }
  }
}
