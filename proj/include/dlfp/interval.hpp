#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlfp/ir.hpp"

// Extended-integer interval arithmetic and the symbolic lowering of
// arithmetic constraints into necessary bound conditions.

namespace dlfp {

// ---------------------------------------------------------------------------
// Extended integers with +-infinity sentinels. Finite arithmetic is checked;
// overflow saturates to the corresponding infinity and sets the widened flag.

struct ExtInt {
  enum class Kind : std::uint8_t { NegInf, Fin, PosInf };
  Kind kind = Kind::Fin;
  std::int64_t v = 0;
  bool widened = false;

  static ExtInt neg_inf() { return {Kind::NegInf, 0, false}; }
  static ExtInt pos_inf() { return {Kind::PosInf, 0, false}; }
  static ExtInt fin(std::int64_t x) { return {Kind::Fin, x, false}; }

  bool is_fin() const { return kind == Kind::Fin; }
  bool is_neg_inf() const { return kind == Kind::NegInf; }
  bool is_pos_inf() const { return kind == Kind::PosInf; }

  friend bool operator==(const ExtInt& a, const ExtInt& b) {
    return a.kind == b.kind && (a.kind != Kind::Fin || a.v == b.v);
  }
  friend bool operator<(const ExtInt& a, const ExtInt& b) {
    if (a.kind != b.kind) return (int)a.kind < (int)b.kind;
    return a.kind == Kind::Fin && a.v < b.v;
  }
  friend bool operator<=(const ExtInt& a, const ExtInt& b) { return a < b || a == b; }
};

inline ExtInt ext_min(ExtInt a, ExtInt b) { return a < b ? a : b; }
inline ExtInt ext_max(ExtInt a, ExtInt b) { return a < b ? b : a; }

inline ExtInt ext_add(ExtInt a, ExtInt b) {
  // -inf + +inf never arises in interval endpoint arithmetic of the same
  // side; resolve it pessimistically toward a.
  if (!a.is_fin()) return a;
  if (!b.is_fin()) return b;
  std::int64_t r;
  if (__builtin_add_overflow(a.v, b.v, &r)) {
    ExtInt s = (a.v > 0) ? ExtInt::pos_inf() : ExtInt::neg_inf();
    s.widened = true;
    return s;
  }
  ExtInt s = ExtInt::fin(r);
  s.widened = a.widened || b.widened;
  return s;
}

inline ExtInt ext_neg(ExtInt a) {
  if (a.is_neg_inf()) return ExtInt::pos_inf();
  if (a.is_pos_inf()) return ExtInt::neg_inf();
  if (a.v == std::numeric_limits<std::int64_t>::min()) {
    ExtInt s = ExtInt::pos_inf();
    s.widened = true;
    return s;
  }
  ExtInt s = ExtInt::fin(-a.v);
  s.widened = a.widened;
  return s;
}

inline ExtInt ext_sub(ExtInt a, ExtInt b) { return ext_add(a, ext_neg(b)); }

inline ExtInt ext_mul(ExtInt a, ExtInt b) {
  // 0 * inf is defined as 0.
  auto sign = [](const ExtInt& x) {
    if (x.is_pos_inf()) return 1;
    if (x.is_neg_inf()) return -1;
    return x.v > 0 ? 1 : x.v < 0 ? -1 : 0;
  };
  if (!a.is_fin() || !b.is_fin()) {
    int s = sign(a) * sign(b);
    if (s == 0) return ExtInt::fin(0);
    return s > 0 ? ExtInt::pos_inf() : ExtInt::neg_inf();
  }
  std::int64_t r;
  if (__builtin_mul_overflow(a.v, b.v, &r)) {
    ExtInt s = (sign(a) * sign(b) >= 0) ? ExtInt::pos_inf() : ExtInt::neg_inf();
    s.widened = true;
    return s;
  }
  ExtInt s = ExtInt::fin(r);
  s.widened = a.widened || b.widened;
  return s;
}

// ---------------------------------------------------------------------------
// Intervals. lo <= hi, or the designated EMPTY value.

struct Interval {
  ExtInt lo = ExtInt::neg_inf();
  ExtInt hi = ExtInt::pos_inf();
  bool empty = false;

  static Interval whole() { return {}; }
  static Interval empty_set() { Interval i; i.empty = true; return i; }
  static Interval point(std::int64_t v) { return {ExtInt::fin(v), ExtInt::fin(v), false}; }
  static Interval of(std::int64_t lo, std::int64_t hi) {
    return {ExtInt::fin(lo), ExtInt::fin(hi), false};
  }

  bool contains(std::int64_t x) const {
    return !empty && lo <= ExtInt::fin(x) && ExtInt::fin(x) <= hi;
  }
  friend bool operator==(const Interval& a, const Interval& b) {
    if (a.empty || b.empty) return a.empty == b.empty;
    return a.lo == b.lo && a.hi == b.hi;
  }
};

inline Interval interval_add(const Interval& a, const Interval& b) {
  if (a.empty || b.empty) return Interval::empty_set();
  return {ext_add(a.lo, b.lo), ext_add(a.hi, b.hi), false};
}

inline Interval interval_sub(const Interval& a, const Interval& b) {
  if (a.empty || b.empty) return Interval::empty_set();
  return {ext_sub(a.lo, b.hi), ext_sub(a.hi, b.lo), false};
}

inline Interval interval_mul(const Interval& a, const Interval& b) {
  if (a.empty || b.empty) return Interval::empty_set();
  ExtInt c[4] = {ext_mul(a.lo, b.lo), ext_mul(a.lo, b.hi),
                 ext_mul(a.hi, b.lo), ext_mul(a.hi, b.hi)};
  ExtInt lo = c[0], hi = c[0];
  for (int i = 1; i < 4; ++i) {
    lo = ext_min(lo, c[i]);
    hi = ext_max(hi, c[i]);
  }
  return {lo, hi, false};
}

inline Interval interval_min(const Interval& a, const Interval& b) {
  if (a.empty || b.empty) return Interval::empty_set();
  return {ext_min(a.lo, b.lo), ext_min(a.hi, b.hi), false};
}

inline Interval interval_max(const Interval& a, const Interval& b) {
  if (a.empty || b.empty) return Interval::empty_set();
  return {ext_max(a.lo, b.lo), ext_max(a.hi, b.hi), false};
}

inline Interval interval_intersect(const Interval& a, const Interval& b) {
  if (a.empty || b.empty) return Interval::empty_set();
  ExtInt lo = ext_max(a.lo, b.lo);
  ExtInt hi = ext_min(a.hi, b.hi);
  if (hi < lo) return Interval::empty_set();
  return {lo, hi, false};
}

using IntervalEnv = std::map<std::string, Interval>;

/// Sound interval enclosure of an expression. Variables are read from env;
/// lookups are read from env by predicate name. Unknown names evaluate to
/// (-inf,+inf) and are appended to *unknown when given.
inline Interval eval_interval(const ExprPtr& e, const IntervalEnv& env,
                              std::vector<std::string>* unknown = nullptr) {
  switch (e->kind) {
    case Expr::Kind::Const: return Interval::point(e->value);
    case Expr::Kind::StrConst: return Interval::whole();
    case Expr::Kind::Var:
    case Expr::Kind::Lookup: {
      auto it = env.find(e->name);
      if (it == env.end()) {
        if (unknown) unknown->push_back(e->name);
        return Interval::whole();
      }
      return it->second;
    }
    case Expr::Kind::Bin: {
      Interval a = eval_interval(e->lhs, env, unknown);
      Interval b = eval_interval(e->rhs, env, unknown);
      switch (e->op) {
        case ExprOp::Add: return interval_add(a, b);
        case ExprOp::Sub: return interval_sub(a, b);
        case ExprOp::Mul: return interval_mul(a, b);
        case ExprOp::Min: return interval_min(a, b);
        case ExprOp::Max: return interval_max(a, b);
      }
    }
  }
  return Interval::whole();
}

// ---------------------------------------------------------------------------
// Symbolic bounds. A variable other than the target is represented by a pair
// of expressions (its lower/upper bound); the target itself is a point. A
// missing side means unbounded in that direction.

struct BoundExprPair {
  std::optional<ExprPtr> lo, hi;
  bool nonneg = false;

  static BoundExprPair point(ExprPtr e, bool nn = false) { return {e, e, nn}; }
  static BoundExprPair unbounded() { return {std::nullopt, std::nullopt, false}; }
};

using SymEnv = std::map<std::string, BoundExprPair>;

struct UnboundedOther {
  std::string var;  // variable with no bound names at all
};

namespace detail {

inline std::optional<ExprPtr> sym_bin(ExprOp op, const std::optional<ExprPtr>& a,
                                      const std::optional<ExprPtr>& b) {
  if (!a || !b) return std::nullopt;
  return expr_bin(op, *a, *b);
}

// lower/upper expressions of e under env. Throws UnboundedOther for
// variables absent from env entirely.
inline BoundExprPair sym_bounds(const ExprPtr& e, const SymEnv& env) {
  switch (e->kind) {
    case Expr::Kind::Const: return BoundExprPair::point(e, e->value >= 0);
    case Expr::Kind::StrConst: return BoundExprPair::unbounded();
    case Expr::Kind::Var: {
      auto it = env.find(e->name);
      if (it == env.end()) throw UnboundedOther{e->name};
      BoundExprPair b = it->second;
      return b;
    }
    case Expr::Kind::Lookup:
      // A ground singleton access behaves as an opaque point of unknown sign.
      return BoundExprPair::point(e, false);
    case Expr::Kind::Bin: {
      BoundExprPair a = sym_bounds(e->lhs, env);
      BoundExprPair b = sym_bounds(e->rhs, env);
      BoundExprPair r;
      switch (e->op) {
        case ExprOp::Add:
          r.lo = sym_bin(ExprOp::Add, a.lo, b.lo);
          r.hi = sym_bin(ExprOp::Add, a.hi, b.hi);
          r.nonneg = a.nonneg && b.nonneg;
          return r;
        case ExprOp::Sub:
          r.lo = sym_bin(ExprOp::Sub, a.lo, b.hi);
          r.hi = sym_bin(ExprOp::Sub, a.hi, b.lo);
          r.nonneg = false;
          return r;
        case ExprOp::Mul: {
          r.nonneg = a.nonneg && b.nonneg;
          bool a_point = a.lo && a.hi && *a.lo == *a.hi;
          bool b_point = b.lo && b.hi && *b.lo == *b.hi;
          if (a.nonneg && b.nonneg) {
            // Monotone form: all factors non-negative.
            r.lo = sym_bin(ExprOp::Mul, a.lo, b.lo);
            r.hi = sym_bin(ExprOp::Mul, a.hi, b.hi);
            return r;
          }
          if (a_point && b_point) {
            r.lo = r.hi = expr_bin(ExprOp::Mul, *a.lo, *b.lo);
            return r;
          }
          // General form needs every endpoint product.
          if (a.lo && a.hi && b.lo && b.hi) {
            ExprPtr p1 = expr_bin(ExprOp::Mul, *a.lo, *b.lo);
            ExprPtr p2 = expr_bin(ExprOp::Mul, *a.lo, *b.hi);
            ExprPtr p3 = expr_bin(ExprOp::Mul, *a.hi, *b.lo);
            ExprPtr p4 = expr_bin(ExprOp::Mul, *a.hi, *b.hi);
            auto fold = [&](ExprOp op) {
              if (a_point)  // two distinct candidates suffice
                return expr_bin(op, p1, p2);
              if (b_point)
                return expr_bin(op, p1, p3);
              return expr_bin(op, expr_bin(op, p1, p2), expr_bin(op, p3, p4));
            };
            r.lo = fold(ExprOp::Min);
            r.hi = fold(ExprOp::Max);
            return r;
          }
          return BoundExprPair::unbounded();
        }
        case ExprOp::Min:
          r.lo = sym_bin(ExprOp::Min, a.lo, b.lo);
          // min is bounded above by either argument's upper bound.
          r.hi = a.hi && b.hi ? sym_bin(ExprOp::Min, a.hi, b.hi) : (a.hi ? a.hi : b.hi);
          r.nonneg = a.nonneg && b.nonneg;
          return r;
        case ExprOp::Max:
          r.lo = a.lo && b.lo ? sym_bin(ExprOp::Max, a.lo, b.lo) : (a.lo ? a.lo : b.lo);
          r.hi = sym_bin(ExprOp::Max, a.hi, b.hi);
          r.nonneg = a.nonneg || b.nonneg;
          return r;
      }
      return BoundExprPair::unbounded();
    }
  }
  return BoundExprPair::unbounded();
}

inline std::optional<std::int64_t> const_fold(const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::Const: return e->value;
    case Expr::Kind::Bin: {
      auto a = const_fold(e->lhs);
      auto b = const_fold(e->rhs);
      if (!a || !b) return std::nullopt;
      switch (e->op) {
        case ExprOp::Add: return *a + *b;
        case ExprOp::Sub: return *a - *b;
        case ExprOp::Mul: return *a * *b;
        case ExprOp::Min: return std::min(*a, *b);
        case ExprOp::Max: return std::max(*a, *b);
      }
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

inline bool trivially_true(const Compare& c) {
  auto a = const_fold(c.lhs);
  auto b = const_fold(c.rhs);
  if (!a || !b) return false;
  switch (c.op) {
    case CmpOp::Le: return *a <= *b;
    case CmpOp::Lt: return *a < *b;
    case CmpOp::Ge: return *a >= *b;
    case CmpOp::Gt: return *a > *b;
    case CmpOp::Eq: return *a == *b;
    case CmpOp::Ne: return *a != *b;
  }
  return false;
}

}  // namespace detail

struct LowerResult {
  std::vector<Compare> conditions;
  std::optional<UnboundedOther> error;  // some non-target variable had no bounds
};

/// Lowers a constraint into necessary conditions on `target`. Every other
/// variable of the constraint must appear in `bounds` (its symbolic
/// lower/upper expressions; a missing side means unbounded). `target_nonneg`
/// states whether the target column is known non-negative. Conditions that
/// reference an unbounded side, or fold to a constant truth, are dropped.
/// `!=` yields no conditions.
inline LowerResult lower_constraint(const Compare& cmp, const std::string& target,
                                    const SymEnv& bounds, bool target_nonneg) {
  LowerResult out;
  if (cmp.op == CmpOp::Ne) return out;

  SymEnv env = bounds;
  env[target] = BoundExprPair::point(expr_var(target), target_nonneg);

  // For L <= R a necessary condition is lower(L) <= upper(R).
  auto emit = [&](const ExprPtr& l, const ExprPtr& r, bool strict) {
    try {
      BoundExprPair lb = detail::sym_bounds(l, env);
      BoundExprPair rb = detail::sym_bounds(r, env);
      if (!lb.lo || !rb.hi) return;  // unbounded side: trivially satisfiable
      Compare c{strict ? CmpOp::Lt : CmpOp::Le, *lb.lo, *rb.hi};
      if (!detail::trivially_true(c)) out.conditions.push_back(std::move(c));
    } catch (const UnboundedOther& u) {
      out.error = u;
    }
  };

  switch (cmp.op) {
    case CmpOp::Le: emit(cmp.lhs, cmp.rhs, false); break;
    case CmpOp::Lt: emit(cmp.lhs, cmp.rhs, true); break;
    case CmpOp::Ge: emit(cmp.rhs, cmp.lhs, false); break;
    case CmpOp::Gt: emit(cmp.rhs, cmp.lhs, true); break;
    case CmpOp::Eq:
      emit(cmp.lhs, cmp.rhs, false);
      emit(cmp.rhs, cmp.lhs, false);
      break;
    case CmpOp::Ne: break;
  }
  if (out.error) out.conditions.clear();
  return out;
}

}  // namespace dlfp
