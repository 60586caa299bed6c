#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

// Core intermediate representation for the Datalog dialect: constants,
// terms, arithmetic expressions, literals, rules, aggregate rules and
// whole programs, plus predicate signatures and static validation.

namespace dlfp {

// ---------------------------------------------------------------------------
// Constants and terms

struct Constant {
  enum class Kind { Int, Str, Entity };
  Kind kind = Kind::Int;
  std::int64_t num = 0;  // Int value, or Entity id
  std::string text;      // Str value, or Entity type name

  static Constant make_int(std::int64_t v) { return {Kind::Int, v, {}}; }
  static Constant make_str(std::string s) { return {Kind::Str, 0, std::move(s)}; }
  static Constant make_entity(std::string type, std::int64_t id) {
    return {Kind::Entity, id, std::move(type)};
  }
  friend bool operator==(const Constant&, const Constant&) = default;
  friend auto operator<=>(const Constant&, const Constant&) = default;
};

struct Term {
  bool is_var = false;
  std::string var;  // variable name when is_var
  Constant value;   // constant otherwise

  static Term mk_var(std::string name) { return Term{true, std::move(name), {}}; }
  static Term mk_const(Constant c) { return Term{false, {}, std::move(c)}; }
  static Term mk_int(std::int64_t v) { return mk_const(Constant::make_int(v)); }
  static Term mk_str(std::string s) { return mk_const(Constant::make_str(std::move(s))); }
  friend bool operator==(const Term&, const Term&) = default;
};

// ---------------------------------------------------------------------------
// Arithmetic expressions
//
// There is deliberately no division operator. A FuncLookup with an empty
// key list models singleton access p[].

enum class ExprOp { Add, Sub, Mul, Min, Max };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Const, StrConst, Var, Bin, Lookup };
  Kind kind = Kind::Const;
  std::int64_t value = 0;    // Const
  std::string name;          // Var name, Lookup predicate, or StrConst text
  ExprOp op = ExprOp::Add;   // Bin
  ExprPtr lhs, rhs;          // Bin
  std::vector<ExprPtr> keys; // Lookup
};

inline ExprPtr expr_const(std::int64_t v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Const;
  e->value = v;
  return e;
}

inline ExprPtr expr_str(std::string s) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::StrConst;
  e->name = std::move(s);
  return e;
}

inline ExprPtr expr_var(std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Var;
  e->name = std::move(name);
  return e;
}

inline ExprPtr expr_bin(ExprOp op, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Bin;
  e->op = op;
  e->lhs = std::move(a);
  e->rhs = std::move(b);
  return e;
}

inline ExprPtr expr_lookup(std::string pred, std::vector<ExprPtr> keys = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Lookup;
  e->name = std::move(pred);
  e->keys = std::move(keys);
  return e;
}

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Expr::Kind::Const: return a->value == b->value;
    case Expr::Kind::StrConst:
    case Expr::Kind::Var: return a->name == b->name;
    case Expr::Kind::Bin:
      return a->op == b->op && expr_equal(a->lhs, b->lhs) && expr_equal(a->rhs, b->rhs);
    case Expr::Kind::Lookup: {
      if (a->name != b->name || a->keys.size() != b->keys.size()) return false;
      for (std::size_t i = 0; i < a->keys.size(); ++i)
        if (!expr_equal(a->keys[i], b->keys[i])) return false;
      return true;
    }
  }
  return false;
}

// Collect variable names occurring in an expression.
inline void expr_vars(const ExprPtr& e, std::set<std::string>& out) {
  if (!e) return;
  switch (e->kind) {
    case Expr::Kind::Var: out.insert(e->name); break;
    case Expr::Kind::Bin:
      expr_vars(e->lhs, out);
      expr_vars(e->rhs, out);
      break;
    case Expr::Kind::Lookup:
      for (auto& k : e->keys) expr_vars(k, out);
      break;
    default: break;
  }
}

// Collect predicate names read through lookups.
inline void expr_lookups(const ExprPtr& e, std::set<std::string>& out) {
  if (!e) return;
  if (e->kind == Expr::Kind::Lookup) out.insert(e->name);
  if (e->kind == Expr::Kind::Bin) {
    expr_lookups(e->lhs, out);
    expr_lookups(e->rhs, out);
  }
  if (e->kind == Expr::Kind::Lookup)
    for (auto& k : e->keys) expr_lookups(k, out);
}

// Rewrite variables and lookups via a callback; returns the original node
// when nothing changed underneath.
template <class Fn>
ExprPtr expr_rewrite(const ExprPtr& e, Fn&& fn) {
  if (!e) return e;
  if (ExprPtr r = fn(e)) return r;
  if (e->kind == Expr::Kind::Bin) {
    ExprPtr l = expr_rewrite(e->lhs, fn);
    ExprPtr r = expr_rewrite(e->rhs, fn);
    if (l == e->lhs && r == e->rhs) return e;
    return expr_bin(e->op, l, r);
  }
  if (e->kind == Expr::Kind::Lookup && !e->keys.empty()) {
    std::vector<ExprPtr> ks;
    bool changed = false;
    for (auto& k : e->keys) {
      ks.push_back(expr_rewrite(k, fn));
      changed |= ks.back() != k;
    }
    if (!changed) return e;
    return expr_lookup(e->name, std::move(ks));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Literals

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

inline CmpOp cmp_flip(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return CmpOp::Gt;
    case CmpOp::Le: return CmpOp::Ge;
    case CmpOp::Gt: return CmpOp::Lt;
    case CmpOp::Ge: return CmpOp::Le;
    default: return op;
  }
}

struct RelAtom {
  std::string pred;
  std::vector<Term> args;
  bool negated = false;  // parses, rejected by validate
  friend bool operator==(const RelAtom&, const RelAtom&) = default;
};

// Parsed form of val(d:v); semantically a FuncAtom with one key plus an
// injectivity obligation.
struct RefModeAtom {
  std::string pred;
  Term key;
  Term value;
  friend bool operator==(const RefModeAtom&, const RefModeAtom&) = default;
};

struct FuncAtom {
  std::string pred;
  std::vector<Term> keys;
  Term value;
  friend bool operator==(const FuncAtom&, const FuncAtom&) = default;
};

struct Compare {
  CmpOp op = CmpOp::Eq;
  ExprPtr lhs, rhs;
  friend bool operator==(const Compare& a, const Compare& b) {
    return a.op == b.op && expr_equal(a.lhs, b.lhs) && expr_equal(a.rhs, b.rhs);
  }
};

// Primitive type atom in declaration bodies: int[64](x), uint[8](x), string(x).
struct TypeAtom {
  enum class Base { Int, UInt, Str };
  Base base = Base::Int;
  int width = 64;
  Term arg;
  friend bool operator==(const TypeAtom&, const TypeAtom&) = default;
};

using Literal = std::variant<RelAtom, RefModeAtom, FuncAtom, Compare, TypeAtom>;

inline const RelAtom* as_rel(const Literal& l) { return std::get_if<RelAtom>(&l); }
inline const RefModeAtom* as_refmode(const Literal& l) { return std::get_if<RefModeAtom>(&l); }
inline const FuncAtom* as_func(const Literal& l) { return std::get_if<FuncAtom>(&l); }
inline const Compare* as_compare(const Literal& l) { return std::get_if<Compare>(&l); }
inline const TypeAtom* as_type(const Literal& l) { return std::get_if<TypeAtom>(&l); }

inline std::string literal_pred(const Literal& l) {
  if (auto* r = as_rel(l)) return r->pred;
  if (auto* r = as_refmode(l)) return r->pred;
  if (auto* f = as_func(l)) return f->pred;
  return {};
}

// Variables of an atom-style literal (terms only, not expressions).
inline void literal_term_vars(const Literal& l, std::set<std::string>& out) {
  auto add = [&](const Term& t) { if (t.is_var) out.insert(t.var); };
  if (auto* r = as_rel(l)) for (auto& t : r->args) add(t);
  if (auto* r = as_refmode(l)) { add(r->key); add(r->value); }
  if (auto* f = as_func(l)) { for (auto& t : f->keys) add(t); add(f->value); }
  if (auto* t = as_type(l)) add(t->arg);
  if (auto* c = as_compare(l)) { expr_vars(c->lhs, out); expr_vars(c->rhs, out); }
}

// ---------------------------------------------------------------------------
// Rules and programs

struct SourceSpan {
  std::size_t start = 0, end = 0;
  int line = 1, column = 1;
  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

struct Rule {
  enum class Kind { Derivation, Fact, Declaration };
  Kind kind = Kind::Derivation;
  std::vector<Literal> heads;  // RelAtom / RefModeAtom / FuncAtom only
  std::vector<Literal> body;
  SourceSpan span;

  friend bool operator==(const Rule& a, const Rule& b) {
    return a.kind == b.kind && a.heads == b.heads && a.body == b.body;
  }
};

struct AggRule {
  FuncAtom head;
  enum class Method { Min, Max };
  Method method = Method::Min;
  std::string result_var;  // n in agg<<n=min(v)>>
  std::string value_var;   // v in agg<<n=min(v)>>
  std::vector<Literal> body;
  SourceSpan span;

  friend bool operator==(const AggRule& a, const AggRule& b) {
    return a.head == b.head && a.method == b.method && a.result_var == b.result_var &&
           a.value_var == b.value_var && a.body == b.body;
  }
};

using Clause = std::variant<Rule, AggRule>;

struct Program {
  std::vector<Clause> clauses;
  friend bool operator==(const Program&, const Program&) = default;
};

inline const Rule* as_rule(const Clause& c) { return std::get_if<Rule>(&c); }
inline const AggRule* as_agg(const Clause& c) { return std::get_if<AggRule>(&c); }

// ---------------------------------------------------------------------------
// Signatures

struct ColType {
  enum class Kind { Int, Str, Entity };
  Kind kind = Kind::Int;
  std::string entity;  // entity type name when kind == Entity
  bool nonneg = false; // unsigned type or declared constant lower bound >= 0
  int width = 64;
  friend bool operator==(const ColType&, const ColType&) = default;
};

struct PredSig {
  std::string name;
  std::vector<ColType> cols;
  int key_arity = -1;          // >= 0 for functional predicates; value is last column
  bool is_entity = false;
  bool is_refmode = false;
  std::string refmode_entity;  // entity type keyed by this refmode predicate
  bool declared = false;

  std::size_t arity() const { return cols.size(); }
};

using SigTable = std::map<std::string, PredSig>;

inline bool is_builtin_type_name(const std::string& s) {
  return s == "int" || s == "uint" || s == "string";
}

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostic {
  enum class Code {
    UndeclaredPredicate,
    ArityMismatch,
    EntityInArithmetic,
    NotSupported,
    DeclarationScope,
    BadRefMode,
    Malformed,
  };
  Code code;
  int clause_index = -1;
  std::string message;
};

inline const char* diag_code_name(Diagnostic::Code c) {
  switch (c) {
    case Diagnostic::Code::UndeclaredPredicate: return "UndeclaredPredicate";
    case Diagnostic::Code::ArityMismatch: return "ArityMismatch";
    case Diagnostic::Code::EntityInArithmetic: return "EntityInArithmetic";
    case Diagnostic::Code::NotSupported: return "NotSupported";
    case Diagnostic::Code::DeclarationScope: return "DeclarationScope";
    case Diagnostic::Code::BadRefMode: return "BadRefMode";
    case Diagnostic::Code::Malformed: return "Malformed";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Signature inference
//
// Declarations (arrow clauses) drive the signature table. Entity predicates
// come from `digit(_) ->.`, refmodes from `digit(d), val(d:v) -> uint[8](v)`,
// ordinary and functional predicates from type atoms and entity atoms on
// their right-hand side.

inline SigTable build_signatures(const Program& p, std::vector<Diagnostic>* diags = nullptr) {
  SigTable sigs;
  auto report = [&](Diagnostic::Code c, int idx, std::string msg) {
    if (diags) diags->push_back({c, idx, std::move(msg)});
  };

  // Pass 1: entity declarations (unary head, empty body).
  for (std::size_t i = 0; i < p.clauses.size(); ++i) {
    auto* r = as_rule(p.clauses[i]);
    if (!r || r->kind != Rule::Kind::Declaration) continue;
    if (r->body.empty() && r->heads.size() == 1) {
      if (auto* a = as_rel(r->heads[0]); a && a->args.size() == 1) {
        PredSig s;
        s.name = a->pred;
        s.is_entity = true;
        s.declared = true;
        s.cols = {ColType{ColType::Kind::Entity, a->pred, false, 64}};
        sigs[a->pred] = s;
      }
    }
  }

  // Pass 2: everything else.
  for (std::size_t i = 0; i < p.clauses.size(); ++i) {
    auto* r = as_rule(p.clauses[i]);
    if (!r || r->kind != Rule::Kind::Declaration) continue;

    // Column type for a variable, judged from the clause's atoms.
    auto type_of_var = [&](const std::string& v) -> std::optional<ColType> {
      for (auto& lit : r->body) {
        if (auto* t = as_type(lit)) {
          if (t->arg.is_var && t->arg.var == v) {
            ColType ct;
            ct.kind = t->base == TypeAtom::Base::Str ? ColType::Kind::Str : ColType::Kind::Int;
            ct.nonneg = t->base == TypeAtom::Base::UInt;
            ct.width = t->width;
            return ct;
          }
        }
      }
      // Lower bound >= 0 in the body marks the column non-negative.
      auto scan_entity = [&](const std::vector<Literal>& lits) -> std::optional<ColType> {
        for (auto& lit : lits) {
          auto* a = as_rel(lit);
          if (!a || a->args.size() != 1 || !a->args[0].is_var || a->args[0].var != v) continue;
          auto it = sigs.find(a->pred);
          if (it != sigs.end() && it->second.is_entity)
            return ColType{ColType::Kind::Entity, a->pred, false, 64};
        }
        return std::nullopt;
      };
      if (auto ct = scan_entity(r->body)) return ct;
      if (auto ct = scan_entity(r->heads)) return ct;
      return std::nullopt;
    };

    auto nonneg_from_body = [&](const std::string& v) {
      for (auto& lit : r->body) {
        auto* c = as_compare(lit);
        if (!c || !c->lhs || !c->rhs) continue;
        // v >= k or k <= v with k >= 0
        bool lv = c->lhs->kind == Expr::Kind::Var && c->lhs->name == v;
        bool rv = c->rhs->kind == Expr::Kind::Var && c->rhs->name == v;
        if (lv && c->rhs->kind == Expr::Kind::Const && c->rhs->value >= 0 &&
            (c->op == CmpOp::Ge || c->op == CmpOp::Gt || c->op == CmpOp::Eq))
          return true;
        if (rv && c->lhs->kind == Expr::Kind::Const && c->lhs->value >= 0 &&
            (c->op == CmpOp::Le || c->op == CmpOp::Lt || c->op == CmpOp::Eq))
          return true;
      }
      return false;
    };

    auto resolve = [&](const Term& t, int clause_idx) -> ColType {
      if (!t.is_var) {
        if (t.value.kind == Constant::Kind::Str) return ColType{ColType::Kind::Str, {}, false, 64};
        return ColType{ColType::Kind::Int, {}, t.value.num >= 0, 64};
      }
      if (auto ct = type_of_var(t.var)) {
        ColType r2 = *ct;
        if (r2.kind == ColType::Kind::Int && !r2.nonneg) r2.nonneg = nonneg_from_body(t.var);
        return r2;
      }
      report(Diagnostic::Code::DeclarationScope, clause_idx,
             "no type for variable '" + t.var + "' in declaration");
      return ColType{};
    };

    for (auto& h : r->heads) {
      if (auto* a = as_rel(h)) {
        if (sigs.count(a->pred) && sigs[a->pred].is_entity) continue;  // already from pass 1
        PredSig s;
        s.name = a->pred;
        s.declared = true;
        for (auto& t : a->args) s.cols.push_back(resolve(t, (int)i));
        auto it = sigs.find(a->pred);
        if (it == sigs.end()) sigs[a->pred] = s;
      } else if (auto* rm = as_refmode(h)) {
        PredSig s;
        s.name = rm->pred;
        s.declared = true;
        s.is_refmode = true;
        s.key_arity = 1;
        ColType kt = resolve(rm->key, (int)i);
        if (kt.kind != ColType::Kind::Entity)
          report(Diagnostic::Code::BadRefMode, (int)i,
                 "refmode key of '" + rm->pred + "' is not an entity");
        s.refmode_entity = kt.entity;
        s.cols = {kt, resolve(rm->value, (int)i)};
        sigs[rm->pred] = s;
      } else if (auto* f = as_func(h)) {
        PredSig s;
        s.name = f->pred;
        s.declared = true;
        s.key_arity = (int)f->keys.size();
        for (auto& t : f->keys) s.cols.push_back(resolve(t, (int)i));
        s.cols.push_back(resolve(f->value, (int)i));
        sigs[f->pred] = s;
      }
    }
  }
  return sigs;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

// Per-rule variable typing from atom positions, against the signature table.
inline std::map<std::string, ColType> rule_var_types(const std::vector<const Literal*>& lits,
                                                     const SigTable& sigs) {
  std::map<std::string, ColType> types;
  auto note = [&](const Term& t, const ColType& ct) {
    if (t.is_var && !types.count(t.var)) types[t.var] = ct;
  };
  for (auto* lp : lits) {
    const Literal& l = *lp;
    std::string pred = literal_pred(l);
    auto it = sigs.find(pred);
    if (it == sigs.end()) continue;
    const PredSig& s = it->second;
    if (auto* a = as_rel(l)) {
      for (std::size_t i = 0; i < a->args.size() && i < s.cols.size(); ++i)
        note(a->args[i], s.cols[i]);
    } else if (auto* rm = as_refmode(l)) {
      if (s.cols.size() == 2) { note(rm->key, s.cols[0]); note(rm->value, s.cols[1]); }
    } else if (auto* f = as_func(l)) {
      for (std::size_t i = 0; i < f->keys.size() && i < s.cols.size(); ++i)
        note(f->keys[i], s.cols[i]);
      if (!s.cols.empty()) note(f->value, s.cols.back());
    }
  }
  return types;
}

inline bool expr_is_ground_var(const ExprPtr& e) { return e && e->kind == Expr::Kind::Var; }

}  // namespace detail

/// Static checks: declared predicates, matching arities, no entities in
/// arithmetic, declaration scoping. Collects all diagnostics instead of
/// stopping at the first.
inline std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> diags;
  SigTable sigs = build_signatures(p, &diags);

  auto check_atom = [&](const Literal& l, int idx) {
    std::string pred = literal_pred(l);
    if (pred.empty()) return;
    auto it = sigs.find(pred);
    if (it == sigs.end()) {
      diags.push_back({Diagnostic::Code::UndeclaredPredicate, idx,
                       "UndeclaredPredicate(" + pred + ")"});
      return;
    }
    const PredSig& s = it->second;
    std::size_t arity = 0;
    if (auto* a = as_rel(l)) {
      arity = a->args.size();
      if (a->negated)
        diags.push_back({Diagnostic::Code::NotSupported, idx,
                         "NotSupported: negated atom !" + pred});
    } else if (as_refmode(l)) {
      arity = 2;
    } else if (auto* f = as_func(l)) {
      arity = f->keys.size() + 1;
      if (s.key_arity >= 0 && (int)f->keys.size() != s.key_arity)
        diags.push_back({Diagnostic::Code::ArityMismatch, idx,
                         "ArityMismatch: " + pred + " keys"});
    }
    if (arity != s.arity())
      diags.push_back({Diagnostic::Code::ArityMismatch, idx, "ArityMismatch: " + pred});
  };

  auto check_expr_entities = [&](const ExprPtr& e, const std::map<std::string, ColType>& types,
                                 int idx, bool top_equality) {
    std::set<std::string> vars;
    expr_vars(e, vars);
    for (auto& v : vars) {
      auto it = types.find(v);
      if (it != types.end() && it->second.kind == ColType::Kind::Entity) {
        // Entity variables may only appear as a bare side of =/!=.
        if (!(top_equality && detail::expr_is_ground_var(e)))
          diags.push_back({Diagnostic::Code::EntityInArithmetic, idx,
                           "EntityInArithmetic(" + v + ")"});
      }
    }
    std::set<std::string> lk;
    expr_lookups(e, lk);
    for (auto& q : lk)
      if (!sigs.count(q))
        diags.push_back({Diagnostic::Code::UndeclaredPredicate, idx,
                         "UndeclaredPredicate(" + q + ")"});
  };

  for (std::size_t i = 0; i < p.clauses.size(); ++i) {
    const Clause& c = p.clauses[i];
    if (auto* r = as_rule(c)) {
      if (r->kind == Rule::Kind::Declaration) {
        // Right side must only use variables from the left side.
        std::set<std::string> lhs_vars, rhs_vars;
        for (auto& h : r->heads) literal_term_vars(h, lhs_vars);
        for (auto& b : r->body) literal_term_vars(b, rhs_vars);
        for (auto& v : rhs_vars)
          if (!lhs_vars.count(v))
            diags.push_back({Diagnostic::Code::DeclarationScope, (int)i,
                             "declaration uses unscoped variable '" + v + "'"});
        continue;
      }
      if (r->kind == Rule::Kind::Derivation && r->heads.size() != 1)
        diags.push_back({Diagnostic::Code::NotSupported, (int)i,
                         "NotSupported: derivation rules take exactly one head atom"});
      std::vector<const Literal*> lits;
      for (auto& h : r->heads) lits.push_back(&h);
      for (auto& b : r->body) lits.push_back(&b);
      auto types = detail::rule_var_types(lits, sigs);
      for (auto& h : r->heads) check_atom(h, (int)i);
      for (auto& b : r->body) {
        if (auto* cmp = as_compare(b)) {
          bool eq = cmp->op == CmpOp::Eq || cmp->op == CmpOp::Ne;
          bool bare = detail::expr_is_ground_var(cmp->lhs) || cmp->lhs->kind == Expr::Kind::Const;
          bool bare2 = detail::expr_is_ground_var(cmp->rhs) || cmp->rhs->kind == Expr::Kind::Const;
          check_expr_entities(cmp->lhs, types, (int)i, eq && bare && bare2);
          check_expr_entities(cmp->rhs, types, (int)i, eq && bare && bare2);
        } else if (as_type(b)) {
          diags.push_back({Diagnostic::Code::Malformed, (int)i,
                           "type atom outside a declaration"});
        } else {
          check_atom(b, (int)i);
        }
      }
    } else if (auto* a = as_agg(c)) {
      check_atom(Literal{a->head}, (int)i);
      std::set<std::string> body_vars;
      for (auto& b : a->body) {
        literal_term_vars(b, body_vars);
        if (!as_compare(b) && !as_type(b)) check_atom(b, (int)i);
      }
      if (!body_vars.count(a->value_var))
        diags.push_back({Diagnostic::Code::Malformed, (int)i,
                         "aggregated variable '" + a->value_var + "' not bound in body"});
    }
  }
  return diags;
}

}  // namespace dlfp
