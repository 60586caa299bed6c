#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dlfp/analysis.hpp"
#include "dlfp/interval.hpp"
#include "dlfp/ir.hpp"
#include "dlfp/parser.hpp"

// The filter-predicates transformation: for every rule with arithmetic
// constraints, derive per-generator filter predicates whose conditions
// compare each generated value against the lower/upper bounds of the other
// generators, computed once in shared aggregate predicates. Recursive
// predicates get their bounds approximated rule-by-rule instead of
// aggregated, which keeps the output stratifiable.

namespace dlfp {

// ---------------------------------------------------------------------------
// Bound identities

// One bound per (generator predicate, terminal predicate, value column,
// kind); the chain's terminal atom tells where the numeric value lives.
struct BoundKey {
  std::string gen;
  std::string terminal;
  std::size_t column = 0;
  bool ub = false;

  friend bool operator<(const BoundKey& a, const BoundKey& b) {
    return std::tie(a.gen, a.terminal, a.column, a.ub) <
           std::tie(b.gen, b.terminal, b.column, b.ub);
  }
  friend bool operator==(const BoundKey& a, const BoundKey& b) {
    return a.gen == b.gen && a.terminal == b.terminal && a.column == b.column &&
           a.ub == b.ub;
  }
};

struct BoundApprox {
  enum class Status { ExactAggregate, Approximated, Unbounded };
  Status status = Status::Unbounded;
  BoundKey key;
  std::string name;       // lb_<pred> / ub_<pred>, possibly _c<idx>
  GeneratorChain chain;   // representative chain (ExactAggregate)
  ExprPtr defexpr;        // defining expression (Approximated)
};

struct FilterSpec {
  std::string name;        // <gen>_filtered_<var>, deduplicated
  std::size_t rule_index = 0;
  GeneratorChain chain;
  Rule rule;               // the filter's defining rule
};

class TransformException : public std::runtime_error {
 public:
  explicit TransformException(std::string msg, std::vector<Diagnostic> d = {})
      : std::runtime_error(msg), diagnostics(std::move(d)) {}
  std::vector<Diagnostic> diagnostics;
};

// ---------------------------------------------------------------------------
// Bound planning

class BoundPlanner {
 public:
  BoundPlanner(const Program& prog, const SigTable& sigs, const StratumPlan& plan)
      : prog_(prog), sigs_(sigs) {
    for (auto& st : plan.strata)
      if (st.recursive)
        for (auto& p : st.preds) scc_[p] = std::set<std::string>(st.preds.begin(), st.preds.end());
    for (std::size_t i = 0; i < prog.clauses.size(); ++i)
      if (auto* r = as_rule(prog.clauses[i]))
        if (r->kind != Rule::Kind::Declaration && r->heads.size() == 1)
          if (auto pred = head_pred(*r); !pred.empty()) defs_[pred].push_back(i);
  }

  bool recursive(const std::string& pred) const { return scc_.count(pred) != 0; }

  static BoundKey key_of(const GeneratorChain& ch, bool ub) {
    BoundKey k;
    k.gen = ch.generator.pred;
    k.terminal = ch.links.empty() ? ch.generator.pred : literal_pred(ch.links.back());
    // The terminal is whichever link binds the value; body order puts it last
    // among the links that mention it.
    for (auto& l : ch.links) {
      std::set<std::string> vs;
      literal_term_vars(l, vs);
      if (vs.count(ch.value_var)) k.terminal = literal_pred(l);
    }
    k.column = ch.bound_column;
    k.ub = ub;
    return k;
  }

  const BoundApprox& demand(const GeneratorChain& ch, bool ub) {
    BoundKey key = key_of(ch, ub);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    if (in_progress_.count(key)) {
      BoundApprox a;
      a.key = key;
      a.status = BoundApprox::Status::Unbounded;
      return memo_.emplace(key, std::move(a)).first->second;
    }
    in_progress_.insert(key);
    BoundApprox a = plan(ch, key);
    in_progress_.erase(key);
    return memo_.emplace(key, std::move(a)).first->second;
  }

  const std::map<BoundKey, BoundApprox>& planned() const { return memo_; }

  const BoundApprox* by_name(const std::string& name) const {
    for (auto& [k, a] : memo_)
      if (a.name == name) return &a;
    return nullptr;
  }

  // Declared type of the bounded column, defaulting to int[64].
  ColType column_type(const BoundKey& key) const {
    auto it = sigs_.find(key.terminal);
    if (it != sigs_.end() && key.column < it->second.cols.size())
      return it->second.cols[key.column];
    return ColType{ColType::Kind::Int, {}, false, 64};
  }

 private:
  static std::string head_pred(const Rule& r) {
    return r.heads.empty() ? std::string() : literal_pred(r.heads[0]);
  }

  std::string bound_name(const BoundKey& key) const {
    // Columns reached through a plain functional link are named after the
    // predicate that owns the column; refmode links keep the entity's name.
    std::string base = key.gen;
    auto tit = sigs_.find(key.terminal);
    bool refmode = tit != sigs_.end() && tit->second.is_refmode;
    if (key.terminal != key.gen && !refmode) base = key.terminal;
    std::string n = (key.ub ? "ub_" : "lb_") + base;
    // Several numeric columns on one predicate need disambiguation.
    int numeric = 0;
    if (tit != sigs_.end())
      for (auto& c : tit->second.cols)
        if (c.kind == ColType::Kind::Int) ++numeric;
    if (numeric > 1) n += "_c" + std::to_string(key.column);
    return n;
  }

  BoundApprox plan(const GeneratorChain& ch, const BoundKey& key) {
    BoundApprox a;
    a.key = key;
    a.name = bound_name(key);
    a.chain = ch;
    if (!recursive(key.gen)) {
      a.status = BoundApprox::Status::ExactAggregate;
      return a;
    }
    // Recursive predicate: bound each defining rule's head value separately
    // and combine. Bounds reached through functional links out of a recursive
    // predicate are not approximated.
    if (!ch.links.empty() || key.terminal != key.gen) {
      a.status = BoundApprox::Status::Unbounded;
      return a;
    }
    const std::set<std::string>& scc = scc_.at(key.gen);
    std::vector<ExprPtr> contributions;
    auto dit = defs_.find(key.gen);
    if (dit == defs_.end()) {
      a.status = BoundApprox::Status::Unbounded;
      return a;
    }
    for (std::size_t ci : dit->second) {
      const Rule& r = *as_rule(prog_.clauses[ci]);
      ExprPtr c = rule_contribution(r, key, scc);
      if (!c) {
        a.status = BoundApprox::Status::Unbounded;
        return a;
      }
      bool dup = false;
      for (auto& e : contributions) dup = dup || expr_equal(e, c);
      if (!dup) contributions.push_back(c);
    }
    if (contributions.empty()) {
      a.status = BoundApprox::Status::Unbounded;
      return a;
    }
    ExprPtr def = contributions[0];
    for (std::size_t i = 1; i < contributions.size(); ++i)
      def = expr_bin(key.ub ? ExprOp::Max : ExprOp::Min, def, contributions[i]);
    a.status = BoundApprox::Status::Approximated;
    a.defexpr = def;
    return a;
  }

  // Bound contribution of one defining rule, as an expression over other
  // bound lookups and constants; null when unbounded.
  ExprPtr rule_contribution(const Rule& r, const BoundKey& key,
                            const std::set<std::string>& scc) {
    const Literal& h = r.heads[0];
    std::vector<Term> hargs;
    if (auto* ra = as_rel(h)) hargs = ra->args;
    else if (auto* f = as_func(h)) { hargs = f->keys; hargs.push_back(f->value); }
    else if (auto* rm = as_refmode(h)) hargs = {rm->key, rm->value};
    if (key.column >= hargs.size()) return nullptr;
    const Term& t = hargs[key.column];
    if (!t.is_var) {
      if (t.value.kind != Constant::Kind::Int) return nullptr;
      return expr_const(t.value.num);
    }
    const std::string& y = t.var;

    // (a) value produced directly by a generator outside the SCC
    if (ExprPtr viaGen = generator_bound(r, y, key.ub, &scc)) return viaGen;

    // (b) value assigned from an expression: take its symbolic bound with
    // SCC-produced variables unbounded, then tighten with constant compares.
    for (auto& l : r.body) {
      auto* c = as_compare(l);
      if (!c || c->op != CmpOp::Eq) continue;
      const ExprPtr* src = nullptr;
      if (c->lhs->kind == Expr::Kind::Var && c->lhs->name == y) src = &c->rhs;
      else if (c->rhs->kind == Expr::Kind::Var && c->rhs->name == y) src = &c->lhs;
      if (!src) continue;
      SymEnv env;
      std::set<std::string> vs;
      expr_vars(*src, vs);
      for (auto& z : vs) {
        env[z] = BoundExprPair::unbounded();
        Rule tmp = r;
        if (ExprPtr lo = generator_bound(tmp, z, false, &scc)) env[z].lo = lo;
        if (ExprPtr hi = generator_bound(tmp, z, true, &scc)) env[z].hi = hi;
      }
      std::optional<ExprPtr> side;
      try {
        BoundExprPair b = detail::sym_bounds(*src, env);
        side = key.ub ? b.hi : b.lo;
      } catch (const UnboundedOther&) {
        side = std::nullopt;
      }
      if (auto c2 = tighten(r, y, key.ub)) {
        side = side ? expr_bin(key.ub ? ExprOp::Min : ExprOp::Max, *side, *c2) : *c2;
      }
      return side ? *side : nullptr;
    }
    return nullptr;  // (c)
  }

  // BoundName lookup for a variable sitting directly in a non-SCC body atom
  // column; null when no such atom exists or the bound is itself unbounded.
  ExprPtr generator_bound(const Rule& r, const std::string& y, bool ub,
                          const std::set<std::string>* scc) {
    for (std::size_t bi = 0; bi < r.body.size(); ++bi) {
      auto* a = as_rel(r.body[bi]);
      if (!a || a->negated) continue;
      if (scc && scc->count(a->pred)) continue;
      for (std::size_t col = 0; col < a->args.size(); ++col) {
        if (!a->args[col].is_var || a->args[col].var != y) continue;
        GeneratorChain ch;
        ch.value_var = y;
        ch.generator = *a;
        ch.generator_body_index = bi;
        ch.bound_column = col;
        const BoundApprox& b = demand(ch, ub);
        if (b.status == BoundApprox::Status::Unbounded) return nullptr;
        return expr_lookup(b.name);
      }
    }
    return nullptr;
  }

  // Direct constant comparisons on the head value within the rule body.
  std::optional<ExprPtr> tighten(const Rule& r, const std::string& y, bool ub) {
    std::optional<std::int64_t> best;
    auto consider = [&](std::int64_t c) {
      best = best ? (ub ? std::min(*best, c) : std::max(*best, c)) : c;
    };
    for (auto& l : r.body) {
      auto* c = as_compare(l);
      if (!c) continue;
      Compare n = *c;
      // normalize so the variable is on the left
      if (n.rhs->kind == Expr::Kind::Var && n.rhs->name == y) {
        std::swap(n.lhs, n.rhs);
        n.op = cmp_flip(n.op);
      }
      if (!(n.lhs->kind == Expr::Kind::Var && n.lhs->name == y)) continue;
      auto k = detail::const_fold(n.rhs);
      if (!k) continue;
      if (ub) {
        if (n.op == CmpOp::Le) consider(*k);
        if (n.op == CmpOp::Lt) consider(*k - 1);
      } else {
        if (n.op == CmpOp::Ge) consider(*k);
        if (n.op == CmpOp::Gt) consider(*k + 1);
      }
    }
    if (!best) return std::nullopt;
    return expr_const(*best);
  }

  const Program& prog_;
  const SigTable& sigs_;
  std::map<std::string, std::set<std::string>> scc_;
  std::map<std::string, std::vector<std::size_t>> defs_;
  std::map<BoundKey, BoundApprox> memo_;
  std::set<BoundKey> in_progress_;
};

// ---------------------------------------------------------------------------
// Filter construction

namespace detail {

// Canonical variable renaming, for structural comparison of filter rules.
inline std::string canonical_rule_text(Rule r) {
  std::map<std::string, std::string> ren;
  auto rename_term = [&](Term& t) {
    if (!t.is_var) return;
    auto [it, fresh] = ren.try_emplace(t.var, "v" + std::to_string(ren.size()));
    t.var = it->second;
  };
  auto rename_expr = [&](const ExprPtr& e) {
    return expr_rewrite(e, [&](const ExprPtr& n) -> ExprPtr {
      if (n->kind != Expr::Kind::Var) return nullptr;
      auto [it, fresh] = ren.try_emplace(n->name, "v" + std::to_string(ren.size()));
      return expr_var(it->second);
    });
  };
  auto rename_lit = [&](Literal& l) {
    if (auto* a = std::get_if<RelAtom>(&l))
      for (auto& t : a->args) rename_term(t);
    else if (auto* rm = std::get_if<RefModeAtom>(&l)) {
      rename_term(rm->key);
      rename_term(rm->value);
    } else if (auto* f = std::get_if<FuncAtom>(&l)) {
      for (auto& t : f->keys) rename_term(t);
      rename_term(f->value);
    } else if (auto* c = std::get_if<Compare>(&l)) {
      c->lhs = rename_expr(c->lhs);
      c->rhs = rename_expr(c->rhs);
    }
  };
  for (auto& h : r.heads) rename_lit(h);
  for (auto& b : r.body) rename_lit(b);
  return format_clause(r);
}

inline std::set<std::string> rule_vars(const Rule& r) {
  std::set<std::string> vs;
  for (auto& h : r.heads) literal_term_vars(h, vs);
  for (auto& b : r.body) {
    literal_term_vars(b, vs);
    if (auto* c = as_compare(b)) {
      expr_vars(c->lhs, vs);
      expr_vars(c->rhs, vs);
    }
  }
  return vs;
}

}  // namespace detail

struct TransformResult {
  Program program;
  std::vector<FilterSpec> filters;
  std::map<BoundKey, BoundApprox> bounds;   // bounds actually emitted
  bool changed = false;
};

namespace detail {

struct FilterBuild {
  Rule rewritten;
  std::vector<FilterSpec> specs;
  std::set<std::string> used_bounds;  // names referenced by emitted conditions
};

// Program-wide filter identity: structurally equal filters share one name.
struct FilterNames {
  std::map<std::string, std::string> by_canon;  // canonical body -> name
  std::set<std::string> used;
};

// Builds the shared aggregate clause for an exact bound:
//   lb_digit[]=n <- agg<<n=min(v)>> digit(d), val(d:v).
inline AggRule exact_aggregate(const BoundApprox& b) {
  AggRule a;
  a.head = FuncAtom{b.name, {}, Term::mk_var("n")};
  a.method = b.key.ub ? AggRule::Method::Max : AggRule::Method::Min;
  a.result_var = "n";
  a.value_var = "v";

  // Bounds are shared by key (generator, terminal, column), so the body must
  // be the widest pattern for that key: generator columns that don't feed the
  // value or a link get distinct fresh variables, even if the source atom
  // repeated a variable or used a constant there.
  std::set<std::string> link_vars;
  for (auto& l : b.chain.links) literal_term_vars(l, link_vars);
  std::map<std::string, std::string> ren;
  int next = 0;
  auto rn = [&](const Term& t) -> Term {
    if (t.is_var && t.var == b.chain.value_var) return Term::mk_var("v");
    if (!t.is_var || !link_vars.count(t.var))
      return Term::mk_var("x" + std::to_string(next++));
    auto [it, fresh] = ren.try_emplace(t.var, "x" + std::to_string(next));
    if (fresh) ++next;
    return Term::mk_var(it->second);
  };
  RelAtom gen = b.chain.generator;
  gen.negated = false;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < gen.args.size(); ++i) {
    Term& t = gen.args[i];
    if (b.chain.links.empty() && i == static_cast<std::size_t>(b.chain.bound_column)) {
      t = Term::mk_var("v");
    } else if (t.is_var && t.var != b.chain.value_var &&
               link_vars.count(t.var) && seen.insert(t.var).second) {
      // First occurrence of a variable a link joins on keeps a shared name.
      t = rn(t);
    } else {
      t = Term::mk_var("x" + std::to_string(next++));
    }
  }
  a.body.push_back(gen);
  for (auto l : b.chain.links) {
    if (auto* rm = std::get_if<RefModeAtom>(&l)) {
      rm->key = rn(rm->key);
      rm->value = rn(rm->value);
    } else if (auto* f = std::get_if<FuncAtom>(&l)) {
      for (auto& k : f->keys) k = rn(k);
      f->value = rn(f->value);
    }
    a.body.push_back(l);
  }
  return a;
}

// Type declaration for a filter predicate, derived from its generator:
// entity columns reference the entity predicate, others get type atoms.
inline Rule filter_declaration(const std::string& filter, const RelAtom& gen,
                               const SigTable& sigs) {
  Rule d;
  d.kind = Rule::Kind::Declaration;
  RelAtom head{filter, {}, false};
  std::vector<Literal> body;
  auto it = sigs.find(gen.pred);
  for (std::size_t i = 0; i < gen.args.size(); ++i) {
    std::string v = gen.args[i].is_var ? gen.args[i].var : "x" + std::to_string(i);
    head.args.push_back(Term::mk_var(v));
    if (it == sigs.end() || i >= it->second.cols.size()) continue;
    const ColType& ct = it->second.cols[i];
    switch (ct.kind) {
      case ColType::Kind::Entity:
        body.push_back(RelAtom{ct.entity, {Term::mk_var(v)}, false});
        break;
      case ColType::Kind::Str:
        body.push_back(TypeAtom{TypeAtom::Base::Str, 64, Term::mk_var(v)});
        break;
      case ColType::Kind::Int:
        body.push_back(TypeAtom{ct.nonneg ? TypeAtom::Base::UInt : TypeAtom::Base::Int,
                                ct.width, Term::mk_var(v)});
        break;
    }
  }
  d.heads.push_back(head);
  d.body = body;
  return d;
}

inline Rule bound_declaration(const BoundApprox& b, const BoundPlanner& planner) {
  Rule d;
  d.kind = Rule::Kind::Declaration;
  d.heads.push_back(FuncAtom{b.name, {}, Term::mk_var("n")});
  ColType ct = planner.column_type(b.key);
  TypeAtom ta{TypeAtom::Base::Int, 64, Term::mk_var("n")};
  if (ct.kind == ColType::Kind::Int) {
    ta.base = ct.nonneg ? TypeAtom::Base::UInt : TypeAtom::Base::Int;
    ta.width = ct.width;
  }
  d.body.push_back(ta);
  return d;
}

}  // namespace detail

/// Filter construction for one rule. Produces the rewritten rule (generator
/// atoms replaced by their filters), new FilterSpecs, and the bound names the
/// filters reference. Rules without usable constraints come back unchanged.
inline detail::FilterBuild make_filters(const Rule& rule, std::size_t rule_index,
                                        const std::vector<GeneratorChain>& chains,
                                        BoundPlanner& planner, const SigTable& sigs,
                                        detail::FilterNames& names) {
  detail::FilterBuild out;
  out.rewritten = rule;
  std::set<std::size_t> replaced;

  // Bounds (as lookups) for every rule variable that has a chain.
  SymEnv var_bounds;
  std::map<std::string, bool> var_nonneg;
  for (auto& ch : chains) {
    BoundExprPair b = BoundExprPair::unbounded();
    const BoundApprox& lb = planner.demand(ch, false);
    const BoundApprox& ub = planner.demand(ch, true);
    if (lb.status != BoundApprox::Status::Unbounded) b.lo = expr_lookup(lb.name);
    if (ub.status != BoundApprox::Status::Unbounded) b.hi = expr_lookup(ub.name);
    BoundKey k = BoundPlanner::key_of(ch, false);
    b.nonneg = planner.column_type(k).nonneg;
    var_bounds[ch.value_var] = b;
    var_nonneg[ch.value_var] = b.nonneg;
  }

  std::set<std::string> source_vars = detail::rule_vars(rule);

  for (auto& ch : chains) {
    const std::string& target = ch.value_var;

    std::vector<Compare> conditions;
    for (auto& l : rule.body) {
      auto* c = as_compare(l);
      if (!c || c->op == CmpOp::Ne) continue;
      std::set<std::string> vs;
      expr_vars(c->lhs, vs);
      expr_vars(c->rhs, vs);
      if (!vs.count(target)) continue;
      SymEnv env;
      for (auto& z : vs) {
        if (z == target) continue;
        auto it = var_bounds.find(z);
        env[z] = it == var_bounds.end() ? BoundExprPair::unbounded() : it->second;
      }
      LowerResult lr = lower_constraint(*c, target, env, var_nonneg[target]);
      for (auto& cond : lr.conditions) conditions.push_back(std::move(cond));
    }
    if (conditions.empty()) continue;

    // Replace bound lookups by fresh variables bound ahead of the conditions,
    // in first-use order: lb_digit[]=t1, ub_digit[]=t2, ...
    std::vector<std::pair<std::string, std::string>> binders;  // bound name -> var
    int tn = 1;
    auto tvar = [&](const std::string& bname) -> std::string {
      for (auto& [n, v] : binders)
        if (n == bname) return v;
      std::string v;
      do {
        v = "t" + std::to_string(tn++);
      } while (source_vars.count(v));
      binders.emplace_back(bname, v);
      return v;
    };
    for (auto& cond : conditions) {
      auto sub = [&](const ExprPtr& e) -> ExprPtr {
        if (e->kind == Expr::Kind::Lookup && e->keys.empty() && planner.by_name(e->name))
          return expr_var(tvar(e->name));
        return nullptr;
      };
      cond.lhs = expr_rewrite(cond.lhs, sub);
      cond.rhs = expr_rewrite(cond.rhs, sub);
    }

    // Name the filter after the generator-side variable: digit_filtered_i
    // when the value flows through links, s_filtered_w for direct columns.
    std::string label = target;
    if (!ch.links.empty()) {
      std::set<std::string> gvars;
      for (auto& t : ch.generator.args)
        if (t.is_var) gvars.insert(t.var);
      std::vector<Term> keys;
      if (auto* rm = as_refmode(ch.links.front())) keys = {rm->key};
      else if (auto* fa = as_func(ch.links.front())) keys = fa->keys;
      for (auto& k : keys)
        if (k.is_var && gvars.count(k.var)) { label = k.var; break; }
    }

    FilterSpec spec;
    spec.rule_index = rule_index;
    spec.chain = ch;
    spec.name = ch.generator.pred + "_filtered_" + label;

    Rule f;
    f.kind = Rule::Kind::Derivation;
    RelAtom gen = ch.generator;
    gen.negated = false;
    f.body.push_back(gen);
    for (auto& l : ch.links) f.body.push_back(l);
    for (auto& [bname, v] : binders)
      f.body.push_back(FuncAtom{bname, {}, Term::mk_var(v)});
    for (auto& cond : conditions) f.body.push_back(cond);
    RelAtom head{spec.name, gen.args, false};
    f.heads.push_back(head);
    spec.rule = f;

    // Merge structurally identical filters program-wide; genuine name
    // collisions between different filters get the rule index appended.
    Rule probe = f;
    std::get<RelAtom>(probe.heads[0]).pred = "_filter_";
    std::string canon = detail::canonical_rule_text(probe);
    auto known = names.by_canon.find(canon);
    if (known != names.by_canon.end()) {
      spec.name = known->second;
      std::get<RelAtom>(spec.rule.heads[0]).pred = spec.name;
    } else {
      if (names.used.count(spec.name))
        spec.name += "_r" + std::to_string(rule_index);
      while (names.used.count(spec.name)) spec.name += "x";
      std::get<RelAtom>(spec.rule.heads[0]).pred = spec.name;
      names.by_canon.emplace(canon, spec.name);
      names.used.insert(spec.name);
      for (auto& [bname, v] : binders) out.used_bounds.insert(bname);
      out.specs.push_back(spec);
    }

    // Substitute the generator atom in the source rule.
    RelAtom fatom{spec.name, ch.generator.args, false};
    if (!replaced.count(ch.generator_body_index)) {
      out.rewritten.body[ch.generator_body_index] = fatom;
      replaced.insert(ch.generator_body_index);
    } else {
      out.rewritten.body.push_back(fatom);
    }
  }
  return out;
}

/// Whole-program transformation. The input must validate and stratify; the
/// output does too, with every original predicate's meaning preserved.
inline TransformResult transform_program(const Program& input) {
  std::vector<Diagnostic> diags = validate(input);
  if (!diags.empty())
    throw TransformException("program does not validate", std::move(diags));
  DepGraph g = build_dep_graph(input);
  auto strat = stratify(g, &input);
  if (auto* err = std::get_if<StratificationError>(&strat))
    throw TransformException(err->message);

  SigTable sigs = build_signatures(input);
  BoundPlanner planner(input, sigs, std::get<StratumPlan>(strat));

  TransformResult res;
  res.program = input;
  detail::FilterNames names;
  std::set<std::string> used_bounds;

  for (std::size_t ci = 0; ci < input.clauses.size(); ++ci) {
    auto* r = as_rule(input.clauses[ci]);
    if (!r || r->kind != Rule::Kind::Derivation) continue;
    std::vector<GeneratorChain> chains = find_generator_chains(*r);
    if (chains.empty()) continue;
    detail::FilterBuild fb = make_filters(*r, ci, chains, planner, sigs, names);
    if (fb.specs.empty() && fb.rewritten == *r) continue;
    res.program.clauses[ci] = fb.rewritten;
    for (auto& s : fb.specs) res.filters.push_back(s);
    used_bounds.insert(fb.used_bounds.begin(), fb.used_bounds.end());
    res.changed = true;
  }
  if (!res.changed) return res;

  // Close the bound set over approximation dependencies.
  for (;;) {
    std::set<std::string> more;
    for (auto& n : used_bounds) {
      const BoundApprox* b = planner.by_name(n);
      if (b && b->status == BoundApprox::Status::Approximated) {
        std::set<std::string> lk;
        expr_lookups(b->defexpr, lk);
        for (auto& d : lk)
          if (!used_bounds.count(d)) more.insert(d);
      }
    }
    if (more.empty()) break;
    used_bounds.insert(more.begin(), more.end());
  }

  for (auto& [key, b] : planner.planned())
    if (used_bounds.count(b.name)) res.bounds.emplace(key, b);

  // Declarations, then bound definitions (each exactly once), then filters.
  for (auto& s : res.filters)
    res.program.clauses.push_back(
        detail::filter_declaration(s.name, s.chain.generator, sigs));
  for (auto& [key, b] : res.bounds)
    res.program.clauses.push_back(detail::bound_declaration(b, planner));
  for (auto& [key, b] : res.bounds) {
    if (b.status == BoundApprox::Status::ExactAggregate) {
      res.program.clauses.push_back(detail::exact_aggregate(b));
    } else {
      Rule r;
      r.kind = Rule::Kind::Derivation;
      r.heads.push_back(FuncAtom{b.name, {}, Term::mk_var("n")});
      r.body.push_back(Compare{CmpOp::Eq, expr_var("n"), b.defexpr});
      res.program.clauses.push_back(r);
    }
  }
  for (auto& s : res.filters) res.program.clauses.push_back(s.rule);

  std::vector<Diagnostic> out_diags = validate(res.program);
  if (!out_diags.empty())
    throw TransformException("internal: transformed program does not validate",
                             std::move(out_diags));
  auto out_strat = stratify(build_dep_graph(res.program), &res.program);
  if (auto* err = std::get_if<StratificationError>(&out_strat))
    throw TransformException("internal: transformed program does not stratify: " +
                             err->message);
  return res;
}

}  // namespace dlfp
