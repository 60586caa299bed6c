#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dlfp/analysis.hpp"
#include "dlfp/ir.hpp"

// Stratified semi-naive bottom-up evaluation over in-memory relations,
// with min/max aggregates, functional predicates, checked arithmetic and
// instrumentation counters.

namespace dlfp {

// ---------------------------------------------------------------------------
// Runtime values. Strings are interned database-wide; entities are opaque
// (type, id) pairs, never ordered or used in arithmetic.

struct Value {
  enum class Kind : std::uint8_t { Int, Str, Entity };
  Kind kind = Kind::Int;
  std::int32_t type = 0;  // entity type id
  std::int64_t v = 0;     // integer value, string id, or entity id

  static Value make_int(std::int64_t x) { return {Kind::Int, 0, x}; }
  static Value make_str(std::int32_t id) { return {Kind::Str, 0, id}; }
  static Value make_entity(std::int32_t type, std::int64_t id) {
    return {Kind::Entity, type, id};
  }
  friend bool operator==(const Value& a, const Value& b) {
    return a.kind == b.kind && a.type == b.type && a.v == b.v;
  }
};

inline std::uint64_t value_hash(const Value& v) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint64_t x) {
    h ^= x;
    h *= 0x100000001b3ull;
  };
  mix((std::uint64_t)v.kind);
  mix((std::uint64_t)(std::uint32_t)v.type);
  mix((std::uint64_t)v.v);
  return h;
}

class Interner {
 public:
  std::int32_t intern(const std::string& s) {
    auto it = ids_.find(s);
    if (it != ids_.end()) return it->second;
    std::int32_t id = (std::int32_t)strings_.size();
    strings_.push_back(s);
    ids_.emplace(s, id);
    return id;
  }
  const std::string& str(std::int32_t id) const { return strings_.at((std::size_t)id); }
  std::optional<std::int32_t> find(const std::string& s) const {
    auto it = ids_.find(s);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> strings_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

// ---------------------------------------------------------------------------
// Errors

struct EvalError {
  enum class Kind {
    Overflow,
    FunctionalDependency,
    LimitExceeded,
    UnknownPredicate,
    TypeError,
    Unstratifiable,
    Unsafe,
  };
  Kind kind;
  std::string message;
};

class EvalException : public std::runtime_error {
 public:
  explicit EvalException(EvalError e) : std::runtime_error(e.message), error(std::move(e)) {}
  EvalError error;
};

// ---------------------------------------------------------------------------
// Relations: flat deduplicated tuple stores with lazily built hash indexes
// and a functional-dependency check for functional predicates.

class Relation {
 public:
  Relation() = default;
  explicit Relation(std::uint32_t arity, int key_arity = -1)
      : arity_(arity), key_arity_(key_arity) {}

  std::uint32_t arity() const { return arity_; }
  int key_arity() const { return key_arity_; }
  std::size_t size() const { return arity_ ? data_.size() / arity_ : 0; }
  const Value* row(std::size_t i) const { return data_.data() + i * arity_; }

  // Inserts a tuple; returns false for duplicates. Throws on a functional
  // dependency violation.
  bool insert(const Value* tuple, const std::string& pred_for_error = {}) {
    std::uint64_t h = hash_row(tuple);
    auto [it, fresh] = buckets_.try_emplace(h);
    if (!fresh) {
      for (std::uint32_t r : it->second)
        if (std::equal(tuple, tuple + arity_, row(r))) return false;
    }
    if (key_arity_ >= 0 && arity_ > 0) {
      std::uint64_t kh = hash_prefix(tuple, (std::uint32_t)key_arity_);
      auto [kit, kfresh] = fd_buckets_.try_emplace(kh);
      if (!kfresh) {
        for (std::uint32_t r : kit->second) {
          if (std::equal(tuple, tuple + key_arity_, row(r)) &&
              !(*(tuple + arity_ - 1) == *(row(r) + arity_ - 1)))
            throw EvalException({EvalError::Kind::FunctionalDependency,
                                 "FunctionalDependencyError: conflicting value for " +
                                     pred_for_error});
        }
      }
      kit->second.push_back((std::uint32_t)size());
    }
    it->second.push_back((std::uint32_t)size());
    data_.insert(data_.end(), tuple, tuple + arity_);
    return true;
  }

  // Functional lookup by key prefix.
  const Value* lookup(const Value* keys) const {
    if (key_arity_ < 0) return nullptr;
    std::uint64_t kh = hash_prefix(keys, (std::uint32_t)key_arity_);
    auto it = fd_buckets_.find(kh);
    if (it == fd_buckets_.end()) return nullptr;
    for (std::uint32_t r : it->second)
      if (std::equal(keys, keys + key_arity_, row(r))) return row(r);
    return nullptr;
  }

  // Hash index over the columns in `mask`, extended incrementally.
  struct Index {
    std::uint32_t mask = 0;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
    std::size_t watermark = 0;  // rows indexed so far
  };

  const Index& index(std::uint32_t mask) const {
    Index& ix = indexes_[mask];
    ix.mask = mask;
    for (std::size_t r = ix.watermark; r < size(); ++r)
      ix.buckets[hash_masked(row(r), mask)].push_back((std::uint32_t)r);
    ix.watermark = size();
    return ix;
  }

  std::uint64_t hash_masked(const Value* tuple, std::uint32_t mask) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ull;
    for (std::uint32_t c = 0; c < arity_; ++c)
      if (mask & (1u << c)) h = h * 0x100000001b3ull ^ value_hash(tuple[c]);
    return h;
  }

 private:
  std::uint64_t hash_row(const Value* t) const { return hash_prefix(t, arity_); }
  std::uint64_t hash_prefix(const Value* t, std::uint32_t n) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ull;
    for (std::uint32_t c = 0; c < n; ++c) h = h * 0x100000001b3ull ^ value_hash(t[c]);
    return h;
  }

  std::uint32_t arity_ = 0;
  int key_arity_ = -1;
  std::vector<Value> data_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> fd_buckets_;
  mutable std::map<std::uint32_t, Index> indexes_;
};

struct Database {
  Interner strings;
  std::map<std::string, Relation> rels;
  std::map<std::string, std::map<std::string, std::int64_t>> entities;  // type -> key -> id
  std::uint64_t total_tuples = 0;

  Relation& require(const std::string& pred, std::uint32_t arity, int key_arity = -1) {
    auto it = rels.find(pred);
    if (it == rels.end()) it = rels.emplace(pred, Relation(arity, key_arity)).first;
    return it->second;
  }
  const Relation* find(const std::string& pred) const {
    auto it = rels.find(pred);
    return it == rels.end() ? nullptr : &it->second;
  }

  std::int64_t entity_id(const std::string& type, const std::string& key) {
    auto& tab = entities[type];
    auto it = tab.find(key);
    if (it != tab.end()) return it->second;
    std::int64_t id = (std::int64_t)tab.size();
    tab.emplace(key, id);
    return id;
  }

  bool insert(const std::string& pred, const Value* tuple) {
    auto it = rels.find(pred);
    if (it == rels.end())
      throw EvalException({EvalError::Kind::UnknownPredicate, "UnknownPredicate: " + pred});
    bool fresh = it->second.insert(tuple, pred);
    if (fresh) ++total_tuples;
    return fresh;
  }
};

// ---------------------------------------------------------------------------
// Statistics and limits

struct RuleStats {
  std::string head;
  std::uint64_t instantiations = 0;  // body bindings attempted
  std::uint64_t derived = 0;
  std::uint64_t duplicates = 0;
};

struct EvalStats {
  std::vector<RuleStats> per_rule;  // indexed by clause id
  std::map<int, std::uint64_t> stratum_iterations;
  std::map<int, double> stratum_seconds;

  std::uint64_t total_instantiations() const {
    std::uint64_t n = 0;
    for (auto& r : per_rule) n += r.instantiations;
    return n;
  }
  std::uint64_t total_derived() const {
    std::uint64_t n = 0;
    for (auto& r : per_rule) n += r.derived;
    return n;
  }
};

struct EvalLimits {
  std::uint64_t max_iterations = 1'000'000;  // per stratum
  std::uint64_t max_tuples = 100'000'000;    // database-wide
};

// ---------------------------------------------------------------------------
// Rule compilation: variables become register slots, atoms become scan or
// probe steps, comparisons become checked expression tests.

namespace eng {

struct CExpr {
  enum class Op { Const, Str, Slot, Add, Sub, Mul, Min, Max, Lookup };
  Op op = Op::Const;
  std::int64_t cval = 0;
  int slot = -1;
  std::string pred;  // Lookup
  std::vector<CExpr> kids;
};

struct ArgSpec {
  // CheckCol compares against an earlier column of the same row: it handles
  // variables repeated within one atom, whose slot is only bound while the
  // row itself is being matched.
  enum class Kind { Bind, CheckSlot, CheckConst, CheckCol };
  Kind kind;
  int slot = -1;  // register slot, or earlier column index for CheckCol
  Value cval;
};

struct AtomStep {
  std::string pred;
  std::vector<ArgSpec> args;
  std::uint32_t check_mask = 0;
  bool is_scc = false;  // participates in the enclosing recursive stratum
};

struct TestStep {
  CmpOp op;
  CExpr lhs, rhs;
};

struct AssignStep {
  int slot;
  CExpr expr;
};

using Step = std::variant<AtomStep, TestStep, AssignStep>;

struct HeadSpec {
  std::string pred;
  std::vector<ArgSpec> args;  // Bind means copy-from-slot here
  int key_arity = -1;
};

struct CompiledRule {
  std::size_t clause_id = 0;
  std::vector<Step> steps;
  std::vector<HeadSpec> heads;
  int num_slots = 0;
  // aggregate-specific
  bool is_agg = false;
  AggRule::Method method = AggRule::Method::Min;
  std::vector<ArgSpec> group_keys;  // head keys of an aggregate
  int agg_value_slot = -1;
  std::string agg_pred;
};

class Compiler {
 public:
  Compiler(Database& db, const SigTable& sigs) : db_(db), sigs_(sigs) {}

  CompiledRule compile_rule(const Rule& rule, std::size_t clause_id,
                            const std::set<std::string>* scc) {
    CompiledRule out;
    out.clause_id = clause_id;
    compile_body(rule.body, out, scc);
    for (auto& h : rule.heads) out.heads.push_back(compile_head(h));
    out.num_slots = (int)slots_.size();
    return out;
  }

  CompiledRule compile_agg(const AggRule& agg, std::size_t clause_id) {
    CompiledRule out;
    out.clause_id = clause_id;
    out.is_agg = true;
    out.method = agg.method;
    out.agg_pred = agg.head.pred;
    compile_body(agg.body, out, nullptr);
    for (auto& k : agg.head.keys) out.group_keys.push_back(term_arg(k, /*binding=*/false));
    out.agg_value_slot = slot_of(agg.value_var);
    out.num_slots = (int)slots_.size();
    return out;
  }

 private:
  void compile_body(const std::vector<Literal>& body, CompiledRule& out,
                    const std::set<std::string>* scc) {
    for (auto& l : body) {
      if (auto* c = as_compare(l)) {
        std::string assigns;
        std::set<std::string> lv, rv;
        expr_vars(c->lhs, lv);
        expr_vars(c->rhs, rv);
        auto unbound = [&](const std::set<std::string>& vs) -> std::optional<std::string> {
          for (auto& v : vs)
            if (!bound_.count(v)) return v;
          return std::nullopt;
        };
        auto lu = unbound(lv), ru = unbound(rv);
        if (c->op == CmpOp::Eq && (lu || ru)) {
          // assignment: one side a fresh variable
          const ExprPtr& tgt = lu ? c->lhs : c->rhs;
          const ExprPtr& src = lu ? c->rhs : c->lhs;
          if (tgt->kind != Expr::Kind::Var)
            throw EvalException({EvalError::Kind::Unsafe,
                                 "unsafe comparison in rule body"});
          AssignStep st;
          st.expr = compile_expr(src);
          st.slot = slot_of(tgt->name);
          bound_.insert(tgt->name);
          out.steps.push_back(st);
          continue;
        }
        if (lu || ru)
          throw EvalException({EvalError::Kind::Unsafe,
                               "unbound variable '" + (lu ? *lu : *ru) + "' in comparison"});
        TestStep st;
        st.op = c->op;
        st.lhs = compile_expr(c->lhs);
        st.rhs = compile_expr(c->rhs);
        out.steps.push_back(st);
      } else if (as_type(l)) {
        // type atoms are declaration-only; ignore defensively
      } else {
        AtomStep st;
        st.pred = literal_pred(l);
        std::vector<Term> terms = atom_terms(l);
        std::map<std::string, std::uint32_t> local;  // var -> binding column here
        for (std::uint32_t i = 0; i < terms.size(); ++i) {
          if (terms[i].is_var && local.count(terms[i].var)) {
            // Repeated variable inside this atom: row-local equality, not
            // part of the probe mask.
            ArgSpec a;
            a.kind = ArgSpec::Kind::CheckCol;
            a.slot = (int)local[terms[i].var];
            st.args.push_back(a);
            continue;
          }
          ArgSpec a = term_arg(terms[i], /*binding=*/true);
          if (a.kind == ArgSpec::Kind::Bind) local.emplace(terms[i].var, i);
          else st.check_mask |= (1u << i);
          st.args.push_back(a);
        }
        st.is_scc = scc && scc->count(st.pred);
        out.steps.push_back(st);
      }
    }
  }

  static std::vector<Term> atom_terms(const Literal& l) {
    if (auto* a = as_rel(l)) return a->args;
    if (auto* r = as_refmode(l)) return {r->key, r->value};
    if (auto* f = as_func(l)) {
      std::vector<Term> ts = f->keys;
      ts.push_back(f->value);
      return ts;
    }
    return {};
  }

  HeadSpec compile_head(const Literal& h) {
    HeadSpec spec;
    spec.pred = literal_pred(h);
    auto it = sigs_.find(spec.pred);
    if (it != sigs_.end()) spec.key_arity = it->second.key_arity;
    for (auto& t : atom_terms(h)) spec.args.push_back(term_arg(t, /*binding=*/false));
    return spec;
  }

  ArgSpec term_arg(const Term& t, bool binding) {
    ArgSpec a;
    if (t.is_var) {
      if (binding && !bound_.count(t.var)) {
        a.kind = ArgSpec::Kind::Bind;
        a.slot = slot_of(t.var);
        bound_.insert(t.var);
      } else {
        a.kind = ArgSpec::Kind::CheckSlot;
        a.slot = slot_of(t.var);
      }
      return a;
    }
    a.kind = ArgSpec::Kind::CheckConst;
    a.cval = constant_value(t.value);
    return a;
  }

  Value constant_value(const Constant& c) {
    switch (c.kind) {
      case Constant::Kind::Int: return Value::make_int(c.num);
      case Constant::Kind::Str: return Value::make_str(db_.strings.intern(c.text));
      case Constant::Kind::Entity:
        return Value::make_entity(db_.strings.intern(c.text), c.num);
    }
    return {};
  }

  CExpr compile_expr(const ExprPtr& e) {
    CExpr c;
    switch (e->kind) {
      case Expr::Kind::Const:
        c.op = CExpr::Op::Const;
        c.cval = e->value;
        return c;
      case Expr::Kind::StrConst:
        c.op = CExpr::Op::Str;
        c.cval = db_.strings.intern(e->name);
        return c;
      case Expr::Kind::Var:
        c.op = CExpr::Op::Slot;
        c.slot = slot_of(e->name);
        return c;
      case Expr::Kind::Lookup: {
        c.op = CExpr::Op::Lookup;
        c.pred = e->name;
        for (auto& k : e->keys) c.kids.push_back(compile_expr(k));
        return c;
      }
      case Expr::Kind::Bin: {
        switch (e->op) {
          case ExprOp::Add: c.op = CExpr::Op::Add; break;
          case ExprOp::Sub: c.op = CExpr::Op::Sub; break;
          case ExprOp::Mul: c.op = CExpr::Op::Mul; break;
          case ExprOp::Min: c.op = CExpr::Op::Min; break;
          case ExprOp::Max: c.op = CExpr::Op::Max; break;
        }
        c.kids.push_back(compile_expr(e->lhs));
        c.kids.push_back(compile_expr(e->rhs));
        return c;
      }
    }
    return c;
  }

  int slot_of(const std::string& v) {
    auto it = slots_.find(v);
    if (it != slots_.end()) return it->second;
    int s = (int)slots_.size();
    slots_.emplace(v, s);
    return s;
  }

  Database& db_;
  const SigTable& sigs_;
  std::map<std::string, int> slots_;
  std::set<std::string> bound_;
};

// Expression evaluation: nullopt signals a failed lookup (no derivation),
// exceptions signal overflow.
inline std::optional<Value> eval_cexpr(const CExpr& e, const std::vector<Value>& regs,
                                       const Database& db) {
  switch (e.op) {
    case CExpr::Op::Const: return Value::make_int(e.cval);
    case CExpr::Op::Str: return Value::make_str((std::int32_t)e.cval);
    case CExpr::Op::Slot: return regs[(std::size_t)e.slot];
    case CExpr::Op::Lookup: {
      const Relation* r = db.find(e.pred);
      if (!r || r->key_arity() < 0) return std::nullopt;
      std::vector<Value> keys;
      keys.reserve(e.kids.size());
      for (auto& k : e.kids) {
        auto v = eval_cexpr(k, regs, db);
        if (!v) return std::nullopt;
        keys.push_back(*v);
      }
      const Value* row = r->lookup(keys.data());
      if (!row) return std::nullopt;
      return row[r->arity() - 1];
    }
    default: {
      auto a = eval_cexpr(e.kids[0], regs, db);
      auto b = eval_cexpr(e.kids[1], regs, db);
      if (!a || !b) return std::nullopt;
      if (a->kind != Value::Kind::Int || b->kind != Value::Kind::Int)
        throw EvalException({EvalError::Kind::TypeError,
                             "arithmetic on non-integer value"});
      std::int64_t x = a->v, y = b->v, r = 0;
      bool ovf = false;
      switch (e.op) {
        case CExpr::Op::Add: ovf = __builtin_add_overflow(x, y, &r); break;
        case CExpr::Op::Sub: ovf = __builtin_sub_overflow(x, y, &r); break;
        case CExpr::Op::Mul: ovf = __builtin_mul_overflow(x, y, &r); break;
        case CExpr::Op::Min: r = std::min(x, y); break;
        case CExpr::Op::Max: r = std::max(x, y); break;
        default: break;
      }
      if (ovf)
        throw EvalException({EvalError::Kind::Overflow, "Overflow in arithmetic"});
      return Value::make_int(r);
    }
  }
}

inline bool eval_test(const TestStep& t, const std::vector<Value>& regs, const Database& db,
                      bool* ok) {
  auto a = eval_cexpr(t.lhs, regs, db);
  auto b = eval_cexpr(t.rhs, regs, db);
  if (!a || !b) { *ok = false; return false; }
  *ok = true;
  if (a->kind == Value::Kind::Int && b->kind == Value::Kind::Int) {
    switch (t.op) {
      case CmpOp::Eq: return a->v == b->v;
      case CmpOp::Ne: return a->v != b->v;
      case CmpOp::Lt: return a->v < b->v;
      case CmpOp::Le: return a->v <= b->v;
      case CmpOp::Gt: return a->v > b->v;
      case CmpOp::Ge: return a->v >= b->v;
    }
  }
  // non-integer values admit only (in)equality
  if (t.op == CmpOp::Eq) return *a == *b;
  if (t.op == CmpOp::Ne) return !(*a == *b);
  throw EvalException({EvalError::Kind::TypeError, "ordered comparison on non-integers"});
}

// Executes a compiled body; calls sink(regs) per complete instantiation.
// delta_pred/delta_lo/delta_hi restrict one designated SCC atom occurrence.
struct BodyRun {
  Database& db;
  const CompiledRule& rule;
  RuleStats* stats;
  int delta_atom = -1;  // index into steps of the delta-restricted atom
  std::size_t delta_lo = 0, delta_hi = 0;
  std::map<std::string, std::size_t> snapshot;  // pred -> row count visible

  template <class Sink>
  void run(std::vector<Value>& regs, Sink&& sink) {
    exec(0, regs, sink);
  }

  template <class Sink>
  void exec(std::size_t si, std::vector<Value>& regs, Sink&& sink) {
    if (si == rule.steps.size()) {
      sink(regs);
      return;
    }
    const Step& step = rule.steps[si];
    if (auto* t = std::get_if<TestStep>(&step)) {
      bool ok = false;
      if (eval_test(*t, regs, db, &ok)) exec(si + 1, regs, sink);
      return;
    }
    if (auto* a = std::get_if<AssignStep>(&step)) {
      auto v = eval_cexpr(a->expr, regs, db);
      if (!v) return;
      regs[(std::size_t)a->slot] = *v;
      exec(si + 1, regs, sink);
      return;
    }
    const AtomStep& at = std::get<AtomStep>(step);
    const Relation* rel = db.find(at.pred);
    if (!rel) return;
    std::size_t lo = 0, hi = rel->size();
    auto snap = snapshot.find(at.pred);
    if (snap != snapshot.end()) hi = std::min(hi, snap->second);
    if ((int)si == delta_atom) { lo = delta_lo; hi = std::min(hi, delta_hi); }

    auto try_row = [&](std::size_t r) {
      const Value* row = rel->row(r);
      for (std::uint32_t c = 0; c < at.args.size(); ++c) {
        const ArgSpec& spec = at.args[c];
        switch (spec.kind) {
          case ArgSpec::Kind::CheckConst:
            if (!(row[c] == spec.cval)) return;
            break;
          case ArgSpec::Kind::CheckSlot:
            if (!(row[c] == regs[(std::size_t)spec.slot])) return;
            break;
          case ArgSpec::Kind::CheckCol:
            if (!(row[c] == row[spec.slot])) return;
            break;
          case ArgSpec::Kind::Bind: break;
        }
      }
      for (std::uint32_t c = 0; c < at.args.size(); ++c)
        if (at.args[c].kind == ArgSpec::Kind::Bind)
          regs[(std::size_t)at.args[c].slot] = row[c];
      if (stats) ++stats->instantiations;
      exec(si + 1, regs, sink);
    };

    // Probe by index when the atom has checked columns and the scan range is
    // the whole relation prefix; otherwise scan.
    bool whole_prefix = lo == 0;
    if (at.check_mask && whole_prefix && hi > 16) {
      // keys from current bindings
      std::vector<Value> probe(at.args.size());
      for (std::uint32_t c = 0; c < at.args.size(); ++c) {
        if (at.args[c].kind == ArgSpec::Kind::CheckConst) probe[c] = at.args[c].cval;
        else if (at.args[c].kind == ArgSpec::Kind::CheckSlot)
          probe[c] = regs[(std::size_t)at.args[c].slot];
      }
      const Relation::Index& ix = rel->index(at.check_mask);
      auto it = ix.buckets.find(rel->hash_masked(probe.data(), at.check_mask));
      if (it == ix.buckets.end()) return;
      for (std::uint32_t r : it->second) {
        if (r >= hi) break;
        try_row(r);
      }
      return;
    }
    for (std::size_t r = lo; r < hi; ++r) try_row(r);
  }
};

}  // namespace eng

// ---------------------------------------------------------------------------
// Evaluation driver

namespace detail {

inline Value constant_to_value(const Constant& c, Database& db, const ColType* col) {
  if (col && col->kind == ColType::Kind::Entity) {
    // Ground entity reference in a fact: keyed by its textual form.
    std::string key = c.kind == Constant::Kind::Str ? c.text : std::to_string(c.num);
    return Value::make_entity(db.strings.intern(col->entity),
                              db.entity_id(col->entity, key));
  }
  switch (c.kind) {
    case Constant::Kind::Int: return Value::make_int(c.num);
    case Constant::Kind::Str: return Value::make_str(db.strings.intern(c.text));
    case Constant::Kind::Entity:
      return Value::make_entity(db.strings.intern(c.text), c.num);
  }
  return {};
}

}  // namespace detail

/// Evaluates one aggregate rule against fully computed lower strata.
/// Groups body solutions by the head keys and takes min/max of the value
/// variable; an empty group set yields an empty relation.
inline Relation eval_aggregate(const AggRule& agg, Database& db, const SigTable& sigs,
                               RuleStats* stats = nullptr) {
  eng::Compiler comp(db, sigs);
  eng::CompiledRule cr = comp.compile_agg(agg, 0);
  std::map<std::vector<Value>, std::int64_t, decltype([](const std::vector<Value>& a,
                                                         const std::vector<Value>& b) {
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
      if (a[i].kind != b[i].kind) return a[i].kind < b[i].kind;
      if (a[i].type != b[i].type) return a[i].type < b[i].type;
      if (a[i].v != b[i].v) return a[i].v < b[i].v;
    }
    return a.size() < b.size();
  })> groups;

  eng::BodyRun run{db, cr, stats};
  std::vector<Value> regs((std::size_t)std::max(cr.num_slots, 1));
  run.run(regs, [&](const std::vector<Value>& r) {
    std::vector<Value> key;
    key.reserve(cr.group_keys.size());
    for (auto& g : cr.group_keys)
      key.push_back(g.kind == eng::ArgSpec::Kind::CheckConst ? g.cval
                                                             : r[(std::size_t)g.slot]);
    const Value& v = r[(std::size_t)cr.agg_value_slot];
    if (v.kind != Value::Kind::Int)
      throw EvalException({EvalError::Kind::TypeError, "aggregate over non-integer"});
    auto [it, fresh] = groups.try_emplace(std::move(key), v.v);
    if (!fresh)
      it->second = agg.method == AggRule::Method::Min ? std::min(it->second, v.v)
                                                      : std::max(it->second, v.v);
  });

  Relation out((std::uint32_t)cr.group_keys.size() + 1, (int)cr.group_keys.size());
  for (auto& [key, v] : groups) {
    std::vector<Value> row = key;
    row.push_back(Value::make_int(v));
    out.insert(row.data(), agg.head.pred);
  }
  return out;
}

struct EvalResult {
  Database db;
  EvalStats stats;
};

/// Stratum-by-stratum semi-naive fixpoint. The program must validate and
/// stratify; edb supplies all predicates without defining rules.
inline EvalResult evaluate(const Program& program, const Database& edb,
                           const EvalLimits& limits = {}) {
  SigTable sigs = build_signatures(program);
  DepGraph g = build_dep_graph(program);
  auto strat = stratify(g, &program);
  if (auto* err = std::get_if<StratificationError>(&strat))
    throw EvalException({EvalError::Kind::Unstratifiable, err->message});
  const StratumPlan& plan = std::get<StratumPlan>(strat);

  EvalResult res;
  res.db = edb;
  Database& db = res.db;
  res.stats.per_rule.resize(program.clauses.size());

  // Materialize empty relations for every declared predicate.
  for (auto& [name, sig] : sigs)
    db.require(name, (std::uint32_t)sig.arity(), sig.key_arity);
  // Predicates that appear without declarations still need storage.
  for (auto& n : g.nodes)
    if (!db.find(n)) db.require(n, 0);

  // Safety-order every derivation rule up front.
  std::map<std::size_t, Rule> ordered;
  for (std::size_t ci = 0; ci < program.clauses.size(); ++ci) {
    if (auto* r = as_rule(program.clauses[ci])) {
      if (r->kind != Rule::Kind::Derivation) continue;
      auto so = safety_order(*r);
      if (auto* err = std::get_if<SafetyError>(&so))
        throw EvalException({EvalError::Kind::Unsafe, err->message});
      ordered.emplace(ci, std::get<Rule>(std::move(so)));
    }
  }

  auto check_tuples = [&]() {
    if (db.total_tuples > limits.max_tuples)
      throw EvalException({EvalError::Kind::LimitExceeded,
                           "LimitExceeded(max_tuples)"});
  };

  // Ground facts first; they are monotone and stratification keeps lower
  // strata from reading above themselves.
  for (std::size_t ci = 0; ci < program.clauses.size(); ++ci) {
    auto* r = as_rule(program.clauses[ci]);
    if (!r || r->kind != Rule::Kind::Fact) continue;
    for (auto& h : r->heads) {
      std::string pred = literal_pred(h);
      auto sit = sigs.find(pred);
      const PredSig* sig = sit == sigs.end() ? nullptr : &sit->second;
      std::vector<Term> terms;
      if (auto* a = as_rel(h)) terms = a->args;
      else if (auto* f = as_func(h)) { terms = f->keys; terms.push_back(f->value); }
      else if (auto* rm = as_refmode(h)) { terms = {rm->key, rm->value}; }
      std::vector<Value> row;
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].is_var)
          throw EvalException({EvalError::Kind::Unsafe, "non-ground fact for " + pred});
        const ColType* col = sig && i < sig->cols.size() ? &sig->cols[i] : nullptr;
        row.push_back(detail::constant_to_value(terms[i].value, db, col));
      }
      if (!db.find(pred)) db.require(pred, (std::uint32_t)row.size());
      if (db.insert(pred, row.data())) res.stats.per_rule[ci].derived++;
    }
  }
  check_tuples();

  for (std::size_t s = 0; s < plan.strata.size(); ++s) {
    const Stratum& st = plan.strata[s];
    auto t0 = std::chrono::steady_clock::now();

    std::set<std::string> scc(st.preds.begin(), st.preds.end());
    std::vector<eng::CompiledRule> rules;
    std::vector<const AggRule*> aggs;
    std::vector<std::size_t> agg_ids;
    for (std::size_t ci : st.clause_ids) {
      const Clause& c = program.clauses[ci];
      if (auto* a = as_agg(c)) {
        aggs.push_back(a);
        agg_ids.push_back(ci);
      } else if (auto* r = as_rule(c); r && r->kind == Rule::Kind::Derivation) {
        eng::Compiler comp(db, sigs);
        rules.push_back(comp.compile_rule(ordered.at(ci), ci,
                                          st.recursive ? &scc : nullptr));
      }
    }

    // Aggregates read strictly lower strata; compute them first.
    for (std::size_t i = 0; i < aggs.size(); ++i) {
      Relation r = eval_aggregate(*aggs[i], db, sigs, &res.stats.per_rule[agg_ids[i]]);
      Relation& dst = db.require(aggs[i]->head.pred, r.arity(), r.key_arity());
      for (std::size_t row = 0; row < r.size(); ++row)
        if (dst.insert(r.row(row), aggs[i]->head.pred)) {
          ++db.total_tuples;
          ++res.stats.per_rule[agg_ids[i]].derived;
        }
    }
    check_tuples();

    auto run_rule = [&](eng::CompiledRule& cr, int delta_atom, std::size_t dlo,
                        std::size_t dhi) {
      RuleStats& rs = res.stats.per_rule[cr.clause_id];
      eng::BodyRun run{db, cr, &rs, delta_atom, dlo, dhi};
      // Snapshot sizes so insertions during the run are not re-scanned.
      for (auto& step : cr.steps)
        if (auto* at = std::get_if<eng::AtomStep>(&step))
          if (const Relation* rel = db.find(at->pred))
            run.snapshot[at->pred] = rel->size();
      std::vector<Value> regs((std::size_t)std::max(cr.num_slots, 1));
      run.run(regs, [&](const std::vector<Value>& r) {
        for (auto& h : cr.heads) {
          std::vector<Value> row;
          row.reserve(h.args.size());
          for (auto& a : h.args)
            row.push_back(a.kind == eng::ArgSpec::Kind::CheckConst
                              ? a.cval
                              : r[(std::size_t)a.slot]);
          if (db.insert(h.pred, row.data())) ++rs.derived;
          else ++rs.duplicates;
        }
      });
      check_tuples();
    };

    if (!st.recursive) {
      for (auto& cr : rules) run_rule(cr, -1, 0, 0);
      res.stats.stratum_iterations[(int)s] = 1;
    } else {
      // Iteration 0: full join.
      std::map<std::string, std::size_t> mark;
      for (auto& p : st.preds) mark[p] = db.find(p) ? db.find(p)->size() : 0;
      for (auto& cr : rules) run_rule(cr, -1, 0, 0);
      std::uint64_t iters = 1;
      for (;;) {
        bool grew = false;
        std::map<std::string, std::pair<std::size_t, std::size_t>> delta;
        for (auto& p : st.preds) {
          std::size_t now = db.find(p) ? db.find(p)->size() : 0;
          delta[p] = {mark[p], now};
          if (now > mark[p]) grew = true;
          mark[p] = now;
        }
        if (!grew) break;
        if (++iters > limits.max_iterations)
          throw EvalException({EvalError::Kind::LimitExceeded,
                               "LimitExceeded(max_iterations)"});
        for (auto& cr : rules) {
          for (std::size_t si = 0; si < cr.steps.size(); ++si) {
            auto* at = std::get_if<eng::AtomStep>(&cr.steps[si]);
            if (!at || !at->is_scc) continue;
            auto [dlo, dhi] = delta.at(at->pred);
            if (dlo == dhi) continue;
            run_rule(cr, (int)si, dlo, dhi);
          }
        }
      }
      res.stats.stratum_iterations[(int)s] = iters;
    }

    res.stats.stratum_seconds[(int)s] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Query output

// Deterministic ordering: ints numerically, strings lexicographically,
// entities by type then id.
inline bool value_less(const Database& db, const Value& a, const Value& b) {
  if (a.kind != b.kind) return a.kind < b.kind;
  switch (a.kind) {
    case Value::Kind::Int: return a.v < b.v;
    case Value::Kind::Str: return db.strings.str((std::int32_t)a.v) <
                                  db.strings.str((std::int32_t)b.v);
    case Value::Kind::Entity:
      if (a.type != b.type) return a.type < b.type;
      return a.v < b.v;
  }
  return false;
}

/// Tuples of a predicate in deterministic lexicographic order.
inline std::vector<std::vector<Value>> query(const Database& db, const std::string& pred) {
  const Relation* r = db.find(pred);
  if (!r)
    throw EvalException({EvalError::Kind::UnknownPredicate, "UnknownPredicate: " + pred});
  std::vector<std::vector<Value>> rows;
  rows.reserve(r->size());
  for (std::size_t i = 0; i < r->size(); ++i)
    rows.emplace_back(r->row(i), r->row(i) + r->arity());
  std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
      if (!(a[i] == b[i])) return value_less(db, a[i], b[i]);
    }
    return a.size() < b.size();
  });
  return rows;
}

/// Renders a value; entities print through their refmode value when one is
/// loaded, otherwise as #type:id.
inline std::string format_value(const Database& db, const SigTable& sigs, const Value& v) {
  switch (v.kind) {
    case Value::Kind::Int: return std::to_string(v.v);
    case Value::Kind::Str: return db.strings.str((std::int32_t)v.v);
    case Value::Kind::Entity: {
      const std::string& type = db.strings.str(v.type);
      for (auto& [name, sig] : sigs) {
        if (!sig.is_refmode || sig.refmode_entity != type) continue;
        const Relation* r = db.find(name);
        if (!r || r->key_arity() != 1) continue;
        Value key = v;
        if (const Value* row = r->lookup(&key))
          return format_value(db, sigs, row[r->arity() - 1]);
      }
      return "#" + type + ":" + std::to_string(v.v);
    }
  }
  return "?";
}

inline std::string format_row(const Database& db, const SigTable& sigs,
                              const std::vector<Value>& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ",";
    out += format_value(db, sigs, row[i]);
  }
  return out;
}

}  // namespace dlfp
