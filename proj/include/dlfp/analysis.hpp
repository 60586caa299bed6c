#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dlfp/ir.hpp"

// Predicate dependency graph, SCC condensation with aggregate placement,
// rule safety ordering, and generator-chain reconstruction.

namespace dlfp {

// ---------------------------------------------------------------------------
// Dependency graph

enum class EdgeTag { Positive, Aggregate };

struct DepGraph {
  // adjacency: head predicate -> (body predicate, tag); deterministic order
  std::map<std::string, std::vector<std::pair<std::string, EdgeTag>>> edges;
  std::set<std::string> nodes;

  void add_node(const std::string& p) { nodes.insert(p); edges.try_emplace(p); }
  void add_edge(const std::string& from, const std::string& to, EdgeTag tag) {
    add_node(from);
    add_node(to);
    auto& adj = edges[from];
    auto e = std::make_pair(to, tag);
    if (std::find(adj.begin(), adj.end(), e) == adj.end()) adj.push_back(e);
  }
};

/// Edges run from a rule head to every predicate read by its body. Reads of
/// aggregate results (agg-rule bodies and p[] lookups inside expressions,
/// including nullary functional body atoms) carry the Aggregate tag.
inline DepGraph build_dep_graph(const Program& p) {
  DepGraph g;
  auto body_edges = [&](const std::string& head, const std::vector<Literal>& body,
                        EdgeTag atom_tag) {
    for (auto& l : body) {
      if (auto* c = as_compare(l)) {
        std::set<std::string> lk;
        expr_lookups(c->lhs, lk);
        expr_lookups(c->rhs, lk);
        for (auto& q : lk) g.add_edge(head, q, EdgeTag::Aggregate);
      } else if (auto* f = as_func(l)) {
        // nullary-key functional body atoms read a completed singleton
        g.add_edge(head, f->pred,
                   f->keys.empty() ? EdgeTag::Aggregate : atom_tag);
      } else if (!as_type(l)) {
        std::string q = literal_pred(l);
        if (!q.empty()) g.add_edge(head, q, atom_tag);
      }
    }
  };
  for (auto& c : p.clauses) {
    if (auto* r = as_rule(c)) {
      if (r->kind == Rule::Kind::Declaration) continue;
      for (auto& h : r->heads) {
        std::string head = literal_pred(h);
        if (head.empty()) continue;
        g.add_node(head);
        if (r->kind == Rule::Kind::Derivation)
          body_edges(head, r->body, EdgeTag::Positive);
      }
    } else if (auto* a = as_agg(c)) {
      g.add_node(a->head.pred);
      body_edges(a->head.pred, a->body, EdgeTag::Aggregate);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Stratification

struct Stratum {
  std::vector<std::string> preds;      // sorted
  std::vector<std::size_t> clause_ids; // defining rules/agg-rules, program order
  bool recursive = false;
};

struct StratumPlan {
  std::vector<Stratum> strata;
  std::map<std::string, int> stratum_of;
};

struct StratificationError {
  std::vector<std::string> cycle;  // predicates of the offending SCC
  std::string message;
};

namespace detail {

// Tarjan SCC; SCCs come out in reverse topological order.
struct SccFinder {
  const DepGraph& g;
  std::map<std::string, int> index, low;
  std::set<std::string> on_stack;
  std::vector<std::string> stack;
  std::vector<std::vector<std::string>> sccs;
  int counter = 0;

  explicit SccFinder(const DepGraph& g) : g(g) {
    for (auto& n : g.nodes)
      if (!index.count(n)) visit(n);
  }

  void visit(const std::string& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    auto it = g.edges.find(v);
    if (it != g.edges.end()) {
      for (auto& [w, tag] : it->second) {
        if (!index.count(w)) {
          visit(w);
          low[v] = std::min(low[v], low[w]);
        } else if (on_stack.count(w)) {
          low[v] = std::min(low[v], index[w]);
        }
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> scc;
      for (;;) {
        std::string w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        scc.push_back(w);
        if (w == v) break;
      }
      std::sort(scc.begin(), scc.end());
      sccs.push_back(std::move(scc));
    }
  }
};

}  // namespace detail

/// Topologically ordered SCC condensation. Errors iff some SCC contains an
/// aggregate-tagged edge: recursion through aggregation.
inline std::variant<StratumPlan, StratificationError> stratify(const DepGraph& g,
                                                               const Program* prog = nullptr) {
  detail::SccFinder f(g);
  std::map<std::string, int> scc_of;
  for (std::size_t i = 0; i < f.sccs.size(); ++i)
    for (auto& p : f.sccs[i]) scc_of[p] = (int)i;

  // Detect aggregate edges inside an SCC.
  for (auto& [from, adj] : g.edges) {
    for (auto& [to, tag] : adj) {
      if (scc_of.at(from) != scc_of.at(to)) continue;
      const auto& scc = f.sccs[scc_of.at(from)];
      bool cyclic = scc.size() > 1 || from == to;
      if (cyclic && tag == EdgeTag::Aggregate) {
        StratificationError err;
        err.cycle = scc;
        err.message = "RecursionThroughAggregation: cycle through";
        for (auto& p : scc) err.message += " " + p;
        return err;
      }
    }
  }

  // Order the condensation: Kahn's algorithm, ties broken by the smallest
  // predicate name of the SCC, for deterministic output.
  std::size_t n = f.sccs.size();
  std::vector<int> indeg(n, 0);
  std::vector<std::set<int>> succ(n);
  for (auto& [from, adj] : g.edges)
    for (auto& [to, tag] : adj) {
      int a = scc_of.at(from), b = scc_of.at(to);
      if (a != b && succ[b].insert(a).second) indeg[a]++;  // b before a
    }
  auto name_of = [&](int i) { return f.sccs[i].front(); };
  std::set<std::pair<std::string, int>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.insert({name_of((int)i), (int)i});

  StratumPlan plan;
  while (!ready.empty()) {
    int i = ready.begin()->second;
    ready.erase(ready.begin());
    Stratum s;
    s.preds = f.sccs[i];
    // self-loop or multi-predicate SCC means recursive
    s.recursive = s.preds.size() > 1;
    if (!s.recursive) {
      auto it = g.edges.find(s.preds[0]);
      if (it != g.edges.end())
        for (auto& [to, tag] : it->second)
          if (to == s.preds[0]) s.recursive = true;
    }
    for (auto& p : s.preds) plan.stratum_of[p] = (int)plan.strata.size();
    plan.strata.push_back(std::move(s));
    for (int nx : succ[i])
      if (--indeg[nx] == 0) ready.insert({name_of(nx), nx});
  }

  if (prog) {
    for (std::size_t ci = 0; ci < prog->clauses.size(); ++ci) {
      const Clause& c = prog->clauses[ci];
      int target = -1;
      if (auto* r = as_rule(c)) {
        if (r->kind == Rule::Kind::Declaration) continue;
        for (auto& h : r->heads) {
          auto it = plan.stratum_of.find(literal_pred(h));
          if (it != plan.stratum_of.end()) target = std::max(target, it->second);
        }
      } else if (auto* a = as_agg(c)) {
        auto it = plan.stratum_of.find(a->head.pred);
        if (it != plan.stratum_of.end()) target = it->second;
      }
      if (target >= 0) plan.strata[target].clause_ids.push_back(ci);
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Safety ordering

struct SafetyError {
  std::string var;  // first variable that cannot be bound
  std::string message;
};

namespace detail {

inline bool is_atomic(const Literal& l) {
  return as_rel(l) || as_refmode(l) || as_func(l);
}

// A compare is evaluable when all variables are bound, or is an assignment
// when it is an equality with exactly one side a single unbound variable.
inline bool compare_ready(const Compare& c, const std::set<std::string>& bound,
                          std::string* assigns) {
  std::set<std::string> lv, rv;
  expr_vars(c.lhs, lv);
  expr_vars(c.rhs, rv);
  auto all_bound = [&](const std::set<std::string>& vs) {
    for (auto& v : vs)
      if (!bound.count(v)) return false;
    return true;
  };
  bool lb = all_bound(lv), rb = all_bound(rv);
  if (lb && rb) { assigns->clear(); return true; }
  if (c.op == CmpOp::Eq) {
    if (!lb && rb && c.lhs->kind == Expr::Kind::Var) { *assigns = c.lhs->name; return true; }
    if (lb && !rb && c.rhs->kind == Expr::Kind::Var) { *assigns = c.rhs->name; return true; }
  }
  return false;
}

}  // namespace detail

/// Reorders a rule body so every comparison and assignment sees only bound
/// variables, placing tests as early as possible. Stable among equally
/// eligible literals.
inline std::variant<Rule, SafetyError> safety_order(const Rule& rule) {
  Rule out = rule;
  std::vector<Literal> pending = rule.body;
  out.body.clear();
  std::set<std::string> bound;

  while (!pending.empty()) {
    bool placed = false;
    // Tests and assignments first, in original order.
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (auto* c = as_compare(pending[i])) {
        std::string assigns;
        if (detail::compare_ready(*c, bound, &assigns)) {
          if (!assigns.empty()) bound.insert(assigns);
          out.body.push_back(pending[i]);
          pending.erase(pending.begin() + i);
          placed = true;
          break;
        }
      }
    }
    if (placed) continue;
    // Then the first relational generator.
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (detail::is_atomic(pending[i])) {
        literal_term_vars(pending[i], bound);
        out.body.push_back(pending[i]);
        pending.erase(pending.begin() + i);
        placed = true;
        break;
      }
    }
    if (!placed) {
      // Remaining literals are comparisons over unbindable variables.
      std::set<std::string> vars;
      for (auto& l : pending) literal_term_vars(l, vars);
      for (auto& v : vars)
        if (!bound.count(v))
          return SafetyError{v, "SafetyError: variable '" + v + "' cannot be bound"};
      return SafetyError{"", "SafetyError: unorderable body"};
    }
  }

  // Every head variable must be bound by the body.
  std::set<std::string> head_vars;
  for (auto& h : out.heads) literal_term_vars(h, head_vars);
  for (auto& v : head_vars)
    if (!bound.count(v))
      return SafetyError{v, "SafetyError: head variable '" + v + "' unbound"};
  return out;
}

// ---------------------------------------------------------------------------
// Generator chains

struct GeneratorChain {
  std::string value_var;
  RelAtom generator;
  std::size_t generator_body_index = 0;
  std::vector<Literal> links;  // RefModeAtom / FuncAtom, body order
  std::size_t bound_column = 0;  // column of value_var in the terminal atom
};

/// One chain per (body relational atom, value variable) pair where the
/// variable occurs in at least one comparison of the rule and is reachable
/// from the atom through functional links. Variables reachable only through
/// non-functional joins yield no chain.
inline std::vector<GeneratorChain> find_generator_chains(const Rule& rule) {
  std::vector<GeneratorChain> chains;

  std::set<std::string> cmp_vars;
  for (auto& l : rule.body)
    if (auto* c = as_compare(l)) {
      expr_vars(c->lhs, cmp_vars);
      expr_vars(c->rhs, cmp_vars);
    }

  // Variables assigned by equalities are derived, not generated.
  std::set<std::string> generated;
  for (auto& l : rule.body)
    if (detail::is_atomic(l)) literal_term_vars(l, generated);

  for (std::size_t gi = 0; gi < rule.body.size(); ++gi) {
    auto* gen = as_rel(rule.body[gi]);
    if (!gen || gen->negated) continue;

    std::set<std::string> bound;
    std::map<std::string, std::size_t> bound_by;  // var -> link body index
    for (auto& t : gen->args)
      if (t.is_var) bound.insert(t.var);

    // Saturate functional links whose keys are already reachable.
    std::set<std::size_t> used;
    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t li = 0; li < rule.body.size(); ++li) {
        if (li == gi || used.count(li)) continue;
        const Literal& l = rule.body[li];
        std::vector<Term> keys;
        Term value;
        if (auto* rm = as_refmode(l)) { keys = {rm->key}; value = rm->value; }
        else if (auto* f = as_func(l)) { keys = f->keys; value = f->value; }
        else continue;
        bool ready = !keys.empty();
        for (auto& k : keys)
          if (k.is_var && !bound.count(k.var)) ready = false;
        if (!ready) continue;
        used.insert(li);
        grew = true;
        if (value.is_var && !bound.count(value.var)) {
          bound.insert(value.var);
          bound_by[value.var] = li;
        }
      }
    }

    // Emit a chain for each comparison variable reachable from this atom.
    for (auto& v : cmp_vars) {
      if (!bound.count(v) || !generated.count(v)) continue;
      GeneratorChain ch;
      ch.value_var = v;
      ch.generator = *gen;
      ch.generator_body_index = gi;
      // Direct column of the generator?
      auto direct = std::find_if(gen->args.begin(), gen->args.end(),
                                 [&](const Term& t) { return t.is_var && t.var == v; });
      if (direct != gen->args.end()) {
        ch.bound_column = (std::size_t)(direct - gen->args.begin());
        chains.push_back(std::move(ch));
        continue;
      }
      // Minimal set of links needed to reach v, ordered by body position.
      std::set<std::size_t> needed;
      bool ok = true;
      std::vector<std::string> work{v};
      while (!work.empty() && ok) {
        std::string w = work.back();
        work.pop_back();
        auto it = bound_by.find(w);
        if (it == bound_by.end()) continue;  // bound by generator directly
        if (!needed.insert(it->second).second) continue;
        const Literal& l = rule.body[it->second];
        if (auto* rm = as_refmode(l)) {
          if (rm->key.is_var) work.push_back(rm->key.var);
        } else if (auto* f = as_func(l)) {
          for (auto& k : f->keys)
            if (k.is_var) work.push_back(k.var);
        }
      }
      if (!ok || needed.empty()) continue;
      for (auto li : needed) ch.links.push_back(rule.body[li]);
      // The link binding v holds the value column.
      const Literal& terminal = rule.body[bound_by.at(v)];
      if (as_refmode(terminal)) ch.bound_column = 1;
      else if (auto* f = as_func(terminal)) ch.bound_column = f->keys.size();
      chains.push_back(std::move(ch));
    }
  }
  return chains;
}

}  // namespace dlfp
