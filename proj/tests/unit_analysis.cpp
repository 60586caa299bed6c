#include <catch2/catch_amalgamated.hpp>

#include <dlfp/analysis.hpp>
#include <dlfp/parser.hpp>

#include "test_support.hpp"

using namespace dlfp;

TEST_CASE("dependency graph of transitive closure with cap", "[analysis]") {
  Program p = ts::parse_file(ts::bench_dir() + "/flights.dl");
  DepGraph g = build_dep_graph(p);
  auto has_edge = [&](const std::string& from, const std::string& to) {
    auto it = g.edges.find(from);
    if (it == g.edges.end()) return false;
    for (auto& [t, tag] : it->second)
      if (t == to) return true;
    return false;
  };
  CHECK(has_edge("f", "e"));
  CHECK(has_edge("f", "f"));
  CHECK(has_edge("query", "f"));
  CHECK_FALSE(has_edge("e", "f"));
}

TEST_CASE("facts contribute no edges", "[analysis]") {
  Program p = parse_program("a(x) -> int[64](x).\na(1).\na(2).\n");
  DepGraph g = build_dep_graph(p);
  std::size_t total = 0;
  for (auto& [from, adj] : g.edges) total += adj.size();
  CHECK(total == 0);
}

TEST_CASE("aggregate over a lower stratum stratifies", "[analysis]") {
  Program p = parse_program(
      "a(x) -> int[64](x).\n"
      "m[] = n -> int[64](n).\n"
      "m[] = n <- agg<<n=max(x)>> a(x).\n"
      "q(x) <- a(x), x <= m[].\n");
  auto res = stratify(build_dep_graph(p), &p);
  REQUIRE(std::holds_alternative<StratumPlan>(res));
  auto& plan = std::get<StratumPlan>(res);
  // m must be computed strictly before q reads it.
  std::size_t s_m = 0, s_q = 0;
  for (std::size_t i = 0; i < plan.strata.size(); ++i) {
    auto& pr = plan.strata[i].preds;
    if (std::find(pr.begin(), pr.end(), "m") != pr.end()) s_m = i;
    if (std::find(pr.begin(), pr.end(), "q") != pr.end()) s_q = i;
  }
  CHECK(s_m < s_q);
}

TEST_CASE("recursion through aggregation is rejected", "[analysis]") {
  // The ill-formed variant: the aggregate's input depends on its own output.
  Program p = parse_program(
      "s(t,w) -> string(t), int[64](w).\n"
      "e(t,w) -> string(t), int[64](w).\n"
      "ub_e[] = n -> int[64](n).\n"
      "s_filtered(t,w) -> string(t), int[64](w).\n"
      "s_filtered(t,w) <- s(t,w), w - ub_e[] <= 100, 19500 <= w + ub_e[].\n"
      "e(t,w) <- s_filtered(t,w).\n"
      "ub_e[] = n <- agg<<n=max(w)>> e(t,w).\n");
  auto res = stratify(build_dep_graph(p), &p);
  REQUIRE(std::holds_alternative<StratificationError>(res));
  auto& err = std::get<StratificationError>(res);
  CHECK(err.message.rfind("RecursionThroughAggregation", 0) == 0);
  CHECK(err.message.find("ub_e") != std::string::npos);
}

TEST_CASE("stratum order is deterministic", "[analysis]") {
  Program p = parse_program(
      "a(x) -> int[64](x).\n"
      "b(x) -> int[64](x).\n"
      "p(x) <- a(x).\n"
      "q(x) <- b(x).\n"
      "p(x) -> int[64](x).\nq(x) -> int[64](x).\n");
  auto r1 = stratify(build_dep_graph(p), &p);
  auto r2 = stratify(build_dep_graph(p), &p);
  auto names = [](const StratumPlan& sp) {
    std::vector<std::string> out;
    for (auto& s : sp.strata)
      for (auto& n : s.preds) out.push_back(n);
    return out;
  };
  CHECK(names(std::get<StratumPlan>(r1)) == names(std::get<StratumPlan>(r2)));
}

TEST_CASE("safety order moves atoms before assignments before tests", "[analysis]") {
  Program p = parse_program(
      "e(x,y,d) -> string(x), string(y), int[64](d).\n"
      "f(x,y,d) -> string(x), string(y), int[64](d).\n"
      "f(x,y,d) <- d = d1 + d2, e(x,z,d1), f(z,y,d2), d <= 10000.\n");
  auto* r = as_rule(p.clauses[2]);
  auto res = safety_order(*r);
  REQUIRE(std::holds_alternative<Rule>(res));
  auto& body = std::get<Rule>(res).body;
  REQUIRE(body.size() == 4);
  CHECK(as_rel(body[0]));
  CHECK(as_rel(body[1]));
  auto* assign = as_compare(body[2]);
  REQUIRE(assign);
  CHECK(assign->op == CmpOp::Eq);
  auto* test = as_compare(body[3]);
  REQUIRE(test);
  CHECK(test->op == CmpOp::Le);
}

TEST_CASE("safety order reports unbindable variables", "[analysis]") {
  Program p = parse_program("h(x,y) -> int[64](x), int[64](y).\nh(x,y) <- x > y.\n");
  auto res = safety_order(*as_rule(p.clauses[1]));
  REQUIRE(std::holds_alternative<SafetyError>(res));
  CHECK(std::get<SafetyError>(res).message.find("x") != std::string::npos);
}

TEST_CASE("safety order keeps an already-safe body unchanged", "[analysis]") {
  Program p = parse_program(
      "e(x,y,d) -> string(x), string(y), int[64](d).\n"
      "f(x,y,d) -> string(x), string(y), int[64](d).\n"
      "f(x,y,d) <- e(x,y,d), d >= 0.\n");
  auto* r = as_rule(p.clauses[2]);
  auto res = safety_order(*r);
  REQUIRE(std::holds_alternative<Rule>(res));
  CHECK(format_clause(std::get<Rule>(res)) == format_clause(*r));
}

TEST_CASE("generator chains through refmodes", "[analysis]") {
  Program p = parse_program(
      "ent(_) ->.\n"
      "ent2(_) ->.\n"
      "p(x) -> ent(x).\n"
      "q(y) -> ent2(y).\n"
      "val_1(x:vx) -> ent(x), int[64](vx).\n"
      "val_2(y:vy) -> ent2(y), int[64](vy).\n"
      "h(x,y) -> ent(x), ent2(y).\n"
      "h(x,y) <- p(x), val_1(x:vx), q(y), val_2(y:vy), vx > vy.\n");
  auto* r = as_rule(p.clauses[7]);
  auto chains = find_generator_chains(*r);
  REQUIRE(chains.size() == 2);
  auto find = [&](const std::string& v) -> const GeneratorChain* {
    for (auto& c : chains)
      if (c.value_var == v) return &c;
    return nullptr;
  };
  auto* cx = find("vx");
  REQUIRE(cx);
  CHECK(cx->generator.pred == "p");
  REQUIRE(cx->links.size() == 1);
  CHECK(as_refmode(cx->links[0])->pred == "val_1");
  auto* cy = find("vy");
  REQUIRE(cy);
  CHECK(cy->generator.pred == "q");
}

TEST_CASE("direct-column chain and no-compare rules", "[analysis]") {
  Program p = parse_program(
      "e(x,y,d) -> string(x), string(y), int[64](d).\n"
      "f(x,y,d) -> string(x), string(y), int[64](d).\n"
      "f(x,y,d) <- e(x,y,d), d >= 0.\n"
      "g(x,y) <- e(x,y,d).\n"
      "g(x,y) -> string(x), string(y).\n");
  auto c1 = find_generator_chains(*as_rule(p.clauses[2]));
  REQUIRE(c1.size() == 1);
  CHECK(c1[0].value_var == "d");
  CHECK(c1[0].generator.pred == "e");
  CHECK(c1[0].links.empty());
  CHECK(c1[0].bound_column == 2);
  CHECK(find_generator_chains(*as_rule(p.clauses[3])).empty());
}

TEST_CASE("multi-key functional chain", "[analysis]") {
  Program p = ts::parse_file(ts::bench_dir() + "/production.dl");
  const Rule* plan_rule = nullptr;
  for (auto& c : p.clauses) {
    auto* r = as_rule(c);
    if (r && r->kind == Rule::Kind::Derivation && literal_pred(r->heads[0]) == "plan")
      plan_rule = r;
  }
  REQUIRE(plan_rule);
  auto chains = find_generator_chains(*plan_rule);
  bool found_profit = false;
  for (auto& c : chains) {
    if (c.value_var == "v") {
      found_profit = true;
      CHECK(c.generator.pred == "product");
      REQUIRE(c.links.size() == 2);
      CHECK(as_func(c.links[0])->pred == "grade");
      CHECK(as_func(c.links[1])->pred == "profit");
    }
  }
  CHECK(found_profit);
}

TEST_CASE("chains exist for every compare variable of the corpus figures", "[analysis]") {
  for (const char* f : {"/iamsam.dl", "/engine.dl", "/flights.dl", "/cmr.dl"}) {
    Program p = ts::parse_file(ts::bench_dir() + f);
    for (auto& c : p.clauses) {
      auto* r = as_rule(c);
      if (!r || r->kind != Rule::Kind::Derivation) continue;
      auto so = safety_order(*r);
      REQUIRE(std::holds_alternative<Rule>(so));
      const Rule& rr = std::get<Rule>(so);
      auto chains = find_generator_chains(rr);
      std::set<std::string> chained;
      for (auto& ch : chains) chained.insert(ch.value_var);
      std::set<std::string> assigned;
      std::set<std::string> cmp_vars;
      for (auto& l : rr.body) {
        auto* cmp = as_compare(l);
        if (!cmp) continue;
        if (cmp->op == CmpOp::Eq && cmp->lhs->kind == Expr::Kind::Var &&
            !assigned.count(cmp->lhs->name)) {
          // A potential assignment target; it gets no chain.
          bool bound_by_atom = false;
          for (auto& l2 : rr.body) {
            std::set<std::string> tv;
            if (detail::is_atomic(l2)) literal_term_vars(l2, tv);
            if (tv.count(cmp->lhs->name)) bound_by_atom = true;
          }
          if (!bound_by_atom) {
            assigned.insert(cmp->lhs->name);
            expr_vars(cmp->rhs, cmp_vars);
            continue;
          }
        }
        expr_vars(cmp->lhs, cmp_vars);
        expr_vars(cmp->rhs, cmp_vars);
      }
      for (auto& v : cmp_vars) {
        if (assigned.count(v)) continue;
        INFO(std::string(f) + " var " + v);
        CHECK(chained.count(v) == 1);
      }
    }
  }
}
