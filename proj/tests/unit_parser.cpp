#include <catch2/catch_amalgamated.hpp>

#include <dlfp/parser.hpp>

#include <filesystem>

#include "test_support.hpp"

using namespace dlfp;

TEST_CASE("every corpus program parses and round-trips", "[parser]") {
  namespace fs = std::filesystem;
  int seen = 0;
  for (auto& ent : fs::directory_iterator(ts::bench_dir())) {
    if (ent.path().extension() != ".dl") continue;
    ++seen;
    INFO(ent.path().string());
    Program p1 = ts::parse_file(ent.path().string());
    std::string t1 = format_program(p1);
    Program p2 = parse_program(t1);
    CHECK(format_program(p2) == t1);
    CHECK(p1.clauses.size() == p2.clauses.size());
  }
  CHECK(seen >= 12);
}

TEST_CASE("declarations, facts and rules are classified", "[parser]") {
  Program p = parse_program(
      "digit(_) ->.\n"
      "digit(d), val(d:v) -> uint[8](v), v<=9.\n"
      "e(x,y,d) -> string(x), string(y), int[64](d).\n"
      "e(\"a\",\"b\",3).\n"
      "f(x,y,d) <- e(x,y,d), d >= 0.\n"
      "m[] = n <- agg<<n=min(v)>> digit(d), val(d:v).\n");
  REQUIRE(p.clauses.size() == 6);
  CHECK(as_rule(p.clauses[0])->kind == Rule::Kind::Declaration);
  CHECK(as_rule(p.clauses[1])->kind == Rule::Kind::Declaration);
  CHECK(as_rule(p.clauses[3])->kind == Rule::Kind::Fact);
  CHECK(as_rule(p.clauses[4])->kind == Rule::Kind::Derivation);
  auto* agg = as_agg(p.clauses[5]);
  REQUIRE(agg);
  CHECK(agg->method == AggRule::Method::Min);
  CHECK(agg->head.pred == "m");
  CHECK(agg->result_var == "n");
  CHECK(agg->value_var == "v");
}

TEST_CASE("refmode and functional atoms parse", "[parser]") {
  Program p = parse_program(
      "product(_) ->.\n"
      "pid(p:n) -> product(p), string(n).\n"
      "profit[p,g] = v -> product(p), uint[32](g), uint[32](v).\n"
      "q(v) <- product(p), pid(p:n), profit[p,g] = v.\n");
  auto* r = as_rule(p.clauses[3]);
  REQUIRE(r);
  REQUIRE(r->body.size() == 3);
  auto* rm = as_refmode(r->body[1]);
  REQUIRE(rm);
  CHECK(rm->pred == "pid");
  CHECK(rm->key.var == "p");
  CHECK(rm->value.var == "n");
  auto* fa = as_func(r->body[2]);
  REQUIRE(fa);
  CHECK(fa->pred == "profit");
  REQUIRE(fa->keys.size() == 2);
  CHECK(fa->value.var == "v");
}

TEST_CASE("expression precedence: * binds tighter than +", "[parser]") {
  Program p = parse_program("t(x) -> int[64](x).\nq(x) <- t(x), x*2+1 >= 3+x*4.\n");
  auto* r = as_rule(p.clauses[1]);
  auto* c = as_compare(r->body[1]);
  REQUIRE(c);
  CHECK(format_expr(c->lhs) == "x*2 + 1");
  CHECK(format_expr(c->rhs) == "3 + x*4");
}

TEST_CASE("min/max and nullary lookup expressions", "[parser]") {
  Program p = parse_program(
      "b[] = x -> int[64](x).\n"
      "t(x) -> int[64](x).\n"
      "q(x) <- t(x), x <= max(b[], 10), min(x,0) >= 0 - 5.\n");
  auto* r = as_rule(p.clauses[2]);
  auto* c1 = as_compare(r->body[1]);
  REQUIRE(c1);
  CHECK(c1->rhs->kind == Expr::Kind::Bin);
  CHECK(c1->rhs->op == ExprOp::Max);
  CHECK(c1->rhs->lhs->kind == Expr::Kind::Lookup);
  CHECK(c1->rhs->lhs->name == "b");
}

TEST_CASE("wildcards become fresh variables", "[parser]") {
  Program p = parse_program("b(x,y) -> int[64](x), int[64](y).\nq(x) <- b(x,_), b(_,x).\n");
  auto* r = as_rule(p.clauses[1]);
  auto* a1 = as_rel(r->body[0]);
  auto* a2 = as_rel(r->body[1]);
  CHECK(a1->args[1].var != a2->args[0].var);
  CHECK(a1->args[1].var.substr(0, 2) == "_g");
}

TEST_CASE("parse errors carry positions", "[parser]") {
  CHECK_THROWS_AS(parse_program("q(x) <- b(x.\n"), ParseException);
  CHECK_THROWS_AS(parse_program("q(x) <- \n"), ParseException);
  CHECK_THROWS_AS(parse_program("q(x) <- b(x), x @ 3.\n"), ParseException);
  try {
    parse_program("a(x) -> int[64](x).\nq(x <- a(x).\n");
    FAIL("expected ParseException");
  } catch (const ParseException& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("negation parses but validation rejects it", "[parser]") {
  Program p = parse_program(
      "a(x) -> int[64](x).\n"
      "q(x) -> int[64](x).\n"
      "q(x) <- a(x), !a(x).\n");
  auto diags = validate(p);
  REQUIRE_FALSE(diags.empty());
  bool mentions = false;
  for (auto& d : diags)
    if (d.message.find("negat") != std::string::npos) mentions = true;
  CHECK(mentions);
}

TEST_CASE("validate flags arity clashes and unknown predicates in strict declarations",
          "[parser]") {
  Program ok = ts::parse_file(ts::bench_dir() + "/iamsam.dl");
  CHECK(validate(ok).empty());
  Program bad = parse_program(
      "a(x) -> int[64](x).\n"
      "q(x) -> int[64](x).\n"
      "q(x) <- a(x,x).\n");
  CHECK_FALSE(validate(bad).empty());
}
