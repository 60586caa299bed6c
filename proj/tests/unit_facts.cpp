#include <catch2/catch_amalgamated.hpp>

#include <dlfp/bench.hpp>
#include <dlfp/facts.hpp>
#include <dlfp/parser.hpp>
#include <dlfp/transform.hpp>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace dlfp;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dlfp_test_" + std::to_string(::getpid()) + "_" +
            std::to_string((std::uintptr_t)this));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  void write(const std::string& name, const std::string& content) {
    std::ofstream f(path / name);
    f << content;
  }
};

}  // namespace

TEST_CASE("refmode CSV load creates entities and their values", "[facts]") {
  Program p = ts::parse_file(ts::bench_dir() + "/iamsam.dl");
  LoadReport rep;
  Database db = load_facts(ts::bench_dir() + "/digits", p, &rep);
  const Relation* digit = db.find("digit");
  const Relation* val = db.find("val");
  REQUIRE(digit);
  REQUIRE(val);
  CHECK(digit->size() == 10);
  CHECK(val->size() == 10);
  std::set<std::int64_t> values;
  for (std::size_t i = 0; i < val->size(); ++i) values.insert(val->row(i)[1].v);
  CHECK(values == std::set<std::int64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("missing fact files warn, defined relations need no files", "[facts]") {
  Program p = parse_program(
      "a(x) -> int[64](x).\n"
      "b(x) -> int[64](x).\n"
      "b(x) <- a(x).\n");
  TempDir dir;
  LoadReport rep;
  Database db = load_facts(dir.path, p, &rep);
  REQUIRE(db.find("a"));
  CHECK(db.find("a")->size() == 0);
  bool warned = false;
  for (auto& w : rep.warnings)
    if (w.find("a") != std::string::npos) warned = true;
  CHECK(warned);
  // b has a defining rule; no warning for it.
  for (auto& w : rep.warnings) CHECK(w.find("b.csv") == std::string::npos);
}

TEST_CASE("quoted CSV cells and type mismatches", "[facts]") {
  Program p = parse_program("a(x,y) -> string(x), int[64](y).\n");
  TempDir dir;
  dir.write("a.csv", "\"hello, world\",3\nplain,4\n");
  LoadReport rep;
  Database db = load_facts(dir.path, p, &rep);
  REQUIRE(db.find("a")->size() == 2);
  SigTable sigs = build_signatures(p);
  auto rows = ts::rows_text(db, sigs, "a");
  CHECK(rows[0] == "hello, world,3");

  TempDir bad;
  bad.write("a.csv", "x,notanumber\n");
  LoadReport rep2;
  CHECK_THROWS_AS(load_facts(bad.path, p, &rep2), FactsException);
}

TEST_CASE("gen manifests expand Cartesian products with stride thinning", "[facts]") {
  Program p = parse_program("p(t,w) -> string(t), int[64](w).\n");
  TempDir dir;
  dir.write("p.gen", "strings a;b\nrange 1 10\n");
  LoadReport rep;
  Database db = load_facts(dir.path, p, &rep);
  CHECK(db.find("p")->size() == 20);
  LoadReport rep2;
  Database thin = load_facts(dir.path, p, &rep2, 3);
  // stride 3 keeps 1,4,7,10 per string: 8 rows.
  CHECK(thin.find("p")->size() == 8);
}

TEST_CASE("graph generator families and determinism", "[facts]") {
  GraphGenSpec dc;
  dc.family = GraphGenSpec::Family::DisjointComplete;
  dc.n = 3;
  dc.m = 2;
  dc.seed = 5;
  auto edges = gen_graph(dc);
  CHECK(edges.size() == 12);  // two complete digraphs on 3 nodes: 2*3*2

  GraphGenSpec rb;
  rb.family = GraphGenSpec::Family::RandomBidir;
  rb.n = 10;
  rb.m = 3;
  rb.seed = 42;
  auto e1 = gen_graph(rb);
  auto e2 = gen_graph(rb);
  REQUIRE(e1.size() == e2.size());
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i].from == e2[i].from);
    CHECK(e1[i].to == e2[i].to);
    CHECK(e1[i].dist == e2[i].dist);
  }
  bool has_sydney = false;
  for (auto& e : e1)
    if (e.from == "Sydney" || e.to == "Sydney") has_sydney = true;
  CHECK(has_sydney);
  for (auto& e : e1) {
    CHECK(e.dist >= 0);
    CHECK(e.dist <= 10000);
  }

  GraphGenSpec cl;
  cl.family = GraphGenSpec::Family::Clustered;
  cl.n = 4;
  cl.m = 3;
  cl.o = 2;
  cl.seed = 7;
  auto ce = gen_graph(cl);
  CHECK_FALSE(ce.empty());
  for (auto& e : ce) CHECK(e.dist <= 15000);
}

TEST_CASE("bench harness compares variants and flags weak pruning", "[bench]") {
  Program p = ts::parse_file(ts::bench_dir() + "/iamsam.dl");
  LoadReport rep;
  Database edb = load_facts(ts::bench_dir() + "/digits", p, &rep);
  BenchConfig cfg;
  cfg.benchmark = "iamsam";
  cfg.repeat = 1;
  cfg.warmup = 0;
  TransformResult tr = transform_program(p);
  std::vector<BenchVariant> variants;
  variants.push_back({"original", p, "solution", nullptr});
  variants.push_back({"fp", tr.program, "solution", &tr});
  BenchReport r = run_bench(cfg, variants, edb);
  REQUIRE(r.rows.size() == 2);
  CHECK_FALSE(r.failed);
  CHECK(r.rows[0].answers_hash == r.rows[1].answers_hash);
  CHECK(r.rows[0].relative_pct == 100.0);
  std::ostringstream csv;
  write_bench_csv(r, csv, true);
  std::string text = csv.str();
  CHECK(text.find("benchmark,variant,median_s,relative_pct,tuples,instantiations,"
                  "answers_hash") != std::string::npos);
  CHECK(text.find("iamsam,original") != std::string::npos);
  CHECK(text.find("iamsam,fp") != std::string::npos);
}

TEST_CASE("answer hashes detect genuine differences", "[bench]") {
  Program good = parse_program(
      "a(x) -> int[64](x).\na(1).\na(2).\n"
      "q(x) -> int[64](x).\nq(x) <- a(x).\n");
  Program broken = parse_program(
      "a(x) -> int[64](x).\na(1).\na(2).\n"
      "q(x) -> int[64](x).\nq(x) <- a(x), x <= 1.\n");
  SigTable sg = build_signatures(good);
  SigTable sb = build_signatures(broken);
  EvalResult rg = evaluate(good, {});
  EvalResult rb = evaluate(broken, {});
  CHECK(answers_hash(rg.db, sg, "q") != answers_hash(rb.db, sb, "q"));
}
