// Command-line driver: run, transform, diff, bench, gen-graph, deps.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dlfp/bench.hpp"
#include "dlfp/engine.hpp"
#include "dlfp/facts.hpp"
#include "dlfp/parser.hpp"
#include "dlfp/transform.hpp"

using namespace dlfp;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 0 = parsed and validated; 1 = problems printed
int load_program(const std::string& path, Program* out) {
  try {
    *out = parse_program(read_file(path));
  } catch (const ParseException& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  std::vector<Diagnostic> diags = validate(*out);
  if (!diags.empty()) {
    for (auto& d : diags) std::cerr << path << ": " << d.message << "\n";
    return 1;
  }
  auto strat = stratify(build_dep_graph(*out), out);
  if (auto* err = std::get_if<StratificationError>(&strat)) {
    std::cerr << path << ": " << err->message << "\n";
    return 1;
  }
  return 0;
}

Database load_edb(const std::string& facts, const Program& prog, std::int64_t stride) {
  LoadReport rep;
  Database db = facts.empty() ? Database{}
                              : load_facts(facts, prog, &rep, stride);
  for (auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  return db;
}

std::ostream& out_stream(const std::string& out_path, std::ofstream& file) {
  if (out_path.empty()) return std::cout;
  file.open(out_path);
  if (!file) throw std::runtime_error("cannot open " + out_path);
  return file;
}

std::set<std::string> original_idb_preds(const Program& prog) {
  std::set<std::string> preds;
  for (auto& c : prog.clauses) {
    if (auto* r = as_rule(c)) {
      if (r->kind == Rule::Kind::Declaration) continue;
      for (auto& h : r->heads) preds.insert(literal_pred(h));
    } else if (auto* a = as_agg(c)) {
      preds.insert(a->head.pred);
    }
  }
  return preds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Datalog engine with the filter-predicates optimization"};
  app.require_subcommand(1);

  std::string program_path, facts, query_pred, out_path, name;
  bool do_transform = false;
  std::uint64_t max_iterations = 1'000'000, max_tuples = 100'000'000;
  std::int64_t stride = 1;
  std::uint64_t seed = 1;

  auto add_common = [&](CLI::App* cmd, bool needs_program = true) {
    if (needs_program) cmd->add_option("program", program_path, "program file")->required();
    cmd->add_option("--facts", facts, "fact directory");
    cmd->add_option("--max-iterations", max_iterations, "per-stratum iteration cap");
    cmd->add_option("--max-tuples", max_tuples, "database tuple cap");
    cmd->add_option("--stride", stride, "thinning stride for .gen ranges");
    cmd->add_option("--out", out_path, "output file (default stdout)");
  };

  auto* run = app.add_subcommand("run", "evaluate a program and print a query");
  add_common(run);
  run->add_option("--query", query_pred, "predicate to print")->required();
  run->add_flag("--transform", do_transform, "apply the filter transformation first");

  auto* tf = app.add_subcommand("transform", "print the transformed program");
  add_common(tf);

  auto* diff = app.add_subcommand("diff", "compare original vs transformed answers");
  add_common(diff);
  std::vector<std::string> diff_preds;
  diff->add_option("--preds", diff_preds, "predicates to compare (default: all IDB)");

  auto* bench = app.add_subcommand("bench", "time original and transformed variants");
  add_common(bench);
  bench->add_option("--name", name, "benchmark name for the report");
  bench->add_option("--query", query_pred, "answer predicate")->required();
  std::string cmr_path, cmr_query;
  int repeat = 3, warmup = 1;
  bench->add_option("--cmr", cmr_path, "constraint-magic-rewritten variant program");
  bench->add_option("--cmr-query", cmr_query, "answer predicate of the CMR variant");
  bench->add_option("--repeat", repeat, "timed repetitions");
  bench->add_option("--warmup", warmup, "warmup runs");

  auto* gg = app.add_subcommand("gen-graph", "emit a random edge CSV");
  std::string family = "random-bidir";
  int gn = 10, gm = 5, go = 2;
  gg->add_option("--family", family, "random-bidir | clustered | disjoint-complete");
  gg->add_option("--n", gn, "nodes (per cluster for clustered/disjoint)");
  gg->add_option("--m", gm, "family parameter m");
  gg->add_option("--o", go, "family parameter o");
  gg->add_option("--seed", seed, "RNG seed");
  gg->add_option("--out", out_path, "output file (default stdout)");

  auto* deps = app.add_subcommand("deps", "print the dependency graph as DOT");
  deps->add_option("program", program_path, "program file")->required();
  deps->add_option("--out", out_path, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    std::ofstream out_file;

    if (gg->parsed()) {
      GraphGenSpec spec;
      if (family == "random-bidir") spec.family = GraphGenSpec::Family::RandomBidir;
      else if (family == "clustered") spec.family = GraphGenSpec::Family::Clustered;
      else if (family == "disjoint-complete")
        spec.family = GraphGenSpec::Family::DisjointComplete;
      else {
        std::cerr << "unknown family: " << family << "\n";
        return 1;
      }
      spec.n = gn;
      spec.m = gm;
      spec.o = go;
      spec.seed = seed;
      write_edge_csv(gen_graph(spec), out_stream(out_path, out_file));
      return 0;
    }

    Program prog;
    if (int rc = load_program(program_path, &prog)) return rc;
    EvalLimits limits{max_iterations, max_tuples};

    if (deps->parsed()) {
      DepGraph g = build_dep_graph(prog);
      auto& out = out_stream(out_path, out_file);
      out << "digraph deps {\n";
      for (auto& [from, edges] : g.edges)
        for (auto& [to, tag] : edges)
          out << "  \"" << from << "\" -> \"" << to << "\""
              << (tag == EdgeTag::Aggregate ? " [label=\"agg\",style=dashed]" : "")
              << ";\n";
      out << "}\n";
      return 0;
    }

    if (tf->parsed()) {
      TransformResult tr = transform_program(prog);
      out_stream(out_path, out_file) << format_program(tr.program);
      return 0;
    }

    if (run->parsed()) {
      Program to_run = prog;
      if (do_transform) to_run = transform_program(prog).program;
      Database edb = load_edb(facts, prog, stride);
      EvalResult res = evaluate(to_run, edb, limits);
      SigTable sigs = build_signatures(to_run);
      auto& out = out_stream(out_path, out_file);
      for (auto& row : query(res.db, query_pred)) out << format_row(res.db, sigs, row) << "\n";
      return 0;
    }

    if (diff->parsed()) {
      TransformResult tr = transform_program(prog);
      Database edb = load_edb(facts, prog, stride);
      if (!tr.changed) std::cout << "identical programs\n";
      EvalResult orig = evaluate(prog, edb, limits);
      EvalResult trans = evaluate(tr.program, edb, limits);
      SigTable sigs = build_signatures(prog);
      std::set<std::string> preds(diff_preds.begin(), diff_preds.end());
      if (preds.empty()) preds = original_idb_preds(prog);
      bool equal = true;
      for (auto& p : preds) {
        auto a = query(orig.db, p);
        auto b = query(trans.db, p);
        std::set<std::string> sa, sb;
        for (auto& r : a) sa.insert(format_row(orig.db, sigs, r));
        for (auto& r : b) sb.insert(format_row(trans.db, sigs, r));
        for (auto& r : sa)
          if (!sb.count(r)) {
            std::cout << p << " missing after transform: " << r << "\n";
            equal = false;
          }
        for (auto& r : sb)
          if (!sa.count(r)) {
            std::cout << p << " extra after transform: " << r << "\n";
            equal = false;
          }
      }
      std::cout << (equal ? "equal" : "different") << "\n";
      return equal ? 0 : 1;
    }

    if (bench->parsed()) {
      BenchConfig cfg;
      cfg.benchmark = name.empty() ? program_path : name;
      cfg.repeat = repeat;
      cfg.warmup = warmup;
      cfg.limits = limits;

      std::vector<BenchVariant> variants;
      variants.push_back({"original", prog, query_pred, nullptr});
      TransformResult fp = transform_program(prog);
      if (fp.changed) variants.push_back({"fp", fp.program, query_pred, &fp});

      Program cmr;
      TransformResult cmr_fp;
      if (!cmr_path.empty()) {
        if (int rc = load_program(cmr_path, &cmr)) return rc;
        std::string q = cmr_query.empty() ? query_pred : cmr_query;
        variants.push_back({"cmr", cmr, q, nullptr});
        cmr_fp = transform_program(cmr);
        if (cmr_fp.changed) variants.push_back({"cmr+fp", cmr_fp.program, q, &cmr_fp});
      }

      Database edb = load_edb(facts, prog, stride);
      BenchReport rep = run_bench(cfg, variants, edb);
      write_bench_csv(rep, out_stream(out_path, out_file), /*header=*/true);
      if (rep.low_pruning) std::cerr << "note: low pruning (domain ratio "
                                     << rep.domain_ratio << ")\n";
      if (rep.failed) {
        std::cerr << "FAILED: variants disagree on the answer set\n";
        return 1;
      }
      return 0;
    }
  } catch (const TransformException& e) {
    std::cerr << e.what() << "\n";
    for (auto& d : e.diagnostics) std::cerr << "  " << d.message << "\n";
    return 1;
  } catch (const EvalException& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const FactsException& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
