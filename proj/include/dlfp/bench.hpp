#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dlfp/engine.hpp"
#include "dlfp/transform.hpp"

// Benchmark harness: times evaluate() per program variant, checks the
// variants agree on the answer set, and reports pruning effectiveness of the
// emitted filters.

namespace dlfp {

struct BenchVariant {
  std::string name;     // original | fp | cmr | cmr+fp
  Program program;
  std::string query_pred;
  const TransformResult* transform = nullptr;  // when this variant is filtered
};

struct BenchConfig {
  std::string benchmark;
  int repeat = 3;
  int warmup = 1;
  EvalLimits limits;
};

struct BenchRow {
  std::string variant;
  double median_s = 0;
  double min_s = 0;
  double relative_pct = 100.0;
  std::uint64_t tuples = 0;
  std::uint64_t instantiations = 0;
  std::uint64_t answers_hash = 0;
};

struct BenchReport {
  std::string benchmark;
  std::vector<BenchRow> rows;
  bool failed = false;        // variants disagree on the answer set
  bool low_pruning = false;   // filtered/original domain ratio > 0.9
  double domain_ratio = 1.0;  // min over (filter size / generator size)
};

/// Order- and interner-independent hash of a predicate's tuple set.
inline std::uint64_t answers_hash(const Database& db, const SigTable& sigs,
                                  const std::string& pred) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto& row : query(db, pred)) {
    std::string text = format_row(db, sigs, row);
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0x1f;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline BenchReport run_bench(const BenchConfig& cfg,
                             const std::vector<BenchVariant>& variants,
                             const Database& edb) {
  BenchReport report;
  report.benchmark = cfg.benchmark;
  int repeat = std::max(cfg.repeat, 1);

  for (auto& var : variants) {
    SigTable sigs = build_signatures(var.program);
    for (int w = 0; w < cfg.warmup; ++w) evaluate(var.program, edb, cfg.limits);

    std::vector<double> times;
    BenchRow row;
    row.variant = var.name;
    EvalResult last;
    for (int r = 0; r < repeat; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      last = evaluate(var.program, edb, cfg.limits);
      times.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    row.median_s = times[times.size() / 2];
    row.min_s = times.front();
    row.tuples = last.stats.total_derived();
    row.instantiations = last.stats.total_instantiations();
    row.answers_hash = answers_hash(last.db, sigs, var.query_pred);
    report.rows.push_back(row);

    // Pruning effectiveness of this variant's filters.
    if (var.transform) {
      for (auto& f : var.transform->filters) {
        const Relation* filt = last.db.find(f.name);
        const Relation* gen = last.db.find(f.chain.generator.pred);
        if (!filt || !gen || gen->size() == 0) continue;
        double ratio = (double)filt->size() / (double)gen->size();
        report.domain_ratio = std::min(report.domain_ratio, ratio);
      }
    }
  }

  for (std::size_t i = 1; i < report.rows.size(); ++i)
    if (report.rows[i].answers_hash != report.rows[0].answers_hash) report.failed = true;
  if (!report.rows.empty() && report.rows[0].median_s > 0)
    for (auto& r : report.rows)
      r.relative_pct = 100.0 * r.median_s / report.rows[0].median_s;
  report.low_pruning = report.domain_ratio > 0.9;
  return report;
}

inline void write_bench_csv(const BenchReport& r, std::ostream& out,
                            bool header = false) {
  if (header)
    out << "benchmark,variant,median_s,relative_pct,tuples,instantiations,answers_hash\n";
  for (auto& row : r.rows)
    out << r.benchmark << "," << row.variant << "," << row.median_s << ","
        << row.relative_pct << "," << row.tuples << "," << row.instantiations << ","
        << row.answers_hash << "\n";
}

}  // namespace dlfp
