#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dlfp/engine.hpp"
#include "dlfp/ir.hpp"

// Fact loading (RFC-4180 CSV, header-less) and data generation: Cartesian
// `.gen` manifests for large synthetic relations and the three random-graph
// families used by the flights benchmarks.

namespace dlfp {

class FactsException : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::int64_t parse_int_cell(const std::string& cell, const std::string& file,
                                   std::size_t row, std::size_t col) {
  std::size_t pos = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(cell, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos == 0 || pos != cell.size())
    throw FactsException("TypeMismatch(" + file + "," + std::to_string(row) + "," +
                         std::to_string(col) + "): '" + cell + "' is not an integer");
  return v;
}

// One column of a .gen manifest: an explicit list or an integer range.
struct GenColumn {
  bool is_range = false;
  std::int64_t lo = 0, hi = 0;
  std::vector<std::string> items;  // strings or ints, pre-rendered
};

}  // namespace detail

struct LoadReport {
  std::vector<std::string> warnings;
};

/// Loads `<pred>.csv` (or the Cartesian manifest `<pred>.gen`) for every
/// declared predicate that has no defining clause. Reference-mode files
/// create entities and populate the entity predicate as a side effect.
/// `stride` thins `range` columns of .gen manifests.
inline Database load_facts(const std::filesystem::path& dir, const Program& program,
                           LoadReport* report = nullptr, std::int64_t stride = 1) {
  namespace fs = std::filesystem;
  SigTable sigs = build_signatures(program);
  Database db;
  if (stride < 1) stride = 1;

  std::set<std::string> defined;
  for (auto& c : program.clauses) {
    if (auto* r = as_rule(c)) {
      if (r->kind == Rule::Kind::Declaration) continue;
      for (auto& h : r->heads) defined.insert(literal_pred(h));
    } else if (auto* a = as_agg(c)) {
      defined.insert(a->head.pred);
    }
  }

  for (auto& [name, sig] : sigs)
    db.require(name, (std::uint32_t)sig.arity(), sig.key_arity);

  auto insert_row = [&](const std::string& pred, const PredSig& sig,
                        const std::vector<std::string>& cells, const std::string& file,
                        std::size_t rowno) {
    if (cells.size() != sig.arity())
      throw FactsException("TypeMismatch(" + file + "," + std::to_string(rowno) +
                           "): expected " + std::to_string(sig.arity()) + " columns");
    std::vector<Value> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const ColType& ct = sig.cols[c];
      switch (ct.kind) {
        case ColType::Kind::Int:
          row.push_back(Value::make_int(detail::parse_int_cell(cells[c], file, rowno, c)));
          break;
        case ColType::Kind::Str:
          row.push_back(Value::make_str(db.strings.intern(cells[c])));
          break;
        case ColType::Kind::Entity:
          row.push_back(Value::make_entity(db.strings.intern(ct.entity),
                                           db.entity_id(ct.entity, cells[c])));
          break;
      }
    }
    if (db.insert(pred, row.data()) && sig.is_refmode) {
      // val(d:v) implies digit(d)
      auto eit = sigs.find(sig.refmode_entity);
      if (eit != sigs.end()) db.insert(sig.refmode_entity, row.data());
    }
  };

  auto load_csv = [&](const std::string& pred, const PredSig& sig, const fs::path& file) {
    std::ifstream in(file);
    std::string line;
    std::size_t rowno = 0;
    while (std::getline(in, line)) {
      ++rowno;
      if (line.empty() || line == "\r") continue;
      insert_row(pred, sig, detail::split_csv_row(line), file.string(), rowno);
    }
  };

  // The .gen manifest materializes a Cartesian product:
  //   strings a;b;c   -- fixed string column
  //   ints 1;5;9      -- fixed integer column
  //   range lo hi     -- integer column lo..hi, thinned by stride
  auto load_gen = [&](const std::string& pred, const PredSig& sig, const fs::path& file) {
    std::ifstream in(file);
    std::string line;
    std::vector<detail::GenColumn> cols;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string kind;
      ls >> kind;
      detail::GenColumn gc;
      if (kind == "range") {
        gc.is_range = true;
        if (!(ls >> gc.lo >> gc.hi) || gc.hi < gc.lo)
          throw FactsException("bad range in " + file.string());
      } else if (kind == "strings" || kind == "ints") {
        std::string rest;
        std::getline(ls, rest);
        std::size_t start = rest.find_first_not_of(" \t");
        if (start == std::string::npos)
          throw FactsException("empty column in " + file.string());
        std::stringstream items(rest.substr(start));
        std::string item;
        while (std::getline(items, item, ';')) gc.items.push_back(item);
      } else {
        throw FactsException("unknown .gen directive '" + kind + "' in " + file.string());
      }
      cols.push_back(std::move(gc));
    }
    if (cols.size() != sig.arity())
      throw FactsException("TypeMismatch(" + file.string() + "): manifest has " +
                           std::to_string(cols.size()) + " columns, predicate needs " +
                           std::to_string(sig.arity()));
    std::vector<std::string> cells(cols.size());
    std::size_t rowno = 0;
    auto emit = [&](auto&& self, std::size_t c) -> void {
      if (c == cols.size()) {
        insert_row(pred, sig, cells, file.string(), ++rowno);
        return;
      }
      if (cols[c].is_range) {
        for (std::int64_t v = cols[c].lo; v <= cols[c].hi; v += stride) {
          cells[c] = std::to_string(v);
          self(self, c + 1);
        }
      } else {
        for (auto& it : cols[c].items) {
          cells[c] = it;
          self(self, c + 1);
        }
      }
    };
    emit(emit, 0);
  };

  // Reference modes first: they mint the entities everything else refers to.
  for (int pass = 0; pass < 2; ++pass) {
    for (auto& [name, sig] : sigs) {
      if (sig.is_entity || defined.count(name)) continue;
      if ((pass == 0) != sig.is_refmode) continue;
      fs::path csv = dir / (name + ".csv");
      fs::path gen = dir / (name + ".gen");
      if (fs::exists(csv)) load_csv(name, sig, csv);
      else if (fs::exists(gen)) load_gen(name, sig, gen);
      else if (report)
        report->warnings.push_back("MissingFactFile(" + name + "): empty relation");
    }
  }
  return db;
}

// ---------------------------------------------------------------------------
// Random graph families for the flights benchmarks. Node 0 is "Sydney" so
// the shipped queries have a source; everything else is numbered.

struct GraphGenSpec {
  enum class Family { RandomBidir, Clustered, DisjointComplete };
  Family family = Family::RandomBidir;
  int n = 10;
  int m = 5;
  int o = 2;
  std::uint64_t seed = 1;
};

struct GraphEdge {
  std::string from, to;
  std::int64_t dist;
};

inline std::vector<GraphEdge> gen_graph(const GraphGenSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::vector<GraphEdge> edges;
  auto node = [](int i) {
    return i == 0 ? std::string("Sydney") : "city" + std::to_string(i);
  };
  auto dist = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  switch (spec.family) {
    case GraphGenSpec::Family::RandomBidir: {
      // n nodes, each with [0, n/m] bidirectional edges, distance [0,10000]
      int cap = spec.m > 0 ? spec.n / spec.m : 0;
      for (int a = 0; a < spec.n; ++a) {
        int k = pick(0, cap);
        for (int j = 0; j < k; ++j) {
          int b = pick(0, spec.n - 1);
          if (b == a) continue;
          std::int64_t d = dist(0, 10000);
          edges.push_back({node(a), node(b), d});
          edges.push_back({node(b), node(a), d});
        }
      }
      break;
    }
    case GraphGenSpec::Family::Clustered: {
      // 6 subgraphs of n nodes; intra edges [0,m] per node with distance
      // [0,7000]; each subgraph connects to [0,o] others with distance
      // [0,15000].
      const int clusters = 6;
      auto id = [&](int c, int i) { return c * spec.n + i; };
      for (int c = 0; c < clusters; ++c) {
        for (int i = 0; i < spec.n; ++i) {
          int k = pick(0, spec.m);
          for (int j = 0; j < k; ++j) {
            int b = pick(0, spec.n - 1);
            if (b == i) continue;
            std::int64_t d = dist(0, 7000);
            edges.push_back({node(id(c, i)), node(id(c, b)), d});
            edges.push_back({node(id(c, b)), node(id(c, i)), d});
          }
        }
        int k = pick(0, spec.o);
        for (int j = 0; j < k; ++j) {
          int c2 = pick(0, clusters - 1);
          if (c2 == c) continue;
          int a = pick(0, spec.n - 1), b = pick(0, spec.n - 1);
          std::int64_t d = dist(0, 15000);
          edges.push_back({node(id(c, a)), node(id(c2, b)), d});
          edges.push_back({node(id(c2, b)), node(id(c, a)), d});
        }
      }
      break;
    }
    case GraphGenSpec::Family::DisjointComplete: {
      // m complete digraphs of n nodes, no cross edges
      for (int c = 0; c < spec.m; ++c)
        for (int i = 0; i < spec.n; ++i)
          for (int j = 0; j < spec.n; ++j) {
            if (i == j) continue;
            edges.push_back({node(c * spec.n + i), node(c * spec.n + j),
                             dist(0, 10000)});
          }
      break;
    }
  }
  return edges;
}

inline void write_edge_csv(const std::vector<GraphEdge>& edges, std::ostream& out) {
  auto cell = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (auto& e : edges)
    out << cell(e.from) << "," << cell(e.to) << "," << e.dist << "\n";
}

}  // namespace dlfp
