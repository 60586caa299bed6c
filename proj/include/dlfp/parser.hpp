#pragma once

#include <cctype>
#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dlfp/ir.hpp"

// Concrete syntax: clauses terminated by '.', rules `Head <- Body.`,
// declarations `Lhs -> Rhs.`, facts `Head.`, aggregation
// `p[k]=n <- agg<<n=min(v)>> Body.`. Comments run from // to end of line.

namespace dlfp {

struct ParseError {
  SourceSpan span;
  std::string message;
  std::vector<std::string> expected;
};

class ParseException : public std::runtime_error {
 public:
  explicit ParseException(ParseError e)
      : std::runtime_error("parse error at line " + std::to_string(e.span.line) + ":" +
                           std::to_string(e.span.column) + ": " + e.message),
        error(std::move(e)) {}
  ParseError error;
};

namespace detail {

enum class Tok {
  Ident, Int, Str,
  LParen, RParen, LBracket, RBracket,
  Comma, Dot, Colon, Underscore,
  Arrow, RevArrow,            // -> <-
  LtLt, GtGt,                 // << >>
  Eq, Ne, Lt, Le, Gt, Ge,
  Plus, Minus, Star, Bang,
  End,
};

struct Token {
  Tok kind;
  std::string text;
  std::int64_t num = 0;
  SourceSpan span;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }
  Token next() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_ws();
    cur_.span = here();
    if (pos_ >= src_.size()) { cur_.kind = Tok::End; cur_.text.clear(); return; }
    char c = src_[pos_];
    auto two = [&](char a, char b) {
      return c == a && pos_ + 1 < src_.size() && src_[pos_ + 1] == b;
    };
    if (std::isalpha((unsigned char)c) || c == '_') {
      std::size_t s = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
        bump();
      cur_.text = std::string(src_.substr(s, pos_ - s));
      cur_.kind = cur_.text == "_" ? Tok::Underscore : Tok::Ident;
    } else if (std::isdigit((unsigned char)c)) {
      std::size_t s = pos_;
      while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) bump();
      cur_.text = std::string(src_.substr(s, pos_ - s));
      std::from_chars(cur_.text.data(), cur_.text.data() + cur_.text.size(), cur_.num);
      cur_.kind = Tok::Int;
    } else if (c == '"') {
      bump();
      std::string out;
      while (pos_ < src_.size() && src_[pos_] != '"') {
        if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) bump();
        out.push_back(src_[pos_]);
        bump();
      }
      if (pos_ >= src_.size()) fail("unterminated string literal");
      bump();
      cur_.kind = Tok::Str;
      cur_.text = std::move(out);
    } else if (two('<', '-')) { cur_.kind = Tok::RevArrow; bump(); bump(); }
    else if (two('-', '>')) { cur_.kind = Tok::Arrow; bump(); bump(); }
    else if (two('<', '<')) { cur_.kind = Tok::LtLt; bump(); bump(); }
    else if (two('>', '>')) { cur_.kind = Tok::GtGt; bump(); bump(); }
    else if (two('<', '=')) { cur_.kind = Tok::Le; bump(); bump(); }
    else if (two('>', '=')) { cur_.kind = Tok::Ge; bump(); bump(); }
    else if (two('!', '=')) { cur_.kind = Tok::Ne; bump(); bump(); }
    else {
      switch (c) {
        case '(': cur_.kind = Tok::LParen; break;
        case ')': cur_.kind = Tok::RParen; break;
        case '[': cur_.kind = Tok::LBracket; break;
        case ']': cur_.kind = Tok::RBracket; break;
        case ',': cur_.kind = Tok::Comma; break;
        case '.': cur_.kind = Tok::Dot; break;
        case ':': cur_.kind = Tok::Colon; break;
        case '=': cur_.kind = Tok::Eq; break;
        case '<': cur_.kind = Tok::Lt; break;
        case '>': cur_.kind = Tok::Gt; break;
        case '+': cur_.kind = Tok::Plus; break;
        case '-': cur_.kind = Tok::Minus; break;
        case '*': cur_.kind = Tok::Star; break;
        case '!': cur_.kind = Tok::Bang; break;
        default: fail(std::string("unexpected character '") + c + "'");
      }
      bump();
    }
    cur_.span.end = pos_;
  }

  void skip_ws() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace((unsigned char)src_[pos_])) bump();
      if (pos_ + 1 < src_.size() && src_[pos_] == '/' && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
        continue;
      }
      break;
    }
  }

  SourceSpan here() const { return SourceSpan{pos_, pos_, line_, col_}; }

  void bump() {
    if (src_[pos_] == '\n') { ++line_; col_ = 1; } else { ++col_; }
    ++pos_;
  }

  [[noreturn]] void fail(std::string msg) {
    throw ParseException(ParseError{here(), std::move(msg), {}});
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_{};
};

}  // namespace detail

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  Program parse() {
    Program p;
    while (lex_.peek().kind != detail::Tok::End) p.clauses.push_back(parse_clause());
    return p;
  }

 private:
  using Tok = detail::Tok;

  Clause parse_clause() {
    SourceSpan start = lex_.peek().span;
    std::vector<Literal> heads = parse_literal_list();
    Tok k = lex_.peek().kind;
    if (k == Tok::Dot) {
      lex_.next();
      Rule r;
      r.kind = Rule::Kind::Fact;
      r.heads = std::move(heads);
      r.span = start;
      return r;
    }
    if (k == Tok::Arrow) {
      lex_.next();
      Rule r;
      r.kind = Rule::Kind::Declaration;
      r.heads = std::move(heads);
      if (lex_.peek().kind != Tok::Dot) r.body = parse_literal_list();
      expect(Tok::Dot, ".");
      r.span = start;
      return r;
    }
    expect(Tok::RevArrow, "<-");
    if (lex_.peek().kind == Tok::Ident && lex_.peek().text == "agg") {
      // head <- agg<<n=min(v)>> body.
      lex_.next();
      expect(Tok::LtLt, "<<");
      AggRule a;
      if (heads.size() != 1 || !as_func(heads[0]))
        fail("aggregation head must be a single functional atom");
      a.head = *as_func(heads[0]);
      a.result_var = expect(Tok::Ident, "variable").text;
      expect(Tok::Eq, "=");
      std::string method = expect(Tok::Ident, "min or max").text;
      if (method == "min") a.method = AggRule::Method::Min;
      else if (method == "max") a.method = AggRule::Method::Max;
      else fail("unknown aggregation method '" + method + "'");
      expect(Tok::LParen, "(");
      a.value_var = expect(Tok::Ident, "variable").text;
      expect(Tok::RParen, ")");
      expect(Tok::GtGt, ">>");
      a.body = parse_literal_list();
      expect(Tok::Dot, ".");
      a.span = start;
      return a;
    }
    Rule r;
    r.heads = std::move(heads);
    r.body = parse_literal_list();
    expect(Tok::Dot, ".");
    r.span = start;
    return r;
  }

  std::vector<Literal> parse_literal_list() {
    std::vector<Literal> out;
    out.push_back(parse_literal());
    while (lex_.peek().kind == Tok::Comma) {
      lex_.next();
      out.push_back(parse_literal());
    }
    return out;
  }

  // A literal is an atom (relational, refmode, functional, type) or a
  // comparison between two arithmetic expressions.
  Literal parse_literal() {
    if (lex_.peek().kind == Tok::Bang) {
      lex_.next();
      Literal l = parse_literal();
      if (auto* r = std::get_if<RelAtom>(&l)) {
        r->negated = true;
        return l;
      }
      fail("negation applies to relational atoms only");
    }
    ExprPtr lhs;
    if (auto atom = try_parse_atom(&lhs)) return std::move(*atom);
    if (!lhs) lhs = parse_expr();
    CmpOp op;
    switch (lex_.peek().kind) {
      case Tok::Eq: op = CmpOp::Eq; break;
      case Tok::Ne: op = CmpOp::Ne; break;
      case Tok::Lt: op = CmpOp::Lt; break;
      case Tok::Le: op = CmpOp::Le; break;
      case Tok::Gt: op = CmpOp::Gt; break;
      case Tok::Ge: op = CmpOp::Ge; break;
      default: fail("expected comparison operator"); return {};
    }
    lex_.next();
    ExprPtr rhs = parse_expr();
    return Compare{op, std::move(lhs), std::move(rhs)};
  }

  // Attempts to parse an atom. On failure that produced a usable expression
  // prefix (e.g. `w - wp <= 100` or `lb_s[] - wp <= 100`), stores it in
  // *expr_out and returns nullopt so the caller finishes the comparison.
  std::optional<Literal> try_parse_atom(ExprPtr* expr_out) {
    const detail::Token& t = lex_.peek();
    if (t.kind != Tok::Ident) return std::nullopt;
    std::string name = t.text;
    if (name == "min" || name == "max") return std::nullopt;  // builtin call
    detail::Lexer save = lex_;
    lex_.next();
    if (lex_.peek().kind == Tok::LParen) {
      if (name == "string") {
        lex_.next();
        Term arg = parse_term();
        expect(Tok::RParen, ")");
        return Literal{TypeAtom{TypeAtom::Base::Str, 64, arg}};
      }
      lex_.next();
      // Refmode form p(k:v)?
      Term first = parse_term();
      if (lex_.peek().kind == Tok::Colon) {
        lex_.next();
        Term value = parse_term();
        expect(Tok::RParen, ")");
        return Literal{RefModeAtom{name, first, value}};
      }
      RelAtom a;
      a.pred = name;
      a.args.push_back(first);
      while (lex_.peek().kind == Tok::Comma) {
        lex_.next();
        a.args.push_back(parse_term());
      }
      expect(Tok::RParen, ")");
      return Literal{a};
    }
    if (lex_.peek().kind == Tok::LBracket) {
      lex_.next();
      if ((name == "int" || name == "uint") && lex_.peek().kind == Tok::Int) {
        // primitive type atom int[64](x) / uint[8](x)
        int width = (int)lex_.next().num;
        expect(Tok::RBracket, "]");
        expect(Tok::LParen, "(");
        Term arg = parse_term();
        expect(Tok::RParen, ")");
        return Literal{TypeAtom{name == "uint" ? TypeAtom::Base::UInt : TypeAtom::Base::Int,
                                width, arg}};
      }
      std::vector<ExprPtr> keys;
      if (lex_.peek().kind != Tok::RBracket) {
        keys.push_back(parse_expr());
        while (lex_.peek().kind == Tok::Comma) {
          lex_.next();
          keys.push_back(parse_expr());
        }
      }
      expect(Tok::RBracket, "]");
      if (lex_.peek().kind == Tok::Eq) {
        // p[k]=v with a simple term value is a functional atom; a complex
        // right side becomes a comparison over the lookup.
        lex_.next();
        ExprPtr rhs = parse_expr();
        bool simple = rhs->kind == Expr::Kind::Const || rhs->kind == Expr::Kind::Var;
        std::vector<Term> key_terms;
        bool keys_are_terms = true;
        for (auto& k : keys) {
          if (k->kind == Expr::Kind::Var) key_terms.push_back(Term::mk_var(k->name));
          else if (k->kind == Expr::Kind::Const) key_terms.push_back(Term::mk_int(k->value));
          else keys_are_terms = false;
        }
        if (simple && keys_are_terms) {
          Term v = rhs->kind == Expr::Kind::Var ? Term::mk_var(rhs->name)
                                                : Term::mk_int(rhs->value);
          return Literal{FuncAtom{name, std::move(key_terms), v}};
        }
        return Literal{Compare{CmpOp::Eq, expr_lookup(name, std::move(keys)), rhs}};
      }
      // Bare lookup in expression position: hand back the prefix.
      ExprPtr look = expr_lookup(name, std::move(keys));
      *expr_out = continue_expr(look);
      return std::nullopt;
    }
    // Plain identifier: variable in expression position.
    lex_ = save;
    return std::nullopt;
  }

  Term parse_term() {
    const detail::Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::Ident: return Term::mk_var(lex_.next().text);
      case Tok::Underscore: {
        lex_.next();
        return Term::mk_var("_g" + std::to_string(++anon_));
      }
      case Tok::Int: return Term::mk_int(lex_.next().num);
      case Tok::Minus: {
        lex_.next();
        auto n = expect(Tok::Int, "integer");
        return Term::mk_int(-n.num);
      }
      case Tok::Str: return Term::mk_str(lex_.next().text);
      default: fail("expected term"); return {};
    }
  }

  // Expressions: * binds tighter than + and -, all left-associative.
  ExprPtr parse_expr() { return parse_additive(parse_multiplicative(parse_primary())); }

  ExprPtr continue_expr(ExprPtr primary) {
    return parse_additive(parse_multiplicative(std::move(primary)));
  }

  ExprPtr parse_additive(ExprPtr lhs) {
    for (;;) {
      Tok k = lex_.peek().kind;
      if (k == Tok::Plus || k == Tok::Minus) {
        lex_.next();
        ExprPtr rhs = parse_multiplicative(parse_primary());
        lhs = expr_bin(k == Tok::Plus ? ExprOp::Add : ExprOp::Sub, std::move(lhs), std::move(rhs));
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_multiplicative(ExprPtr lhs) {
    while (lex_.peek().kind == Tok::Star) {
      lex_.next();
      lhs = expr_bin(ExprOp::Mul, std::move(lhs), parse_primary());
    }
    return lhs;
  }

  ExprPtr parse_primary() {
    const detail::Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::Int: return expr_const(lex_.next().num);
      case Tok::Str: return expr_str(lex_.next().text);
      case Tok::Minus: {
        lex_.next();
        ExprPtr e = parse_primary();
        if (e->kind == Expr::Kind::Const) return expr_const(-e->value);
        return expr_bin(ExprOp::Sub, expr_const(0), std::move(e));
      }
      case Tok::LParen: {
        lex_.next();
        ExprPtr e = parse_expr();
        expect(Tok::RParen, ")");
        return e;
      }
      case Tok::Ident: {
        std::string name = lex_.next().text;
        if ((name == "min" || name == "max") && lex_.peek().kind == Tok::LParen) {
          lex_.next();
          ExprPtr a = parse_expr();
          expect(Tok::Comma, ",");
          ExprPtr b = parse_expr();
          expect(Tok::RParen, ")");
          return expr_bin(name == "min" ? ExprOp::Min : ExprOp::Max, std::move(a), std::move(b));
        }
        if (lex_.peek().kind == Tok::LBracket) {
          lex_.next();
          std::vector<ExprPtr> keys;
          if (lex_.peek().kind != Tok::RBracket) {
            keys.push_back(parse_expr());
            while (lex_.peek().kind == Tok::Comma) {
              lex_.next();
              keys.push_back(parse_expr());
            }
          }
          expect(Tok::RBracket, "]");
          return expr_lookup(name, std::move(keys));
        }
        return expr_var(name);
      }
      default:
        fail("expected expression");
        return {};
    }
  }

  detail::Token expect(Tok k, const char* what) {
    if (lex_.peek().kind != k)
      throw ParseException(ParseError{lex_.peek().span,
                                      std::string("expected ") + what, {what}});
    return lex_.next();
  }

  [[noreturn]] void fail(std::string msg) {
    throw ParseException(ParseError{lex_.peek().span, std::move(msg), {}});
  }

  detail::Lexer lex_;
  int anon_ = 0;
};

/// Parses a whole program. Throws ParseException on the first error.
inline Program parse_program(std::string_view text) { return Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Pretty printing. parse_program(format_program(p)) is structurally equal
// to p for every well-formed program.

namespace detail {

inline int expr_prec(const Expr& e) {
  if (e.kind != Expr::Kind::Bin) return 3;
  switch (e.op) {
    case ExprOp::Mul: return 2;
    case ExprOp::Add:
    case ExprOp::Sub: return 1;
    default: return 3;  // min/max render as calls
  }
}

inline void print_expr(std::ostream& os, const ExprPtr& e, int parent_prec = 0,
                       bool right_side = false) {
  switch (e->kind) {
    case Expr::Kind::Const: os << e->value; return;
    case Expr::Kind::StrConst: os << '"' << e->name << '"'; return;
    case Expr::Kind::Var: os << e->name; return;
    case Expr::Kind::Lookup: {
      os << e->name << '[';
      for (std::size_t i = 0; i < e->keys.size(); ++i) {
        if (i) os << ',';
        print_expr(os, e->keys[i]);
      }
      os << ']';
      return;
    }
    case Expr::Kind::Bin: {
      if (e->op == ExprOp::Min || e->op == ExprOp::Max) {
        os << (e->op == ExprOp::Min ? "min(" : "max(");
        print_expr(os, e->lhs);
        os << ',';
        print_expr(os, e->rhs);
        os << ')';
        return;
      }
      int prec = expr_prec(*e);
      bool need = prec < parent_prec || (prec == parent_prec && right_side);
      if (need) os << '(';
      const char* op = e->op == ExprOp::Add ? " + " : e->op == ExprOp::Sub ? " - " : "*";
      print_expr(os, e->lhs, prec, false);
      os << op;
      // - is not associative; parenthesize same-precedence right children
      print_expr(os, e->rhs, prec, true);
      if (need) os << ')';
      return;
    }
  }
}

inline void print_term(std::ostream& os, const Term& t) {
  if (t.is_var) { os << t.var; return; }
  switch (t.value.kind) {
    case Constant::Kind::Int: os << t.value.num; break;
    case Constant::Kind::Str: os << '"' << t.value.text << '"'; break;
    case Constant::Kind::Entity: os << '#' << t.value.text << ':' << t.value.num; break;
  }
}

inline const char* cmp_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return " = ";
    case CmpOp::Ne: return " != ";
    case CmpOp::Lt: return " < ";
    case CmpOp::Le: return " <= ";
    case CmpOp::Gt: return " > ";
    case CmpOp::Ge: return " >= ";
  }
  return "?";
}

inline void print_literal(std::ostream& os, const Literal& l) {
  if (auto* a = as_rel(l)) {
    if (a->negated) os << '!';
    os << a->pred << '(';
    for (std::size_t i = 0; i < a->args.size(); ++i) {
      if (i) os << ',';
      print_term(os, a->args[i]);
    }
    os << ')';
  } else if (auto* r = as_refmode(l)) {
    os << r->pred << '(';
    print_term(os, r->key);
    os << ':';
    print_term(os, r->value);
    os << ')';
  } else if (auto* f = as_func(l)) {
    os << f->pred << '[';
    for (std::size_t i = 0; i < f->keys.size(); ++i) {
      if (i) os << ',';
      print_term(os, f->keys[i]);
    }
    os << "]=";
    print_term(os, f->value);
  } else if (auto* c = as_compare(l)) {
    print_expr(os, c->lhs);
    os << cmp_text(c->op);
    print_expr(os, c->rhs);
  } else if (auto* t = as_type(l)) {
    switch (t->base) {
      case TypeAtom::Base::Int: os << "int[" << t->width << "]("; break;
      case TypeAtom::Base::UInt: os << "uint[" << t->width << "]("; break;
      case TypeAtom::Base::Str: os << "string("; break;
    }
    print_term(os, t->arg);
    os << ')';
  }
}

inline void print_literals(std::ostream& os, const std::vector<Literal>& ls) {
  for (std::size_t i = 0; i < ls.size(); ++i) {
    if (i) os << ", ";
    print_literal(os, ls[i]);
  }
}

}  // namespace detail

inline std::string format_literal(const Literal& l) {
  std::ostringstream os;
  detail::print_literal(os, l);
  return os.str();
}

inline std::string format_expr(const ExprPtr& e) {
  std::ostringstream os;
  detail::print_expr(os, e);
  return os.str();
}

inline std::string format_clause(const Clause& c) {
  std::ostringstream os;
  if (auto* r = as_rule(c)) {
    detail::print_literals(os, r->heads);
    switch (r->kind) {
      case Rule::Kind::Fact: os << '.'; break;
      case Rule::Kind::Declaration:
        os << " ->";
        if (!r->body.empty()) {
          os << ' ';
          detail::print_literals(os, r->body);
        }
        os << '.';
        break;
      case Rule::Kind::Derivation:
        os << " <- ";
        detail::print_literals(os, r->body);
        os << '.';
        break;
    }
  } else if (auto* a = as_agg(c)) {
    detail::print_literal(os, Literal{a->head});
    os << " <- agg<<" << a->result_var << '='
       << (a->method == AggRule::Method::Min ? "min" : "max") << '(' << a->value_var << ")>> ";
    detail::print_literals(os, a->body);
    os << '.';
  }
  return os.str();
}

inline std::string format_program(const Program& p) {
  std::string out;
  for (auto& c : p.clauses) {
    out += format_clause(c);
    out += '\n';
  }
  return out;
}

}  // namespace dlfp
