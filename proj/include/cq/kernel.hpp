#pragma once

// Multi-sorted equational syntax: terms, signatures, contexts, substitutions,
// equations, theories, and derived signature morphisms. Everything here is an
// immutable value; provable equality lives in the prover, never in operator==.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cq {

using Name = std::string;

enum class ErrKind {
  UnknownSymbol,
  UnknownSort,
  ArityMismatch,
  SortMismatch,
  UnboundVariable,
  DuplicateName,
  MissingMapping,
  NotIdentityOnBase,
  NonUnarySymbol,
  TypeDomain,
  BadEquationContext,
  NonGroundEquation,
  NonConstantSymbol,
  NotAttributeSurjective,
  StepLimitExceeded,
  SaturationDiverged,
  NotInModel,
  Unsupported,
  Parse,
  Io,
};

struct Error : std::runtime_error {
  ErrKind kind;
  Error(ErrKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail(ErrKind k, const std::string& msg) { throw Error(k, msg); }

// A term is either a variable or a symbol applied to arguments. Constants are
// 0-ary applications. Structural identity only.
struct Term {
  bool is_var = false;
  Name head;
  std::vector<Term> args;

  static Term var(Name n) {
    Term t;
    t.is_var = true;
    t.head = std::move(n);
    return t;
  }
  static Term app(Name f, std::vector<Term> as = {}) {
    Term t;
    t.head = std::move(f);
    t.args = std::move(as);
    return t;
  }

  bool operator==(const Term& o) const {
    return is_var == o.is_var && head == o.head && args == o.args;
  }
  bool operator!=(const Term& o) const { return !(*this == o); }
  bool operator<(const Term& o) const { return cmp(o) < 0; }
  int cmp(const Term& o) const;
};

// Node count.
int term_size(const Term& t);
// AST height: variables and constants have height 0, per the staging metric.
int term_height(const Term& t);
void vars_of(const Term& t, std::set<Name>& out);
bool contains_symbol(const Term& t, const Name& f);

struct SymbolDecl {
  Name name;
  std::vector<Name> arg_sorts;
  Name result;
  bool infix = false;
};

struct Signature {
  std::vector<Name> sorts;          // declaration order matters (default precedence)
  std::vector<SymbolDecl> symbols;  // ditto

  bool has_sort(const Name& s) const;
  const SymbolDecl* find(const Name& f) const;
  void add_sort(const Name& s);
  void add_symbol(const SymbolDecl& d);
  // Position of a symbol in declaration order, -1 if absent.
  int index_of(const Name& f) const;
};

struct Context {
  std::vector<std::pair<Name, Name>> vars;  // (variable, sort), ordered

  const Name* sort_of(const Name& v) const;
  void add(const Name& v, const Name& sort);
  bool empty() const { return vars.empty(); }
};

// Finite map variable -> term.
using Subst = std::map<Name, Term>;

struct Equation {
  Context ctx;
  Term lhs, rhs;
  Name sort;
};

struct Theory {
  Signature sig;
  std::vector<Equation> eqs;
};

// Returns the unique sort of `t`, or throws.
Name typecheck(const Signature& sig, const Context& ctx, const Term& t);

// Checks both sides of an equation and fills in its sort.
Equation make_equation(const Signature& sig, Context ctx, Term lhs, Term rhs);

Term substitute(const Term& t, const Subst& s);

// compose(s1, s2) applies s2 first: substitute(substitute(v, s2), s1).
Subst compose(const Subst& s1, const Subst& s2);

// Canonical variable names v1..vn for symbol images.
Name canonical_var(size_t i);

// Derived signature morphism: sorts to sorts, symbols to open terms over
// canonical variables v1..vn.
struct SigMorphism {
  std::map<Name, Name> sort_map;
  std::map<Name, Term> symbol_map;

  Name apply_sort(const Name& s) const;
  Term apply(const Term& t) const;  // homomorphic extension
  Context apply_ctx(const Context& c) const;
  Equation apply_eq(const Equation& e) const;
  static SigMorphism identity(const Signature& sig);
};

// Printing follows the paper's conventions: t.f for unary, infix for flagged
// binary symbols, f(a, b) otherwise. `sig` may be null (no infix info).
std::string print_term(const Term& t, const Signature* sig = nullptr);
std::string print_equation(const Equation& e, const Signature* sig = nullptr);
std::string print_subst(const Subst& s, const Signature* sig = nullptr);

}  // namespace cq
