#include "cq/kernel.hpp"

#include <algorithm>
#include <sstream>

namespace cq {

int Term::cmp(const Term& o) const {
  if (is_var != o.is_var) return is_var ? -1 : 1;
  if (int c = head.compare(o.head)) return c < 0 ? -1 : 1;
  if (args.size() != o.args.size()) return args.size() < o.args.size() ? -1 : 1;
  for (size_t i = 0; i < args.size(); i++)
    if (int c = args[i].cmp(o.args[i])) return c;
  return 0;
}

int term_size(const Term& t) {
  int n = 1;
  for (auto& a : t.args) n += term_size(a);
  return n;
}

int term_height(const Term& t) {
  int h = 0;
  for (auto& a : t.args) h = std::max(h, 1 + term_height(a));
  return h;
}

void vars_of(const Term& t, std::set<Name>& out) {
  if (t.is_var) {
    out.insert(t.head);
    return;
  }
  for (auto& a : t.args) vars_of(a, out);
}

bool contains_symbol(const Term& t, const Name& f) {
  if (!t.is_var && t.head == f) return true;
  for (auto& a : t.args)
    if (contains_symbol(a, f)) return true;
  return false;
}

bool Signature::has_sort(const Name& s) const {
  return std::find(sorts.begin(), sorts.end(), s) != sorts.end();
}

const SymbolDecl* Signature::find(const Name& f) const {
  for (auto& d : symbols)
    if (d.name == f) return &d;
  return nullptr;
}

void Signature::add_sort(const Name& s) {
  if (has_sort(s)) fail(ErrKind::DuplicateName, "sort declared twice: " + s);
  sorts.push_back(s);
}

void Signature::add_symbol(const SymbolDecl& d) {
  if (find(d.name)) fail(ErrKind::DuplicateName, "symbol declared twice: " + d.name);
  for (auto& s : d.arg_sorts)
    if (!has_sort(s)) fail(ErrKind::UnknownSort, "unknown sort " + s + " in symbol " + d.name);
  if (!has_sort(d.result)) fail(ErrKind::UnknownSort, "unknown sort " + d.result + " in symbol " + d.name);
  symbols.push_back(d);
}

int Signature::index_of(const Name& f) const {
  for (size_t i = 0; i < symbols.size(); i++)
    if (symbols[i].name == f) return (int)i;
  return -1;
}

const Name* Context::sort_of(const Name& v) const {
  for (auto& p : vars)
    if (p.first == v) return &p.second;
  return nullptr;
}

void Context::add(const Name& v, const Name& sort) {
  if (sort_of(v)) fail(ErrKind::DuplicateName, "variable given more than one sort: " + v);
  vars.emplace_back(v, sort);
}

Name typecheck(const Signature& sig, const Context& ctx, const Term& t) {
  if (t.is_var) {
    const Name* s = ctx.sort_of(t.head);
    if (!s) fail(ErrKind::UnboundVariable, "unbound variable " + t.head);
    return *s;
  }
  const SymbolDecl* d = sig.find(t.head);
  if (!d) fail(ErrKind::UnknownSymbol, "unknown symbol " + t.head);
  if (d->arg_sorts.size() != t.args.size())
    fail(ErrKind::ArityMismatch, "symbol " + t.head + " expects " + std::to_string(d->arg_sorts.size()) +
                                     " arguments, got " + std::to_string(t.args.size()));
  for (size_t i = 0; i < t.args.size(); i++) {
    Name got = typecheck(sig, ctx, t.args[i]);
    if (got != d->arg_sorts[i])
      fail(ErrKind::SortMismatch, "argument " + std::to_string(i + 1) + " of " + t.head + " has sort " + got +
                                      ", expected " + d->arg_sorts[i]);
  }
  return d->result;
}

Equation make_equation(const Signature& sig, Context ctx, Term lhs, Term rhs) {
  Name sl = typecheck(sig, ctx, lhs);
  Name sr = typecheck(sig, ctx, rhs);
  if (sl != sr) fail(ErrKind::SortMismatch, "equation sides have sorts " + sl + " and " + sr);
  Equation e;
  e.ctx = std::move(ctx);
  e.lhs = std::move(lhs);
  e.rhs = std::move(rhs);
  e.sort = sl;
  return e;
}

Term substitute(const Term& t, const Subst& s) {
  if (t.is_var) {
    auto it = s.find(t.head);
    return it == s.end() ? t : it->second;
  }
  Term r = t;
  for (auto& a : r.args) a = substitute(a, s);
  return r;
}

Subst compose(const Subst& s1, const Subst& s2) {
  Subst r;
  for (auto& [v, t] : s2) r[v] = substitute(t, s1);
  for (auto& [v, t] : s1)
    if (!r.count(v)) r[v] = t;
  return r;
}

Name canonical_var(size_t i) { return "v" + std::to_string(i + 1); }

Name SigMorphism::apply_sort(const Name& s) const {
  auto it = sort_map.find(s);
  if (it == sort_map.end()) fail(ErrKind::MissingMapping, "no mapping for sort " + s);
  return it->second;
}

Term SigMorphism::apply(const Term& t) const {
  if (t.is_var) return t;
  auto it = symbol_map.find(t.head);
  if (it == symbol_map.end()) fail(ErrKind::MissingMapping, "no mapping for symbol " + t.head);
  Subst s;
  for (size_t i = 0; i < t.args.size(); i++) s[canonical_var(i)] = apply(t.args[i]);
  return substitute(it->second, s);
}

Context SigMorphism::apply_ctx(const Context& c) const {
  Context r;
  for (auto& [v, s] : c.vars) r.add(v, apply_sort(s));
  return r;
}

Equation SigMorphism::apply_eq(const Equation& e) const {
  Equation r;
  r.ctx = apply_ctx(e.ctx);
  r.lhs = apply(e.lhs);
  r.rhs = apply(e.rhs);
  r.sort = apply_sort(e.sort);
  return r;
}

SigMorphism SigMorphism::identity(const Signature& sig) {
  SigMorphism m;
  for (auto& s : sig.sorts) m.sort_map[s] = s;
  for (auto& d : sig.symbols) {
    std::vector<Term> vs;
    for (size_t i = 0; i < d.arg_sorts.size(); i++) vs.push_back(Term::var(canonical_var(i)));
    m.symbol_map[d.name] = Term::app(d.name, vs);
  }
  return m;
}

namespace {

// Pretty-print sugar for the Type theory: succ-chains as decimals, cons-chains
// of character constants as bare words.
bool as_nat(const Term& t, long& n) {
  const Term* cur = &t;
  n = 0;
  while (true) {
    if (cur->is_var) return false;
    if (cur->head == "zero" && cur->args.empty()) return true;
    if (cur->head == "succ" && cur->args.size() == 1) {
      n++;
      cur = &cur->args[0];
      continue;
    }
    return false;
  }
}

bool as_word(const Term& t, std::string& w) {
  const Term* cur = &t;
  w.clear();
  while (true) {
    if (cur->is_var) return false;
    if (cur->head == "nil" && cur->args.empty()) return !w.empty();
    if (cur->head == "cons" && cur->args.size() == 2) {
      const Term& c = cur->args[0];
      if (c.is_var || !c.args.empty() || c.head.size() != 1) return false;
      w += c.head;
      cur = &cur->args[1];
      continue;
    }
    return false;
  }
}

void print_rec(const Term& t, const Signature* sig, bool need_parens, std::string& out) {
  if (t.is_var) {
    out += t.head;
    return;
  }
  long n;
  std::string w;
  if (as_nat(t, n)) {
    out += std::to_string(n);
    return;
  }
  if (as_word(t, w)) {
    out += w;
    return;
  }
  if (t.args.empty()) {
    out += t.head;
    return;
  }
  if (t.args.size() == 1) {
    bool arg_infix = false;
    if (sig && !t.args[0].is_var) {
      const SymbolDecl* d = sig->find(t.args[0].head);
      arg_infix = d && d->infix && t.args[0].args.size() == 2;
    }
    print_rec(t.args[0], sig, arg_infix, out);
    out += "." + t.head;
    return;
  }
  const SymbolDecl* d = sig ? sig->find(t.head) : nullptr;
  if (d && d->infix && t.args.size() == 2) {
    if (need_parens) out += "(";
    print_rec(t.args[0], sig, true, out);
    out += " " + t.head + " ";
    print_rec(t.args[1], sig, true, out);
    if (need_parens) out += ")";
    return;
  }
  out += t.head + "(";
  for (size_t i = 0; i < t.args.size(); i++) {
    if (i) out += ", ";
    print_rec(t.args[i], sig, false, out);
  }
  out += ")";
}

}  // namespace

std::string print_term(const Term& t, const Signature* sig) {
  std::string out;
  print_rec(t, sig, false, out);
  return out;
}

std::string print_equation(const Equation& e, const Signature* sig) {
  std::string out;
  if (!e.ctx.empty()) {
    out += "forall ";
    for (size_t i = 0; i < e.ctx.vars.size(); i++) {
      if (i) out += ", ";
      out += e.ctx.vars[i].first + ":" + e.ctx.vars[i].second;
    }
    out += ". ";
  }
  out += print_term(e.lhs, sig) + " = " + print_term(e.rhs, sig);
  return out;
}

std::string print_subst(const Subst& s, const Signature* sig) {
  std::string out = "[";
  bool first = true;
  for (auto& [v, t] : s) {
    if (!first) out += ", ";
    first = false;
    out += v + " -> " + print_term(t, sig);
  }
  return out + "]";
}

}  // namespace cq
