#include "cq/prover.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace cq {

int Ordering::precedence(const Name& f) const {
  auto it = prec.find(f);
  return it == prec.end() ? -1 : it->second;
}

namespace {

bool occurs(const Name& v, const Term& t) {
  if (t.is_var) return t.head == v;
  for (auto& a : t.args)
    if (occurs(v, a)) return true;
  return false;
}

bool lpo_greater(const Ordering& o, const Term& s, const Term& t);

bool lpo_ge(const Ordering& o, const Term& s, const Term& t) { return s == t || lpo_greater(o, s, t); }

bool lpo_greater(const Ordering& o, const Term& s, const Term& t) {
  if (s.is_var) return false;
  if (t.is_var) return occurs(t.head, s);
  // (a) some argument of s is >= t
  for (auto& a : s.args)
    if (lpo_ge(o, a, t)) return true;
  int ps = o.precedence(s.head), pt = o.precedence(t.head);
  bool head_gt = ps != pt ? ps > pt : s.head > t.head;  // total tie-break
  if (s.head != t.head) {
    if (!head_gt) return false;
    for (auto& b : t.args)
      if (!lpo_greater(o, s, b)) return false;
    return true;
  }
  // same head: lexicographic on arguments
  size_t n = std::min(s.args.size(), t.args.size());
  size_t i = 0;
  while (i < n && s.args[i] == t.args[i]) i++;
  if (i == n || !lpo_greater(o, s.args[i], t.args[i])) return false;
  for (auto& b : t.args)
    if (!lpo_greater(o, s, b)) return false;
  return true;
}

void var_counts(const Term& t, std::map<Name, int>& m) {
  if (t.is_var) {
    m[t.head]++;
    return;
  }
  for (auto& a : t.args) var_counts(a, m);
}

long kbo_weight(const Ordering& o, const Term& t) {
  if (t.is_var) return o.var_weight;
  long w = 1;
  auto it = o.weights.find(t.head);
  if (it != o.weights.end()) w = it->second;
  for (auto& a : t.args) w += kbo_weight(o, a);
  return w;
}

bool kbo_greater(const Ordering& o, const Term& s, const Term& t) {
  if (s == t) return false;
  std::map<Name, int> vs, vt;
  var_counts(s, vs);
  var_counts(t, vt);
  for (auto& [v, n] : vt)
    if (vs[v] < n) return false;
  if (t.is_var) return occurs(t.head, s);
  if (s.is_var) return false;
  long ws = kbo_weight(o, s), wt = kbo_weight(o, t);
  if (ws != wt) return ws > wt;
  int ps = o.precedence(s.head), pt = o.precedence(t.head);
  if (ps != pt) return ps > pt;
  if (s.head != t.head) return s.head > t.head;
  for (size_t i = 0; i < std::min(s.args.size(), t.args.size()); i++)
    if (s.args[i] != t.args[i]) return kbo_greater(o, s.args[i], t.args[i]);
  return false;
}

}  // namespace

bool Ordering::greater(const Term& s, const Term& t) const {
  return kind == Kind::LPO ? lpo_greater(*this, s, t) : kbo_greater(*this, s, t);
}

Ordering default_ordering(const Signature& sig) {
  Ordering o;
  for (size_t i = 0; i < sig.symbols.size(); i++) o.prec[sig.symbols[i].name] = (int)i;
  return o;
}

bool match(const Term& pat, const Term& t, Subst& out) {
  if (pat.is_var) {
    auto it = out.find(pat.head);
    if (it != out.end()) return it->second == t;
    out[pat.head] = t;
    return true;
  }
  if (t.is_var || pat.head != t.head || pat.args.size() != t.args.size()) return false;
  for (size_t i = 0; i < pat.args.size(); i++)
    if (!match(pat.args[i], t.args[i], out)) return false;
  return true;
}

namespace {

Term walk(const Term& t, const Subst& s) {
  Term cur = t;
  while (cur.is_var) {
    auto it = s.find(cur.head);
    if (it == s.end()) return cur;
    cur = it->second;
  }
  return cur;
}

bool occurs_walked(const Name& v, const Term& t, const Subst& s) {
  Term w = walk(t, s);
  if (w.is_var) return w.head == v;
  for (auto& a : w.args)
    if (occurs_walked(v, a, s)) return true;
  return false;
}

bool unify_rec(const Term& a, const Term& b, Subst& s) {
  Term x = walk(a, s), y = walk(b, s);
  if (x.is_var && y.is_var && x.head == y.head) return true;
  if (x.is_var) {
    if (occurs_walked(x.head, y, s)) return false;
    s[x.head] = y;
    return true;
  }
  if (y.is_var) {
    if (occurs_walked(y.head, x, s)) return false;
    s[y.head] = x;
    return true;
  }
  if (x.head != y.head || x.args.size() != y.args.size()) return false;
  for (size_t i = 0; i < x.args.size(); i++)
    if (!unify_rec(x.args[i], y.args[i], s)) return false;
  return true;
}

Term resolve(const Term& t, const Subst& s) {
  Term w = walk(t, s);
  if (w.is_var) return w;
  for (auto& a : w.args) a = resolve(a, s);
  return w;
}

}  // namespace

std::optional<Subst> unify(const Term& a, const Term& b, const Context& ctx) {
  // Sorts agree by construction when both terms are well-sorted at the same
  // sort and every variable's sort comes from ctx, so plain syntactic
  // unification stays sort-correct.
  (void)ctx;
  Subst s;
  if (!unify_rec(a, b, s)) return std::nullopt;
  Subst out;
  for (auto& [v, t] : s) out[v] = resolve(t, s);
  return out;
}

namespace {

struct Rewriter {
  const RewriteSystem& rs;
  long steps = 0;

  bool step(Term& t) {
    // innermost-leftmost, deterministic
    for (auto& a : t.args)
      if (step(a)) return true;
    for (auto& r : rs.rules) {
      Subst s;
      if (match(r.lhs, t, s)) {
        t = substitute(r.rhs, s);
        return true;
      }
    }
    for (auto& e : rs.unoriented) {
      Subst s;
      if (match(e.lhs, t, s)) {
        Term red = substitute(e.rhs, s);
        if (rs.ord.greater(t, red)) {
          t = red;
          return true;
        }
      }
      s.clear();
      if (match(e.rhs, t, s)) {
        Term red = substitute(e.lhs, s);
        if (rs.ord.greater(t, red)) {
          t = red;
          return true;
        }
      }
    }
    return false;
  }
};

}  // namespace

Term normalize(const RewriteSystem& rs, const Term& t) {
  Rewriter rw{rs};
  Term cur = t;
  int budget = rs.limits.normalize_budget;
  while (rw.step(cur)) {
    rs.rewrite_steps++;
    if (--budget <= 0) fail(ErrKind::StepLimitExceeded, "normalization exceeded step budget");
  }
  return cur;
}

namespace {

Term rename_term(const Term& t, const std::string& suffix) {
  if (t.is_var) return Term::var(t.head + suffix);
  Term r = t;
  for (auto& a : r.args) a = rename_term(a, suffix);
  return r;
}

Context rename_ctx(const Context& c, const std::string& suffix) {
  Context r;
  for (auto& [v, s] : c.vars) r.add(v + suffix, s);
  return r;
}

Context merge_ctx(const Context& a, const Context& b) {
  Context r = a;
  for (auto& [v, s] : b.vars)
    if (!r.sort_of(v)) r.add(v, s);
  return r;
}

struct PendingEq {
  Equation eq;
  int size;
};

// All critical pairs between l1->r1 and l2->r2 (overlaps of l2 into non-var
// positions of l1). Both rules assumed renamed apart.
void critical_pairs(const RewriteRule& r1, const RewriteRule& r2, std::vector<Equation>& out, bool top_only_skip_root) {
  Context ctx = merge_ctx(r1.ctx, r2.ctx);
  struct Pos {
    const Term* sub;
    std::vector<int> path;
  };
  std::vector<Pos> positions;
  std::deque<Pos> work{{&r1.lhs, {}}};
  while (!work.empty()) {
    Pos p = work.front();
    work.pop_front();
    if (!p.sub->is_var) {
      positions.push_back(p);
      for (size_t i = 0; i < p.sub->args.size(); i++) {
        auto path = p.path;
        path.push_back((int)i);
        work.push_back({&p.sub->args[i], path});
      }
    }
  }
  for (auto& p : positions) {
    if (top_only_skip_root && p.path.empty()) continue;
    auto mgu = unify(*p.sub, r2.lhs, ctx);
    if (!mgu) continue;
    // build l1[path <- r2] then apply mgu
    Term replaced = r1.lhs;
    Term* spot = &replaced;
    for (int i : p.path) spot = &spot->args[(size_t)i];
    *spot = r2.rhs;
    Term left = substitute(r1.rhs, *mgu);
    Term right = substitute(replaced, *mgu);
    if (left == right) continue;
    Equation e;
    e.ctx = ctx;
    e.lhs = left;
    e.rhs = right;
    out.push_back(std::move(e));
  }
}

}  // namespace

RewriteSystem complete(const Theory& th, const Ordering& ord, const CompletionLimits& lim) {
  RewriteSystem rs;
  rs.ord = ord;
  rs.limits = lim;
  auto deadline = std::chrono::steady_clock::now() + lim.timeout;

  auto cmp = [](const PendingEq& a, const PendingEq& b) { return a.size > b.size; };
  std::vector<PendingEq> queue;
  auto push = [&](Equation e) {
    int sz = term_size(e.lhs) + term_size(e.rhs);
    queue.push_back({std::move(e), sz});
    std::push_heap(queue.begin(), queue.end(), cmp);
  };
  for (auto& e : th.eqs) push(e);

  bool limit_hit = false, unorientable_nonground = false;
  int fresh = 0;

  auto add_cps = [&](const RewriteRule& nr) {
    std::vector<Equation> cps;
    std::string sfx = "#" + std::to_string(fresh++);
    RewriteRule renamed{rename_ctx(nr.ctx, sfx), rename_term(nr.lhs, sfx), rename_term(nr.rhs, sfx)};
    critical_pairs(nr, renamed, cps, true);  // self-overlaps below root
    for (auto& r : rs.rules) {
      RewriteRule other{rename_ctx(r.ctx, sfx), rename_term(r.lhs, sfx), rename_term(r.rhs, sfx)};
      critical_pairs(nr, other, cps, false);
      critical_pairs(other, nr, cps, false);
    }
    // ordered critical pairs with retained unorientable equations, both ways
    for (auto& e : rs.unoriented) {
      for (int dir = 0; dir < 2; dir++) {
        RewriteRule uno{rename_ctx(e.ctx, sfx), rename_term(dir ? e.rhs : e.lhs, sfx),
                        rename_term(dir ? e.lhs : e.rhs, sfx)};
        critical_pairs(nr, uno, cps, false);
        critical_pairs(uno, nr, cps, false);
      }
    }
    for (auto& e : cps) push(std::move(e));
  };

  while (!queue.empty()) {
    if (rs.iterations++ >= lim.max_iterations || std::chrono::steady_clock::now() > deadline) {
      limit_hit = true;
      break;
    }
    std::pop_heap(queue.begin(), queue.end(), cmp);
    Equation e = std::move(queue.back().eq);
    queue.pop_back();
    Term l, r;
    try {
      l = normalize(rs, e.lhs);
      r = normalize(rs, e.rhs);
    } catch (const Error&) {
      limit_hit = true;
      break;
    }
    if (l == r) continue;
    RewriteRule rule;
    rule.ctx = e.ctx;
    if (ord.greater(l, r)) {
      rule.lhs = l;
      rule.rhs = r;
    } else if (ord.greater(r, l)) {
      rule.lhs = r;
      rule.rhs = l;
    } else {
      std::set<Name> vl, vr;
      vars_of(l, vl);
      vars_of(r, vr);
      if (!vl.empty() || !vr.empty()) unorientable_nonground = true;
      Equation keep;
      keep.ctx = e.ctx;
      keep.lhs = l;
      keep.rhs = r;
      keep.sort = e.sort;
      rs.unoriented.push_back(std::move(keep));
      continue;
    }
    if (term_size(rule.lhs) + term_size(rule.rhs) > lim.max_rule_size) {
      limit_hit = true;
      continue;
    }
    // interreduce: rules whose lhs the new rule rewrites go back to the queue
    std::vector<RewriteRule> kept;
    for (auto& old : rs.rules) {
      Term probe = old.lhs;
      RewriteSystem one;
      one.ord = ord;
      one.limits = lim;
      one.rules.push_back(rule);
      Term reduced = normalize(one, probe);
      if (reduced != old.lhs) {
        Equation back;
        back.ctx = old.ctx;
        back.lhs = reduced;
        back.rhs = old.rhs;
        push(std::move(back));
      } else {
        RewriteSystem with_new = one;
        old.rhs = normalize(with_new, old.rhs);
        kept.push_back(old);
      }
    }
    rs.rules = std::move(kept);
    rs.rules.push_back(rule);
    add_cps(rs.rules.back());
  }

  if (limit_hit)
    rs.status = CompletionStatus::IncompleteLimit;
  else if (unorientable_nonground || !rs.unoriented.empty())
    rs.status = CompletionStatus::IncompleteUnorientable;
  else
    rs.status = CompletionStatus::Complete;
  return rs;
}

Term DecisionProcedure::nf(const Term& t) const {
  {
    std::lock_guard<std::mutex> g(mu_);
    auto it = memo_.find(t);
    if (it != memo_.end()) return it->second;
  }
  Term r = normalize(system_, t);
  std::lock_guard<std::mutex> g(mu_);
  memo_.emplace(t, r);
  return r;
}

Answer DecisionProcedure::equal(const Term& a, const Term& b) const {
  if (a == b) return Answer::Equal;
  Term na = nf(a), nb = nf(b);
  if (na == nb) return Answer::Equal;
  return complete() ? Answer::NotEqual : Answer::Unknown;
}

ProcPtr make_procedure(const Theory& th, const CompletionLimits& lim) {
  return make_procedure(th, default_ordering(th.sig), lim);
}

ProcPtr make_procedure(const Theory& th, const Ordering& ord, const CompletionLimits& lim) {
  return std::make_shared<DecisionProcedure>(th, complete(th, ord, lim));
}

MorphismCheck check_theory_morphism(const Theory& src, const SigMorphism& m, const DecisionProcedure& tgt_proc) {
  bool unknown = false;
  for (auto& e : src.eqs) {
    Equation img = m.apply_eq(e);
    Answer a = tgt_proc.equal(img.lhs, img.rhs);
    if (a == Answer::NotEqual) return {MorphismCheck::Verdict::Failed, e};
    if (a == Answer::Unknown) unknown = true;
  }
  if (unknown) return {MorphismCheck::Verdict::Unknown, std::nullopt};
  return {MorphismCheck::Verdict::Verified, std::nullopt};
}

std::string print_rules(const RewriteSystem& rs, const Signature* sig) {
  std::ostringstream os;
  for (auto& r : rs.rules) os << print_term(r.lhs, sig) << " -> " << print_term(r.rhs, sig) << "\n";
  for (auto& e : rs.unoriented) os << print_term(e.lhs, sig) << " = " << print_term(e.rhs, sig) << " (unoriented)\n";
  return os.str();
}

}  // namespace cq
