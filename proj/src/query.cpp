#include "cq/query.hpp"

#include <algorithm>

namespace cq {

namespace {

Name freeze_name(const Name& entity, const Name& var) { return "%" + entity + "." + var; }

Subst freeze_subst(const Name& entity, const Context& fr) {
  Subst s;
  for (auto& [v, sort] : fr.vars) s[v] = Term::app(freeze_name(entity, v));
  return s;
}

// Entity terms over a singleton context are a variable followed by a foreign
// key path; returns (var, path innermost-first).
std::pair<Name, std::vector<Name>> decompose_path(const Term& t) {
  std::vector<Name> path;
  const Term* cur = &t;
  while (!cur->is_var) {
    if (cur->args.size() != 1)
      fail(ErrKind::BadEquationContext, "expected a foreign key path, got " + print_term(*cur));
    path.push_back(cur->head);
    cur = &cur->args[0];
  }
  std::reverse(path.begin(), path.end());
  return {cur->head, path};
}

}  // namespace

const Tableau& UberFlower::tableau(const Name& entity) const {
  auto it = tableaux.find(entity);
  if (it == tableaux.end()) fail(ErrKind::UnknownSort, "query " + name + " has no tableau for " + entity);
  return it->second;
}

InstancePtr UberFlower::frozen(const Name& entity) const {
  auto it = frozen_.find(entity);
  if (it != frozen_.end()) return it->second;
  const Tableau& tb = tableau(entity);
  std::vector<SymbolDecl> gens;
  for (auto& [v, s] : tb.fr.vars) gens.push_back({freeze_name(entity, v), {}, s, false});
  Subst fz = freeze_subst(entity, tb.fr);
  std::vector<Equation> eqs;
  for (auto& e : tb.wh) {
    Equation g;
    g.lhs = substitute(e.lhs, fz);
    g.rhs = substitute(e.rhs, fz);
    eqs.push_back(g);
  }
  InstancePtr inst = make_instance("%" + name + "." + entity, src, gens, eqs);
  frozen_[entity] = inst;
  return inst;
}

const DecisionProcedure& UberFlower::frozen_proc(const Name& entity) const {
  auto it = frozen_procs_.find(entity);
  if (it == frozen_procs_.end()) {
    ProcPtr p = make_procedure(frozen(entity)->theory(), src->limits);
    it = frozen_procs_.emplace(entity, p).first;
  }
  return *it->second;
}

QueryPtr make_query(Name name, SchemaPtr src, SchemaPtr dst, std::map<Name, Tableau> tableaux,
                    std::map<Name, Term> returns, std::map<Name, Subst> keys, bool allow_type_binding) {
  if (src->ts != dst->ts && !theory_equal(src->ts->theory, dst->ts->theory))
    fail(ErrKind::SortMismatch, "query " + name + ": source and target on different typesides");
  auto q = std::make_shared<UberFlower>();
  q->name = std::move(name);
  q->src = src;
  q->dst = dst;
  for (auto& t : dst->entities) {
    auto it = tableaux.find(t);
    if (it == tableaux.end()) fail(ErrKind::MissingMapping, "query " + q->name + " misses a tableau for entity " + t);
    Tableau tb = it->second;
    for (auto& [v, s] : tb.fr.vars) {
      if (!src->theory().sig.has_sort(s)) fail(ErrKind::UnknownSort, "for-variable " + v + " : unknown sort " + s);
      if (!src->is_entity(s) && !allow_type_binding)
        fail(ErrKind::TypeDomain, "for-variable " + v + " binds a type (" + s + "); pass --allow-type-binding to permit");
    }
    std::vector<Equation> checked;
    for (auto& e : tb.wh) checked.push_back(make_equation(src->theory().sig, tb.fr, e.lhs, e.rhs));
    tb.wh = std::move(checked);
    q->tableaux[t] = std::move(tb);
  }
  for (auto& att : dst->atts) {
    auto it = returns.find(att.name);
    if (it == returns.end()) fail(ErrKind::MissingMapping, "query " + q->name + " misses return for " + att.name);
    const Tableau& tb = q->tableau(att.arg_sorts[0]);
    Name got = typecheck(src->theory().sig, tb.fr, it->second);
    if (got != att.result)
      fail(ErrKind::SortMismatch, "return for " + att.name + " has sort " + got + ", expected " + att.result);
    q->returns[att.name] = it->second;
  }
  for (auto& fk : dst->fks) {
    auto it = keys.find(fk.name);
    if (it == keys.end()) fail(ErrKind::MissingMapping, "query " + q->name + " misses keys for " + fk.name);
    const Tableau& cod = q->tableau(fk.result);
    for (auto& [v, s] : cod.fr.vars)
      if (!it->second.count(v)) fail(ErrKind::MissingMapping, "keys for " + fk.name + " misses variable " + v);
    // image sorts are checked condition-by-condition in validate_query
    q->keys[fk.name] = it->second;
  }
  return q;
}

namespace {

// [p] applied to a term: substitute the keys clauses along the path, last
// foreign key first.
Term apply_path(const UberFlower& q, const std::vector<Name>& path, Term t) {
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    auto k = q.keys.find(*it);
    if (k == q.keys.end()) fail(ErrKind::MissingMapping, "no keys clause for " + *it);
    t = substitute(t, k->second);
  }
  return t;
}

// Translates a type-sorted target term over {v : t} into a source term over
// fr_t, replacing att applications by their return clauses along keys paths.
Term translate_type_term(const UberFlower& q, const Term& t) {
  if (t.is_var) fail(ErrKind::SortMismatch, "entity variable in type position");
  if (t.args.size() == 1 && q.dst->att(t.head)) {
    auto [v, path] = decompose_path(t.args[0]);
    auto r = q.returns.find(t.head);
    if (r == q.returns.end()) fail(ErrKind::MissingMapping, "no return clause for " + t.head);
    return apply_path(q, path, r->second);
  }
  Term r = t;
  for (auto& a : r.args) a = translate_type_term(q, a);
  return r;
}

Answer check_in_frozen(const UberFlower& q, const Name& entity, const Term& a, const Term& b) {
  Subst fz = freeze_subst(entity, q.tableau(entity).fr);
  Term fa = substitute(a, fz), fb = substitute(b, fz);
  const DecisionProcedure& proc = q.frozen_proc(entity);
  typecheck(proc.theory().sig, Context{}, fa);
  typecheck(proc.theory().sig, Context{}, fb);
  return proc.equal(fa, fb);
}

}  // namespace

QueryCheck validate_query(const UberFlower& q) {
  bool unknown = false;
  std::string unknown_cond;
  // One condition per target schema equation.
  for (auto& e : q.dst->eqs) {
    std::string cond = print_equation(e, &q.dst->theory().sig);
    const Name& t = e.ctx.vars[0].second;
    try {
      if (q.dst->is_entity(e.sort)) {
        auto [vl, pl] = decompose_path(e.lhs);
        auto [vr, pr] = decompose_path(e.rhs);
        const Tableau& cod = q.tableau(e.sort);
        for (auto& [u, s] : cod.fr.vars) {
          Term L = apply_path(q, pl, Term::var(u));
          Term R = apply_path(q, pr, Term::var(u));
          Answer a = check_in_frozen(q, t, L, R);
          if (a == Answer::NotEqual) return {QueryCheck::Verdict::Failed, cond};
          if (a == Answer::Unknown) {
            unknown = true;
            unknown_cond = cond;
          }
        }
      } else {
        Term L = translate_type_term(q, e.lhs);
        Term R = translate_type_term(q, e.rhs);
        Answer a = check_in_frozen(q, t, L, R);
        if (a == Answer::NotEqual) return {QueryCheck::Verdict::Failed, cond};
        if (a == Answer::Unknown) {
          unknown = true;
          unknown_cond = cond;
        }
      }
    } catch (const Error& err) {
      // The condition's instances cannot even be formed (ill-sorted keys);
      // the obligation is unprovable, so the condition fails.
      return {QueryCheck::Verdict::Failed, cond + " (" + err.what() + ")"};
    }
  }
  // Keys clauses must be transforms of frozen instances: well-sorted and
  // where-preserving.
  for (auto& fk : q.dst->fks) {
    const Tableau& dom = q.tableau(fk.arg_sorts[0]);
    const Tableau& cod = q.tableau(fk.result);
    const Subst& k = q.keys.at(fk.name);
    std::string cond = "keys " + fk.name;
    try {
      for (auto& [v, s] : cod.fr.vars) {
        Name got = typecheck(q.src->theory().sig, dom.fr, k.at(v));
        if (got != s)
          fail(ErrKind::SortMismatch, "keys " + fk.name + " sends " + v + " to a term of sort " + got);
      }
      for (auto& e : cod.wh) {
        Answer a = check_in_frozen(q, fk.arg_sorts[0], substitute(e.lhs, k), substitute(e.rhs, k));
        if (a == Answer::NotEqual)
          return {QueryCheck::Verdict::Failed, cond + " does not preserve " + print_equation(e)};
        if (a == Answer::Unknown) {
          unknown = true;
          unknown_cond = cond;
        }
      }
    } catch (const Error& err) {
      return {QueryCheck::Verdict::Failed, cond + " (" + err.what() + ")"};
    }
  }
  if (unknown) return {QueryCheck::Verdict::Unknown, unknown_cond};
  return {QueryCheck::Verdict::Verified, ""};
}

namespace {

Name env_gen_name(const Subst& env) {
  std::string s = "[";
  bool first = true;
  for (auto& [v, t] : env) {  // std::map iterates sorted by variable name
    if (!first) s += ", ";
    first = false;
    s += v + " -> " + print_term(t);
  }
  return s + "]";
}

// Generators and equations of talg beyond the shared typeside.
std::pair<std::vector<SymbolDecl>, std::vector<Equation>> talg_extension(const SaturatedInstance& sat) {
  const Theory& ts = sat.inst->schema->ts->theory;
  std::vector<SymbolDecl> gens(sat.talg.sig.symbols.begin() + (long)ts.sig.symbols.size(),
                               sat.talg.sig.symbols.end());
  std::vector<Equation> eqs(sat.talg.eqs.begin() + (long)ts.eqs.size(), sat.talg.eqs.end());
  return {gens, eqs};
}

std::vector<Subst> satisfying_envs(const UberFlower& q, const Name& entity, const SaturatedInstance& sat) {
  const Tableau& tb = q.tableau(entity);
  std::vector<Subst> out;
  size_t n = tb.fr.vars.size();
  std::vector<size_t> idx(n, 0);
  std::vector<const std::vector<Term>*> pools;
  for (auto& [v, s] : tb.fr.vars) {
    auto it = sat.carrier.find(s);
    if (it == sat.carrier.end()) fail(ErrKind::UnknownSort, "for-variable " + v + " ranges over non-entity " + s);
    pools.push_back(&it->second);
  }
  for (auto* p : pools)
    if (p->empty()) return out;
  while (true) {
    Subst env;
    for (size_t i = 0; i < n; i++) env[tb.fr.vars[i].first] = (*pools[i])[idx[i]];
    bool ok = true;
    for (auto& e : tb.wh) {
      if (sat.ground_equal(substitute(e.lhs, env), substitute(e.rhs, env)) != Answer::Equal) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(std::move(env));
    if (n == 0) break;
    size_t i = n;
    while (i > 0) {
      i--;
      if (++idx[i] < pools[i]->size()) break;
      idx[i] = 0;
      if (i == 0) return out;
    }
    if (i == 0 && idx[0] == 0) break;
  }
  return out;
}

}  // namespace

EvalOutput eval_full(const UberFlower& q, const InstancePtr& i, const SatLimits& lim) {
  if (i->schema != q.src && !theory_equal(i->schema->theory(), q.src->theory()))
    fail(ErrKind::SortMismatch, "eval: instance " + i->name + " is not on the source of " + q.name);
  EvalOutput out;
  out.in_sat = saturate_cached(i, lim);
  const SaturatedInstance& sat = *out.in_sat;

  std::vector<SymbolDecl> gens;
  std::vector<Equation> eqs;
  auto [talg_gens, talg_eqs] = talg_extension(sat);
  for (auto& g : talg_gens) gens.push_back(g);
  for (auto& e : talg_eqs) eqs.push_back(e);

  for (auto& t : q.dst->entities) {
    out.envs[t] = satisfying_envs(q, t, sat);
    for (auto& env : out.envs[t]) gens.push_back({env_gen_name(env), {}, t, false});
  }
  for (auto& t : q.dst->entities) {
    for (auto& att : q.dst->atts_from(t)) {
      const Term& ret = q.returns.at(att.name);
      for (auto& env : out.envs[t]) {
        Equation e;
        e.lhs = Term::app(att.name, {Term::app(env_gen_name(env))});
        e.rhs = sat.trans(substitute(ret, env));
        eqs.push_back(e);
      }
    }
    for (auto& fk : q.dst->fks_from(t)) {
      const Subst& k = q.keys.at(fk.name);
      const Tableau& cod = q.tableau(fk.result);
      for (auto& env : out.envs[t]) {
        Subst img;
        for (auto& [v, s] : cod.fr.vars) img[v] = sat.nf(substitute(k.at(v), env));
        Equation e;
        e.lhs = Term::app(fk.name, {Term::app(env_gen_name(env))});
        e.rhs = Term::app(env_gen_name(img));
        eqs.push_back(e);
      }
    }
  }
  out.inst = make_instance(q.name + "(" + i->name + ")", q.dst, gens, eqs);
  return out;
}

InstancePtr eval(const UberFlower& q, const InstancePtr& i, Name out_name) {
  EvalOutput out = eval_full(q, i);
  if (out_name.empty()) return out.inst;
  auto renamed = std::make_shared<Instance>(*out.inst);
  renamed->name = std::move(out_name);
  return renamed;
}

namespace {

bool query_vars_globally_unique(const UberFlower& q) {
  std::set<Name> seen;
  for (auto& [t, tb] : q.tableaux)
    for (auto& [v, s] : tb.fr.vars)
      if (!seen.insert(v).second) return false;
  return true;
}

}  // namespace

CoevalOutput coeval_full(const UberFlower& q, const InstancePtr& j, const SatLimits& lim) {
  if (j->schema != q.dst && !theory_equal(j->schema->theory(), q.dst->theory()))
    fail(ErrKind::SortMismatch, "coeval: instance " + j->name + " is not on the target of " + q.name);
  CoevalOutput out;
  out.in_sat = saturate_cached(j, lim);
  const SaturatedInstance& sat = *out.in_sat;
  bool plain = query_vars_globally_unique(q);

  std::vector<SymbolDecl> gens;
  std::vector<Equation> eqs;
  auto [talg_gens, talg_eqs] = talg_extension(sat);
  for (auto& g : talg_gens) gens.push_back(g);
  for (auto& e : talg_eqs) eqs.push_back(e);

  for (auto& t : q.dst->entities) {
    const Tableau& tb = q.tableau(t);
    for (auto& [v, s] : tb.fr.vars) {
      for (auto& rep : sat.carrier.at(t)) {
        Name n = "(" + (plain ? v : t + "." + v) + ", " + print_term(rep) + ")";
        out.pairs[t][{v, rep}] = n;
        gens.push_back({n, {}, s, false});
      }
    }
  }
  auto pair_subst = [&](const Name& t, const Term& rep) {
    Subst s;
    for (auto& [v, srt] : q.tableau(t).fr.vars) s[v] = Term::app(out.pairs[t].at({v, rep}));
    return s;
  };
  for (auto& t : q.dst->entities) {
    const Tableau& tb = q.tableau(t);
    for (auto& rep : sat.carrier.at(t)) {
      Subst ps = pair_subst(t, rep);
      for (auto& e : tb.wh) {
        Equation g;
        g.lhs = substitute(e.lhs, ps);
        g.rhs = substitute(e.rhs, ps);
        eqs.push_back(g);
      }
    }
    for (auto& att : q.dst->atts_from(t)) {
      const Term& ret = q.returns.at(att.name);
      for (auto& rep : sat.carrier.at(t)) {
        Equation e;
        e.lhs = sat.att_table.at(att.name).at(rep);
        e.rhs = substitute(ret, pair_subst(t, rep));
        eqs.push_back(e);
      }
    }
    for (auto& fk : q.dst->fks_from(t)) {
      const Subst& k = q.keys.at(fk.name);
      const Name& t2 = fk.result;
      for (auto& rep : sat.carrier.at(t)) {
        Term img = sat.fk_table.at(fk.name).at(rep);
        Subst ps = pair_subst(t, rep);
        for (auto& [v2, s2] : q.tableau(t2).fr.vars) {
          Equation e;
          e.lhs = Term::app(out.pairs[t2].at({v2, img}));
          e.rhs = substitute(substitute(Term::var(v2), k), ps);
          eqs.push_back(e);
        }
      }
    }
  }
  out.inst = make_instance("coeval " + q.name + "(" + j->name + ")", q.src, gens, eqs);
  return out;
}

InstancePtr coeval(const UberFlower& q, const InstancePtr& j, Name out_name) {
  CoevalOutput out = coeval_full(q, j);
  if (out_name.empty()) return out.inst;
  auto renamed = std::make_shared<Instance>(*out.inst);
  renamed->name = std::move(out_name);
  return renamed;
}

namespace {

// Maps the copied type-algebra generators of the source instance into the
// target instance's type algebra, for transforms between (co)eval outputs.
void map_talg_gens(const SaturatedInstance& sat_i, const SaturatedInstance& sat_j, const Transform& h,
                   std::map<Name, Term>& gen_map) {
  for (auto& [key, n] : sat_i.obs_names) {
    const auto& [rep, att] = key;
    Term moved = sat_j.nf(h.apply(rep));
    gen_map[n] = Term::app(sat_j.obs_name(moved, att));
  }
  for (auto& g : sat_i.inst->type_gens()) gen_map[g.name] = sat_j.trans(h.apply(Term::app(g.name)));
}

}  // namespace

Transform eval_transform(const UberFlower& q, const Transform& h) {
  EvalOutput a = eval_full(q, h.src);
  EvalOutput b = eval_full(q, h.dst);
  Transform r;
  r.name = q.name + "(" + h.name + ")";
  r.src = a.inst;
  r.dst = b.inst;
  for (auto& [t, envs] : a.envs) {
    for (auto& env : envs) {
      Subst img;
      for (auto& [v, rep] : env) img[v] = b.in_sat->nf(h.apply(rep));
      r.gen_map[env_gen_name(env)] = Term::app(env_gen_name(img));
    }
  }
  map_talg_gens(*a.in_sat, *b.in_sat, h, r.gen_map);
  return r;
}

Transform coeval_transform(const UberFlower& q, const Transform& h) {
  CoevalOutput a = coeval_full(q, h.src);
  CoevalOutput b = coeval_full(q, h.dst);
  Transform r;
  r.name = "coeval " + q.name + "(" + h.name + ")";
  r.src = a.inst;
  r.dst = b.inst;
  for (auto& [t, m] : a.pairs)
    for (auto& [key, n] : m) {
      Term moved = b.in_sat->nf(h.apply(key.second));
      r.gen_map[n] = Term::app(b.pairs.at(t).at({key.first, moved}));
    }
  map_talg_gens(*a.in_sat, *b.in_sat, h, r.gen_map);
  return r;
}

QueryCheck validate_query_morphism(const QueryMorphism& m) {
  const UberFlower& q1 = *m.from;
  const UberFlower& q2 = *m.to;
  bool unknown = false;
  std::string ucond;
  for (auto& t : q1.dst->entities) {
    auto it = m.at.find(t);
    if (it == m.at.end()) return {QueryCheck::Verdict::Failed, "missing component at " + t};
    const Subst& h = it->second;
    const Tableau& tb1 = q1.tableau(t);
    const Tableau& tb2 = q2.tableau(t);
    std::string cond = "component at " + t;
    try {
      for (auto& [v, s] : tb1.fr.vars) {
        Name got = typecheck(q1.src->theory().sig, tb2.fr, h.at(v));
        if (got != s) fail(ErrKind::SortMismatch, "component sends " + v + " to sort " + got);
      }
      // where clauses of q1 must hold under the translation
      for (auto& e : tb1.wh) {
        Answer a = check_in_frozen(q2, t, substitute(e.lhs, h), substitute(e.rhs, h));
        if (a == Answer::NotEqual) return {QueryCheck::Verdict::Failed, cond + ": " + print_equation(e)};
        if (a == Answer::Unknown) unknown = true, ucond = cond;
      }
    } catch (const Error& err) {
      return {QueryCheck::Verdict::Failed, cond + " (" + err.what() + ")"};
    }
  }
  // compatibility with keys clauses
  for (auto& fk : q1.dst->fks) {
    const Name& t = fk.arg_sorts[0];
    const Name& t2 = fk.result;
    std::string cond = "keys compatibility for " + fk.name;
    for (auto& [v2, s2] : q1.tableau(t2).fr.vars) {
      Term lhs = substitute(substitute(Term::var(v2), m.at.at(t2)), q2.keys.at(fk.name));
      Term rhs = substitute(substitute(Term::var(v2), q1.keys.at(fk.name)), m.at.at(t));
      Answer a = check_in_frozen(q2, t, lhs, rhs);
      if (a == Answer::NotEqual) return {QueryCheck::Verdict::Failed, cond};
      if (a == Answer::Unknown) unknown = true, ucond = cond;
    }
  }
  // compatibility with return clauses
  for (auto& att : q1.dst->atts) {
    const Name& t = att.arg_sorts[0];
    std::string cond = "return compatibility for " + att.name;
    Answer a =
        check_in_frozen(q2, t, q2.returns.at(att.name), substitute(q1.returns.at(att.name), m.at.at(t)));
    if (a == Answer::NotEqual) return {QueryCheck::Verdict::Failed, cond};
    if (a == Answer::Unknown) unknown = true, ucond = cond;
  }
  if (unknown) return {QueryCheck::Verdict::Unknown, ucond};
  return {QueryCheck::Verdict::Verified, ""};
}

Transform eval_query_morphism(const QueryMorphism& m, const InstancePtr& i) {
  EvalOutput a = eval_full(*m.to, i);
  EvalOutput b = eval_full(*m.from, i);
  Transform r;
  r.name = "eval " + m.name + "(" + i->name + ")";
  r.src = a.inst;
  r.dst = b.inst;
  const SaturatedInstance& sat = *a.in_sat;
  for (auto& t : m.to->dst->entities) {
    const Subst& h = m.at.at(t);
    for (auto& env : a.envs[t]) {
      Subst img;
      for (auto& [v, s] : m.from->tableau(t).fr.vars) img[v] = sat.nf(substitute(h.at(v), env));
      r.gen_map[env_gen_name(env)] = Term::app(env_gen_name(img));
    }
  }
  // same input instance: the copied type algebra maps identically
  auto [talg_gens, talg_eqs] = talg_extension(sat);
  for (auto& g : talg_gens) r.gen_map[g.name] = Term::app(g.name);
  return r;
}

Transform coeval_query_morphism(const QueryMorphism& m, const InstancePtr& j) {
  CoevalOutput a = coeval_full(*m.from, j);
  CoevalOutput b = coeval_full(*m.to, j);
  Transform r;
  r.name = "coeval " + m.name + "(" + j->name + ")";
  r.src = a.inst;
  r.dst = b.inst;
  for (auto& [t, pm] : a.pairs) {
    const Subst& h = m.at.at(t);
    for (auto& [key, n] : pm) {
      Subst ps;
      for (auto& [v2, s2] : m.to->tableau(t).fr.vars) ps[v2] = Term::app(b.pairs.at(t).at({v2, key.second}));
      r.gen_map[n] = substitute(h.at(key.first), ps);
    }
  }
  auto [talg_gens, talg_eqs] = talg_extension(*a.in_sat);
  for (auto& g : talg_gens) r.gen_map[g.name] = Term::app(g.name);
  return r;
}

QueryPtr canonical_query(const SchemaMapping& f) {
  // Q^F : T -> S for F : S -> T; eval is Delta_F, coeval is Sigma_F.
  std::map<Name, Tableau> tableaux;
  std::map<Name, Term> returns;
  std::map<Name, Subst> keys;
  auto var_of = [](const Name& s) { return "v_" + s; };
  for (auto& s : f.src->entities) {
    Tableau tb;
    tb.fr.add(var_of(s), f.m.apply_sort(s));
    tableaux[s] = std::move(tb);
  }
  for (auto& fk : f.src->fks) {
    Subst k;
    Subst canon;
    canon[canonical_var(0)] = Term::var(var_of(fk.arg_sorts[0]));
    k[var_of(fk.result)] = substitute(f.m.symbol_map.at(fk.name), canon);
    keys[fk.name] = std::move(k);
  }
  for (auto& att : f.src->atts) {
    Subst canon;
    canon[canonical_var(0)] = Term::var(var_of(att.arg_sorts[0]));
    returns[att.name] = substitute(f.m.symbol_map.at(att.name), canon);
  }
  return make_query("Q^" + f.name, f.dst, f.src, std::move(tableaux), std::move(returns), std::move(keys));
}

namespace {

struct FrozenEnvQuery {
  // Result of tableau-izing Delta_F(y(t)): variables named per environment.
  Tableau tb;
  std::map<Name, Name> var_of_gen;   // eval generator name -> variable
  std::map<Name, Term> obs_def;      // y(t) observable -> term over variables
  std::vector<Equation> residual;    // join conditions from repeated pins
};

Term gens_to_vars(const Term& t, const std::map<Name, Name>& var_of_gen) {
  if (t.is_var) return t;
  if (t.args.empty()) {
    auto it = var_of_gen.find(t.head);
    if (it != var_of_gen.end()) return Term::var(it->second);
    return t;
  }
  Term r = t;
  for (auto& a : r.args) a = gens_to_vars(a, var_of_gen);
  return r;
}

Term apply_obs_defs(const Term& t, const std::map<Name, Term>& defs, bool* missing, const std::set<Name>& obs) {
  if (t.is_var) return t;
  if (t.args.empty()) {
    auto it = defs.find(t.head);
    if (it != defs.end()) return it->second;
    if (obs.count(t.head)) *missing = true;
    return t;
  }
  Term r = t;
  for (auto& a : r.args) a = apply_obs_defs(a, defs, missing, obs);
  return r;
}

}  // namespace

QueryPtr product_query(const SchemaMapping& f) {
  // Q_F : S -> T; eval is Pi_F, coeval is Delta_F. The frozen instance at t
  // is Delta_F(y(t)), with its quoted type-algebra constants eliminated by
  // their pinning equations; F must be surjective on attributes.
  QueryPtr qf = canonical_query(f);
  std::map<Name, Tableau> tableaux;
  std::map<Name, Term> returns;
  std::map<Name, Subst> keys;
  std::map<Name, EvalOutput> delta_y;
  std::map<Name, InstancePtr> y_inst;
  std::map<Name, FrozenEnvQuery> feq;

  auto y_gen = [&](const Name& t) {
    Name n = "v_" + t;
    while (f.dst->theory().sig.find(n)) n = "%" + n;
    return n;
  };

  for (auto& t : f.dst->entities) {
    InstancePtr y = make_instance("y(" + t + ")", f.dst, {{y_gen(t), {}, t, false}}, {});
    y_inst[t] = y;
    EvalOutput d = eval_full(*qf, y);
    FrozenEnvQuery fq;
    // variables, one per environment generator
    for (auto& s : f.src->entities) {
      const auto& envs = d.envs[s];
      for (size_t k = 0; k < envs.size(); k++) {
        Name v = "v_" + s + (envs.size() > 1 ? "_" + std::to_string(k + 1) : "");
        while (fq.tb.fr.sort_of(v)) v += "'";
        fq.var_of_gen[env_gen_name(envs[k])] = v;
        fq.tb.fr.add(v, s);
      }
    }
    std::set<Name> obs;
    for (auto& [key, n] : d.in_sat->obs_names) obs.insert(n);
    // classify the equations of Delta_F(y(t))
    for (auto& e : d.inst->eqs) {
      Term l = gens_to_vars(e.lhs, fq.var_of_gen);
      Term r = gens_to_vars(e.rhs, fq.var_of_gen);
      if (!r.is_var && r.args.empty() && obs.count(r.head)) {
        // att pin: first one defines the observable, later ones join
        auto it = fq.obs_def.find(r.head);
        if (it == fq.obs_def.end())
          fq.obs_def[r.head] = l;
        else {
          Equation join;
          join.lhs = l;
          join.rhs = it->second;
          fq.residual.push_back(join);
        }
      } else {
        Equation w;
        w.lhs = l;
        w.rhs = r;
        fq.residual.push_back(w);
      }
    }
    // where clause: residual equations with all observables eliminated
    for (auto& e : fq.residual) {
      bool missing = false;
      Equation w;
      w.lhs = apply_obs_defs(e.lhs, fq.obs_def, &missing, obs);
      w.rhs = apply_obs_defs(e.rhs, fq.obs_def, &missing, obs);
      if (missing)
        fail(ErrKind::NotAttributeSurjective,
             "mapping " + f.name + " is not surjective on attributes (unpinned observable in " + t + ")");
      fq.tb.wh.push_back(w);
    }
    delta_y[t] = std::move(d);
    feq[t] = std::move(fq);
    tableaux[t] = feq[t].tb;
  }
  for (auto& att : f.dst->atts) {
    const Name& t = att.arg_sorts[0];
    const EvalOutput& d = delta_y.at(t);
    Term rep = d.in_sat->nf(Term::app(y_inst.at(t)->gens[0].name));
    const Name& obs = d.in_sat->obs_name(rep, att.name);
    auto it = feq.at(t).obs_def.find(obs);
    if (it == feq.at(t).obs_def.end())
      fail(ErrKind::NotAttributeSurjective,
           "mapping " + f.name + " is not surjective on attributes (attribute " + att.name + ")");
    returns[att.name] = it->second;
  }
  for (auto& fk : f.dst->fks) {
    const Name& t = fk.arg_sorts[0];
    const Name& t2 = fk.result;
    // Delta_F(v_{t'} |-> v_t.fk) maps environments to environments.
    Transform h;
    h.name = "y_" + fk.name;
    h.src = y_inst.at(t2);
    h.dst = y_inst.at(t);
    h.gen_map[y_inst.at(t2)->gens[0].name] = Term::app(fk.name, {Term::app(y_inst.at(t)->gens[0].name)});
    Transform dh = eval_transform(*qf, h);
    Subst k;
    for (auto& [gname, var] : feq.at(t2).var_of_gen) {
      Term img = dh.gen_map.at(gname);
      k[var] = gens_to_vars(img, feq.at(t).var_of_gen);
    }
    keys[fk.name] = std::move(k);
  }
  return make_query("Q_" + f.name, f.src, f.dst, std::move(tableaux), std::move(returns), std::move(keys));
}

InstancePtr delta(const SchemaMapping& f, const InstancePtr& j, Name out_name) {
  return eval(*canonical_query(f), j, out_name.empty() ? "Delta_" + f.name + "(" + j->name + ")" : out_name);
}

InstancePtr pi(const SchemaMapping& f, const InstancePtr& i, Name out_name) {
  return eval(*product_query(f), i, out_name.empty() ? "Pi_" + f.name + "(" + i->name + ")" : out_name);
}

QueryPtr compose_queries(Name name, const UberFlower& q1, const UberFlower& q2) {
  if (q1.dst != q2.src && !theory_equal(q1.dst->theory(), q2.src->theory()))
    fail(ErrKind::SortMismatch, "compose: " + q2.name + " after " + q1.name + " do not meet in the middle");
  std::map<Name, Tableau> tableaux;
  std::map<Name, Term> returns;
  std::map<Name, Subst> keys;
  std::map<Name, CoevalOutput> cb;
  std::map<Name, std::map<Name, Name>> var_of_gen;  // entity -> pair gen -> var
  std::map<Name, std::map<Name, Term>> obs_def;     // entity -> observable -> term over vars

  for (auto& c : q2.dst->entities) {
    CoevalOutput co = coeval_full(q1, q2.frozen(c));
    Tableau tb;
    std::map<Name, Name>& v_of = var_of_gen[c];
    for (auto& [t, pm] : co.pairs)
      for (auto& [key, n] : pm) {
        v_of[n] = n;  // pair generators become the composed for-variables
        tb.fr.add(n, co.inst->theory().sig.find(n)->result);
      }
    std::set<Name> obs;
    for (auto& [key, n] : co.in_sat->obs_names) obs.insert(n);
    std::vector<Equation> residual;
    for (auto& e : co.inst->eqs) {
      Term l = gens_to_vars(e.lhs, v_of);
      Term r = gens_to_vars(e.rhs, v_of);
      if (!l.is_var && l.args.empty() && obs.count(l.head) && !contains_symbol(r, l.head)) {
        auto it = obs_def[c].find(l.head);
        if (it == obs_def[c].end()) {
          obs_def[c][l.head] = r;
          continue;
        }
      }
      Equation w;
      w.lhs = l;
      w.rhs = r;
      residual.push_back(w);
    }
    for (auto& e : residual) {
      bool missing = false;
      Equation w;
      w.lhs = apply_obs_defs(e.lhs, obs_def[c], &missing, obs);
      w.rhs = apply_obs_defs(e.rhs, obs_def[c], &missing, obs);
      if (missing) fail(ErrKind::Unsupported, "composition leaves an undetermined observable at " + c);
      tb.wh.push_back(w);
    }
    cb[c] = std::move(co);
    tableaux[c] = std::move(tb);
  }
  for (auto& att : q2.dst->atts) {
    const Name& c = att.arg_sorts[0];
    const CoevalOutput& co = cb.at(c);
    Subst fz = freeze_subst(c, q2.tableau(c).fr);
    Term ground = substitute(q2.returns.at(att.name), fz);
    Term talg_term = co.in_sat->trans(ground);
    bool missing = false;
    std::set<Name> obs;
    for (auto& [key, n] : co.in_sat->obs_names) obs.insert(n);
    Term r = apply_obs_defs(gens_to_vars(talg_term, var_of_gen.at(c)), obs_def.at(c), &missing, obs);
    if (missing) fail(ErrKind::Unsupported, "composition leaves an undetermined observable in return " + att.name);
    returns[att.name] = r;
  }
  for (auto& fk : q2.dst->fks) {
    const Name& c = fk.arg_sorts[0];
    const Name& c2 = fk.result;
    Transform tf;
    tf.name = "keys_" + fk.name;
    tf.src = q2.frozen(c2);
    tf.dst = q2.frozen(c);
    Subst fz = freeze_subst(c, q2.tableau(c).fr);
    for (auto& [v2, s2] : q2.tableau(c2).fr.vars)
      tf.gen_map[freeze_name(c2, v2)] = substitute(q2.keys.at(fk.name).at(v2), fz);
    Transform ct = coeval_transform(q1, tf);
    Subst k;
    for (auto& [gname, var] : var_of_gen.at(c2)) k[var] = gens_to_vars(ct.gen_map.at(gname), var_of_gen.at(c));
    keys[fk.name] = std::move(k);
  }
  return make_query(std::move(name), q1.src, q2.dst, std::move(tableaux), std::move(returns), std::move(keys));
}

Cospan query_to_cospan(const UberFlower& q) {
  const Schema& s = *q.src;
  const Schema& t = *q.dst;
  std::vector<Name> entities = s.entities;
  std::set<Name> taken(entities.begin(), entities.end());
  auto fresh_name = [&](Name base, std::set<Name>& pool) {
    while (pool.count(base)) base += "_" + q.name;
    pool.insert(base);
    return base;
  };
  std::map<Name, Name> ecopy;
  for (auto& e : t.entities) {
    Name n = fresh_name(e, taken);
    ecopy[e] = n;
    entities.push_back(n);
  }
  std::set<Name> sym_taken;
  for (auto& d : s.theory().sig.symbols) sym_taken.insert(d.name);
  std::vector<SymbolDecl> symbols = s.fks;
  for (auto& d : s.atts) symbols.push_back(d);
  std::map<Name, Name> fkcopy;
  for (auto& d : t.fks) {
    Name n = fresh_name(d.name, sym_taken);
    fkcopy[d.name] = n;
    symbols.push_back({n, {ecopy.at(d.arg_sorts[0])}, ecopy.at(d.result), false});
  }
  std::map<Name, std::map<Name, Name>> vfk;  // entity -> variable -> fresh fk
  for (auto& e : t.entities)
    for (auto& [v, srt] : q.tableau(e).fr.vars) {
      Name n = fresh_name(v, sym_taken);
      vfk[e][v] = n;
      symbols.push_back({n, {ecopy.at(e)}, srt, false});
    }

  auto sigma_x = [&](const Name& e, const Term& x) {
    Subst su;
    for (auto& [v, srt] : q.tableau(e).fr.vars) su[v] = Term::app(vfk.at(e).at(v), {x});
    return su;
  };

  std::vector<Equation> eqs = s.eqs;
  // target equations, carried over to the copies
  for (auto& e : t.eqs) {
    const auto& [v, ent] = e.ctx.vars[0];
    Equation g;
    g.ctx.add(v, ecopy.at(ent));
    if (t.is_entity(e.sort)) {
      auto ren = [&](const Term& u) {
        auto [var, path] = decompose_path(u);
        Term out = Term::var(var);
        for (auto& fk : path) out = Term::app(fkcopy.at(fk), {out});
        return out;
      };
      g.lhs = ren(e.lhs);
      g.rhs = ren(e.rhs);
    } else {
      Subst sx = sigma_x(ent, Term::var(v));
      g.lhs = substitute(translate_type_term(q, e.lhs), sx);
      g.rhs = substitute(translate_type_term(q, e.rhs), sx);
    }
    eqs.push_back(g);
  }
  // where clauses under sigma_x
  for (auto& e : t.entities) {
    Subst sx = sigma_x(e, Term::var("x"));
    for (auto& w : q.tableau(e).wh) {
      Equation g;
      g.ctx.add("x", ecopy.at(e));
      g.lhs = substitute(w.lhs, sx);
      g.rhs = substitute(w.rhs, sx);
      eqs.push_back(g);
    }
  }
  // x.fk.(v',s',t') = v'[fk] sigma_x
  for (auto& fk : t.fks) {
    const Name& te = fk.arg_sorts[0];
    const Name& t2 = fk.result;
    Subst sx = sigma_x(te, Term::var("x"));
    for (auto& [v2, s2] : q.tableau(t2).fr.vars) {
      Equation g;
      g.ctx.add("x", ecopy.at(te));
      g.lhs = Term::app(vfk.at(t2).at(v2), {Term::app(fkcopy.at(fk.name), {Term::var("x")})});
      g.rhs = substitute(substitute(Term::var(v2), q.keys.at(fk.name)), sx);
      eqs.push_back(g);
    }
  }

  Cospan out;
  out.apex = make_schema("X_" + q.name, s.ts, entities, symbols, eqs, s.limits);
  {
    std::map<Name, Name> em;
    std::map<Name, Term> sm;
    for (auto& e : s.entities) em[e] = e;
    for (auto& d : s.fks) sm[d.name] = Term::app(d.name, {Term::var(canonical_var(0))});
    for (auto& d : s.atts) sm[d.name] = Term::app(d.name, {Term::var(canonical_var(0))});
    out.f = make_mapping("F_" + q.name, q.src, out.apex, em, sm);
  }
  {
    std::map<Name, Name> em;
    std::map<Name, Term> sm;
    for (auto& e : t.entities) em[e] = ecopy.at(e);
    for (auto& d : t.fks) sm[d.name] = Term::app(fkcopy.at(d.name), {Term::var(canonical_var(0))});
    for (auto& d : t.atts) {
      Subst sx = sigma_x(d.arg_sorts[0], Term::var(canonical_var(0)));
      sm[d.name] = substitute(q.returns.at(d.name), sx);
    }
    out.g = make_mapping("G_" + q.name, q.dst, out.apex, em, sm);
  }
  return out;
}

Transform unit(const UberFlower& q, const InstancePtr& j) {
  CoevalOutput cc = coeval_full(q, j);
  EvalOutput ev = eval_full(q, cc.inst);
  SatPtr jsat = cc.in_sat;
  SatPtr ccsat = ev.in_sat;
  Transform r;
  r.name = "unit " + q.name + "(" + j->name + ")";
  r.src = j;
  r.dst = ev.inst;
  for (auto& g : j->entity_gens()) {
    const Name& t = g.result;
    Term rep = jsat->nf(Term::app(g.name));
    Subst env;
    for (auto& [v, s] : q.tableau(t).fr.vars)
      env[v] = ccsat->nf(Term::app(cc.pairs.at(t).at({v, rep})));
    r.gen_map[g.name] = Term::app(env_gen_name(env));
  }
  for (auto& g : j->type_gens()) r.gen_map[g.name] = Term::app(g.name);
  // observables of J are copied through coeval and then through eval
  for (auto& [key, n] : jsat->obs_names) r.gen_map[n] = Term::app(n);
  return r;
}

namespace {

// Rewrites a type-algebra term back into a term of the instance itself:
// observables become attribute applications at their representatives.
Term expand_obs(const SaturatedInstance& sat, const Term& t) {
  if (t.is_var) return t;
  if (t.args.empty()) {
    for (auto& [key, n] : sat.obs_names)
      if (n == t.head) return Term::app(key.second, {key.first});
    return t;
  }
  Term r = t;
  for (auto& a : r.args) a = expand_obs(sat, a);
  return r;
}

}  // namespace

Transform counit(const UberFlower& q, const InstancePtr& i) {
  EvalOutput ev = eval_full(q, i);
  CoevalOutput cc = coeval_full(q, ev.inst);
  SatPtr isat = ev.in_sat;
  SatPtr evsat = cc.in_sat;
  std::map<Name, Subst> env_by_gen;
  for (auto& [t, envs] : ev.envs)
    for (auto& env : envs) env_by_gen[env_gen_name(env)] = env;
  Transform r;
  r.name = "counit " + q.name + "(" + i->name + ")";
  r.src = cc.inst;
  r.dst = i;
  for (auto& [t, pm] : cc.pairs)
    for (auto& [key, n] : pm) {
      // key.second is a carrier representative of eval(Q)(I): a generator.
      const Subst& env = env_by_gen.at(key.second.head);
      r.gen_map[n] = env.at(key.first);
    }
  for (auto& g : cc.inst->type_gens()) {
    // Either an eval-output observable or a copied talg(I) generator.
    bool done = false;
    for (auto& [key, n] : evsat->obs_names) {
      if (n != g.name) continue;
      const Subst& env = env_by_gen.at(key.first.head);
      r.gen_map[g.name] = expand_obs(*isat, isat->trans(substitute(q.returns.at(key.second), env)));
      done = true;
      break;
    }
    if (!done) r.gen_map[g.name] = expand_obs(*isat, Term::app(g.name));
  }
  return r;
}

Transform counit_sigma_delta(const SchemaMapping& f, const InstancePtr& i) {
  QueryPtr qf = canonical_query(f);
  EvalOutput d = eval_full(*qf, i);
  SatPtr isat = d.in_sat;
  Transform r;
  r.name = "counit_sd " + f.name + "(" + i->name + ")";
  r.src = sigma(f, d.inst);
  r.dst = i;
  for (auto& [t, envs] : d.envs)
    for (auto& env : envs) r.gen_map[env_gen_name(env)] = env.begin()->second;
  for (auto& g : d.inst->type_gens()) r.gen_map[g.name] = expand_obs(*isat, Term::app(g.name));
  return r;
}

Transform er_leg(const SchemaMapping& fn, const QueryMorphism& qn, const InstancePtr& iprime, const InstancePtr& in) {
  EvalOutput evq = eval_full(*qn.to, iprime);
  SatPtr psat = evq.in_sat;
  SatPtr nsat = saturate_cached(in);
  const Signature& nsig = in->theory().sig;
  auto reinterpret = [&](const Term& t) -> std::optional<Term> {
    try {
      typecheck(nsig, Context{}, t);
      return t;
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  Transform r;
  r.name = "er_leg " + fn.name + "(" + iprime->name + ")";
  r.src = sigma(fn, evq.inst);
  r.dst = in;
  for (auto& [t, envs] : evq.envs) {
    const Subst& h = qn.at.at(t);
    const Context& fr_n = qn.from->tableau(t).fr;
    if (fr_n.vars.size() != 1) fail(ErrKind::Unsupported, "er_leg needs single-variable tableaux in " + qn.from->name);
    for (auto& env : envs) {
      Term img = psat->nf(substitute(h.at(fr_n.vars[0].first), env));
      auto re = reinterpret(img);
      if (!re) fail(ErrKind::Unsupported, "er_leg: " + print_term(img) + " is not a term of " + in->name);
      r.gen_map[env_gen_name(env)] = nsat->nf(*re);
    }
  }
  for (auto& g : evq.inst->type_gens()) {
    Term expanded = expand_obs(*psat, Term::app(g.name));
    if (auto re = reinterpret(expanded)) {
      r.gen_map[g.name] = *re;
      continue;
    }
    Term v = psat->talg_proc->nf(Term::app(g.name));
    if (auto re = reinterpret(v)) {
      r.gen_map[g.name] = *re;
      continue;
    }
    fail(ErrKind::Unsupported, "er_leg: no image in " + in->name + " for " + g.name);
  }
  return r;
}

}  // namespace cq
