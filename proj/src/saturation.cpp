#include "cq/saturation.hpp"

#include <algorithm>
#include <mutex>

namespace cq {

Theory entity_fragment(const Instance& inst) {
  const Schema& s = *inst.schema;
  Theory th;
  for (auto& e : s.entities) th.sig.add_sort(e);
  for (auto& f : s.fks) th.sig.add_symbol(f);
  for (auto& g : inst.entity_gens()) th.sig.add_symbol(g);
  for (auto& e : s.eqs)
    if (s.is_entity(e.sort)) th.eqs.push_back(e);
  for (auto& e : inst.eqs)
    if (s.is_entity(e.sort)) th.eqs.push_back(e);
  return th;
}

const Name& SaturatedInstance::obs_name(const Term& rep, const Name& att) const {
  auto it = obs_names.find({rep, att});
  if (it == obs_names.end())
    fail(ErrKind::NotInModel, "no observable for (" + print_term(rep) + ", " + att + ")");
  return it->second;
}

Term SaturatedInstance::nf(const Term& t) const {
  Term n = entity_proc->nf(t);
  auto it = rep_by_nf.find(n);
  if (it == rep_by_nf.end())
    fail(ErrKind::NotInModel, "term " + print_term(t) + " has no representative in the saturated model");
  return it->second;
}

Term SaturatedInstance::trans(const Term& t) const {
  if (t.is_var) fail(ErrKind::SortMismatch, "trans expects a ground term");
  const Schema& s = *inst->schema;
  if (t.args.size() == 1 && s.att(t.head)) {
    // observable: normalize the entity prefix
    Term rep = nf(t.args[0]);
    return Term::app(obs_name(rep, t.head));
  }
  if (s.is_entity(typecheck(inst->theory().sig, Context{}, t)))
    fail(ErrKind::SortMismatch, "trans applied to entity-sorted term " + print_term(t));
  Term r = t;
  for (auto& a : r.args) a = trans(a);
  return r;
}

Answer SaturatedInstance::ground_equal(const Term& a, const Term& b) const {
  Name sa = typecheck(inst->theory().sig, Context{}, a);
  if (inst->schema->is_entity(sa)) return entity_proc->equal(a, b);
  return talg_proc->equal(trans(a), trans(b));
}

long SaturatedInstance::total_elems() const {
  long n = 0;
  for (auto& [e, c] : carrier) n += (long)c.size();
  return n;
}

SatPtr saturate(const InstancePtr& inst, const SatLimits& lim) {
  auto sat = std::make_shared<SaturatedInstance>();
  sat->inst = inst;
  const Schema& schema = *inst->schema;

  Theory ie = entity_fragment(*inst);
  CompletionLimits plim = lim.prover;
  RewriteSystem rs = complete(ie, default_ordering(ie.sig), plim);
  if (rs.status != CompletionStatus::Complete)
    fail(ErrKind::SaturationDiverged,
         "entity theory of " + inst->name + " did not complete; cannot decide the word problem");
  sat->entity_proc = std::make_shared<DecisionProcedure>(ie, std::move(rs));

  for (auto& e : schema.entities) sat->carrier[e];  // ensure empty carriers exist

  // Stage 0: generator constants, smallest-first.
  std::vector<std::pair<Term, Name>> frontier;  // (rep, entity)
  {
    std::vector<std::pair<Term, Name>> cands;
    for (auto& g : inst->entity_gens()) cands.push_back({Term::app(g.name), g.result});
    std::sort(cands.begin(), cands.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (auto& [t, e] : cands) {
      Term n = sat->entity_proc->nf(t);
      if (sat->rep_by_nf.count(n)) continue;
      sat->rep_by_nf[n] = t;
      sat->carrier[e].push_back(t);
      frontier.push_back({t, e});
    }
  }

  // Follow-on stages: one foreign key applied to the previous stage's news.
  int stage = 0;
  while (!frontier.empty()) {
    if (++stage > lim.max_stages)
      fail(ErrKind::SaturationDiverged, "instance " + inst->name + " exceeded " + std::to_string(lim.max_stages) +
                                            " saturation stages");
    std::vector<std::pair<Term, Name>> cands;
    for (auto& [rep, e] : frontier)
      for (auto& fk : schema.fks_from(e)) cands.push_back({Term::app(fk.name, {rep}), fk.result});
    std::sort(cands.begin(), cands.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<std::pair<Term, Name>> next;
    for (auto& [t, e] : cands) {
      Term n = sat->entity_proc->nf(t);
      if (sat->rep_by_nf.count(n)) continue;
      sat->rep_by_nf[n] = t;
      sat->carrier[e].push_back(t);
      next.push_back({t, e});
    }
    if (sat->total_elems() > lim.max_elems)
      fail(ErrKind::SaturationDiverged, "instance " + inst->name + " exceeded the element budget");
    frontier = std::move(next);
  }

  // Foreign-key tables; closed by construction.
  for (auto& e : schema.entities)
    for (auto& fk : schema.fks_from(e))
      for (auto& rep : sat->carrier[e]) sat->fk_table[fk.name][rep] = sat->nf(Term::app(fk.name, {rep}));

  // Type algebra: typeside, skolem constants, then observables. Observables
  // are named after the printed path; primes disambiguate collisions with
  // already-declared constants (which arise in pivot round-trips).
  Theory& talg = sat->talg;
  talg = schema.ts->theory;
  for (auto& g : inst->type_gens()) talg.sig.add_symbol(g);
  for (auto& e : schema.entities)
    for (auto& rep : sat->carrier[e])
      for (auto& att : schema.atts_from(e)) {
        Name n = print_term(rep) + "." + att.name;
        while (talg.sig.find(n)) n += "'";
        sat->obs_names[{rep, att.name}] = n;
        talg.sig.add_symbol({n, {}, att.result, false});
      }
  for (auto& e : inst->eqs) {
    if (schema.is_entity(e.sort)) continue;
    Equation img;
    img.lhs = sat->trans(e.lhs);
    img.rhs = sat->trans(e.rhs);
    img.sort = e.sort;
    talg.eqs.push_back(img);
  }
  // Schema equations at type sorts, instantiated at carrier elements.
  for (auto& e : schema.eqs) {
    if (schema.is_entity(e.sort)) continue;
    const auto& [v, ent] = e.ctx.vars[0];
    for (auto& rep : sat->carrier[ent]) {
      Subst s;
      s[v] = rep;
      Equation img;
      img.lhs = sat->trans(substitute(e.lhs, s));
      img.rhs = sat->trans(substitute(e.rhs, s));
      img.sort = e.sort;
      talg.eqs.push_back(img);
    }
  }
  sat->talg_proc = make_procedure(talg, plim);

  // Attribute tables.
  for (auto& e : schema.entities)
    for (auto& att : schema.atts_from(e))
      for (auto& rep : sat->carrier[e]) sat->att_table[att.name][rep] = Term::app(sat->obs_name(rep, att.name));

  // Inconsistency warning: a completed rule between pure typeside terms that
  // the typeside itself refutes means the instance proves e.g. 1 = 2.
  {
    std::set<Name> ty_syms;
    for (auto& d : schema.ts->theory.sig.symbols) ty_syms.insert(d.name);
    auto pure_ty = [&](const Term& t) {
      struct Scan {
        const std::set<Name>& syms;
        bool ok = true;
        void go(const Term& u) {
          if (!u.is_var && !syms.count(u.head)) ok = false;
          for (auto& a : u.args) go(a);
        }
      } scan{ty_syms};
      scan.go(t);
      return scan.ok;
    };
    for (auto& r : sat->talg_proc->system().rules) {
      std::set<Name> vs;
      vars_of(r.lhs, vs);
      if (!vs.empty()) continue;
      if (pure_ty(r.lhs) && pure_ty(r.rhs) &&
          schema.ts->proc().equal(r.lhs, r.rhs) == Answer::NotEqual) {
        sat->warnings.push_back("inconsistent instance: proves " + print_term(r.lhs) + " = " + print_term(r.rhs));
        break;
      }
    }
  }

  return sat;
}

namespace {
std::mutex g_cache_mu;
std::map<const Instance*, std::pair<std::weak_ptr<const Instance>, SatPtr>> g_cache;
}  // namespace

SatPtr saturate_cached(const InstancePtr& inst, const SatLimits& lim) {
  {
    std::lock_guard<std::mutex> g(g_cache_mu);
    auto it = g_cache.find(inst.get());
    if (it != g_cache.end() && it->second.first.lock() == inst) return it->second.second;
  }
  SatPtr sat = saturate(inst, lim);
  std::lock_guard<std::mutex> g(g_cache_mu);
  g_cache[inst.get()] = {inst, sat};
  return sat;
}

SatPtr simplify_display(const SatPtr& sat) {
  auto out = std::make_shared<SaturatedInstance>(*sat);
  for (auto& [att, table] : out->att_table)
    for (auto& [rep, cell] : table) cell = sat->talg_proc->nf(cell);
  return out;
}

}  // namespace cq
