#include "cq/catdata.hpp"

#include <algorithm>

#include "cq/saturation.hpp"

namespace cq {

const DecisionProcedure& TypeSide::proc() const {
  if (!proc_) proc_ = make_procedure(theory, limits);
  return *proc_;
}

const Theory& Schema::theory() const {
  if (!theory_) {
    auto th = std::make_shared<Theory>();
    th->sig = ts->theory.sig;
    for (auto& e : entities) th->sig.add_sort(e);
    for (auto& f : fks) th->sig.add_symbol(f);
    for (auto& a : atts) th->sig.add_symbol(a);
    th->eqs = ts->theory.eqs;
    for (auto& e : eqs) th->eqs.push_back(e);
    theory_ = th;
  }
  return *theory_;
}

const DecisionProcedure& Schema::proc() const {
  if (!proc_) proc_ = make_procedure(theory(), limits);
  return *proc_;
}

bool Schema::is_entity(const Name& s) const {
  return std::find(entities.begin(), entities.end(), s) != entities.end();
}

const SymbolDecl* Schema::fk(const Name& f) const {
  for (auto& d : fks)
    if (d.name == f) return &d;
  return nullptr;
}

const SymbolDecl* Schema::att(const Name& f) const {
  for (auto& d : atts)
    if (d.name == f) return &d;
  return nullptr;
}

std::vector<SymbolDecl> Schema::fks_from(const Name& entity) const {
  std::vector<SymbolDecl> out;
  for (auto& d : fks)
    if (d.arg_sorts[0] == entity) out.push_back(d);
  return out;
}

std::vector<SymbolDecl> Schema::atts_from(const Name& entity) const {
  std::vector<SymbolDecl> out;
  for (auto& d : atts)
    if (d.arg_sorts[0] == entity) out.push_back(d);
  return out;
}

SchemaPtr make_schema(Name name, TypeSidePtr ts, std::vector<Name> entities, std::vector<SymbolDecl> symbols,
                      std::vector<Equation> eqs, CompletionLimits lim) {
  auto s = std::make_shared<Schema>();
  s->name = std::move(name);
  s->ts = std::move(ts);
  s->limits = lim;
  for (auto& e : entities) {
    if (s->ts->theory.sig.has_sort(e)) fail(ErrKind::DuplicateName, "entity collides with type: " + e);
    if (std::find(s->entities.begin(), s->entities.end(), e) != s->entities.end())
      fail(ErrKind::DuplicateName, "entity declared twice: " + e);
    s->entities.push_back(e);
  }
  auto is_entity = [&](const Name& x) {
    return std::find(s->entities.begin(), s->entities.end(), x) != s->entities.end();
  };
  for (auto& d : symbols) {
    if (d.arg_sorts.size() != 1)
      fail(ErrKind::NonUnarySymbol, "schema symbol " + d.name + " must be unary, has arity " +
                                        std::to_string(d.arg_sorts.size()));
    if (!is_entity(d.arg_sorts[0])) fail(ErrKind::TypeDomain, "schema symbol " + d.name + " has a type as domain");
    if (is_entity(d.result))
      s->fks.push_back(d);
    else if (s->ts->theory.sig.has_sort(d.result))
      s->atts.push_back(d);
    else
      fail(ErrKind::UnknownSort, "unknown result sort " + d.result + " of " + d.name);
  }
  // Equation contexts: a single entity-sorted variable.
  const Theory& th = s->theory();
  for (auto& e : eqs) {
    if (e.ctx.vars.size() != 1 || !is_entity(e.ctx.vars[0].second))
      fail(ErrKind::BadEquationContext,
           "schema equation needs context {v : entity}: " + print_equation(e, &th.sig));
    Equation checked = make_equation(th.sig, e.ctx, e.lhs, e.rhs);
    s->eqs.push_back(checked);
  }
  s->theory_.reset();  // rebuild with equations included
  return s;
}

const Theory& Instance::theory() const {
  if (!theory_) {
    auto th = std::make_shared<Theory>(schema->theory());
    for (auto& g : gens) th->sig.add_symbol(g);
    for (auto& e : eqs) th->eqs.push_back(e);
    theory_ = th;
  }
  return *theory_;
}

std::vector<SymbolDecl> Instance::entity_gens() const {
  std::vector<SymbolDecl> out;
  for (auto& g : gens)
    if (schema->is_entity(g.result)) out.push_back(g);
  return out;
}

std::vector<SymbolDecl> Instance::type_gens() const {
  std::vector<SymbolDecl> out;
  for (auto& g : gens)
    if (!schema->is_entity(g.result)) out.push_back(g);
  return out;
}

InstancePtr make_instance(Name name, SchemaPtr schema, std::vector<SymbolDecl> gens, std::vector<Equation> eqs) {
  auto i = std::make_shared<Instance>();
  i->name = std::move(name);
  i->schema = std::move(schema);
  Signature sig = i->schema->theory().sig;
  for (auto& g : gens) {
    if (!g.arg_sorts.empty())
      fail(ErrKind::NonConstantSymbol, "instance symbol " + g.name + " must be a 0-ary generator");
    if (!sig.has_sort(g.result)) fail(ErrKind::UnknownSort, "unknown sort " + g.result + " of generator " + g.name);
    sig.add_symbol(g);
    i->gens.push_back(g);
  }
  for (auto& e : eqs) {
    if (!e.ctx.empty())
      fail(ErrKind::NonGroundEquation, "instance equation must be ground: " + print_equation(e, &sig));
    i->eqs.push_back(make_equation(sig, Context{}, e.lhs, e.rhs));
  }
  return i;
}

SchemaMapping make_mapping(Name name, SchemaPtr src, SchemaPtr dst, const std::map<Name, Name>& entity_map,
                           const std::map<Name, Term>& symbol_images) {
  SchemaMapping f;
  f.name = std::move(name);
  f.src = src;
  f.dst = dst;
  // identity on the shared typeside
  for (auto& s : src->ts->theory.sig.sorts) f.m.sort_map[s] = s;
  for (auto& d : src->ts->theory.sig.symbols) {
    std::vector<Term> vs;
    for (size_t k = 0; k < d.arg_sorts.size(); k++) vs.push_back(Term::var(canonical_var(k)));
    f.m.symbol_map[d.name] = Term::app(d.name, vs);
  }
  for (auto& [s, img] : entity_map) {
    if (!src->is_entity(s)) fail(ErrKind::NotIdentityOnBase, "mapping " + f.name + " remaps non-entity sort " + s);
    if (!dst->is_entity(img)) fail(ErrKind::UnknownSort, "mapping " + f.name + ": " + img + " is not an entity");
    f.m.sort_map[s] = img;
  }
  for (auto& e : src->entities)
    if (!f.m.sort_map.count(e)) fail(ErrKind::MissingMapping, "mapping " + f.name + " misses entity " + e);
  for (auto& [sym, img] : symbol_images) {
    const SymbolDecl* d = src->fk(sym);
    if (!d) d = src->att(sym);
    if (!d) fail(ErrKind::NotIdentityOnBase, "mapping " + f.name + " remaps non-schema symbol " + sym);
    Context ctx;
    ctx.add(canonical_var(0), f.m.sort_map.at(d->arg_sorts[0]));
    Name got = typecheck(dst->theory().sig, ctx, img);
    Name want = f.m.sort_map.count(d->result) ? f.m.sort_map.at(d->result) : d->result;
    if (got != want)
      fail(ErrKind::SortMismatch, "mapping " + f.name + ": image of " + sym + " has sort " + got + ", expected " + want);
    f.m.symbol_map[sym] = img;
  }
  for (auto& d : src->fks)
    if (!f.m.symbol_map.count(d.name)) fail(ErrKind::MissingMapping, "mapping " + f.name + " misses fk " + d.name);
  for (auto& d : src->atts)
    if (!f.m.symbol_map.count(d.name)) fail(ErrKind::MissingMapping, "mapping " + f.name + " misses attribute " + d.name);
  return f;
}

MorphismCheck validate_mapping(const SchemaMapping& f) {
  // Typeside axioms map to themselves; only schema equations carry obligations.
  Theory src_schema_only;
  src_schema_only.sig = f.src->theory().sig;
  src_schema_only.eqs = f.src->eqs;
  return check_theory_morphism(src_schema_only, f.m, f.dst->proc());
}

SchemaMapping compose_mappings(Name name, const SchemaMapping& g, const SchemaMapping& f) {
  SchemaMapping r;
  r.name = std::move(name);
  r.src = f.src;
  r.dst = g.dst;
  for (auto& [s, img] : f.m.sort_map) r.m.sort_map[s] = g.m.apply_sort(img);
  for (auto& [sym, img] : f.m.symbol_map) r.m.symbol_map[sym] = g.m.apply(img);
  return r;
}

SchemaMapping identity_mapping(SchemaPtr s) {
  SchemaMapping f;
  f.name = "id_" + s->name;
  f.src = s;
  f.dst = s;
  f.m = SigMorphism::identity(s->theory().sig);
  return f;
}

Term Transform::apply(const Term& t) const {
  if (t.is_var) return t;
  if (t.args.empty()) {
    auto it = gen_map.find(t.head);
    if (it != gen_map.end()) return it->second;
    return t;
  }
  Term r = t;
  for (auto& a : r.args) a = apply(a);
  return r;
}

MorphismCheck validate_transform(const Transform& h) {
  if (h.src->schema != h.dst->schema && !theory_equal(h.src->schema->theory(), h.dst->schema->theory()))
    fail(ErrKind::SortMismatch, "transform " + h.name + " between instances on different schemas");
  const Signature& dsig = h.dst->theory().sig;
  for (auto& g : h.src->gens) {
    auto it = h.gen_map.find(g.name);
    if (it == h.gen_map.end()) fail(ErrKind::MissingMapping, "transform " + h.name + " misses generator " + g.name);
    Name got = typecheck(dsig, Context{}, it->second);
    if (got != g.result)
      fail(ErrKind::SortMismatch,
           "transform " + h.name + ": image of " + g.name + " has sort " + got + ", expected " + g.result);
  }
  SatPtr sat = saturate_cached(h.dst);
  bool unknown = false;
  for (auto& e : h.src->eqs) {
    Answer a = sat->ground_equal(h.apply(e.lhs), h.apply(e.rhs));
    if (a == Answer::NotEqual) return {MorphismCheck::Verdict::Failed, e};
    if (a == Answer::Unknown) unknown = true;
  }
  if (unknown) return {MorphismCheck::Verdict::Unknown, std::nullopt};
  return {MorphismCheck::Verdict::Verified, std::nullopt};
}

Transform compose_transforms(Name name, const Transform& g, const Transform& f) {
  if (f.dst != g.src && !theory_equal(f.dst->theory(), g.src->theory()))
    fail(ErrKind::SortMismatch, "transform composition " + name + ": theories do not match (" + f.name + " then " +
                                    g.name + ")");
  Transform r;
  r.name = std::move(name);
  r.src = f.src;
  r.dst = g.dst;
  for (auto& [gen, img] : f.gen_map) r.gen_map[gen] = g.apply(img);
  return r;
}

Transform identity_transform(InstancePtr i) {
  Transform h;
  h.name = "id_" + i->name;
  h.src = i;
  h.dst = i;
  for (auto& g : i->gens) h.gen_map[g.name] = Term::app(g.name);
  return h;
}

InstancePtr sigma(const SchemaMapping& f, const InstancePtr& i, Name out_name) {
  if (i->schema != f.src && !theory_equal(i->schema->theory(), f.src->theory()))
    fail(ErrKind::SortMismatch, "sigma: instance " + i->name + " is not on the source of " + f.name);
  // Extend the mapping with identity on generators; sorts get relocated.
  SigMorphism m = f.m;
  std::vector<SymbolDecl> gens;
  for (auto& g : i->gens) {
    m.symbol_map[g.name] = Term::app(g.name);
    gens.push_back({g.name, {}, m.apply_sort(g.result), false});
  }
  std::vector<Equation> eqs;
  for (auto& e : i->eqs) {
    Equation img;
    img.ctx = Context{};
    img.lhs = m.apply(e.lhs);
    img.rhs = m.apply(e.rhs);
    eqs.push_back(img);
  }
  return make_instance(out_name.empty() ? "Sigma_" + f.name + "_" + i->name : out_name, f.dst, gens, eqs);
}

Transform sigma_transform(const SchemaMapping& f, const Transform& h) {
  Transform r;
  r.name = "Sigma_" + f.name + "_" + h.name;
  r.src = sigma(f, h.src);
  r.dst = sigma(f, h.dst);
  SigMorphism m = f.m;
  for (auto& g : h.dst->gens) m.symbol_map[g.name] = Term::app(g.name);
  for (auto& [gen, img] : h.gen_map) r.gen_map[gen] = m.apply(img);
  return r;
}

ConsReport check_conservativity(const Theory& base, const Signature& ext_sig, const std::vector<SymbolDecl>& new_gens,
                                const std::vector<Equation>& new_eqs, const CompletionLimits& lim) {
  std::set<Name> gens;
  for (auto& g : new_gens) gens.insert(g.name);
  std::vector<Equation> work = new_eqs;

  // Generator elimination is 0-ary symbol replacement, not variable substitution.
  struct Repl {
    Name g;
    Term def;
    Term go(const Term& t) const {
      if (!t.is_var && t.args.empty() && t.head == g) return def;
      Term r = t;
      for (auto& a : r.args) a = go(a);
      return r;
    }
  };
  auto eliminate = [&](const Name& g, const Term& def) {
    Repl repl{g, def};
    for (auto& e : work) {
      e.lhs = repl.go(e.lhs);
      e.rhs = repl.go(e.rhs);
    }
  };

  // Repeatedly substitute away g = t (declaration order, first usable equation).
  bool changed = true;
  std::set<size_t> used;
  while (changed) {
    changed = false;
    for (size_t k = 0; k < work.size(); k++) {
      if (used.count(k)) continue;
      const Term &l = work[k].lhs, &r = work[k].rhs;
      const Term* gterm = nullptr;
      const Term* def = nullptr;
      if (!l.is_var && l.args.empty() && gens.count(l.head) && !contains_symbol(r, l.head)) {
        gterm = &l;
        def = &r;
      } else if (!r.is_var && r.args.empty() && gens.count(r.head) && !contains_symbol(l, r.head)) {
        gterm = &r;
        def = &l;
      }
      if (!gterm) continue;
      Name g = gterm->head;
      Term d = *def;
      used.insert(k);
      gens.erase(g);
      eliminate(g, d);
      changed = true;
      break;
    }
  }

  // Classify the residue against the base equations over the full extension
  // signature: leftover generators behave as free constants.
  Theory extended;
  extended.sig = ext_sig;
  extended.eqs = base.eqs;
  ProcPtr proc = make_procedure(extended, lim);

  std::set<Name> base_symbols;
  for (auto& d : base.sig.symbols) base_symbols.insert(d.name);
  auto pure = [&](const Term& t) {
    std::set<Name> seen;
    struct Scan {
      std::set<Name>& out;
      void go(const Term& u) {
        if (!u.is_var) out.insert(u.head);
        for (auto& a : u.args) go(a);
      }
    } scan{seen};
    scan.go(t);
    for (auto& f : seen)
      if (!base_symbols.count(f)) return false;
    return true;
  };

  bool unknown = false;
  for (size_t k = 0; k < work.size(); k++) {
    if (used.count(k)) continue;
    const Equation& e = work[k];
    if (e.lhs == e.rhs) continue;
    Answer a = proc->equal(e.lhs, e.rhs);
    if (a == Answer::Equal) continue;
    if (pure(e.lhs) && pure(e.rhs) && a == Answer::NotEqual) return {Conservativity::NotConservative, e};
    unknown = true;
  }
  if (unknown) return {Conservativity::Unknown, std::nullopt};
  return {Conservativity::Conservative, std::nullopt};
}

ConsReport instance_conservativity(const Instance& i) {
  return check_conservativity(i.schema->theory(), i.theory().sig, i.gens, i.eqs, i.schema->limits);
}

ConsReport schema_conservativity(const Schema& s) {
  // Schemas add no 0-ary symbols, so only reflexivity/provability can apply.
  return check_conservativity(s.ts->theory, s.theory().sig, {}, s.eqs, s.limits);
}

bool theory_equal(const Theory& a, const Theory& b) {
  if (a.sig.sorts != b.sig.sorts) return false;
  if (a.sig.symbols.size() != b.sig.symbols.size()) return false;
  for (size_t i = 0; i < a.sig.symbols.size(); i++) {
    const SymbolDecl &x = a.sig.symbols[i], &y = b.sig.symbols[i];
    if (x.name != y.name || x.arg_sorts != y.arg_sorts || x.result != y.result) return false;
  }
  if (a.eqs.size() != b.eqs.size()) return false;
  for (size_t i = 0; i < a.eqs.size(); i++) {
    if (a.eqs[i].ctx.vars != b.eqs[i].ctx.vars) return false;
    if (a.eqs[i].lhs != b.eqs[i].lhs || a.eqs[i].rhs != b.eqs[i].rhs) return false;
  }
  return true;
}

}  // namespace cq
