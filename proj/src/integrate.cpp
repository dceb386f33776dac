#include "cq/integrate.hpp"

#include <algorithm>

namespace cq {

namespace {

struct UnionFind {
  std::map<Name, Name> parent;
  Name find(const Name& x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    Name root = find(it->second);
    parent[x] = root;
    return root;
  }
  void unite(const Name& a, const Name& b) {
    Name ra = find(a), rb = find(b);
    if (ra != rb) parent[std::min(ra, rb) == ra ? rb : ra] = std::min(ra, rb);
  }
};

// Renames symbols (by head) and sorts inside a term.
Term rename_symbols(const Term& t, const std::map<Name, Name>& m) {
  if (t.is_var) return t;
  Term r = t;
  auto it = m.find(t.head);
  if (it != m.end()) r.head = it->second;
  for (auto& a : r.args) a = rename_symbols(a, m);
  return r;
}

}  // namespace

SchemaPushout pushout_schemas(Name name, const SchemaMapping& f1, const SchemaMapping& f2) {
  if (f1.src != f2.src && !theory_equal(f1.src->theory(), f2.src->theory()))
    fail(ErrKind::SortMismatch, "pushout: the two legs have different overlap schemas");
  if (f1.src->ts != f1.dst->ts || f2.src->ts != f2.dst->ts ||
      !theory_equal(f1.dst->ts->theory, f2.dst->ts->theory))
    fail(ErrKind::SortMismatch, "pushout: schemas on different typesides");
  const Schema& s = *f1.src;
  const Schema& s1 = *f1.dst;
  const Schema& s2 = *f2.dst;

  // Tagged entities, quotiented by the span.
  auto tag = [](int i, const Name& e) { return std::to_string(i) + ":" + e; };
  UnionFind uf;
  for (auto& e : s.entities) uf.unite(tag(1, f1.m.apply_sort(e)), tag(2, f2.m.apply_sort(e)));

  // A plain name is kept when it is unambiguous across both sides; otherwise
  // the schema name qualifies it. Class representative: least candidate name.
  std::map<Name, int> plain_count;
  for (auto& e : s1.entities) plain_count[e]++;
  for (auto& e : s2.entities) plain_count[e]++;
  auto candidate = [&](int i, const Name& e) {
    // merged entities share a name without competing for it
    bool merged = uf.find(tag(1, e)) == uf.find(tag(2, e)) && s1.is_entity(e) && s2.is_entity(e);
    if (plain_count[e] == 1 || merged) return e;
    return (i == 1 ? s1.name : s2.name) + "_" + e;
  };
  std::map<Name, Name> cls_name;  // tagged root -> pushout entity name
  std::vector<Name> entities;
  auto class_of = [&](int i, const Name& e) { return uf.find(tag(i, e)); };
  for (int i : {1, 2}) {
    const Schema& si = i == 1 ? s1 : s2;
    for (auto& e : si.entities) {
      Name root = class_of(i, e);
      Name cand = candidate(i, e);
      auto it = cls_name.find(root);
      if (it == cls_name.end())
        cls_name[root] = cand;
      else if (cand < it->second)
        it->second = cand;
    }
  }
  for (auto& [root, n] : cls_name) entities.push_back(n);
  std::sort(entities.begin(), entities.end());

  std::map<Name, int> sym_count;
  for (auto& d : s1.fks) sym_count[d.name]++;
  for (auto& d : s1.atts) sym_count[d.name]++;
  for (auto& d : s2.fks) sym_count[d.name]++;
  for (auto& d : s2.atts) sym_count[d.name]++;
  std::map<Name, Name> ren1, ren2;  // per-side symbol renaming
  std::vector<SymbolDecl> symbols;
  auto add_side_symbols = [&](int i) {
    const Schema& si = i == 1 ? s1 : s2;
    std::map<Name, Name>& ren = i == 1 ? ren1 : ren2;
    auto entity_of = [&](const Name& e) { return cls_name.at(class_of(i, e)); };
    for (auto& d : si.fks) {
      Name n = sym_count[d.name] > 1 ? si.name + "_" + d.name : d.name;
      ren[d.name] = n;
      symbols.push_back({n, {entity_of(d.arg_sorts[0])}, entity_of(d.result), false});
    }
    for (auto& d : si.atts) {
      Name n = sym_count[d.name] > 1 ? si.name + "_" + d.name : d.name;
      ren[d.name] = n;
      symbols.push_back({n, {entity_of(d.arg_sorts[0])}, d.result, false});
    }
  };
  add_side_symbols(1);
  add_side_symbols(2);

  auto side_eq = [&](int i, const Equation& e) {
    const std::map<Name, Name>& ren = i == 1 ? ren1 : ren2;
    auto entity_of = [&](const Name& x) {
      const Schema& si = i == 1 ? s1 : s2;
      return si.is_entity(x) ? cls_name.at(class_of(i, x)) : x;
    };
    Equation g;
    g.ctx.add(e.ctx.vars[0].first, entity_of(e.ctx.vars[0].second));
    g.lhs = rename_symbols(e.lhs, ren);
    g.rhs = rename_symbols(e.rhs, ren);
    return g;
  };
  std::vector<Equation> eqs;
  for (auto& e : s1.eqs) eqs.push_back(side_eq(1, e));
  for (auto& e : s2.eqs) eqs.push_back(side_eq(2, e));
  // identify the two images of each overlap symbol
  for (auto& lists : {s.fks, s.atts})
    for (auto& d : lists) {
      Equation g;
      Name dom = cls_name.at(class_of(1, f1.m.apply_sort(d.arg_sorts[0])));
      g.ctx.add("v", dom);
      Subst canon;
      canon[canonical_var(0)] = Term::var("v");
      g.lhs = rename_symbols(substitute(f1.m.symbol_map.at(d.name), canon), ren1);
      g.rhs = rename_symbols(substitute(f2.m.symbol_map.at(d.name), canon), ren2);
      eqs.push_back(g);
    }

  SchemaPushout out;
  out.object = make_schema(name, s1.ts, entities, symbols, eqs, s1.limits);
  auto make_inj = [&](int i, const SchemaPtr& from) {
    std::map<Name, Name> em;
    std::map<Name, Term> sm;
    const std::map<Name, Name>& ren = i == 1 ? ren1 : ren2;
    for (auto& e : from->entities) em[e] = cls_name.at(class_of(i, e));
    for (auto& lists : {from->fks, from->atts})
      for (auto& d : lists) sm[d.name] = Term::app(ren.at(d.name), {Term::var(canonical_var(0))});
    return make_mapping("G" + std::to_string(i) + "_" + name, from, out.object, em, sm);
  };
  out.inj1 = make_inj(1, f1.dst);
  out.inj2 = make_inj(2, f2.dst);
  return out;
}

InstancePushout pushout_instances(Name name, const Transform& h1, const Transform& h2) {
  if (h1.src != h2.src && !theory_equal(h1.src->theory(), h2.src->theory()))
    fail(ErrKind::SortMismatch, "pushout: the two legs have different overlap instances");
  const Instance& i1 = *h1.dst;
  const Instance& i2 = *h2.dst;
  if (i1.schema != i2.schema && !theory_equal(i1.schema->theory(), i2.schema->theory()))
    fail(ErrKind::SortMismatch, "pushout: instances on different schemas");

  std::map<Name, int> gen_count;
  for (auto& g : i1.gens) gen_count[g.name]++;
  for (auto& g : i2.gens) gen_count[g.name]++;
  std::map<Name, Name> ren1, ren2;
  std::vector<SymbolDecl> gens;
  auto add_side = [&](const Instance& i, std::map<Name, Name>& ren) {
    for (auto& g : i.gens) {
      Name n = gen_count[g.name] > 1 ? i.name + "_" + g.name : g.name;
      ren[g.name] = n;
      gens.push_back({n, {}, g.result, false});
    }
  };
  add_side(i1, ren1);
  add_side(i2, ren2);
  std::vector<Equation> eqs;
  for (auto& e : i1.eqs) {
    Equation g;
    g.lhs = rename_symbols(e.lhs, ren1);
    g.rhs = rename_symbols(e.rhs, ren1);
    eqs.push_back(g);
  }
  for (auto& e : i2.eqs) {
    Equation g;
    g.lhs = rename_symbols(e.lhs, ren2);
    g.rhs = rename_symbols(e.rhs, ren2);
    eqs.push_back(g);
  }
  for (auto& g : h1.src->gens) {
    Equation e;
    e.lhs = rename_symbols(h1.gen_map.at(g.name), ren1);
    e.rhs = rename_symbols(h2.gen_map.at(g.name), ren2);
    eqs.push_back(e);
  }

  InstancePushout out;
  out.object = make_instance(name, i1.schema, gens, eqs);
  auto make_inj = [&](const InstancePtr& from, const std::map<Name, Name>& ren, int i) {
    Transform t;
    t.name = "j" + std::to_string(i) + "_" + name;
    t.src = from;
    t.dst = out.object;
    for (auto& g : from->gens) t.gen_map[g.name] = Term::app(ren.at(g.name));
    return t;
  };
  out.inj1 = make_inj(h1.dst, ren1, 1);
  out.inj2 = make_inj(h2.dst, ren2, 2);
  return out;
}

namespace {

SchemaPtr empty_schema(const TypeSidePtr& ts) {
  return make_schema("Empty_" + ts->name, ts, {}, {}, {});
}

}  // namespace

SchemaPushout coproduct_schemas(Name name, const SchemaPtr& s1, const SchemaPtr& s2) {
  SchemaPtr e = empty_schema(s1->ts);
  SchemaMapping f1 = make_mapping("inc1", e, s1, {}, {});
  SchemaMapping f2 = make_mapping("inc2", e, s2, {}, {});
  return pushout_schemas(std::move(name), f1, f2);
}

InstancePushout coproduct_instances(Name name, const InstancePtr& i1, const InstancePtr& i2) {
  InstancePtr e = make_instance("Empty_" + i1->schema->name, i1->schema, {}, {});
  Transform h1{"inc1", e, i1, {}};
  Transform h2{"inc2", e, i2, {}};
  return pushout_instances(std::move(name), h1, h2);
}

IntegrateResult integrate(Name name, const SchemaMapping& f1, const SchemaMapping& f2, const Transform& h1,
                          const Transform& h2) {
  IntegrateResult out;
  out.schema = pushout_schemas(name + "_schema", f1, f2);
  // Sigma is strictly functorial, so Sigma_{G1.F1}(I) = Sigma_{G2.F2}(I); the
  // identity-on-generators bridge is still checked for theory equality.
  InstancePtr overlap = h1.src;
  SchemaMapping g1f1 = compose_mappings("G1F1", out.schema.inj1, f1);
  SchemaMapping g2f2 = compose_mappings("G2F2", out.schema.inj2, f2);
  InstancePtr c1 = sigma(g1f1, overlap);
  InstancePtr c2 = sigma(g2f2, overlap);
  Transform l1 = sigma_transform(out.schema.inj1, h1);
  Transform l2 = sigma_transform(out.schema.inj2, h2);
  if (!theory_equal(l1.src->theory(), c1->theory()))
    fail(ErrKind::SortMismatch, "integrate: strict Sigma functoriality failed on leg 1");
  l1.src = c1;
  Transform bridge;
  bridge.name = "pushout_bridge";
  bridge.src = c1;
  bridge.dst = c2;
  for (auto& g : c1->gens) bridge.gen_map[g.name] = Term::app(g.name);
  Transform l2c = compose_transforms("l2", l2, bridge);
  out.inst = pushout_instances(name, l1, l2c);
  return out;
}

PivotResult pivot(Name name, const InstancePtr& i) {
  SatPtr sat = saturate_cached(i);
  const Schema& s = *i->schema;

  std::vector<Name> entities;
  std::map<Term, Name> ent_of_rep;
  for (auto& e : s.entities)
    for (auto& rep : sat->carrier.at(e)) {
      Name n = print_term(rep);
      ent_of_rep[rep] = n;
      entities.push_back(n);
    }
  std::vector<SymbolDecl> symbols;
  std::map<Name, Name> back_sort;  // pivot entity -> original entity
  std::map<Name, Name> back_sym;   // pivot symbol -> original symbol
  auto p_sym = [&](const Term& rep, const Name& f) { return "(" + print_term(rep) + ", " + f + ")"; };
  for (auto& e : s.entities)
    for (auto& rep : sat->carrier.at(e)) {
      back_sort[ent_of_rep[rep]] = e;
      for (auto& fk : s.fks_from(e)) {
        Name n = p_sym(rep, fk.name);
        back_sym[n] = fk.name;
        symbols.push_back({n, {ent_of_rep[rep]}, ent_of_rep[sat->fk_table.at(fk.name).at(rep)], false});
      }
      for (auto& att : s.atts_from(e)) {
        Name n = p_sym(rep, att.name);
        back_sym[n] = att.name;
        symbols.push_back({n, {ent_of_rep[rep]}, att.result, false});
      }
    }
  PivotResult out;
  out.schema = make_schema(name, s.ts, entities, symbols, {}, s.limits);

  std::map<Name, Name> em;
  std::map<Name, Term> sm;
  for (auto& [e, b] : back_sort) em[e] = b;
  for (auto& [f, b] : back_sym) sm[f] = Term::app(b, {Term::var(canonical_var(0))});
  out.proj = make_mapping("F_" + name, out.schema, i->schema, em, sm);

  std::vector<SymbolDecl> gens;
  std::vector<Equation> eqs;
  auto [talg_gens, talg_eqs] = [&]() {
    const Theory& ts = s.ts->theory;
    std::vector<SymbolDecl> g(sat->talg.sig.symbols.begin() + (long)ts.sig.symbols.size(),
                              sat->talg.sig.symbols.end());
    std::vector<Equation> q(sat->talg.eqs.begin() + (long)ts.eqs.size(), sat->talg.eqs.end());
    return std::pair(g, q);
  }();
  for (auto& g : talg_gens) gens.push_back(g);
  for (auto& e : talg_eqs) eqs.push_back(e);
  for (auto& e : s.entities)
    for (auto& rep : sat->carrier.at(e)) gens.push_back({ent_of_rep[rep], {}, ent_of_rep[rep], false});
  for (auto& e : s.entities)
    for (auto& rep : sat->carrier.at(e)) {
      Term row = Term::app(ent_of_rep[rep]);
      for (auto& fk : s.fks_from(e)) {
        Equation q;
        q.lhs = Term::app(p_sym(rep, fk.name), {row});
        q.rhs = Term::app(ent_of_rep[sat->fk_table.at(fk.name).at(rep)]);
        eqs.push_back(q);
      }
      for (auto& att : s.atts_from(e)) {
        Equation q;
        q.lhs = Term::app(p_sym(rep, att.name), {row});
        q.rhs = sat->att_table.at(att.name).at(rep);
        eqs.push_back(q);
      }
    }
  // each observable generator equals its path in the pivot
  for (auto& [key, n] : sat->obs_names) {
    const auto& [rep, att] = key;
    Equation q;
    q.lhs = Term::app(n);
    q.rhs = Term::app(p_sym(rep, att), {Term::app(ent_of_rep[rep])});
    eqs.push_back(q);
  }
  out.inst = make_instance("J_" + name, out.schema, gens, eqs);
  return out;
}

CopivotResult copivot(Name name, const InstancePtr& i) {
  SatPtr sat = saturate_cached(i);
  const Schema& s = *i->schema;
  Name star = "Star";
  while (s.theory().sig.has_sort(star)) star += "'";

  std::vector<Name> entities = s.entities;
  entities.push_back(star);
  std::vector<SymbolDecl> symbols = s.fks;
  for (auto& d : s.atts) symbols.push_back(d);
  auto fk_of_rep = [&](const Term& rep) { return print_term(rep) + "_E"; };
  auto att_of_gen = [&](const Name& g) { return g + "_A"; };
  std::map<Term, Name> rep_entity;
  for (auto& e : s.entities)
    for (auto& rep : sat->carrier.at(e)) {
      rep_entity[rep] = e;
      symbols.push_back({fk_of_rep(rep), {star}, e, false});
    }
  auto [talg_gens, talg_eqs] = [&]() {
    const Theory& ts = s.ts->theory;
    std::vector<SymbolDecl> g(sat->talg.sig.symbols.begin() + (long)ts.sig.symbols.size(),
                              sat->talg.sig.symbols.end());
    std::vector<Equation> q(sat->talg.eqs.begin() + (long)ts.eqs.size(), sat->talg.eqs.end());
    return std::pair(g, q);
  }();
  for (auto& g : talg_gens) symbols.push_back({att_of_gen(g.name), {star}, g.result, false});

  std::vector<Equation> eqs = s.eqs;
  // talg-term -> attribute term at x
  struct ToAtt {
    const std::set<Name>& gens;
    const Term& x;
    std::function<Name(const Name&)> att_of;
    Term go(const Term& t) const {
      if (!t.is_var && t.args.empty() && gens.count(t.head)) return Term::app(att_of(t.head), {x});
      Term r = t;
      for (auto& a : r.args) a = go(a);
      return r;
    }
  };
  std::set<Name> talg_gen_names;
  for (auto& g : talg_gens) talg_gen_names.insert(g.name);
  Term x = Term::var("x");
  ToAtt to_att{talg_gen_names, x, att_of_gen};
  for (auto& e : s.entities)
    for (auto& rep : sat->carrier.at(e)) {
      for (auto& att : s.atts_from(e)) {
        Equation q;
        q.ctx.add("x", star);
        q.lhs = Term::app(att.name, {Term::app(fk_of_rep(rep), {x})});
        q.rhs = to_att.go(sat->att_table.at(att.name).at(rep));
        eqs.push_back(q);
      }
      for (auto& fk : s.fks_from(e)) {
        Equation q;
        q.ctx.add("x", star);
        q.lhs = Term::app(fk.name, {Term::app(fk_of_rep(rep), {x})});
        q.rhs = Term::app(fk_of_rep(sat->fk_table.at(fk.name).at(rep)), {x});
        eqs.push_back(q);
      }
    }

  CopivotResult out;
  out.schema = make_schema(name, s.ts, entities, symbols, eqs, s.limits);
  std::map<Name, Name> em;
  std::map<Name, Term> sm;
  for (auto& e : s.entities) em[e] = e;
  for (auto& lists : {s.fks, s.atts})
    for (auto& d : lists) sm[d.name] = Term::app(d.name, {Term::var(canonical_var(0))});
  out.incl = make_mapping("F_" + name, i->schema, out.schema, em, sm);

  std::vector<SymbolDecl> gens = {{"row", {}, star, false}};
  std::vector<Equation> jeqs;
  for (auto& g : talg_gens) {
    gens.push_back(g);
    Equation q;
    q.lhs = Term::app(att_of_gen(g.name), {Term::app("row")});
    q.rhs = Term::app(g.name);
    jeqs.push_back(q);
  }
  for (auto& e : talg_eqs) jeqs.push_back(e);
  out.inst = make_instance("J_" + name, out.schema, gens, jeqs);
  return out;
}

namespace {

// Replaces g() by a term, at every occurrence.
Term replace_const(const Term& t, const Name& g, const Term& def) {
  if (!t.is_var && t.args.empty() && t.head == g) return def;
  Term r = t;
  for (auto& a : r.args) a = replace_const(a, g, def);
  return r;
}

// Replaces f(u) by image[v -> u].
Term replace_unary(const Term& t, const Name& f, const Term& image, const Name& v) {
  Term r = t;
  for (auto& a : r.args) a = replace_unary(a, f, image, v);
  if (!r.is_var && r.head == f && r.args.size() == 1) {
    Subst s;
    s[v] = r.args[0];
    return substitute(image, s);
  }
  return r;
}

}  // namespace

SchemaPtr simplify_schema(Name name, const SchemaPtr& s) {
  std::vector<SymbolDecl> symbols = s->fks;
  for (auto& d : s->atts) symbols.push_back(d);
  std::vector<Equation> eqs = s->eqs;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t k = 0; k < eqs.size(); k++) {
      const Equation& e = eqs[k];
      const Name& v = e.ctx.vars[0].first;
      // v.f = rhs with f not in rhs: drop f
      auto droppable = [&](const Term& l, const Term& r) -> std::optional<Name> {
        if (l.is_var || l.args.size() != 1 || !l.args[0].is_var) return std::nullopt;
        if (contains_symbol(r, l.head)) return std::nullopt;
        return l.head;
      };
      std::optional<Name> f = droppable(e.lhs, e.rhs);
      Term image = e.rhs;
      if (!f) {
        f = droppable(e.rhs, e.lhs);
        image = e.lhs;
      }
      if (!f) continue;
      auto it = std::find_if(symbols.begin(), symbols.end(), [&](auto& d) { return d.name == *f; });
      if (it == symbols.end()) continue;
      symbols.erase(it);
      std::vector<Equation> next;
      for (size_t m = 0; m < eqs.size(); m++) {
        if (m == k) continue;
        Equation g = eqs[m];
        g.lhs = replace_unary(g.lhs, *f, image, v);
        g.rhs = replace_unary(g.rhs, *f, image, v);
        if (g.lhs != g.rhs) next.push_back(g);
      }
      eqs = std::move(next);
      changed = true;
      break;
    }
  }
  return make_schema(std::move(name), s->ts, s->entities, symbols, eqs, s->limits);
}

InstancePtr simplify_instance(Name name, const InstancePtr& i) {
  std::vector<SymbolDecl> gens = i->gens;
  std::vector<Equation> eqs = i->eqs;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t k = 0; k < eqs.size(); k++) {
      const Equation& e = eqs[k];
      auto is_gen = [&](const Term& t) {
        return !t.is_var && t.args.empty() &&
               std::any_of(gens.begin(), gens.end(), [&](auto& g) { return g.name == t.head; });
      };
      Name g;
      Term def;
      if (is_gen(e.lhs) && !contains_symbol(e.rhs, e.lhs.head)) {
        g = e.lhs.head;
        def = e.rhs;
      } else if (is_gen(e.rhs) && !contains_symbol(e.lhs, e.rhs.head)) {
        g = e.rhs.head;
        def = e.lhs;
      } else {
        continue;
      }
      gens.erase(std::find_if(gens.begin(), gens.end(), [&](auto& d) { return d.name == g; }));
      std::vector<Equation> next;
      for (size_t m = 0; m < eqs.size(); m++) {
        if (m == k) continue;
        Equation q = eqs[m];
        q.lhs = replace_const(q.lhs, g, def);
        q.rhs = replace_const(q.rhs, g, def);
        if (q.lhs != q.rhs) next.push_back(q);
      }
      eqs = std::move(next);
      changed = true;
      break;
    }
  }
  return make_instance(std::move(name), i->schema, gens, eqs);
}

}  // namespace cq
