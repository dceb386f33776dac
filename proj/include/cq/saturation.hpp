#pragma once

// Term-model saturation: finite entity carriers with chosen representatives,
// foreign-key and attribute tables, and the type algebra.

#include "cq/catdata.hpp"

namespace cq {

struct SatLimits {
  int max_stages = 32;
  long max_elems = 100000;
  CompletionLimits prover;
};

class SaturatedInstance {
 public:
  InstancePtr inst;
  std::map<Name, std::vector<Term>> carrier;       // entity -> representatives in enumeration order
  std::map<Name, std::map<Term, Term>> fk_table;   // fk -> rep -> rep
  std::map<Name, std::map<Term, Term>> att_table;  // att -> rep -> term in talg
  Theory talg;
  ProcPtr entity_proc;  // decision procedure for the entity fragment
  ProcPtr talg_proc;
  std::map<Term, Term> rep_by_nf;  // entity rewrite normal form -> representative
  std::map<std::pair<Term, Name>, Name> obs_names;  // (representative, attribute) -> talg generator
  std::vector<std::string> warnings;

  // Representative of a ground entity-sorted term.
  Term nf(const Term& t) const;
  // Image in the type algebra of a ground type-sorted term.
  Term trans(const Term& t) const;
  // Observable generator name for (representative, attribute).
  const Name& obs_name(const Term& rep, const Name& att) const;
  // Ground word problem, dispatched by sort.
  Answer ground_equal(const Term& a, const Term& b) const;
  long total_elems() const;
};

using SatPtr = std::shared_ptr<const SaturatedInstance>;

SatPtr saturate(const InstancePtr& inst, const SatLimits& lim = {});
// Memoized per instance object.
SatPtr saturate_cached(const InstancePtr& inst, const SatLimits& lim = {});

// The entity fragment I_E of an instance theory: entities, foreign keys,
// entity generators, and the entity-sorted equations.
Theory entity_fragment(const Instance& inst);

// Rebuilds attribute cells as the type algebra's normal forms, so provably
// typeside-valued cells display as values (45 rather than age.bill).
SatPtr simplify_display(const SatPtr& sat);

}  // namespace cq
