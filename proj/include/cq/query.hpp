#pragma once

// Uber-flowers: tableaux with return and keys clauses, their verification
// conditions, (co-)evaluation on instances, transforms and query morphisms,
// composition, conversions to and from schema mappings, cospans, and the
// unit/counit of the coeval -| eval adjunction.

#include "cq/saturation.hpp"

namespace cq {

struct Tableau {
  Context fr;                // for clause; binds entities
  std::vector<Equation> wh;  // where clause, over Terms(src, fr)
};

class UberFlower {
 public:
  Name name;
  SchemaPtr src, dst;
  std::map<Name, Tableau> tableaux;  // per target entity
  std::map<Name, Term> returns;      // per target attribute
  std::map<Name, Subst> keys;        // per target foreign key: fr_cod -> Terms(src, fr_dom)

  const Tableau& tableau(const Name& entity) const;
  // Frozen-instance view of a tableau: for-variables become fresh constants.
  InstancePtr frozen(const Name& entity) const;
  const DecisionProcedure& frozen_proc(const Name& entity) const;

 private:
  mutable std::map<Name, InstancePtr> frozen_;
  mutable std::map<Name, ProcPtr> frozen_procs_;
};

using QueryPtr = std::shared_ptr<const UberFlower>;

// Typechecks clauses; `allow_type_binding` lifts the entities-only rule for
// for-clause variables.
QueryPtr make_query(Name name, SchemaPtr src, SchemaPtr dst, std::map<Name, Tableau> tableaux,
                    std::map<Name, Term> returns, std::map<Name, Subst> keys, bool allow_type_binding = false);

struct QueryCheck {
  enum class Verdict { Verified, Failed, Unknown } verdict;
  std::string condition;  // failing or unknown condition, printed
};

// Discharges one verification condition per target-schema equation, then the
// where-preservation obligations of each keys clause. A condition whose
// instance cannot even be formed (ill-sorted keys path) fails that condition.
QueryCheck validate_query(const UberFlower& q);

struct EvalOutput {
  InstancePtr inst;
  std::map<Name, std::vector<Subst>> envs;  // satisfying environments per target entity
  SatPtr in_sat;
};

struct CoevalOutput {
  InstancePtr inst;
  std::map<Name, std::map<std::pair<Name, Term>, Name>> pairs;  // entity -> (var, rep) -> generator
  SatPtr in_sat;
};

EvalOutput eval_full(const UberFlower& q, const InstancePtr& i, const SatLimits& lim = {});
CoevalOutput coeval_full(const UberFlower& q, const InstancePtr& j, const SatLimits& lim = {});
InstancePtr eval(const UberFlower& q, const InstancePtr& i, Name out_name = "");
InstancePtr coeval(const UberFlower& q, const InstancePtr& j, Name out_name = "");

Transform eval_transform(const UberFlower& q, const Transform& h);
Transform coeval_transform(const UberFlower& q, const Transform& h);

struct QueryMorphism {
  Name name;
  QueryPtr from, to;          // from, to : S -> T
  std::map<Name, Subst> at;   // per target entity: fr_from -> Terms(S, fr_to)
};

QueryCheck validate_query_morphism(const QueryMorphism& m);
// Note the contravariance: a morphism from -> to induces eval(to) -> eval(from).
Transform eval_query_morphism(const QueryMorphism& m, const InstancePtr& i);
Transform coeval_query_morphism(const QueryMorphism& m, const InstancePtr& j);

QueryPtr compose_queries(Name name, const UberFlower& q1, const UberFlower& q2);  // q2 after q1

// Q^F (eval = Delta_F, coeval = Sigma_F).
QueryPtr canonical_query(const SchemaMapping& f);
// Q_F (eval = Pi_F, coeval = Delta_F); requires F surjective on attributes.
QueryPtr product_query(const SchemaMapping& f);

InstancePtr delta(const SchemaMapping& f, const InstancePtr& j, Name out_name = "");
InstancePtr pi(const SchemaMapping& f, const InstancePtr& i, Name out_name = "");

struct Cospan {
  SchemaPtr apex;
  SchemaMapping f;  // src -> apex, an inclusion
  SchemaMapping g;  // dst -> apex
};

Cospan query_to_cospan(const UberFlower& q);

Transform unit(const UberFlower& q, const InstancePtr& j);    // J -> eval(coeval(J))
Transform counit(const UberFlower& q, const InstancePtr& i);  // coeval(eval(I)) -> I

// Counit of Sigma_F -| Delta_F in the syntactic presentation:
// Sigma_F(Delta_F(I)) -> I.
Transform counit_sigma_delta(const SchemaMapping& f, const InstancePtr& i);

// The entity-resolution leg: given qn : Qn -> Q, I' and In with
// eval(Qn)(I') = Delta_Fn(In) under disjoint naming, produces
// h : Sigma_Fn(eval(Q)(I')) -> In as counit . Sigma_Fn(eval(qn)(I')).
Transform er_leg(const SchemaMapping& fn, const QueryMorphism& qn, const InstancePtr& iprime, const InstancePtr& in);

}  // namespace cq
