#pragma once

// The database layer: typesides, schemas, instances, mappings, transforms,
// Sigma migration, and the conservativity check.

#include <memory>

#include "cq/prover.hpp"

namespace cq {

class TypeSide {
 public:
  Name name;
  Theory theory;
  CompletionLimits limits;

  TypeSide(Name n, Theory th, CompletionLimits lim = {}) : name(std::move(n)), theory(std::move(th)), limits(lim) {}
  const DecisionProcedure& proc() const;

 private:
  mutable ProcPtr proc_;
};

using TypeSidePtr = std::shared_ptr<const TypeSide>;

class Schema {
 public:
  Name name;
  TypeSidePtr ts;
  std::vector<Name> entities;
  std::vector<SymbolDecl> fks;   // entity -> entity
  std::vector<SymbolDecl> atts;  // entity -> type
  std::vector<Equation> eqs;     // schema-level equations only
  CompletionLimits limits;

  const Theory& theory() const;           // typeside + entities + fks/atts + eqs
  const DecisionProcedure& proc() const;  // completion of theory()
  bool is_entity(const Name& s) const;
  const SymbolDecl* fk(const Name& f) const;
  const SymbolDecl* att(const Name& f) const;
  std::vector<SymbolDecl> fks_from(const Name& entity) const;
  std::vector<SymbolDecl> atts_from(const Name& entity) const;

 private:
  mutable std::shared_ptr<Theory> theory_;
  mutable ProcPtr proc_;
};

using SchemaPtr = std::shared_ptr<const Schema>;

// Validates the schema conditions: symbols unary with entity domain, equation
// contexts a single entity-sorted variable.
SchemaPtr make_schema(Name name, TypeSidePtr ts, std::vector<Name> entities, std::vector<SymbolDecl> symbols,
                      std::vector<Equation> eqs, CompletionLimits lim = {});

class Instance {
 public:
  Name name;
  SchemaPtr schema;
  std::vector<SymbolDecl> gens;  // 0-ary
  std::vector<Equation> eqs;     // ground

  const Theory& theory() const;
  std::vector<SymbolDecl> entity_gens() const;
  std::vector<SymbolDecl> type_gens() const;  // skolem constants

 private:
  mutable std::shared_ptr<Theory> theory_;
};

using InstancePtr = std::shared_ptr<const Instance>;

// Validates the instance conditions: 0-ary generators over schema sorts,
// ground equations.
InstancePtr make_instance(Name name, SchemaPtr schema, std::vector<SymbolDecl> gens, std::vector<Equation> eqs);

struct SchemaMapping {
  Name name;
  SchemaPtr src, dst;
  SigMorphism m;  // total: identity on the typeside
};

// Builds the morphism from entity/symbol images (typeside part is implicit
// identity) and typechecks every image.
SchemaMapping make_mapping(Name name, SchemaPtr src, SchemaPtr dst, const std::map<Name, Name>& entity_map,
                           const std::map<Name, Term>& symbol_images);

// Provability obligations, one per source schema equation.
MorphismCheck validate_mapping(const SchemaMapping& f);

SchemaMapping compose_mappings(Name name, const SchemaMapping& g, const SchemaMapping& f);  // g after f
SchemaMapping identity_mapping(SchemaPtr s);

struct Transform {
  Name name;
  InstancePtr src, dst;
  std::map<Name, Term> gen_map;  // src generator -> ground dst term

  Term apply(const Term& t) const;  // replaces src generators inside t
};

MorphismCheck validate_transform(const Transform& h);
Transform compose_transforms(Name name, const Transform& g, const Transform& f);  // g after f
Transform identity_transform(InstancePtr i);

// Sigma migration: purely syntactic substitution along a mapping.
InstancePtr sigma(const SchemaMapping& f, const InstancePtr& i, Name out_name = "");
Transform sigma_transform(const SchemaMapping& f, const Transform& h);

enum class Conservativity { Conservative, NotConservative, Unknown };
struct ConsReport {
  Conservativity verdict;
  std::optional<Equation> witness;  // simplified base-term equation, when NotConservative
};

// Simplifies the extension by generator elimination, then classifies the
// residual equations against the base theory (with leftover generators kept
// as free constants).
ConsReport check_conservativity(const Theory& base, const Signature& ext_sig, const std::vector<SymbolDecl>& new_gens,
                                const std::vector<Equation>& new_eqs, const CompletionLimits& lim = {});

// Convenience wrappers used by the CLI's automatic reporting.
ConsReport instance_conservativity(const Instance& i);
ConsReport schema_conservativity(const Schema& s);

bool theory_equal(const Theory& a, const Theory& b);

}  // namespace cq
