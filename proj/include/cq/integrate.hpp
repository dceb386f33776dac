#pragma once

// Pushouts and coproducts of schemas and instances, the pushout integration
// pattern, pivot/co-pivot, and presentation simplification.

#include "cq/query.hpp"

namespace cq {

struct SchemaPushout {
  SchemaPtr object;
  SchemaMapping inj1, inj2;
};

struct InstancePushout {
  InstancePtr object;
  Transform inj1, inj2;
};

// Pushout of S1 <-F1- S -F2-> S2.
SchemaPushout pushout_schemas(Name name, const SchemaMapping& f1, const SchemaMapping& f2);
// Pushout of I1 <-h1- I -h2-> I2 on a shared schema.
InstancePushout pushout_instances(Name name, const Transform& h1, const Transform& h2);

SchemaPushout coproduct_schemas(Name name, const SchemaPtr& s1, const SchemaPtr& s2);
InstancePushout coproduct_instances(Name name, const InstancePtr& i1, const InstancePtr& i2);

struct IntegrateResult {
  SchemaPushout schema;  // T, G1, G2
  InstancePushout inst;  // J, j1, j2
};

// The full pattern: pushout schema of the schema span, then the pushout of
// Sigma_G1(I1) <- Sigma_{G1.F1}(I) -> Sigma_G2(I2) with legs Sigma_Gn(hn).
IntegrateResult integrate(Name name, const SchemaMapping& f1, const SchemaMapping& f2, const Transform& h1,
                          const Transform& h2);

struct PivotResult {
  SchemaPtr schema;  // one entity per carrier element
  SchemaMapping proj;
  InstancePtr inst;  // Sigma_proj(inst) = the input, post-renaming
};

struct CopivotResult {
  SchemaPtr schema;  // the input schema plus a single entity
  SchemaMapping incl;
  InstancePtr inst;  // the one-row instance; Delta_incl(inst) iso the input
};

PivotResult pivot(Name name, const InstancePtr& i);
CopivotResult copivot(Name name, const InstancePtr& i);

// Non-canonical presentation cleanups: drop symbols pinned to parallel paths
// and generators pinned to terms.
SchemaPtr simplify_schema(Name name, const SchemaPtr& s);
InstancePtr simplify_instance(Name name, const InstancePtr& i);

}  // namespace cq
