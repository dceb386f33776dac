#pragma once

// Word-problem decision procedures via unfailing Knuth-Bendix completion.

#include <chrono>
#include <memory>
#include <mutex>

#include "cq/kernel.hpp"

namespace cq {

enum class Answer { Equal, NotEqual, Unknown };

struct Ordering {
  enum class Kind { LPO, KBO } kind = Kind::LPO;
  std::map<Name, int> prec;     // larger value = greater symbol
  std::map<Name, int> weights;  // KBO only; default 1
  int var_weight = 1;

  bool greater(const Term& s, const Term& t) const;
  int precedence(const Name& f) const;
};

// Default precedence: declaration position, so later-declared ("defined")
// symbols rewrite toward earlier ("constructor") ones.
Ordering default_ordering(const Signature& sig);

struct RewriteRule {
  Context ctx;
  Term lhs, rhs;
};

enum class CompletionStatus { Complete, IncompleteLimit, IncompleteUnorientable };

struct CompletionLimits {
  int max_iterations = 2000;
  int max_rule_size = 64;  // nodes
  int normalize_budget = 100000;
  std::chrono::milliseconds timeout{30000};
};

struct RewriteSystem {
  std::vector<RewriteRule> rules;
  std::vector<Equation> unoriented;  // used two-way via ordered rewriting
  CompletionStatus status = CompletionStatus::Complete;
  Ordering ord;
  CompletionLimits limits;
  // stats
  int iterations = 0;
  mutable long rewrite_steps = 0;
};

RewriteSystem complete(const Theory& th, const Ordering& ord, const CompletionLimits& lim = {});

// Rewrites to a term no rule applies to; throws StepLimitExceeded past budget.
Term normalize(const RewriteSystem& rs, const Term& t);

// Immutable once built; the normal-form memo is internally synchronized.
class DecisionProcedure {
 public:
  DecisionProcedure(Theory th, RewriteSystem rs) : theory_(std::move(th)), system_(std::move(rs)) {}

  const Theory& theory() const { return theory_; }
  const RewriteSystem& system() const { return system_; }
  bool complete() const { return system_.status == CompletionStatus::Complete; }

  Term nf(const Term& t) const;
  Answer equal(const Term& a, const Term& b) const;

 private:
  Theory theory_;
  RewriteSystem system_;
  mutable std::mutex mu_;
  mutable std::map<Term, Term> memo_;
};

using ProcPtr = std::shared_ptr<const DecisionProcedure>;

ProcPtr make_procedure(const Theory& th, const CompletionLimits& lim = {});
ProcPtr make_procedure(const Theory& th, const Ordering& ord, const CompletionLimits& lim = {});

struct MorphismCheck {
  enum class Verdict { Verified, Failed, Unknown } verdict;
  std::optional<Equation> failed_on;  // source-side axiom
};

// Checks that every axiom of `src` maps to a provable equation of `tgt`.
MorphismCheck check_theory_morphism(const Theory& src, const SigMorphism& m, const DecisionProcedure& tgt_proc);

// One-way matching: extends `out` so that substitute(pat, out) == t.
bool match(const Term& pat, const Term& t, Subst& out);

// Sort-respecting syntactic unification; var sorts given by the two contexts.
std::optional<Subst> unify(const Term& a, const Term& b, const Context& ctx);

std::string print_rules(const RewriteSystem& rs, const Signature* sig = nullptr);

}  // namespace cq
