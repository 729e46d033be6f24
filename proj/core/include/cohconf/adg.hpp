#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cohconf {

using ClaimId = std::size_t;

/// Sorted, duplicate-free list of claim ids.
using ClaimSet = std::vector<ClaimId>;

/// Ordered feature names shared by every claim in a dataset.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::optional<std::size_t> index_of(const std::string& name) const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<std::string> names_;
};

struct Claim {
  std::vector<double> features;
  int label = 1;  // 1 = factually correct
  std::optional<double> freq;

  bool operator==(const Claim&) const = default;
};

/// Dependency edge; the parent is the premise, the child depends on it.
struct Edge {
  ClaimId parent = 0;
  ClaimId child = 0;

  bool operator==(const Edge&) const = default;
};

/// Checks that `edges` form a DAG over claims [0, n) and returns a
/// topological order (Kahn's algorithm, smallest ready id first).
/// Throws CycleDetected (naming one node on a cycle), InvalidEdgeEndpoint
/// or DuplicateEdge.
std::vector<ClaimId> validate_dag(std::size_t n, std::span<const Edge> edges);

/// One reasoning instance: a claim DAG with labels and features.
///
/// Construction validates the graph and caches the topological order and the
/// ancestor/descendant closures, so a constructed problem is always a valid
/// DAG. Structure is immutable afterwards; only feature vectors may be
/// replaced.
class AdgProblem {
 public:
  AdgProblem() = default;
  AdgProblem(std::string id, std::vector<Claim> claims, std::vector<Edge> edges);

  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return claims_.size(); }
  const std::vector<Claim>& claims() const noexcept { return claims_; }
  const Claim& claim(ClaimId v) const;
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<ClaimId>& topological_order() const noexcept { return topo_; }

  const std::vector<ClaimId>& parents(ClaimId v) const;
  const std::vector<ClaimId>& children(ClaimId v) const;
  const ClaimSet& ancestors(ClaimId v) const;
  const ClaimSet& descendants(ClaimId v) const;
  bool is_ancestor(ClaimId u, ClaimId v) const;

  std::vector<int> labels() const;
  std::size_t false_count() const;

  void set_features(ClaimId v, std::vector<double> features);

  bool operator==(const AdgProblem& other) const {
    return id_ == other.id_ && claims_ == other.claims_ && edges_ == other.edges_;
  }

 private:
  void check_id(ClaimId v) const;

  std::string id_;
  std::vector<Claim> claims_;
  std::vector<Edge> edges_;
  std::vector<ClaimId> topo_;
  std::vector<std::vector<ClaimId>> parents_;
  std::vector<std::vector<ClaimId>> children_;
  std::vector<ClaimSet> ancestors_;
  std::vector<ClaimSet> descendants_;
  std::vector<std::vector<bool>> ancestor_matrix_;  // [u][v]: u is an ancestor of v
};

/// Transitive closure of parents of v, excluding v. Throws UnknownClaimId.
ClaimSet ancestors(const AdgProblem& problem, ClaimId v);

/// Transitive closure of children of v, excluding v. Throws UnknownClaimId.
ClaimSet descendants(const AdgProblem& problem, ClaimId v);

/// True iff every retained claim is correct and every ancestor of a
/// retained claim is itself retained. The empty set is coherently factual.
bool is_coherently_factual(const AdgProblem& problem, std::span<const ClaimId> retained);

/// True iff every retained claim is correct; ancestry is ignored. This is
/// the validity notion of independent (graph-free) claim filtering and
/// coincides with coherent factuality on ancestor-closed sets.
bool is_factual(const AdgProblem& problem, std::span<const ClaimId> retained);

bool is_ancestor_closed(const AdgProblem& problem, std::span<const ClaimId> retained);

}  // namespace cohconf
