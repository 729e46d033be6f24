#include "cohconf/adg.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <unordered_set>
#include <utility>

#include "cohconf/error.hpp"

namespace cohconf {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::InvalidEdgeEndpoint: return "InvalidEdgeEndpoint";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::UnknownClaimId: return "UnknownClaimId";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::EmptyRisks: return "EmptyRisks";
    case ErrorCode::EmptyScores: return "EmptyScores";
    case ErrorCode::EmptyValues: return "EmptyValues";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingFrequency: return "MissingFrequency";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::TooFewProblems: return "TooFewProblems";
    case ErrorCode::InsufficientVariance: return "InsufficientVariance";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

FeatureSchema::FeatureSchema(std::vector<std::string> names) : names_(std::move(names)) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::InvalidSchema, "empty feature name");
    if (!seen.insert(n).second) throw Error(ErrorCode::InvalidSchema, "duplicate feature name '" + n + "'");
  }
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<ClaimId> validate_dag(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<ClaimId>> children(n);
  std::vector<std::vector<ClaimId>> parents(n);
  std::set<std::pair<ClaimId, ClaimId>> seen;
  for (const auto& e : edges) {
    if (e.parent >= n || e.child >= n) {
      throw Error(ErrorCode::InvalidEdgeEndpoint,
                  "edge (" + std::to_string(e.parent) + "," + std::to_string(e.child) + ") over " +
                      std::to_string(n) + " claims");
    }
    if (e.parent == e.child) {
      throw Error(ErrorCode::CycleDetected, "self-loop at claim " + std::to_string(e.parent));
    }
    if (!seen.emplace(e.parent, e.child).second) {
      throw Error(ErrorCode::DuplicateEdge,
                  "edge (" + std::to_string(e.parent) + "," + std::to_string(e.child) + ") listed twice");
    }
    children[e.parent].push_back(e.child);
    parents[e.child].push_back(e.parent);
  }

  std::vector<std::size_t> indegree(n);
  for (std::size_t v = 0; v < n; ++v) indegree[v] = parents[v].size();
  std::priority_queue<ClaimId, std::vector<ClaimId>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.push(v);

  std::vector<ClaimId> order;
  order.reserve(n);
  while (!ready.empty()) {
    ClaimId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (ClaimId c : children[v])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (order.size() == n) return order;

  // Every unsorted node has an unsorted parent; walking parents must revisit
  // a node, and the revisited node lies on a cycle.
  ClaimId v = 0;
  while (indegree[v] == 0) ++v;
  std::vector<bool> visited(n, false);
  while (!visited[v]) {
    visited[v] = true;
    for (ClaimId p : parents[v]) {
      if (indegree[p] != 0) {
        v = p;
        break;
      }
    }
  }
  throw Error(ErrorCode::CycleDetected, "cycle through claim " + std::to_string(v));
}

AdgProblem::AdgProblem(std::string id, std::vector<Claim> claims, std::vector<Edge> edges)
    : id_(std::move(id)), claims_(std::move(claims)), edges_(std::move(edges)) {
  for (const auto& c : claims_) {
    if (c.label != 0 && c.label != 1)
      throw Error(ErrorCode::ValidationError, "problem '" + id_ + "': label must be 0 or 1");
  }
  const std::size_t n = claims_.size();
  topo_ = validate_dag(n, edges_);

  parents_.assign(n, {});
  children_.assign(n, {});
  for (const auto& e : edges_) {
    parents_[e.child].push_back(e.parent);
    children_[e.parent].push_back(e.child);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
  for (auto& c : children_) std::sort(c.begin(), c.end());

  ancestor_matrix_.assign(n, std::vector<bool>(n, false));
  for (ClaimId v : topo_) {
    for (ClaimId p : parents_[v]) {
      ancestor_matrix_[p][v] = true;
      for (ClaimId u = 0; u < n; ++u)
        if (ancestor_matrix_[u][p]) ancestor_matrix_[u][v] = true;
    }
  }
  ancestors_.assign(n, {});
  descendants_.assign(n, {});
  for (ClaimId u = 0; u < n; ++u) {
    for (ClaimId v = 0; v < n; ++v) {
      if (ancestor_matrix_[u][v]) {
        ancestors_[v].push_back(u);
        descendants_[u].push_back(v);
      }
    }
  }
}

void AdgProblem::check_id(ClaimId v) const {
  if (v >= claims_.size()) {
    throw Error(ErrorCode::UnknownClaimId,
                "claim " + std::to_string(v) + " in problem '" + id_ + "' with " +
                    std::to_string(claims_.size()) + " claims");
  }
}

const Claim& AdgProblem::claim(ClaimId v) const {
  check_id(v);
  return claims_[v];
}

const std::vector<ClaimId>& AdgProblem::parents(ClaimId v) const {
  check_id(v);
  return parents_[v];
}

const std::vector<ClaimId>& AdgProblem::children(ClaimId v) const {
  check_id(v);
  return children_[v];
}

const ClaimSet& AdgProblem::ancestors(ClaimId v) const {
  check_id(v);
  return ancestors_[v];
}

const ClaimSet& AdgProblem::descendants(ClaimId v) const {
  check_id(v);
  return descendants_[v];
}

bool AdgProblem::is_ancestor(ClaimId u, ClaimId v) const {
  check_id(u);
  check_id(v);
  return ancestor_matrix_[u][v];
}

std::vector<int> AdgProblem::labels() const {
  std::vector<int> out;
  out.reserve(claims_.size());
  for (const auto& c : claims_) out.push_back(c.label);
  return out;
}

std::size_t AdgProblem::false_count() const {
  return static_cast<std::size_t>(
      std::count_if(claims_.begin(), claims_.end(), [](const Claim& c) { return c.label == 0; }));
}

void AdgProblem::set_features(ClaimId v, std::vector<double> features) {
  check_id(v);
  claims_[v].features = std::move(features);
}

ClaimSet ancestors(const AdgProblem& problem, ClaimId v) { return problem.ancestors(v); }

ClaimSet descendants(const AdgProblem& problem, ClaimId v) { return problem.descendants(v); }

namespace {

std::vector<bool> membership(const AdgProblem& problem, std::span<const ClaimId> retained) {
  std::vector<bool> in(problem.size(), false);
  for (ClaimId v : retained) {
    if (v >= problem.size()) {
      throw Error(ErrorCode::UnknownClaimId,
                  "claim " + std::to_string(v) + " in problem '" + problem.id() + "'");
    }
    in[v] = true;
  }
  return in;
}

}  // namespace

bool is_ancestor_closed(const AdgProblem& problem, std::span<const ClaimId> retained) {
  auto in = membership(problem, retained);
  for (ClaimId v : retained)
    for (ClaimId u : problem.ancestors(v))
      if (!in[u]) return false;
  return true;
}

bool is_factual(const AdgProblem& problem, std::span<const ClaimId> retained) {
  membership(problem, retained);
  for (ClaimId v : retained)
    if (problem.claims()[v].label != 1) return false;
  return true;
}

bool is_coherently_factual(const AdgProblem& problem, std::span<const ClaimId> retained) {
  // Ancestor-closure puts every ancestor in `retained`, so checking retained
  // labels also covers the ancestors.
  return is_ancestor_closed(problem, retained) && is_factual(problem, retained);
}

}  // namespace cohconf
