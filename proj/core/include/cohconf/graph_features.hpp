#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "cohconf/adg.hpp"

namespace cohconf {

/// Per-claim graph metrics, matching the NetworkX-derived feature family
/// consumed by learned scorers.
struct StructuralFeatures {
  std::size_t in_degree = 0;
  std::size_t out_degree = 0;
  bool is_source = false;
  bool is_sink = false;
  std::size_t reachability = 0;        // number of descendants
  std::size_t depth_from_sources = 0;  // longest path from any source
  double pagerank = 0.0;
  double betweenness = 0.0;
  double closeness = 0.0;
  double clustering = 0.0;

  /// Values in the order of structural_feature_names().
  std::array<double, 10> values() const;
};

/// Feature keys as emitted in datasets ("nx_in_degree", ...).
const std::array<std::string_view, 10>& structural_feature_names();

/// Computes every structural metric for every claim. Deterministic.
///
/// - pagerank: damping 0.85, dangling mass spread uniformly, power iteration
///   until the L1 change drops below 1e-10.
/// - betweenness: directed node betweenness (Brandes), normalized by
///   (n-1)(n-2).
/// - closeness: incoming-distance closeness with the Wasserman-Faust
///   reachability correction, (r/sum d) * (r/(n-1)).
/// - clustering: directed clustering coefficient (Fagiolo).
std::vector<StructuralFeatures> compute_structural_features(const AdgProblem& problem);

}  // namespace cohconf
