#include "cohconf/graph_features.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stack>

namespace cohconf {

std::array<double, 10> StructuralFeatures::values() const {
  return {static_cast<double>(in_degree),
          static_cast<double>(out_degree),
          pagerank,
          betweenness,
          closeness,
          clustering,
          is_source ? 1.0 : 0.0,
          is_sink ? 1.0 : 0.0,
          static_cast<double>(reachability),
          static_cast<double>(depth_from_sources)};
}

const std::array<std::string_view, 10>& structural_feature_names() {
  static const std::array<std::string_view, 10> names = {
      "nx_in_degree",  "nx_out_degree", "nx_pagerank",     "nx_betweenness",   "nx_closeness",
      "nx_clustering", "nx_is_source",  "nx_is_sink",      "nx_reachability",  "nx_depth_from_sources"};
  return names;
}

namespace {

std::vector<double> pagerank(const AdgProblem& g) {
  constexpr double kDamping = 0.85;
  constexpr double kTolerance = 1e-10;
  constexpr int kMaxIterations = 10000;

  const std::size_t n = g.size();
  const double uniform = 1.0 / static_cast<double>(n);
  std::vector<double> x(n, uniform);
  std::vector<double> next(n);
  for (int it = 0; it < kMaxIterations; ++it) {
    double dangling = 0.0;
    for (ClaimId v = 0; v < n; ++v)
      if (g.children(v).empty()) dangling += x[v];
    std::fill(next.begin(), next.end(), (1.0 - kDamping) * uniform + kDamping * dangling * uniform);
    for (ClaimId v = 0; v < n; ++v) {
      const auto& out = g.children(v);
      if (out.empty()) continue;
      const double share = kDamping * x[v] / static_cast<double>(out.size());
      for (ClaimId c : out) next[c] += share;
    }
    double change = 0.0;
    for (ClaimId v = 0; v < n; ++v) change += std::abs(next[v] - x[v]);
    x.swap(next);
    if (change < kTolerance) break;
  }
  double total = 0.0;
  for (double xi : x) total += xi;
  for (double& xi : x) xi /= total;
  return x;
}

// Brandes' algorithm on the unweighted directed graph.
std::vector<double> betweenness(const AdgProblem& g) {
  const std::size_t n = g.size();
  std::vector<double> bc(n, 0.0);
  std::vector<std::vector<ClaimId>> preds(n);
  std::vector<double> sigma(n);
  std::vector<long> dist(n);
  std::vector<double> delta(n);
  for (ClaimId s = 0; s < n; ++s) {
    for (auto& p : preds) p.clear();
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(delta.begin(), delta.end(), 0.0);
    sigma[s] = 1.0;
    dist[s] = 0;
    std::vector<ClaimId> order;
    std::deque<ClaimId> queue{s};
    while (!queue.empty()) {
      ClaimId v = queue.front();
      queue.pop_front();
      order.push_back(v);
      for (ClaimId w : g.children(v)) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      ClaimId w = *it;
      for (ClaimId v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }
  if (n > 2) {
    const double scale = 1.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2));
    for (double& b : bc) b *= scale;
  } else {
    std::fill(bc.begin(), bc.end(), 0.0);
  }
  return bc;
}

// Closeness from incoming shortest paths, Wasserman-Faust corrected.
std::vector<double> closeness(const AdgProblem& g) {
  const std::size_t n = g.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  std::vector<long> dist(n);
  for (ClaimId u = 0; u < n; ++u) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[u] = 0;
    std::deque<ClaimId> queue{u};
    double total = 0.0;
    std::size_t reached = 0;
    while (!queue.empty()) {
      ClaimId v = queue.front();
      queue.pop_front();
      for (ClaimId p : g.parents(v)) {
        if (dist[p] < 0) {
          dist[p] = dist[v] + 1;
          total += static_cast<double>(dist[p]);
          ++reached;
          queue.push_back(p);
        }
      }
    }
    if (total > 0.0) {
      const double r = static_cast<double>(reached);
      out[u] = (r / total) * (r / static_cast<double>(n - 1));
    }
  }
  return out;
}

std::vector<double> clustering(const AdgProblem& g) {
  const std::size_t n = g.size();
  std::vector<double> out(n, 0.0);
  auto count_common = [](const std::vector<ClaimId>& a, const std::vector<ClaimId>& b) {
    std::size_t count = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        ++count;
        ++ia;
        ++ib;
      }
    }
    return count;
  };
  for (ClaimId i = 0; i < n; ++i) {
    const auto& ip = g.parents(i);
    const auto& is = g.children(i);
    std::size_t triangles = 0;
    auto visit = [&](ClaimId j) {
      const auto& jp = g.parents(j);
      const auto& js = g.children(j);
      triangles += count_common(ip, jp) + count_common(ip, js) + count_common(is, jp) + count_common(is, js);
    };
    for (ClaimId j : ip) visit(j);
    for (ClaimId j : is) visit(j);
    const std::size_t total_degree = ip.size() + is.size();
    const std::size_t bidirectional = count_common(ip, is);
    if (triangles == 0) continue;
    const double denom =
        2.0 * (static_cast<double>(total_degree) * static_cast<double>(total_degree - 1) -
               2.0 * static_cast<double>(bidirectional));
    out[i] = static_cast<double>(triangles) / denom;
  }
  return out;
}

}  // namespace

std::vector<StructuralFeatures> compute_structural_features(const AdgProblem& problem) {
  const std::size_t n = problem.size();
  std::vector<StructuralFeatures> out(n);
  if (n == 0) return out;

  const auto pr = pagerank(problem);
  const auto bc = betweenness(problem);
  const auto cl = closeness(problem);
  const auto cc = clustering(problem);

  std::vector<std::size_t> depth(n, 0);
  for (ClaimId v : problem.topological_order())
    for (ClaimId p : problem.parents(v)) depth[v] = std::max(depth[v], depth[p] + 1);

  for (ClaimId v = 0; v < n; ++v) {
    auto& f = out[v];
    f.in_degree = problem.parents(v).size();
    f.out_degree = problem.children(v).size();
    f.is_source = f.in_degree == 0;
    f.is_sink = f.out_degree == 0;
    f.reachability = problem.descendants(v).size();
    f.depth_from_sources = depth[v];
    f.pagerank = pr[v];
    f.betweenness = bc[v];
    f.closeness = cl[v];
    f.clustering = cc[v];
  }
  return out;
}

}  // namespace cohconf
