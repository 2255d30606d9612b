#include "pqc/graphalloc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace pqc::graphalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Symmetric m-NN edge list (union of both directions), ties by index.
std::vector<std::pair<int, int>> symmetric_knn_edges(const Eigen::MatrixXd& points,
                                                     int m_neighbors) {
  const Eigen::Index n = points.rows();
  const int m = std::min<int>(m_neighbors, static_cast<int>(n) - 1);
  if (m < 1) throw std::invalid_argument("symmetric_knn_edges: need at least 2 nodes");

  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<bool>> seen(n, std::vector<bool>(n, false));
  std::vector<std::pair<double, int>> order(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    int cnt = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      order[cnt++] = {(points.row(j) - points.row(i)).squaredNorm(), static_cast<int>(j)};
    }
    std::partial_sort(order.begin(), order.begin() + m, order.end());
    for (int t = 0; t < m; ++t) {
      int a = static_cast<int>(i), b = order[t].second;
      if (a > b) std::swap(a, b);
      if (!seen[a][b]) {
        seen[a][b] = true;
        edges.emplace_back(a, b);
      }
    }
  }
  return edges;
}

// ---- Louvain ----------------------------------------------------------

struct LouvainLevel {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // no self entries
  std::vector<double> self_loop;                         // intra weight from aggregation
  double two_m = 0.0;  // 2 * total edge weight (self loops counted once, doubled)
};

// One local-moving phase; returns node -> community (not contiguous) and
// whether any node moved.
bool local_moving(const LouvainLevel& g, std::vector<int>& comm) {
  std::vector<double> degree(g.n, 0.0);
  for (int u = 0; u < g.n; ++u) {
    degree[u] = 2.0 * g.self_loop[u];
    for (const auto& [v, w] : g.adj[u]) degree[u] += w;
  }
  std::vector<double> tot(g.n, 0.0);
  for (int u = 0; u < g.n; ++u) tot[comm[u]] += degree[u];

  bool any_move = false;
  bool moved = true;
  std::vector<double> k_uc(g.n, 0.0);
  std::vector<int> touched;
  while (moved) {
    moved = false;
    for (int u = 0; u < g.n; ++u) {
      touched.clear();
      for (const auto& [v, w] : g.adj[u]) {
        const int c = comm[v];
        if (k_uc[c] == 0.0) touched.push_back(c);
        k_uc[c] += w;
      }
      const int own = comm[u];
      if (k_uc[own] == 0.0) touched.push_back(own);
      tot[own] -= degree[u];

      std::sort(touched.begin(), touched.end());
      double best_gain = -kInf;
      int best_c = -1;
      for (int c : touched) {
        const double gain = k_uc[c] - degree[u] * tot[c] / g.two_m;
        if (gain > best_gain) {
          best_gain = gain;
          best_c = c;
        }
      }
      const double own_gain = k_uc[own] - degree[u] * tot[own] / g.two_m;
      // Move only on a strict improvement over staying put.
      if (best_c != own && best_gain > own_gain + 1e-12) {
        comm[u] = best_c;
        moved = true;
        any_move = true;
      }
      tot[comm[u]] += degree[u];
      for (int c : touched) k_uc[c] = 0.0;
    }
  }
  return any_move;
}

// Aggregates communities into supernodes ordered by smallest member id.
LouvainLevel aggregate(const LouvainLevel& g, const std::vector<int>& comm,
                       std::vector<int>& comm_to_super) {
  comm_to_super.assign(g.n, -1);
  int next = 0;
  for (int u = 0; u < g.n; ++u)
    if (comm_to_super[comm[u]] < 0) comm_to_super[comm[u]] = next++;

  LouvainLevel out;
  out.n = next;
  out.adj.resize(next);
  out.self_loop.assign(next, 0.0);
  std::vector<std::map<int, double>> acc(next);
  for (int u = 0; u < g.n; ++u) {
    const int cu = comm_to_super[comm[u]];
    out.self_loop[cu] += g.self_loop[u];
    for (const auto& [v, w] : g.adj[u]) {
      const int cv = comm_to_super[comm[v]];
      if (cu == cv) {
        if (u < v) out.self_loop[cu] += w;
      } else {
        acc[cu][cv] += w;
      }
    }
  }
  out.two_m = 0.0;
  for (int c = 0; c < next; ++c) {
    out.two_m += 2.0 * out.self_loop[c];
    for (const auto& [v, w] : acc[c]) {
      out.adj[c].emplace_back(v, w);
      out.two_m += w;
    }
  }
  return out;
}

}  // namespace

SimilarityGraph build_similarity_graph(const descent::DescentResult& result, int m_neighbors) {
  const Eigen::Index n = result.final_points.rows();
  if (n < 2) throw std::invalid_argument("build_similarity_graph: need at least 2 replicas");

  // Potential enters as an extra coordinate so wells separated in energy
  // stay separated even when spatially close.
  Eigen::MatrixXd aug(n, result.final_points.cols() + 1);
  aug.leftCols(result.final_points.cols()) = result.final_points;
  aug.col(result.final_points.cols()) = result.final_potentials;

  const auto edges = symmetric_knn_edges(aug, m_neighbors);
  double h = 0.0;
  {  // mean m-NN distance in augmented space
    const int m = std::min<int>(m_neighbors, static_cast<int>(n) - 1);
    std::vector<double> row(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      int cnt = 0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) row[cnt++] = (aug.row(j) - aug.row(i)).norm();
      std::nth_element(row.begin(), row.begin() + m - 1, row.end());
      h += std::accumulate(row.begin(), row.begin() + m, 0.0);
    }
    h /= static_cast<double>(n * m);
  }
  if (!(h > 0.0)) h = 1.0;  // all replicas coincide; weights become exactly 1

  SimilarityGraph graph;
  graph.num_nodes = static_cast<int>(n);
  graph.adj.resize(n);
  for (const auto& [a, b] : edges) {
    const double dist2 = (aug.row(a) - aug.row(b)).squaredNorm();
    const double w = std::exp(-dist2 / (2.0 * h * h));
    graph.adj[a].emplace_back(b, w);
    graph.adj[b].emplace_back(a, w);
  }
  return graph;
}

std::vector<int> detect_communities(const SimilarityGraph& graph) {
  const int n = graph.num_nodes;
  if (n <= 0) throw std::invalid_argument("detect_communities: empty graph");

  LouvainLevel level;
  level.n = n;
  level.adj = graph.adj;
  level.self_loop.assign(n, 0.0);
  level.two_m = 0.0;
  for (int u = 0; u < n; ++u)
    for (const auto& [v, w] : level.adj[u]) level.two_m += w;
  if (level.two_m <= 0.0) {
    // No edges: every node is its own community.
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) out[i] = i;
    return out;
  }

  std::vector<int> node_to_comm(n);
  for (int i = 0; i < n; ++i) node_to_comm[i] = i;

  while (true) {
    std::vector<int> comm(level.n);
    for (int i = 0; i < level.n; ++i) comm[i] = i;
    const bool improved = local_moving(level, comm);
    if (!improved) break;
    std::vector<int> comm_to_super;
    LouvainLevel next = aggregate(level, comm, comm_to_super);
    for (int i = 0; i < n; ++i) node_to_comm[i] = comm_to_super[comm[node_to_comm[i]]];
    if (next.n == level.n) break;
    level = std::move(next);
  }

  // Contiguous ids in order of first appearance.
  std::vector<int> remap(n, -1);
  int next_id = 0;
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    int& r = remap[node_to_comm[i]];
    if (r < 0) r = next_id++;
    out[i] = r;
  }
  return out;
}

Eigen::MatrixXd compute_centroids(const std::vector<int>& assignment,
                                  const descent::DescentResult& result) {
  const Eigen::Index n = result.final_points.rows();
  if (static_cast<Eigen::Index>(assignment.size()) != n)
    throw std::invalid_argument("compute_centroids: assignment size mismatch");
  const int k = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(k, result.final_points.cols());
  std::vector<int> counts(k, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    centroids.row(assignment[i]) += result.final_points.row(i);
    ++counts[assignment[i]];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) throw std::invalid_argument("compute_centroids: empty cluster id " +
                                                    std::to_string(c));
    centroids.row(c) /= static_cast<double>(counts[c]);
  }
  return centroids;
}

Eigen::MatrixXd cluster_anchors(const std::vector<int>& assignment,
                                const descent::DescentResult& result) {
  const Eigen::Index n = result.final_points.rows();
  if (static_cast<Eigen::Index>(assignment.size()) != n)
    throw std::invalid_argument("cluster_anchors: assignment size mismatch");
  const int k = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<Eigen::Index> best(k, -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = assignment[i];
    if (best[c] < 0 || result.final_potentials(i) < result.final_potentials(best[c])) best[c] = i;
  }
  Eigen::MatrixXd anchors(k, result.final_points.cols());
  for (int c = 0; c < k; ++c) {
    if (best[c] < 0)
      throw std::invalid_argument("cluster_anchors: empty cluster id " + std::to_string(c));
    anchors.row(c) = result.final_points.row(best[c]);
  }
  return anchors;
}

Eigen::MatrixXd barriers_on_network(const Eigen::MatrixXd& positions,
                                    const Eigen::VectorXd& potentials,
                                    const std::vector<int>& centroid_nodes, int m_neighbors) {
  const Eigen::Index n = positions.rows();
  const int k = static_cast<int>(centroid_nodes.size());
  Eigen::MatrixXd barriers = Eigen::MatrixXd::Zero(k, k);
  if (k <= 1 || n < 2) return barriers;

  const auto edges = symmetric_knn_edges(positions, m_neighbors);
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& [a, b] : edges) {
    const double dist = (positions.row(a) - positions.row(b)).norm();
    adj[a].emplace_back(b, dist);
    adj[b].emplace_back(a, dist);
  }

  std::vector<double> dist(n);
  std::vector<int> parent(n);
  for (int ci = 0; ci < k; ++ci) {
    const int src = centroid_nodes[ci];
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    dist[src] = 0.0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      const auto [du, u] = pq.top();
      pq.pop();
      if (du > dist[u]) continue;
      for (const auto& [v, w] : adj[u]) {
        if (du + w < dist[v]) {
          dist[v] = du + w;
          parent[v] = u;
          pq.emplace(dist[v], v);
        }
      }
    }
    const double v_src = potentials(src);
    for (int cj = 0; cj < k; ++cj) {
      if (cj == ci) continue;
      const int dst = centroid_nodes[cj];
      if (!std::isfinite(dist[dst])) {
        barriers(ci, cj) = kInf;
        continue;
      }
      double vmax = -kInf;
      for (int node = dst; node != -1; node = parent[node]) vmax = std::max(vmax, potentials(node));
      barriers(ci, cj) = std::max(0.0, vmax - v_src);
    }
  }
  return barriers;
}

namespace {

// Max V over interior points of the segment a-b, sampled densely enough
// that long edges cannot skip over a ridge.
double edge_interior_vmax(const potential::PotentialField& field, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b, double length, double ref_length,
                          potential::EvalWorkspace& ws) {
  int samples = 1;
  if (ref_length > 0.0)
    samples = std::clamp(static_cast<int>(std::lround(length / ref_length)), 1, 8);
  double vmax = -kInf;
  for (int s = 1; s <= samples; ++s) {
    const double t = static_cast<double>(s) / (samples + 1);
    double v;
    potential::evaluate(field, a + t * (b - a), &v, nullptr, &ws);
    vmax = std::max(vmax, v);
  }
  return vmax;
}

}  // namespace

PathNetwork build_path_network(const descent::DescentResult& result,
                               const potential::PotentialField& field, int m_neighbors) {
  // Path nodes are the observations. Converged replicas pile up at the
  // well bottoms and would leave every well in its own graph component;
  // the observations still populate the terrain Eq-32 is meant to sample.
  PathNetwork net;
  net.positions = result.start_points;
  net.node_v = result.initial_potentials;
  net.m_neighbors = m_neighbors;
  const Eigen::Index n = net.positions.rows();
  net.adj.resize(n);

  const auto edges = symmetric_knn_edges(net.positions, m_neighbors);
  std::vector<double> lengths(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e)
    lengths[e] = (net.positions.row(edges[e].first) - net.positions.row(edges[e].second)).norm();
  std::vector<double> sorted_lengths = lengths;
  std::nth_element(sorted_lengths.begin(), sorted_lengths.begin() + sorted_lengths.size() / 2,
                   sorted_lengths.end());
  net.ref_length = sorted_lengths[sorted_lengths.size() / 2];

  potential::EvalWorkspace ws;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    const double vmax =
        edge_interior_vmax(field, net.positions.row(a).transpose(),
                           net.positions.row(b).transpose(), lengths[e], net.ref_length, ws);
    net.adj[a].push_back({b, lengths[e], vmax});
    net.adj[b].push_back({a, lengths[e], vmax});
  }
  return net;
}

Eigen::MatrixXd energy_barriers(const PathNetwork& network, const Eigen::MatrixXd& centroids,
                                const potential::PotentialField& field) {
  const Eigen::Index n = network.positions.rows();
  const int k = static_cast<int>(centroids.rows());
  if (k < 1) throw std::invalid_argument("energy_barriers: need at least one centroid");

  const Eigen::Index total = n + k;
  std::vector<std::vector<PathNetwork::Edge>> adj(total);
  for (Eigen::Index i = 0; i < n; ++i) adj[i] = network.adj[i];

  Eigen::VectorXd node_v(total);
  node_v.head(n) = network.node_v;
  potential::EvalWorkspace ws;
  for (int c = 0; c < k; ++c) {
    double v;
    potential::evaluate(field, centroids.row(c).transpose(), &v, nullptr, &ws);
    node_v(n + c) = v;
  }

  // Each centroid joins its m nearest nodes (observations and earlier
  // centroids); duplicate well centroids thus stay mutually reachable.
  const int m = std::min<int>(network.m_neighbors, static_cast<int>(total) - 1);
  std::vector<std::pair<double, int>> order;
  for (int c = 0; c < k; ++c) {
    const Eigen::Index self = n + c;
    order.clear();
    for (Eigen::Index j = 0; j < total; ++j) {
      if (j == self) continue;
      double d2;
      if (j < n)
        d2 = (network.positions.row(j) - centroids.row(c)).squaredNorm();
      else
        d2 = (centroids.row(j - n) - centroids.row(c)).squaredNorm();
      order.emplace_back(d2, static_cast<int>(j));
    }
    std::partial_sort(order.begin(), order.begin() + m, order.end());
    for (int t = 0; t < m; ++t) {
      const int j = order[t].second;
      bool present = false;
      for (const auto& e : adj[self])
        if (e.to == j) present = true;
      if (present) continue;
      const Eigen::VectorXd a = centroids.row(c).transpose();
      const Eigen::VectorXd b = j < n ? network.positions.row(j).transpose()
                                      : centroids.row(j - n).transpose();
      const double length = (a - b).norm();
      const double vmax = edge_interior_vmax(field, a, b, length, network.ref_length, ws);
      adj[self].push_back({j, length, vmax});
      adj[j].push_back({static_cast<int>(self), length, vmax});
    }
  }

  Eigen::MatrixXd barriers = Eigen::MatrixXd::Zero(k, k);
  if (k == 1) return barriers;

  std::vector<double> dist(total);
  std::vector<int> parent(total);
  std::vector<double> parent_edge_vmax(total);
  for (int ci = 0; ci < k; ++ci) {
    const Eigen::Index src = n + ci;
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(parent_edge_vmax.begin(), parent_edge_vmax.end(), -kInf);
    dist[src] = 0.0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.emplace(0.0, static_cast<int>(src));
    while (!pq.empty()) {
      const auto [du, u] = pq.top();
      pq.pop();
      if (du > dist[u]) continue;
      for (const auto& e : adj[u]) {
        if (du + e.length < dist[e.to]) {
          dist[e.to] = du + e.length;
          parent[e.to] = u;
          parent_edge_vmax[e.to] = e.vmax;
          pq.emplace(dist[e.to], e.to);
        }
      }
    }
    const double v_src = node_v(src);
    for (int cj = 0; cj < k; ++cj) {
      if (cj == ci) continue;
      const Eigen::Index dst = n + cj;
      if (!std::isfinite(dist[dst])) {
        barriers(ci, cj) = kInf;
        continue;
      }
      double vmax = -kInf;
      for (int node = static_cast<int>(dst); node != -1; node = parent[node]) {
        vmax = std::max(vmax, node_v(node));
        if (parent[node] != -1) vmax = std::max(vmax, parent_edge_vmax[node]);
      }
      barriers(ci, cj) = std::max(0.0, vmax - v_src);
    }
  }
  return barriers;
}

Eigen::MatrixXd energy_barriers(const descent::DescentResult& result,
                                const Eigen::MatrixXd& centroids,
                                const potential::PotentialField& field, int m_neighbors) {
  return energy_barriers(build_path_network(result, field, m_neighbors), centroids, field);
}

std::vector<int> merge_partition(const Eigen::MatrixXd& energy_matrix, double e_th) {
  const int k = static_cast<int>(energy_matrix.rows());
  std::vector<int> root(k);
  for (int i = 0; i < k; ++i) root[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (std::min(energy_matrix(i, j), energy_matrix(j, i)) <= e_th) {
        const int a = find(i), b = find(j);
        if (a != b) root[std::max(a, b)] = std::min(a, b);
      }
  std::vector<int> labels(k, -1);
  int next = 0;
  for (int i = 0; i < k; ++i) {
    const int r = find(i);
    if (labels[r] < 0) labels[r] = next++;
    labels[i] = labels[r];
  }
  return labels;
}

Clustering initial_clustering(const descent::DescentResult& result,
                              const potential::PotentialField& field, int m_neighbors,
                              const PathNetwork* network) {
  Clustering c;
  c.assignment = detect_communities(build_similarity_graph(result, m_neighbors));
  const int k = *std::max_element(c.assignment.begin(), c.assignment.end()) + 1;
  c.member_sets.assign(k, {});
  for (std::size_t i = 0; i < c.assignment.size(); ++i)
    c.member_sets[c.assignment[i]].push_back(static_cast<int>(i));
  c.centroids = compute_centroids(c.assignment, result);
  PathNetwork local;
  if (!network) {
    local = build_path_network(result, field, m_neighbors);
    network = &local;
  }
  c.energy_matrix = energy_barriers(*network, cluster_anchors(c.assignment, result), field);
  c.e_th_used = 0.0;
  return c;
}

Clustering merge_by_threshold(const Clustering& clustering, const descent::DescentResult& result,
                              const potential::PotentialField& field, double e_th,
                              int m_neighbors, const PathNetwork* network) {
  PathNetwork local;
  if (!network) {
    local = build_path_network(result, field, m_neighbors);
    network = &local;
  }
  Clustering current = clustering;
  while (true) {
    const std::vector<int> labels = merge_partition(current.energy_matrix, e_th);
    const int new_k = *std::max_element(labels.begin(), labels.end()) + 1;
    if (new_k == current.k()) break;

    Clustering merged;
    merged.assignment.resize(current.assignment.size());
    for (std::size_t i = 0; i < current.assignment.size(); ++i)
      merged.assignment[i] = labels[current.assignment[i]];
    merged.member_sets.assign(new_k, {});
    for (std::size_t i = 0; i < merged.assignment.size(); ++i)
      merged.member_sets[merged.assignment[i]].push_back(static_cast<int>(i));
    merged.centroids = compute_centroids(merged.assignment, result);
    merged.energy_matrix =
        energy_barriers(*network, cluster_anchors(merged.assignment, result), field);
    current = std::move(merged);
  }
  current.e_th_used = e_th;
  return current;
}

}  // namespace pqc::graphalloc
