#pragma once

#include "pqc/descent.hpp"
#include "pqc/potential.hpp"

#include <vector>

namespace pqc::graphalloc {

// Undirected weighted graph, adjacency-list form.
struct SimilarityGraph {
  int num_nodes = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // (neighbor, weight), both directions
};

struct Clustering {
  std::vector<int> assignment;                // contiguous ids 0..k-1, one per observation
  Eigen::MatrixXd centroids;                  // k x d, means of converged member positions
  std::vector<std::vector<int>> member_sets;  // per-cluster observation indices
  Eigen::MatrixXd energy_matrix;              // k x k directed barriers, diagonal 0
  double e_th_used = 0.0;

  int k() const { return static_cast<int>(member_sets.size()); }
};

// Nodes are converged replicas in the augmented space (y_i, V(y_i));
// symmetric m-nearest-neighbour edges with Gaussian weights
// exp(-dist^2 / 2h^2), h = mean m-NN distance.
SimilarityGraph build_similarity_graph(const descent::DescentResult& result, int m_neighbors = 10);

// Greedy modularity maximization (Louvain), deterministic ascending-id
// sweeps, resolution 1, ties toward the lower community id.
std::vector<int> detect_communities(const SimilarityGraph& graph);

Eigen::MatrixXd compute_centroids(const std::vector<int>& assignment,
                                  const descent::DescentResult& result);

// Barrier endpoint per cluster: the converged member replica with the
// lowest potential. For a single well this coincides with the centroid;
// for merged multi-well clusters the arithmetic mean can leave the data
// manifold entirely, which would corrupt Eq-32 style path barriers.
Eigen::MatrixXd cluster_anchors(const std::vector<int>& assignment,
                                const descent::DescentResult& result);

// Path network over arbitrary nodes: symmetric m-NN edges with Euclidean
// lengths; barrier(i,j) = max V along the distance-shortest path from
// centroid i to centroid j, minus V at centroid i, clamped at 0.
// Disconnected pairs get +inf. Exposed for direct testing.
Eigen::MatrixXd barriers_on_network(const Eigen::MatrixXd& positions,
                                    const Eigen::VectorXd& potentials,
                                    const std::vector<int>& centroid_nodes, int m_neighbors);

// Observation skeleton of the path network, reusable across merge
// thresholds. Each edge carries the maximum potential seen at interior
// sample points, so an edge that jumps a ridge cannot smuggle a path past
// it at well level.
struct PathNetwork {
  struct Edge {
    int to = 0;
    double length = 0.0;
    double vmax = 0.0;  // max V over interior samples of the segment
  };
  Eigen::MatrixXd positions;  // the observations
  Eigen::VectorXd node_v;     // V at the observations
  std::vector<std::vector<Edge>> adj;
  double ref_length = 0.0;  // median edge length; sets the sampling density
  int m_neighbors = 10;
};

PathNetwork build_path_network(const descent::DescentResult& result,
                               const potential::PotentialField& field, int m_neighbors = 10);

// Barriers over the skeleton extended with the centroids (the observations
// keep the terrain between wells reachable; converged replicas collapse
// into clumps that would disconnect it). Path maxima combine node
// potentials with the per-edge interior maxima.
Eigen::MatrixXd energy_barriers(const PathNetwork& network, const Eigen::MatrixXd& centroids,
                                const potential::PotentialField& field);

// Convenience overload building the skeleton on the fly.
Eigen::MatrixXd energy_barriers(const descent::DescentResult& result,
                                const Eigen::MatrixXd& centroids,
                                const potential::PotentialField& field, int m_neighbors = 10);

// Union-find merge of clusters whose cheaper directed barrier is <= e_th;
// returns contiguous labels per cluster. Exposed for direct testing.
std::vector<int> merge_partition(const Eigen::MatrixXd& energy_matrix, double e_th);

// Full pipeline helpers. A prebuilt skeleton may be passed to avoid
// re-sampling edge potentials for every threshold.
Clustering initial_clustering(const descent::DescentResult& result,
                              const potential::PotentialField& field, int m_neighbors = 10,
                              const PathNetwork* network = nullptr);

// Applies merge_partition, recomputes centroids and barriers, and repeats
// until no further merge so the operation is idempotent at fixed e_th.
Clustering merge_by_threshold(const Clustering& clustering, const descent::DescentResult& result,
                              const potential::PotentialField& field, double e_th,
                              int m_neighbors = 10, const PathNetwork* network = nullptr);

}  // namespace pqc::graphalloc
