#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "util/linalg.hpp"

namespace sorfgp {

/// k-means in random-feature space.
struct ClusterIndex {
  std::size_t k = 0;
  RowMatrix centroids;                    // k x M
  std::vector<std::size_t> assignments;   // per training point
  std::vector<std::size_t> initial;       // indices of the seeding points
  std::vector<double> objective_history;  // after each assignment step
  std::size_t iterations = 0;
  std::string model_ref;  // model file the features came from, if any

  double objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }
  std::vector<std::vector<std::size_t>> members() const;
};

/// Greedy farthest-point seeding: the point farthest from the mean, then
/// repeatedly the point farthest from the chosen set. The seed breaks ties.
std::vector<std::size_t> farthest_point_seeds(const RowMatrix& features, std::size_t k,
                                              std::uint64_t seed);

ClusterIndex kmeans_rf(const RowMatrix& features, std::size_t k, std::size_t max_iter,
                       std::uint64_t seed);
/// Lloyd iterations from the given seeding points.
ClusterIndex kmeans_from(const RowMatrix& features, const std::vector<std::size_t>& initial,
                         std::size_t max_iter);

/// Objective for each k in [k_lo, k_hi]. Each k keeps the better of kmeans_rf
/// and a warm start from the previous k's centroids plus the point farthest
/// from its own centroid, so the table never increases.
std::vector<double> elbow(const RowMatrix& features, std::size_t k_lo, std::size_t k_hi,
                          std::size_t max_iter, std::uint64_t seed);

inline constexpr std::uint32_t kClusterIndexVersion = 1;

/// "SGPK" container next to the model artifact.
void save_cluster_index(const ClusterIndex& index, const std::filesystem::path& path);
ClusterIndex load_cluster_index(const std::filesystem::path& path);

struct KpcaResult {
  Matrix components;           // M x k, orthonormal columns
  Vector explained_variance;   // descending
  RowMatrix projections;       // N x k
  Vector mean;                 // feature mean used for centering
  bool truncated = false;      // fewer components than requested
};

KpcaResult kpca_rf(const RowMatrix& features, std::size_t num_components);

enum class RetrievalMode { FullScan, ClusterRestricted };

const char* to_string(RetrievalMode m);
RetrievalMode parse_retrieval_mode(const std::string& name);

struct RetrievalResult {
  std::vector<std::size_t> ids;
  std::vector<double> scores;  // z_q^T z_i, descending
  bool truncated = false;      // fewer candidates than top_k
};

/// Similarity is the feature-space inner product. Cluster-restricted mode
/// searches the members of the `clusters` nearest centroids.
RetrievalResult retrieve_similar(const ClusterIndex& index, const RowMatrix& store,
                                 const Vector& query, std::size_t top_k, RetrievalMode mode,
                                 std::size_t clusters = 1);

}  // namespace sorfgp
