#include "analysis/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

#include "util/binio.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

std::vector<std::vector<std::size_t>> ClusterIndex::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < assignments.size(); ++i) out[assignments[i]].push_back(i);
  return out;
}

namespace {

// Index of the largest value; exact ties are broken by the generator.
std::size_t argmax_tiebreak(const Vector& v, CounterRng& rng) {
  const double best = v.maxCoeff();
  std::vector<std::size_t> ties;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] == best) ties.push_back(static_cast<std::size_t>(i));
  return ties.size() == 1 ? ties[0] : ties[rng.below(ties.size())];
}

}  // namespace

std::vector<std::size_t> farthest_point_seeds(const RowMatrix& features, std::size_t k,
                                              std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (k < 1 || k > n) {
    throw ValidationError("k-means: k = " + std::to_string(k) + " must be in [1, " +
                          std::to_string(n) + "]");
  }
  CounterRng rng(seed, make_stream(StreamTag::Clustering, 0));
  const Eigen::RowVectorXd mean = features.colwise().mean();
  Vector dist = (features.rowwise() - mean).rowwise().squaredNorm();
  std::vector<std::size_t> chosen{argmax_tiebreak(dist, rng)};
  dist = (features.rowwise() - features.row(static_cast<Eigen::Index>(chosen[0]))).rowwise().squaredNorm();
  while (chosen.size() < k) {
    const std::size_t next = argmax_tiebreak(dist, rng);
    chosen.push_back(next);
    const Vector d = (features.rowwise() - features.row(static_cast<Eigen::Index>(next))).rowwise().squaredNorm();
    dist = dist.cwiseMin(d);
  }
  return chosen;
}

namespace {

/// Lloyd iterations from the given centroids; fills assignments and history.
void lloyd(const RowMatrix& features, ClusterIndex& idx, std::size_t max_iter) {
  const auto n = features.rows();
  const auto k = idx.centroids.rows();
  idx.assignments.assign(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> prev;
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Assignment step: |z - mu|^2 = |z|^2 - 2 z.mu + |mu|^2.
    const Matrix cross = features * idx.centroids.transpose();
    const Vector cn = idx.centroids.rowwise().squaredNorm();
    const Vector zn = features.rowwise().squaredNorm();
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = cn[c] - 2.0 * cross(i, c);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      idx.assignments[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
      obj += std::max(0.0, zn[i] + bd);
    }
    idx.objective_history.push_back(obj);
    idx.iterations = it + 1;
    if (idx.assignments == prev) break;
    prev = idx.assignments;
    // Update step; an empty cluster keeps its centroid.
    RowMatrix sums = RowMatrix::Zero(k, features.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = idx.assignments[static_cast<std::size_t>(i)];
      sums.row(static_cast<Eigen::Index>(c)) += features.row(i);
      ++counts[c];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        idx.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
}

}  // namespace

ClusterIndex kmeans_from(const RowMatrix& features, const std::vector<std::size_t>& initial,
                         std::size_t max_iter) {
  const auto n = features.rows();
  const auto k = static_cast<Eigen::Index>(initial.size());
  require(k >= 1 && k <= n, "k-means: k must be in [1, N]");
  require(max_iter >= 1, "k-means: max_iter must be >= 1");
  ClusterIndex idx;
  idx.k = static_cast<std::size_t>(k);
  idx.initial = initial;
  idx.centroids.resize(k, features.cols());
  for (Eigen::Index c = 0; c < k; ++c) {
    require(initial[static_cast<std::size_t>(c)] < static_cast<std::size_t>(n), "k-means: seed index out of range");
    idx.centroids.row(c) = features.row(static_cast<Eigen::Index>(initial[static_cast<std::size_t>(c)]));
  }
  lloyd(features, idx, max_iter);
  return idx;
}

ClusterIndex kmeans_rf(const RowMatrix& features, std::size_t k, std::size_t max_iter,
                       std::uint64_t seed) {
  return kmeans_from(features, farthest_point_seeds(features, k, seed), max_iter);
}

std::vector<double> elbow(const RowMatrix& features, std::size_t k_lo, std::size_t k_hi,
                          std::size_t max_iter, std::uint64_t seed) {
  require(k_lo >= 1 && k_lo <= k_hi, "elbow: need 1 <= k_lo <= k_hi");
  require(k_hi <= static_cast<std::size_t>(features.rows()), "elbow: k_hi exceeds the number of points");
  std::vector<double> out;
  ClusterIndex idx = kmeans_rf(features, k_lo, max_iter, seed);
  out.push_back(idx.objective());
  for (std::size_t k = k_lo + 1; k <= k_hi; ++k) {
    // Warm start: previous centroids plus the point farthest from its own.
    Eigen::Index far = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      const auto c = static_cast<Eigen::Index>(idx.assignments[static_cast<std::size_t>(i)]);
      const double di = (features.row(i) - idx.centroids.row(c)).squaredNorm();
      if (di > best) {
        best = di;
        far = i;
      }
    }
    ClusterIndex next;
    next.k = k;
    next.initial = idx.initial;
    next.initial.push_back(static_cast<std::size_t>(far));
    next.centroids.resize(static_cast<Eigen::Index>(k), features.cols());
    next.centroids.topRows(idx.centroids.rows()) = idx.centroids;
    next.centroids.row(static_cast<Eigen::Index>(k) - 1) = features.row(far);
    lloyd(features, next, max_iter);
    ClusterIndex fresh = kmeans_rf(features, k, max_iter, seed);
    idx = fresh.objective() < next.objective() ? std::move(fresh) : std::move(next);
    out.push_back(idx.objective());
  }
  return out;
}

KpcaResult kpca_rf(const RowMatrix& features, std::size_t num_components) {
  const auto n = features.rows();
  const auto m = features.cols();
  require(n >= 2, "kpca: need at least two points");
  if (num_components < 1 || num_components > static_cast<std::size_t>(std::min(n, m))) {
    throw ValidationError("kpca: num_components must be in [1, min(N, M)]");
  }
  KpcaResult out;
  out.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - out.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double floor = s.size() ? s[0] * static_cast<double>(std::max(n, m)) *
                                      std::numeric_limits<double>::epsilon()
                                : 0.0;
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > floor) ++rank;
  auto k = static_cast<Eigen::Index>(num_components);
  if (rank < k) {
    out.truncated = true;
    k = rank;
  }
  out.components = svd.matrixV().leftCols(k);
  out.explained_variance = s.head(k).array().square() / static_cast<double>(n - 1);
  out.projections = svd.matrixU().leftCols(k) * s.head(k).asDiagonal();
  return out;
}

const char* to_string(RetrievalMode m) {
  return m == RetrievalMode::FullScan ? "full_scan" : "cluster_restricted";
}

RetrievalMode parse_retrieval_mode(const std::string& name) {
  if (name == "full_scan") return RetrievalMode::FullScan;
  if (name == "cluster_restricted") return RetrievalMode::ClusterRestricted;
  throw ValidationError("unknown retrieval mode '" + name + "' (expected full_scan or cluster_restricted)");
}

RetrievalResult retrieve_similar(const ClusterIndex& index, const RowMatrix& store,
                                 const Vector& query, std::size_t top_k, RetrievalMode mode,
                                 std::size_t clusters) {
  if (store.rows() == 0) throw ValidationError("retrieval: the store is empty");
  if (query.size() != store.cols()) {
    throw ValidationError("retrieval: query has " + std::to_string(query.size()) +
                          " features, store has " + std::to_string(store.cols()));
  }
  require(top_k >= 1, "retrieval: top_k must be >= 1");
  std::vector<std::size_t> candidates;
  if (mode == RetrievalMode::FullScan) {
    candidates.resize(static_cast<std::size_t>(store.rows()));
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  } else {
    require(index.assignments.size() == static_cast<std::size_t>(store.rows()),
            "retrieval: cluster index does not match the store");
    require(clusters >= 1 && clusters <= index.k, "retrieval: clusters must be in [1, k]");
    const Vector d = (index.centroids.rowwise() - query.transpose()).rowwise().squaredNorm();
    std::vector<std::size_t> order(index.k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    std::vector<bool> use(index.k, false);
    for (std::size_t c = 0; c < clusters; ++c) use[order[c]] = true;
    for (std::size_t i = 0; i < index.assignments.size(); ++i)
      if (use[index.assignments[i]]) candidates.push_back(i);
  }
  const Vector scores = store * query;
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RetrievalResult out;
  out.truncated = candidates.size() < top_k;
  candidates.resize(std::min(top_k, candidates.size()));
  out.ids = candidates;
  for (auto i : candidates) out.scores.push_back(scores[static_cast<Eigen::Index>(i)]);
  return out;
}

namespace {

constexpr char kClusterMagic[4] = {'S', 'G', 'P', 'K'};

std::vector<std::uint64_t> widen(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

std::vector<std::size_t> narrow(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

void save_cluster_index(const ClusterIndex& index, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes(kClusterMagic, 4);
  w.put<std::uint32_t>(kClusterIndexVersion);
  w.put_string(index.model_ref);
  w.put<std::uint64_t>(index.k);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(index.centroids.cols()));
  w.put_bytes(index.centroids.data(), static_cast<std::size_t>(index.centroids.size()) * sizeof(double));
  const auto a = widen(index.assignments), i = widen(index.initial);
  w.put_array(a.data(), a.size());
  w.put_array(i.data(), i.size());
  w.put_array(index.objective_history.data(), index.objective_history.size());
  w.put<std::uint64_t>(index.iterations);
  write_file_bytes(path, w.bytes());
}

ClusterIndex load_cluster_index(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path), path.string());
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kClusterMagic, 4) != 0) throw IoError("not a cluster index: " + path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kClusterIndexVersion) {
    throw ValidationError("cluster index version " + std::to_string(version) + " is not supported");
  }
  ClusterIndex idx;
  idx.model_ref = r.get_string();
  idx.k = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  idx.centroids.resize(static_cast<Eigen::Index>(idx.k), static_cast<Eigen::Index>(cols));
  r.get_bytes(idx.centroids.data(), idx.k * cols * sizeof(double));
  idx.assignments = narrow(r.get_array<std::uint64_t>());
  idx.initial = narrow(r.get_array<std::uint64_t>());
  idx.objective_history = r.get_array<double>();
  idx.iterations = r.get<std::uint64_t>();
  if (!r.at_end()) throw IoError("trailing bytes in " + path.string());
  for (auto a : idx.assignments)
    if (a >= idx.k) throw IoError("cluster index has an out-of-range assignment: " + path.string());
  return idx;
}

}  // namespace sorfgp
