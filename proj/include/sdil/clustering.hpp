#pragma once

#include <vector>

#include "sdil/rng.hpp"
#include "sdil/tensor.hpp"

namespace sdil::discovery {

struct KMeansResult {
    std::vector<int> assignment; // one cluster id per row of the data
    diff::Tensor centers;        // k x d
};

// Lloyd's k-means with k-means++ seeding. Deterministic given the rng
// state: ties break toward the lower index, an emptied cluster is reseeded
// at the point farthest from its current center.
KMeansResult kmeans(const diff::Tensor& data, int k, int iterations, Rng& rng);

// Fraction of points whose cluster's majority ground label matches theirs.
double cluster_purity(const std::vector<int>& assignment, const std::vector<int>& labels);

// Which clustering feeds pair mining for a batch: the clustering computed
// once on raw states, or the one recomputed from encoder embeddings (DEC).
enum class ClusterSource { PrecomputedStates, DecEmbeddings };

struct ClusterAssignment {
    ClusterSource source = ClusterSource::PrecomputedStates;
    double zeta = 0.0; // probability of choosing the DEC source
    std::vector<int> cluster_of;            // per dataset row
    std::vector<std::vector<int>> members;  // rows per cluster
};

ClusterAssignment make_assignment(ClusterSource source, double zeta,
                                  std::vector<int> cluster_of, int n_clusters);

} // namespace sdil::discovery
