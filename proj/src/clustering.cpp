#include "sdil/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sdil/common.hpp"

namespace sdil::discovery {

using diff::Tensor;

namespace {

double sqdist(const Tensor& data, int row, const Tensor& centers, int k) {
    double s = 0.0;
    for (int d = 0; d < data.cols(); ++d) {
        const double diff = static_cast<double>(data.at(row, d)) - centers.at(k, d);
        s += diff * diff;
    }
    return s;
}

} // namespace

KMeansResult kmeans(const Tensor& data, int k, int iterations, Rng& rng) {
    const int n = data.rows(), dim = data.cols();
    SDIL_REQUIRE(k >= 2, "kmeans: need at least two clusters");
    if (n < k) throw GenerationError("kmeans: fewer points than clusters");

    Tensor centers({k, dim});
    // k-means++ seeding.
    std::vector<double> best_d2(static_cast<std::size_t>(n), 0.0);
    int first = rng.index(static_cast<std::size_t>(n));
    for (int d = 0; d < dim; ++d) centers.at(0, d) = data.at(first, d);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double d2 = sqdist(data, i, centers, 0);
            for (int j = 1; j < c; ++j) d2 = std::min(d2, sqdist(data, i, centers, j));
            best_d2[static_cast<std::size_t>(i)] = d2;
            total += d2;
        }
        int pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform01() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += best_d2[static_cast<std::size_t>(i)];
                if (acc >= target) { pick = i; break; }
            }
        } else {
            pick = rng.index(static_cast<std::size_t>(n));
        }
        for (int d = 0; d < dim; ++d) centers.at(c, d) = data.at(pick, d);
    }

    std::vector<int> assignment(static_cast<std::size_t>(n), 0);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (int it = 0; it < iterations; ++it) {
        // Assign.
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = sqdist(data, i, centers, 0);
            for (int c = 1; c < k; ++c) {
                const double d2 = sqdist(data, i, centers, c);
                if (d2 < bd) { bd = d2; best = c; }
            }
            assignment[static_cast<std::size_t>(i)] = best;
        }
        // Update.
        Tensor sums({k, dim}, 0.0f);
        std::fill(counts.begin(), counts.end(), 0);
        std::vector<std::vector<double>> acc(
            static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
        for (int i = 0; i < n; ++i) {
            const int c = assignment[static_cast<std::size_t>(i)];
            ++counts[static_cast<std::size_t>(c)];
            for (int d = 0; d < dim; ++d)
                acc[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] += data.at(i, d);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) {
                // Reseed an emptied cluster at the point farthest from its
                // assigned center (first such point on ties).
                int far = 0;
                double fd = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d2 =
                        sqdist(data, i, centers, assignment[static_cast<std::size_t>(i)]);
                    if (d2 > fd) { fd = d2; far = i; }
                }
                for (int d = 0; d < dim; ++d) centers.at(c, d) = data.at(far, d);
                continue;
            }
            for (int d = 0; d < dim; ++d)
                centers.at(c, d) = static_cast<float>(
                    acc[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] /
                    static_cast<double>(counts[static_cast<std::size_t>(c)]));
        }
    }
    // Final assignment against the last centers.
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double bd = sqdist(data, i, centers, 0);
        for (int c = 1; c < k; ++c) {
            const double d2 = sqdist(data, i, centers, c);
            if (d2 < bd) { bd = d2; best = c; }
        }
        assignment[static_cast<std::size_t>(i)] = best;
    }
    return {std::move(assignment), std::move(centers)};
}

double cluster_purity(const std::vector<int>& assignment, const std::vector<int>& labels) {
    SDIL_REQUIRE(assignment.size() == labels.size() && !assignment.empty(),
                 "purity: size mismatch");
    std::map<int, std::map<int, int>> tally;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        ++tally[assignment[i]][labels[i]];
    std::int64_t hit = 0;
    for (const auto& [cluster, counts] : tally) {
        int best = 0;
        for (const auto& [label, c] : counts) best = std::max(best, c);
        hit += best;
    }
    return static_cast<double>(hit) / static_cast<double>(assignment.size());
}

ClusterAssignment make_assignment(ClusterSource source, double zeta,
                                  std::vector<int> cluster_of, int n_clusters) {
    ClusterAssignment out;
    out.source = source;
    out.zeta = zeta;
    out.members.resize(static_cast<std::size_t>(n_clusters));
    for (std::size_t i = 0; i < cluster_of.size(); ++i)
        out.members[static_cast<std::size_t>(cluster_of[i])].push_back(static_cast<int>(i));
    out.cluster_of = std::move(cluster_of);
    return out;
}

} // namespace sdil::discovery
