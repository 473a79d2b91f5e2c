#ifndef FINKIT_CLUSTER_HPP
#define FINKIT_CLUSTER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "corpus_io.hpp"
#include "detail/parallel.hpp"
#include "errors.hpp"
#include "reduce.hpp"

/**
 * @file cluster.hpp
 * @brief HDBSCAN: core distances, mutual-reachability MST, condensed tree
 * and excess-of-mass cluster selection.
 *
 * Distance sources are any type with `size()` and `operator()(i, j)`;
 * PointDistances computes them on the fly (O(n) memory), DenseDistances
 * holds a precomputed symmetric matrix.
 */

namespace finkit {

struct HdbscanConfig {
    std::size_t min_cluster_size = 2;
    /// Neighbours counted for the core distance, self excluded.
    std::size_t min_samples = 1;
    int threads = 1;

    void validate() const {
        if (min_cluster_size < 2) {
            throw ParameterError("min_cluster_size must be at least 2");
        }
        if (min_samples < 1) {
            throw ParameterError("min_samples must be at least 1");
        }
    }
};

class DenseDistances {
public:
    DenseDistances(std::size_t n, std::vector<double> values) : n_(n), d_(std::move(values)) {
        if (d_.size() != n_ * n_) {
            throw ValidationError("distance matrix must be n x n");
        }
    }

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    const std::vector<double>& values() const noexcept { return d_; }

private:
    std::size_t n_;
    std::vector<double> d_;
};

class PointDistances {
public:
    PointDistances(const EmbeddingMatrix& x, Metric metric)
        : n_(x.rows()), dim_(x.dim()), metric_(metric), pts_(detail::prepared_points(x, metric)) {}

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const {
        return detail::point_distance(&pts_[i * dim_], &pts_[j * dim_], dim_, metric_);
    }

    DenseDistances materialize() const {
        std::vector<double> v(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                v[i * n_ + j] = i == j ? 0.0 : (*this)(i, j);
            }
        }
        return DenseDistances(n_, std::move(v));
    }

private:
    std::size_t n_;
    std::size_t dim_;
    Metric metric_;
    std::vector<double> pts_;
};

/// Distance from each point to its min_samples-th nearest other point.
template<class Distances>
std::vector<double> core_distances(const Distances& dist, std::size_t min_samples, int threads = 1) {
    const std::size_t n = dist.size();
    if (min_samples < 1) {
        throw ParameterError("min_samples must be at least 1");
    }
    if (n <= min_samples) {
        throw ParameterError("need more than " + std::to_string(min_samples) + " points, have " + std::to_string(n));
    }
    std::vector<double> core(n);
    detail::parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> row;
        row.reserve(n - 1);
        for (std::size_t i = begin; i < end; ++i) {
            row.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    row.push_back(dist(i, j));
                }
            }
            const auto nth = row.begin() + static_cast<std::ptrdiff_t>(min_samples - 1);
            std::nth_element(row.begin(), nth, row.end());
            core[i] = *nth;
        }
    });
    return core;
}

struct MstEdge {
    std::size_t a;
    std::size_t b;
    double weight;
};

/**
 * Minimum spanning tree under d_mr(a, b) = max(core_a, core_b, d(a, b)),
 * by O(n^2) Prim from point 0 (ties to the smaller index). Edges are
 * returned in insertion order.
 */
template<class Distances>
std::vector<MstEdge> mutual_reachability_mst(const Distances& dist, std::span<const double> core) {
    const std::size_t n = dist.size();
    if (core.size() != n) {
        throw ValidationError("core distance count does not match point count");
    }
    std::vector<MstEdge> edges;
    if (n < 2) {
        return edges;
    }
    edges.reserve(n - 1);
    std::vector<char> in_tree(n, 0);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    std::size_t current = 0;
    in_tree[0] = 1;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        double next_w = std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < n; ++v) {
            if (in_tree[v]) {
                continue;
            }
            const double mr = std::max({core[current], core[v], dist(current, v)});
            if (mr < best[v]) {
                best[v] = mr;
                from[v] = current;
            }
            if (best[v] < next_w || next == n) {
                if (next == n || best[v] < next_w) {
                    next = v;
                    next_w = best[v];
                }
            }
        }
        in_tree[next] = 1;
        edges.push_back({from[next], next, next_w});
        current = next;
    }
    return edges;
}

struct ClusterAssignment {
    /// -1 for outliers, else 0..cluster_count()-1 in descending cluster size.
    std::vector<int> labels;
    /// Excess-of-mass stability per label.
    std::vector<double> stability;
    /// Membership strength in [0, 1]; 0 for outliers.
    std::vector<double> probabilities;

    std::size_t cluster_count() const noexcept { return stability.size(); }
};

/// One row of the condensed tree: `child` is a point (< n) or a cluster
/// (>= n) that leaves or splits off `parent` at `lambda`.
struct CondensedEdge {
    std::size_t parent;
    std::size_t child;
    double lambda;
    std::size_t child_size;
};

namespace detail {

struct Dendrogram {
    std::size_t points;
    // Internal node n + i merges left[i] and right[i] at height[i].
    std::vector<std::size_t> left, right, size;
    std::vector<double> height;

    std::size_t node_size(std::size_t node) const { return node < points ? 1 : size[node - points]; }
};

inline Dendrogram single_linkage(std::size_t n, std::vector<MstEdge> mst) {
    std::stable_sort(mst.begin(), mst.end(), [](const MstEdge& x, const MstEdge& y) { return x.weight < y.weight; });
    Dendrogram t{n, {}, {}, {}, {}};
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t i = 0; i < mst.size(); ++i) {
        const auto ra = find(mst[i].a);
        const auto rb = find(mst[i].b);
        const std::size_t node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        t.left.push_back(ra);
        t.right.push_back(rb);
        t.height.push_back(mst[i].weight);
        t.size.push_back(t.node_size(ra) + t.node_size(rb));
    }
    return t;
}

inline void collect_leaves(const Dendrogram& t, std::size_t node, std::vector<std::size_t>& out) {
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        if (v < t.points) {
            out.push_back(v);
        } else {
            stack.push_back(t.right[v - t.points]);
            stack.push_back(t.left[v - t.points]);
        }
    }
}

} // namespace detail

struct CondensedTree {
    std::size_t points = 0;
    std::vector<CondensedEdge> edges;
    /// Cluster c has id points + c; cluster 0 is the root.
    std::vector<std::size_t> cluster_parent;
    std::vector<double> birth_lambda;
    std::vector<std::size_t> cluster_size;
};

/**
 * Walks the single-linkage dendrogram from the root with lambda = 1 / height.
 * A split where both sides have at least min_cluster_size points creates two
 * child clusters; a smaller side's points fall out of the current cluster.
 * Subtrees at height 0 are indivisible: their points fall out together at a
 * lambda above every finite one (twice the largest).
 */
inline CondensedTree condense_tree(std::size_t n, const std::vector<MstEdge>& mst, std::size_t min_cluster_size) {
    CondensedTree tree;
    tree.points = n;
    tree.cluster_parent.push_back(n);
    tree.birth_lambda.push_back(0.0);
    tree.cluster_size.push_back(n);
    if (n < 2) {
        for (std::size_t p = 0; p < n; ++p) {
            tree.edges.push_back({n, p, 1.0, 1});
        }
        return tree;
    }
    const auto dendro = detail::single_linkage(n, mst);

    double min_positive = std::numeric_limits<double>::infinity();
    for (double h : dendro.height) {
        if (h > 0) {
            min_positive = std::min(min_positive, h);
        }
    }
    const double lambda_cap = std::isinf(min_positive) ? 1.0 : 2.0 / min_positive;

    const std::size_t root = 2 * n - 2;
    std::vector<std::size_t> cluster_of(2 * n - 1, 0);
    std::vector<std::size_t> stack{root};
    std::vector<std::size_t> leaves;
    auto fall_out = [&](std::size_t node, std::size_t cluster, double lambda) {
        leaves.clear();
        detail::collect_leaves(dendro, node, leaves);
        for (auto p : leaves) {
            tree.edges.push_back({n + cluster, p, lambda, 1});
        }
    };

    while (!stack.empty()) {
        const auto node = stack.back();
        stack.pop_back();
        const auto cluster = cluster_of[node];
        const std::size_t i = node - n;
        const double height = dendro.height[i];
        if (height <= 0) {
            fall_out(node, cluster, lambda_cap);
            continue;
        }
        const double lambda = 1.0 / height;
        const auto l = dendro.left[i], r = dendro.right[i];
        const bool big_l = dendro.node_size(l) >= min_cluster_size;
        const bool big_r = dendro.node_size(r) >= min_cluster_size;

        if (big_l && big_r) {
            for (auto child : {l, r}) {
                const std::size_t id = tree.birth_lambda.size();
                tree.cluster_parent.push_back(n + cluster);
                tree.birth_lambda.push_back(lambda);
                tree.cluster_size.push_back(dendro.node_size(child));
                tree.edges.push_back({n + cluster, n + id, lambda, dendro.node_size(child)});
                cluster_of[child] = id;
                stack.push_back(child);
            }
        } else {
            for (auto child : {l, r}) {
                const bool big = child == l ? big_l : big_r;
                if (big) {
                    cluster_of[child] = cluster;
                    stack.push_back(child);
                } else {
                    fall_out(child, cluster, lambda);
                }
            }
        }
    }
    return tree;
}

/**
 * Excess-of-mass selection over a condensed tree. The root is a candidate
 * only when the tree never splits, so a dataset without any density split
 * comes back as one cluster instead of all noise.
 */
inline ClusterAssignment extract_clusters(const CondensedTree& tree, std::size_t min_cluster_size) {
    const std::size_t n = tree.points;
    const std::size_t clusters = tree.birth_lambda.size();

    std::vector<double> stability(clusters, 0.0);
    std::vector<std::vector<std::size_t>> children(clusters);
    std::vector<std::size_t> point_cluster(n, 0);
    std::vector<double> point_lambda(n, 0.0);
    for (const auto& e : tree.edges) {
        const std::size_t parent = e.parent - n;
        stability[parent] += (e.lambda - tree.birth_lambda[parent]) * static_cast<double>(e.child_size);
        if (e.child >= n) {
            children[parent].push_back(e.child - n);
        } else {
            point_cluster[e.child] = parent;
            point_lambda[e.child] = e.lambda;
        }
    }

    std::vector<char> selected(clusters, 0);
    if (clusters == 1) {
        selected[0] = n >= min_cluster_size ? 1 : 0;
    } else {
        std::vector<double> subtree(clusters, 0.0);
        std::fill(selected.begin() + 1, selected.end(), 1);
        // Children always carry larger ids than their parent.
        for (std::size_t c = clusters - 1; c >= 1; --c) {
            double child_sum = 0;
            for (auto ch : children[c]) {
                child_sum += subtree[ch];
            }
            if (!children[c].empty() && child_sum > stability[c]) {
                selected[c] = 0;
                subtree[c] = child_sum;
            } else {
                subtree[c] = stability[c];
                std::vector<std::size_t> stack(children[c]);
                while (!stack.empty()) {
                    const auto d = stack.back();
                    stack.pop_back();
                    selected[d] = 0;
                    stack.insert(stack.end(), children[d].begin(), children[d].end());
                }
            }
        }
    }

    // Nearest selected ancestor-or-self of each cluster; parents precede children.
    std::vector<long> owner(clusters, -1);
    for (std::size_t c = 0; c < clusters; ++c) {
        if (selected[c]) {
            owner[c] = static_cast<long>(c);
        } else if (c > 0) {
            owner[c] = owner[tree.cluster_parent[c] - n];
        }
    }

    std::vector<long> raw(n, -1);
    std::map<long, std::vector<std::size_t>> members;
    for (std::size_t p = 0; p < n; ++p) {
        raw[p] = owner[point_cluster[p]];
        if (raw[p] >= 0) {
            members[raw[p]].push_back(p);
        }
    }

    std::vector<std::pair<long, std::vector<std::size_t>*>> order;
    for (auto& [c, m] : members) {
        order.emplace_back(c, &m);
    }
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
        if (x.second->size() != y.second->size()) {
            return x.second->size() > y.second->size();
        }
        return x.second->front() < y.second->front();
    });

    ClusterAssignment out;
    out.labels.assign(n, -1);
    out.probabilities.assign(n, 0.0);
    for (std::size_t label = 0; label < order.size(); ++label) {
        const auto& m = *order[label].second;
        double max_lambda = 0;
        for (auto p : m) {
            max_lambda = std::max(max_lambda, point_lambda[p]);
        }
        for (auto p : m) {
            out.labels[p] = static_cast<int>(label);
            out.probabilities[p] = max_lambda > 0 ? std::min(point_lambda[p], max_lambda) / max_lambda : 1.0;
        }
        out.stability.push_back(stability[static_cast<std::size_t>(order[label].first)]);
    }
    return out;
}

inline ClusterAssignment condense_and_extract(std::size_t n, const std::vector<MstEdge>& mst,
                                              const HdbscanConfig& cfg) {
    cfg.validate();
    return extract_clusters(condense_tree(n, mst, cfg.min_cluster_size), cfg.min_cluster_size);
}

template<class Distances>
ClusterAssignment hdbscan(const Distances& dist, const HdbscanConfig& cfg) {
    cfg.validate();
    const auto core = core_distances(dist, cfg.min_samples, cfg.threads);
    const auto mst = mutual_reachability_mst(dist, core);
    return condense_and_extract(dist.size(), mst, cfg);
}

inline ClusterAssignment hdbscan(const EmbeddingMatrix& x, const HdbscanConfig& cfg,
                                 Metric metric = Metric::euclidean) {
    return hdbscan(PointDistances(x, metric), cfg);
}

// ---------------------------------------------------------------------------
// Assignment file: id <TAB> label <TAB> probability

inline void write_assignments(const std::string& path, const std::vector<std::string>& ids,
                              const ClusterAssignment& a) {
    if (ids.size() != a.labels.size()) {
        throw ValidationError("id count does not match label count");
    }
    auto out = detail::open_output(path);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << '\t' << a.labels[i] << '\t' << detail::format_float(a.probabilities[i]) << '\n';
    }
}

struct LoadedAssignments {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<double> probabilities;
};

inline LoadedAssignments load_assignments(const std::string& path) {
    LoadedAssignments out;
    std::size_t lineno = 0;
    for (const auto& line : detail::read_lines(path)) {
        ++lineno;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto f = detail::split(line, '\t');
        int label = 0;
        double prob = 0;
        if (f.size() != 3 || f[0].empty() || !detail::parse_number(f[1], label) || label < -1
            || !detail::parse_number(f[2], prob) || prob < 0 || prob > 1) {
            throw ParseError(path, lineno, "expected id<TAB>label<TAB>probability");
        }
        out.ids.emplace_back(f[0]);
        out.labels.push_back(label);
        out.probabilities.push_back(prob);
    }
    return out;
}

} // namespace finkit

#endif
