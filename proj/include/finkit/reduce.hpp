#ifndef FINKIT_REDUCE_HPP
#define FINKIT_REDUCE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "corpus_io.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"
#include "errors.hpp"

/**
 * @file reduce.hpp
 * @brief UMAP dimensionality reduction with exact nearest neighbours.
 *
 * Stages: knn_graph() -> fuzzy_simplicial_set() -> optimize_embedding().
 * umap() chains them. Graph construction follows the reference UMAP
 * implementation (smooth kNN distances, fuzzy union), initialisation is
 * spectral with a random fallback, and the layout is optimised by SGD with
 * negative sampling.
 */

namespace finkit {

enum class Metric { cosine, euclidean };

inline std::string to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

inline Metric metric_from_string(const std::string& s) {
    if (s == "cosine") {
        return Metric::cosine;
    }
    if (s == "euclidean") {
        return Metric::euclidean;
    }
    throw ParameterError("unknown metric '" + s + "' (expected cosine or euclidean)");
}

struct UmapConfig {
    std::size_t n_neighbors = 15;
    std::size_t out_dim = 32;
    double min_dist = 0.0;
    double spread = 1.0;
    /// Unset: 500 epochs below 10,000 points, 200 otherwise.
    std::optional<int> n_epochs;
    double negative_sample_rate = 5.0;
    double learning_rate = 1.0;
    std::uint64_t seed = 42;
    Metric metric = Metric::cosine;
    int threads = 1;
    /// Lock-free asynchronous SGD across `threads`. Faster, not reproducible.
    bool parallel_sgd = false;

    int epochs_for(std::size_t points) const {
        if (n_epochs) {
            return *n_epochs;
        }
        return points < 10000 ? 500 : 200;
    }

    void validate(std::size_t points) const {
        if (n_neighbors < 2) {
            throw ParameterError("n_neighbors must be at least 2");
        }
        if (n_neighbors >= points) {
            throw ParameterError("n_neighbors (" + std::to_string(n_neighbors) + ") must be below the point count ("
                                 + std::to_string(points) + ")");
        }
        if (out_dim < 2) {
            throw ParameterError("out_dim must be at least 2");
        }
        if (min_dist < 0.0) {
            throw ParameterError("min_dist must be non-negative");
        }
        if (!(spread > 0.0) || min_dist > spread) {
            throw ParameterError("spread must be positive and at least min_dist");
        }
        if (n_epochs && *n_epochs < 1) {
            throw ParameterError("n_epochs must be positive");
        }
        if (!(negative_sample_rate > 0.0) || !(learning_rate > 0.0)) {
            throw ParameterError("negative_sample_rate and learning_rate must be positive");
        }
    }
};

// ---------------------------------------------------------------------------
// Nearest neighbours

struct NeighborList {
    std::size_t points = 0;
    std::size_t k = 0;
    std::vector<std::size_t> index;  // points * k, row-major
    std::vector<double> distance;    // same layout, non-decreasing per row

    std::size_t neighbor(std::size_t i, std::size_t j) const { return index[i * k + j]; }
    double dist(std::size_t i, std::size_t j) const { return distance[i * k + j]; }
};

namespace detail {

/// Row-major double copy of the points, unit-normalised for cosine.
inline std::vector<double> prepared_points(const EmbeddingMatrix& x, Metric metric) {
    std::vector<double> out(x.data().begin(), x.data().end());
    if (metric == Metric::cosine) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double s = 0;
            for (std::size_t d = 0; d < x.dim(); ++d) {
                s += out[i * x.dim() + d] * out[i * x.dim() + d];
            }
            if (s == 0.0) {
                throw ValidationError("zero-norm vector for id '" + x.ids()[i] + "' under cosine metric");
            }
            const double inv = 1.0 / std::sqrt(s);
            for (std::size_t d = 0; d < x.dim(); ++d) {
                out[i * x.dim() + d] *= inv;
            }
        }
    }
    return out;
}

inline double point_distance(const double* a, const double* b, std::size_t dim, Metric metric) {
    if (metric == Metric::cosine) {
        double dot = 0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += a[d] * b[d];
        }
        return std::max(0.0, 1.0 - dot);
    }
    double s = 0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

} // namespace detail

/// Exact k nearest neighbours (self excluded), ties by ascending index.
inline NeighborList knn_graph(const EmbeddingMatrix& x, std::size_t k, Metric metric = Metric::cosine,
                              int threads = 1) {
    const std::size_t n = x.rows();
    if (k == 0) {
        throw ParameterError("k must be at least 1");
    }
    if (n <= k) {
        throw ParameterError("need more than " + std::to_string(k) + " points for k nearest neighbours, have "
                             + std::to_string(n));
    }
    const auto pts = detail::prepared_points(x, metric);
    const std::size_t dim = x.dim();

    NeighborList out{n, k, std::vector<std::size_t>(n * k), std::vector<double>(n * k)};
    detail::parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(n - 1);
        for (std::size_t i = begin; i < end; ++i) {
            cand.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    cand.emplace_back(detail::point_distance(&pts[i * dim], &pts[j * dim], dim, metric), j);
                }
            }
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
            for (std::size_t j = 0; j < k; ++j) {
                out.distance[i * k + j] = cand[j].first;
                out.index[i * k + j] = cand[j].second;
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Fuzzy simplicial set

/// Symmetric sparse graph in CSR form with both directions stored.
struct FuzzyGraph {
    std::size_t points = 0;
    std::vector<std::size_t> row_ptr; // points + 1
    std::vector<std::size_t> col;
    std::vector<double> weight;

    std::size_t edges() const noexcept { return col.size(); }

    /// 0 when there is no edge.
    double at(std::size_t a, std::size_t b) const {
        const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[a]);
        const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[a + 1]);
        const auto it = std::lower_bound(first, last, b);
        return (it != last && *it == b) ? weight[static_cast<std::size_t>(it - col.begin())] : 0.0;
    }
};

struct SmoothKnnResult {
    std::vector<double> rho;
    std::vector<double> sigma;
    /// Points whose bandwidth search did not reach the target sum.
    std::size_t fallbacks = 0;
};

/**
 * Per-point local connectivity rho (distance to the nearest neighbour at
 * non-zero distance) and bandwidth sigma with
 * sum_j exp(-max(0, d_j - rho) / sigma) = log2(k), found by 64 rounds of
 * bisection to within 1e-5. When the target is unreachable sigma falls back
 * to the mean neighbour distance.
 */
inline SmoothKnnResult smooth_knn_distances(const NeighborList& knn) {
    constexpr int max_iter = 64;
    constexpr double tolerance = 1e-5;
    constexpr double min_scale = 1e-3;

    const double target = std::log2(static_cast<double>(knn.k));
    SmoothKnnResult out{std::vector<double>(knn.points), std::vector<double>(knn.points), 0};
    double global_mean = 0;
    for (double d : knn.distance) {
        global_mean += d;
    }
    global_mean /= static_cast<double>(knn.distance.size());

    for (std::size_t i = 0; i < knn.points; ++i) {
        double rho = 0, mean = 0;
        for (std::size_t j = 0; j < knn.k; ++j) {
            const double d = knn.dist(i, j);
            mean += d;
            if (rho == 0.0 && d > 0.0) {
                rho = d;
            }
        }
        mean /= static_cast<double>(knn.k);

        double lo = 0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
        bool converged = false;
        for (int it = 0; it < max_iter; ++it) {
            double psum = 0;
            for (std::size_t j = 0; j < knn.k; ++j) {
                const double gap = knn.dist(i, j) - rho;
                psum += gap > 0 ? std::exp(-gap / mid) : 1.0;
            }
            if (std::abs(psum - target) < tolerance) {
                converged = true;
                break;
            }
            if (psum > target) {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
            }
        }
        if (!converged) {
            ++out.fallbacks;
            mid = mean > 0 ? mean : 1.0;
        }
        // Floor from the reference implementation: keeps sigma from
        // collapsing relative to the neighbourhood scale.
        const double floor_scale = rho > 0 ? mean : global_mean;
        mid = std::max(mid, min_scale * floor_scale);
        if (mid <= 0) {
            mid = 1.0;
        }
        out.rho[i] = rho;
        out.sigma[i] = mid;
    }
    return out;
}

/// Probabilistic OR of the two directed memberships.
inline double fuzzy_union(double w_ab, double w_ba) { return w_ab + w_ba - w_ab * w_ba; }

struct FuzzySetResult {
    FuzzyGraph graph;
    SmoothKnnResult smoothing;
};

inline FuzzySetResult fuzzy_simplicial_set(const NeighborList& knn) {
    auto smooth = smooth_knn_distances(knn);

    // (min, max) -> (weight from min's row, weight from max's row)
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> directed;
    for (std::size_t i = 0; i < knn.points; ++i) {
        for (std::size_t j = 0; j < knn.k; ++j) {
            const std::size_t nb = knn.neighbor(i, j);
            if (nb == i) {
                continue;
            }
            const double gap = knn.dist(i, j) - smooth.rho[i];
            const double w = gap > 0 ? std::exp(-gap / smooth.sigma[i]) : 1.0;
            if (w <= 0.0) {
                continue;
            }
            auto& slot = directed[{std::min(i, nb), std::max(i, nb)}];
            (i < nb ? slot.first : slot.second) = w;
        }
    }

    std::vector<std::vector<std::pair<std::size_t, double>>> rows(knn.points);
    for (const auto& [key, w] : directed) {
        const double sym = fuzzy_union(w.first, w.second);
        rows[key.first].emplace_back(key.second, sym);
        rows[key.second].emplace_back(key.first, sym);
    }
    FuzzyGraph g;
    g.points = knn.points;
    g.row_ptr.assign(knn.points + 1, 0);
    for (std::size_t i = 0; i < knn.points; ++i) {
        std::sort(rows[i].begin(), rows[i].end());
        g.row_ptr[i + 1] = g.row_ptr[i] + rows[i].size();
        for (const auto& [c, w] : rows[i]) {
            g.col.push_back(c);
            g.weight.push_back(w);
        }
    }
    return {std::move(g), std::move(smooth)};
}

// ---------------------------------------------------------------------------
// Output curve parameters

/**
 * Least-squares fit of 1 / (1 + a x^(2b)) to the target membership curve
 * (1 below min_dist, exp(-(x - min_dist) / spread) above) sampled at 300
 * points on [0, 3 * spread]. Levenberg-Marquardt from (1, 1).
 */
inline std::pair<double, double> find_ab(double spread, double min_dist) {
    constexpr int samples = 300;
    std::vector<double> xs(samples), ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i] = 3.0 * spread * i / (samples - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto sse = [&](double a, double b) {
        double s = 0;
        for (int i = 0; i < samples; ++i) {
            const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2 * b)) - ys[i];
            s += r * r;
        }
        return s;
    };

    double a = 1.0, b = 1.0, lambda = 1e-3;
    double cost = sse(a, b);
    for (int iter = 0; iter < 500; ++iter) {
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, g0 = 0, g1 = 0;
        for (int i = 0; i < samples; ++i) {
            const double x = xs[i];
            const double p = x > 0 ? std::pow(x, 2 * b) : 0.0;
            const double den = 1.0 + a * p;
            const double r = 1.0 / den - ys[i];
            const double da = -p / (den * den);
            const double db = x > 0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0;
            jtj00 += da * da;
            jtj01 += da * db;
            jtj11 += db * db;
            g0 += da * r;
            g1 += db * r;
        }
        bool improved = false;
        while (lambda < 1e12) {
            const double m00 = jtj00 * (1 + lambda), m11 = jtj11 * (1 + lambda);
            const double det = m00 * m11 - jtj01 * jtj01;
            if (det == 0) {
                lambda *= 10;
                continue;
            }
            const double step_a = -(m11 * g0 - jtj01 * g1) / det;
            const double step_b = -(m00 * g1 - jtj01 * g0) / det;
            const double na = a + step_a, nb = b + step_b;
            const double nc = (na > 0 && nb > 0) ? sse(na, nb) : std::numeric_limits<double>::infinity();
            if (nc < cost) {
                const double rel = (cost - nc) / cost;
                a = na;
                b = nb;
                cost = nc;
                lambda = std::max(lambda / 10, 1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10;
        }
        if (!improved) {
            break;
        }
    }
    return {a, b};
}

// ---------------------------------------------------------------------------
// Initialisation

namespace detail {

inline std::size_t connected_components(const FuzzyGraph& g) {
    std::vector<char> seen(g.points, 0);
    std::size_t comps = 0;
    for (std::size_t s = 0; s < g.points; ++s) {
        if (seen[s]) {
            continue;
        }
        ++comps;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            const auto v = q.front();
            q.pop();
            for (auto e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e) {
                if (!seen[g.col[e]]) {
                    seen[g.col[e]] = 1;
                    q.push(g.col[e]);
                }
            }
        }
    }
    return comps;
}

inline void fix_signs(Eigen::MatrixXd& vecs) {
    for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
        Eigen::Index arg = 0;
        vecs.col(c).cwiseAbs().maxCoeff(&arg);
        if (vecs(arg, c) < 0) {
            vecs.col(c) *= -1.0;
        }
    }
}

inline constexpr std::size_t dense_spectral_limit = 1200;

} // namespace detail

/**
 * Eigenvectors 1..dim (skipping the trivial one) of the symmetric
 * normalised Laplacian, as an n x dim matrix. Empty when the graph is
 * disconnected or too small.
 */
inline std::optional<Eigen::MatrixXd> spectral_layout(const FuzzyGraph& g, std::size_t dim, std::uint64_t seed) {
    const std::size_t n = g.points;
    if (n <= dim + 1 || detail::connected_components(g) != 1) {
        return std::nullopt;
    }
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0;
        for (auto e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
            deg += g.weight[e];
        }
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    const auto cols = static_cast<Eigen::Index>(dim);

    Eigen::MatrixXd vecs;
    if (n <= detail::dense_spectral_limit) {
        Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            for (auto e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
                lap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g.col[e])) -=
                    g.weight[e] * inv_sqrt_deg[i] * inv_sqrt_deg[g.col[e]];
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
        if (solver.info() != Eigen::Success) {
            return std::nullopt;
        }
        vecs = solver.eigenvectors().middleCols(1, cols);
    } else {
        // Subspace iteration on (I + D^-1/2 W D^-1/2) / 2, whose top
        // eigenvectors are the Laplacian's bottom ones.
        const auto block = cols + 1 + 8;
        detail::Rng rng(seed ^ 0x5eed5eedULL);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(n), block);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x.data()[i] = rng.normal();
        }
        auto apply = [&](const Eigen::MatrixXd& in) {
            Eigen::MatrixXd out = 0.5 * in;
            for (std::size_t i = 0; i < n; ++i) {
                for (auto e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
                    const double w = 0.5 * g.weight[e] * inv_sqrt_deg[i] * inv_sqrt_deg[g.col[e]];
                    out.row(static_cast<Eigen::Index>(i)) += w * in.row(static_cast<Eigen::Index>(g.col[e]));
                }
            }
            return out;
        };
        for (int it = 0; it < 300; ++it) {
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(apply(x));
            x = qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), block);
        }
        const Eigen::MatrixXd ritz = x.transpose() * apply(x);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(ritz);
        if (small.info() != Eigen::Success) {
            return std::nullopt;
        }
        // Descending eigenvalues of the shifted operator; skip the trivial one.
        const Eigen::MatrixXd all = x * small.eigenvectors();
        vecs.resize(static_cast<Eigen::Index>(n), cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            vecs.col(c) = all.col(block - 2 - c);
        }
    }
    detail::fix_signs(vecs);
    return vecs;
}

/// Weights below max_weight / n_epochs are never sampled by SGD; dropping
/// them before initialisation matches the reference implementation.
inline FuzzyGraph prune_graph(const FuzzyGraph& g, int n_epochs) {
    double max_w = 0;
    for (double w : g.weight) {
        max_w = std::max(max_w, w);
    }
    const double cutoff = max_w / n_epochs;
    FuzzyGraph out;
    out.points = g.points;
    out.row_ptr.assign(g.points + 1, 0);
    for (std::size_t i = 0; i < g.points; ++i) {
        for (auto e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
            if (g.weight[e] >= cutoff) {
                out.col.push_back(g.col[e]);
                out.weight.push_back(g.weight[e]);
            }
        }
        out.row_ptr[i + 1] = out.col.size();
    }
    return out;
}

struct InitResult {
    std::vector<double> coords; // points * dim, row-major
    bool spectral = false;
};

/**
 * Spectral coordinates scaled to max |x| = 10 plus N(0, 1e-4) jitter, or
 * uniform [-10, 10] draws when the spectral route is unavailable. Either way
 * each column is finally rescaled to [0, 10].
 */
inline InitResult initialize_embedding(const FuzzyGraph& g, std::size_t dim, std::uint64_t seed) {
    const std::size_t n = g.points;
    detail::Rng rng(seed);
    InitResult out{std::vector<double>(n * dim), false};
    if (auto spec = spectral_layout(g, dim, seed)) {
        const double max_abs = spec->cwiseAbs().maxCoeff();
        const double expansion = max_abs > 0 ? 10.0 / max_abs : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                out.coords[i * dim + d] =
                    (*spec)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) * expansion
                    + 1e-4 * rng.normal();
            }
        }
        out.spectral = true;
    } else {
        for (auto& v : out.coords) {
            v = rng.uniform(-10.0, 10.0);
        }
    }
    for (std::size_t d = 0; d < dim; ++d) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < n; ++i) {
            lo = std::min(lo, out.coords[i * dim + d]);
            hi = std::max(hi, out.coords[i * dim + d]);
        }
        const double range = hi - lo;
        for (std::size_t i = 0; i < n; ++i) {
            out.coords[i * dim + d] = range > 0 ? 10.0 * (out.coords[i * dim + d] - lo) / range : 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layout optimisation

namespace detail {

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

struct EdgeSchedule {
    std::vector<std::size_t> head, tail;
    std::vector<double> epochs_per_sample;
};

inline EdgeSchedule make_schedule(const FuzzyGraph& g) {
    EdgeSchedule s;
    double max_w = 0;
    for (double w : g.weight) {
        max_w = std::max(max_w, w);
    }
    for (std::size_t i = 0; i < g.points; ++i) {
        for (auto e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
            s.head.push_back(i);
            s.tail.push_back(g.col[e]);
            s.epochs_per_sample.push_back(max_w / g.weight[e]);
        }
    }
    return s;
}

/// Plain or relaxed-atomic access to a coordinate, chosen at compile time.
template<bool Atomic>
struct Coord {
    static double load(double& x) {
        if constexpr (Atomic) {
            return std::atomic_ref<double>(x).load(std::memory_order_relaxed);
        } else {
            return x;
        }
    }
    static void add(double& x, double v) {
        if constexpr (Atomic) {
            std::atomic_ref<double> r(x);
            r.store(r.load(std::memory_order_relaxed) + v, std::memory_order_relaxed);
        } else {
            x += v;
        }
    }
};

template<bool Atomic>
void sgd_edges(std::vector<double>& emb, std::size_t n, std::size_t dim, const EdgeSchedule& sched,
               std::vector<double>& next_sample, std::vector<double>& next_negative, double epochs_per_negative_scale,
               std::size_t begin, std::size_t end, int epoch, double alpha, double a, double b, Rng& rng) {
    using C = Coord<Atomic>;
    std::vector<double> cur(dim), oth(dim);
    for (std::size_t e = begin; e < end; ++e) {
        if (next_sample[e] > epoch) {
            continue;
        }
        const std::size_t j = sched.head[e];
        const std::size_t k = sched.tail[e];
        double* cj = &emb[j * dim];
        double* ck = &emb[k * dim];

        double d2 = 0;
        for (std::size_t d = 0; d < dim; ++d) {
            cur[d] = C::load(cj[d]);
            oth[d] = C::load(ck[d]);
            d2 += (cur[d] - oth[d]) * (cur[d] - oth[d]);
        }
        double coeff = 0;
        if (d2 > 0) {
            coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
        }
        for (std::size_t d = 0; d < dim; ++d) {
            const double grad = clip4(coeff * (cur[d] - oth[d]));
            C::add(cj[d], grad * alpha);
            C::add(ck[d], -grad * alpha);
            cur[d] += grad * alpha;
        }
        next_sample[e] += sched.epochs_per_sample[e];

        const double per_negative = sched.epochs_per_sample[e] * epochs_per_negative_scale;
        const auto n_neg = static_cast<long>((epoch - next_negative[e]) / per_negative);
        for (long p = 0; p < n_neg; ++p) {
            const auto other = static_cast<std::size_t>(rng.index(n));
            if (other == j) {
                continue;
            }
            double* co = &emb[other * dim];
            double nd2 = 0;
            for (std::size_t d = 0; d < dim; ++d) {
                oth[d] = C::load(co[d]);
                nd2 += (cur[d] - oth[d]) * (cur[d] - oth[d]);
            }
            if (nd2 <= 0) {
                continue;
            }
            const double rep = 2.0 * b / ((0.001 + nd2) * (a * std::pow(nd2, b) + 1.0));
            for (std::size_t d = 0; d < dim; ++d) {
                const double grad = clip4(rep * (cur[d] - oth[d]));
                C::add(cj[d], grad * alpha);
                cur[d] += grad * alpha;
            }
        }
        next_negative[e] += static_cast<double>(n_neg) * per_negative;
    }
}

} // namespace detail

struct LayoutDiagnostics {
    double a = 0;
    double b = 0;
    int n_epochs = 0;
    bool spectral_init = false;
};

/**
 * SGD on the UMAP cross-entropy. Each directed edge is sampled in
 * proportion to its weight, with negative_sample_rate repulsive samples per
 * attraction; the learning rate decays linearly to 0. `init` holds the
 * starting coordinates (points * out_dim) and is updated in place.
 */
inline LayoutDiagnostics optimize_layout(const FuzzyGraph& g, std::vector<double>& coords, const UmapConfig& cfg) {
    const std::size_t n = g.points;
    const std::size_t dim = cfg.out_dim;
    const int n_epochs = cfg.epochs_for(n);
    const auto [a, b] = find_ab(cfg.spread, cfg.min_dist);

    const auto sched = detail::make_schedule(g);
    std::vector<double> next_sample = sched.epochs_per_sample;
    std::vector<double> next_negative(sched.epochs_per_sample.size());
    const double neg_scale = 1.0 / cfg.negative_sample_rate;
    for (std::size_t e = 0; e < next_negative.size(); ++e) {
        next_negative[e] = sched.epochs_per_sample[e] * neg_scale;
    }

    double alpha = cfg.learning_rate;
    if (!cfg.parallel_sgd || cfg.threads <= 1) {
        detail::Rng rng(cfg.seed ^ 0xA5A5A5A5ULL);
        for (int epoch = 0; epoch < n_epochs; ++epoch) {
            detail::sgd_edges<false>(coords, n, dim, sched, next_sample, next_negative, neg_scale, 0,
                                     sched.head.size(), epoch, alpha, a, b, rng);
            alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / n_epochs);
        }
    } else {
        for (int epoch = 0; epoch < n_epochs; ++epoch) {
            const std::size_t edges = sched.head.size();
            const auto workers = static_cast<std::size_t>(cfg.threads);
            const std::size_t chunk = (edges + workers - 1) / workers;
            detail::parallel_for(workers, cfg.threads, [&](std::size_t wb, std::size_t we) {
                for (std::size_t w = wb; w < we; ++w) {
                    detail::Rng rng(cfg.seed ^ detail::splitmix64((static_cast<std::uint64_t>(epoch) << 16) + w));
                    const std::size_t begin = w * chunk;
                    const std::size_t end = std::min(edges, begin + chunk);
                    if (begin < end) {
                        detail::sgd_edges<true>(coords, n, dim, sched, next_sample, next_negative, neg_scale, begin,
                                                end, epoch, alpha, a, b, rng);
                    }
                }
            });
            alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / n_epochs);
        }
    }
    return {a, b, n_epochs, false};
}

struct UmapResult {
    EmbeddingMatrix embedding;
    LayoutDiagnostics diagnostics;
    std::size_t sigma_fallbacks = 0;
};

/// Initialises and optimises a layout for an already built graph.
inline UmapResult optimize_embedding(const FuzzyGraph& graph, const std::vector<std::string>& ids,
                                     const UmapConfig& cfg) {
    const auto pruned = prune_graph(graph, cfg.epochs_for(graph.points));
    auto init = initialize_embedding(pruned, cfg.out_dim, cfg.seed);
    auto diag = optimize_layout(pruned, init.coords, cfg);
    diag.spectral_init = init.spectral;
    std::vector<float> data(init.coords.begin(), init.coords.end());
    return {EmbeddingMatrix(ids, cfg.out_dim, std::move(data)), diag, 0};
}

/// Full reduction: exact kNN, fuzzy graph, initialisation, SGD.
inline UmapResult umap(const EmbeddingMatrix& x, const UmapConfig& cfg) {
    cfg.validate(x.rows());
    const auto knn = knn_graph(x, cfg.n_neighbors, cfg.metric, cfg.threads);
    auto fuzzy = fuzzy_simplicial_set(knn);
    auto result = optimize_embedding(fuzzy.graph, x.ids(), cfg);
    result.sigma_fallbacks = fuzzy.smoothing.fallbacks;
    return result;
}

} // namespace finkit

#endif
