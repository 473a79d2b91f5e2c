#ifndef FINKIT_TEST_ORACLES_HPP
#define FINKIT_TEST_ORACLES_HPP

// Independent reference implementations. They share no code with the
// library beyond plain data types and favour brute force over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(s);
}

inline Matrix distance_matrix(const Matrix& x) {
    Matrix d(x.size(), std::vector<double>(x.size(), 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            d[i][j] = euclidean(x[i], x[j]);
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Retrieval metrics

/// Recall by direct counting over the ranked list.
inline double recall(const std::vector<std::string>& ranked, const std::map<std::string, int>& judged,
                     std::size_t k) {
    std::set<std::string> relevant;
    for (const auto& [d, r] : judged) {
        if (r > 0) {
            relevant.insert(d);
        }
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
        hit += relevant.count(ranked[i]);
    }
    return static_cast<double>(hit) / static_cast<double>(relevant.size());
}

inline double dcg(const std::vector<int>& gains, std::size_t k) {
    double s = 0;
    for (std::size_t i = 0; i < gains.size() && i < k; ++i) {
        s += gains[i] / std::log2(static_cast<double>(i + 2));
    }
    return s;
}

/// nDCG whose ideal DCG is the maximum over every permutation of the judged docs.
inline double ndcg(const std::vector<std::string>& ranked, const std::map<std::string, int>& judged, std::size_t k) {
    std::vector<int> gains;
    for (const auto& d : ranked) {
        auto it = judged.find(d);
        gains.push_back(it == judged.end() ? 0 : std::max(it->second, 0));
    }
    std::vector<int> all;
    for (const auto& [d, r] : judged) {
        all.push_back(std::max(r, 0));
    }
    std::sort(all.begin(), all.end());
    double ideal = 0;
    do {
        ideal = std::max(ideal, dcg(all, k));
    } while (std::next_permutation(all.begin(), all.end()));
    return dcg(gains, k) / ideal;
}

// ---------------------------------------------------------------------------
// Clustering

inline double choose2(double n) { return n * (n - 1) / 2; }

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1;
        rows[a[i]] += 1;
        cols[b[i]] += 1;
    }
    double index = 0, sa = 0, sb = 0;
    for (const auto& [k, v] : table) {
        index += choose2(v);
    }
    for (const auto& [k, v] : rows) {
        sa += choose2(v);
    }
    for (const auto& [k, v] : cols) {
        sb += choose2(v);
    }
    const double expected = sa * sb / choose2(static_cast<double>(a.size()));
    const double max_index = (sa + sb) / 2;
    if (max_index == expected) {
        return 1.0;
    }
    return (index - expected) / (max_index - expected);
}

/// Total weight of a minimum spanning tree of the complete graph, by Kruskal.
inline double mst_weight(const Matrix& w) {
    const std::size_t n = w.size();
    std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            edges.emplace_back(w[i][j], i, j);
        }
    }
    std::sort(edges.begin(), edges.end());
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    double total = 0;
    for (const auto& [d, i, j] : edges) {
        const auto a = find(i), b = find(j);
        if (a != b) {
            parent[a] = b;
            total += d;
        }
    }
    return total;
}

/// Trustworthiness with euclidean distances in both spaces.
inline double trustworthiness(const Matrix& high, const Matrix& low, std::size_t k) {
    const std::size_t n = high.size();
    const auto dh = distance_matrix(high);
    const auto dl = distance_matrix(low);
    double penalty = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order_h, order_l;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                order_h.push_back(j);
                order_l.push_back(j);
            }
        }
        std::stable_sort(order_h.begin(), order_h.end(), [&](auto a, auto b) { return dh[i][a] < dh[i][b]; });
        std::stable_sort(order_l.begin(), order_l.end(), [&](auto a, auto b) { return dl[i][a] < dl[i][b]; });
        std::vector<std::size_t> rank(n, 0);
        for (std::size_t r = 0; r < order_h.size(); ++r) {
            rank[order_h[r]] = r + 1;
        }
        for (std::size_t r = 0; r < k; ++r) {
            const auto j = order_l[r];
            if (rank[j] > k) {
                penalty += static_cast<double>(rank[j] - k);
            }
        }
    }
    const double nn = static_cast<double>(n), kk = static_cast<double>(k);
    return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

// ---------------------------------------------------------------------------
// Cluster quality indices, from the textbook definitions with a full
// distance matrix. Label -1 is excluded.

struct Labeled {
    Matrix x;
    std::vector<int> labels;
    std::set<int> clusters;
};

inline Labeled drop_outliers(const Matrix& x, const std::vector<int>& labels) {
    Labeled l;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (labels[i] != -1) {
            l.x.push_back(x[i]);
            l.labels.push_back(labels[i]);
            l.clusters.insert(labels[i]);
        }
    }
    return l;
}

inline std::vector<double> centroid(const Labeled& l, int c) {
    std::vector<double> m(l.x.front().size(), 0.0);
    double n = 0;
    for (std::size_t i = 0; i < l.x.size(); ++i) {
        if (l.labels[i] == c) {
            for (std::size_t d = 0; d < m.size(); ++d) {
                m[d] += l.x[i][d];
            }
            n += 1;
        }
    }
    for (auto& v : m) {
        v /= n;
    }
    return m;
}

inline double silhouette(const Matrix& x, const std::vector<int>& labels) {
    const auto l = drop_outliers(x, labels);
    const auto d = distance_matrix(l.x);
    double total = 0;
    for (std::size_t i = 0; i < l.x.size(); ++i) {
        std::map<int, std::pair<double, double>> sums; // label -> (sum, count)
        for (std::size_t j = 0; j < l.x.size(); ++j) {
            if (j != i) {
                sums[l.labels[j]].first += d[i][j];
                sums[l.labels[j]].second += 1;
            }
        }
        if (sums[l.labels[i]].second == 0) {
            continue; // singleton: s = 0
        }
        const double a = sums[l.labels[i]].first / sums[l.labels[i]].second;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [c, s] : sums) {
            if (c != l.labels[i]) {
                b = std::min(b, s.first / s.second);
            }
        }
        total += (a == 0 && b == 0) ? 0.0 : (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(l.x.size());
}

inline double calinski_harabasz(const Matrix& x, const std::vector<int>& labels) {
    const auto l = drop_outliers(x, labels);
    std::vector<double> mean(l.x.front().size(), 0.0);
    for (const auto& p : l.x) {
        for (std::size_t d = 0; d < mean.size(); ++d) {
            mean[d] += p[d] / static_cast<double>(l.x.size());
        }
    }
    double b = 0, w = 0;
    for (int c : l.clusters) {
        const auto m = centroid(l, c);
        double n = 0;
        for (std::size_t i = 0; i < l.x.size(); ++i) {
            if (l.labels[i] == c) {
                n += 1;
                w += std::pow(euclidean(l.x[i], m), 2);
            }
        }
        b += n * std::pow(euclidean(m, mean), 2);
    }
    const double t = static_cast<double>(l.clusters.size());
    const double n = static_cast<double>(l.x.size());
    return w == 0 ? 1.0 : (b / (t - 1)) / (w / (n - t));
}

inline double davies_bouldin(const Matrix& x, const std::vector<int>& labels) {
    const auto l = drop_outliers(x, labels);
    std::map<int, std::vector<double>> cent;
    std::map<int, double> scatter;
    for (int c : l.clusters) {
        cent[c] = centroid(l, c);
        double s = 0, n = 0;
        for (std::size_t i = 0; i < l.x.size(); ++i) {
            if (l.labels[i] == c) {
                s += euclidean(l.x[i], cent[c]);
                n += 1;
            }
        }
        scatter[c] = s / n;
    }
    double total = 0;
    for (int i : l.clusters) {
        double worst = 0;
        for (int j : l.clusters) {
            const double dij = euclidean(cent[i], cent[j]);
            if (i != j && dij > 0) {
                worst = std::max(worst, (scatter[i] + scatter[j]) / dij);
            }
        }
        total += worst;
    }
    return total / static_cast<double>(l.clusters.size());
}

// ---------------------------------------------------------------------------
// Tokenization

/// Greedy WordPiece decomposition of text[pos, end) found by scanning every
/// vocabulary entry at each step. Empty when some step has no match.
inline std::vector<std::string> wordpiece_pieces(std::string_view text, std::size_t pos, std::size_t end,
                                                 bool word_start, const std::vector<std::string>& vocab) {
    std::vector<std::string> pieces;
    while (pos < end) {
        const bool initial = word_start && pieces.empty();
        std::string best;
        for (const auto& v : vocab) {
            const bool marked = v.size() > 2 && v.compare(0, 2, "##") == 0;
            if (marked == initial) {
                continue;
            }
            const std::string_view body = marked ? std::string_view(v).substr(2) : std::string_view(v);
            if (!body.empty() && body.size() <= end - pos && text.substr(pos, body.size()) == body
                && v.size() > best.size()) {
                best = v;
            }
        }
        if (best.empty()) {
            return {};
        }
        pos += initial ? best.size() : best.size() - 2;
        pieces.push_back(best);
    }
    return pieces;
}

/// Greedy maximum coverage over whitespace-separated units. At each cursor
/// the dictionary candidate is the longest entry found by trying every
/// entry; the other candidate is the first WordPiece piece when the rest of
/// the unit decomposes, or the rest of the unit itself when `vocab` is null.
/// The longer candidate wins, the dictionary on ties; with no candidate the
/// rest of the unit becomes "[UNK]". ASCII input only.
inline std::vector<std::string> max_coverage_tokens(std::string_view text, const std::vector<std::string>& dict,
                                                    const std::vector<std::string>* vocab = nullptr) {
    std::vector<std::pair<std::size_t, std::size_t>> units;
    for (std::size_t i = 0; i < text.size();) {
        if (text[i] == ' ') {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ') {
            ++j;
        }
        units.emplace_back(i, j);
        i = j;
    }
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (const auto& [begin, end] : units) {
        pos = std::max(pos, begin);
        while (pos < end) {
            std::size_t best = 0;
            for (const auto& e : dict) {
                if (!e.empty() && text.substr(pos, e.size()) == e) {
                    best = std::max(best, e.size());
                }
            }
            std::size_t other = end - pos;
            std::string other_token(text.substr(pos, other));
            if (vocab != nullptr) {
                const auto pieces = wordpiece_pieces(text, pos, end, pos == begin, *vocab);
                other = pieces.empty() ? 0 : pieces.front().size() - (pos == begin ? 0 : 2);
                other_token = pieces.empty() ? "" : pieces.front();
            }
            if (best > 0 && best >= other) {
                out.emplace_back(text.substr(pos, best));
                pos += best;
            } else if (other > 0) {
                out.push_back(other_token);
                pos += other;
            } else {
                out.emplace_back("[UNK]");
                pos = end;
            }
        }
    }
    return out;
}

} // namespace oracle

#endif
