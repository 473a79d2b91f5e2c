#ifndef FINKIT_TOPICS_HPP
#define FINKIT_TOPICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "corpus_io.hpp"
#include "detail/text.hpp"
#include "errors.hpp"

/**
 * @file topics.hpp
 * @brief Class-based TF-IDF descriptors and label-free topic metrics.
 */

namespace finkit {

/// Term counts keyed by class label, then term.
using ClassTermCounts = std::map<int, std::map<std::string, double>>;
using ClassTermWeights = std::map<int, std::map<std::string, double>>;

/// Sums token counts of every document into its class.
inline ClassTermCounts class_term_counts(const std::vector<std::vector<std::string>>& doc_tokens,
                                         std::span<const int> labels) {
    if (doc_tokens.size() != labels.size()) {
        throw ValidationError("document count does not match label count");
    }
    ClassTermCounts counts;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& c = counts[labels[i]];
        for (const auto& t : doc_tokens[i]) {
            c[t] += 1.0;
        }
    }
    return counts;
}

struct CtfidfResult {
    ClassTermWeights weights;
    std::vector<std::string> warnings;
};

/**
 * W(t, c) = tf(t, c) / |c| * log(1 + A / f(t)), with |c| the total count of
 * class c, f(t) the count of t over all classes and A the mean class total.
 * A class whose total is zero gets an empty weight map and a warning.
 */
inline CtfidfResult ctfidf(const ClassTermCounts& counts) {
    std::map<std::string, double> term_total;
    std::map<int, double> class_total;
    double total = 0;
    for (const auto& [label, terms] : counts) {
        double sum = 0;
        for (const auto& [term, n] : terms) {
            if (!(n >= 0) || !std::isfinite(n)) {
                throw ValidationError("term count for '" + term + "' in class " + std::to_string(label)
                                      + " must be finite and non-negative");
            }
            sum += n;
            term_total[term] += n;
        }
        class_total[label] = sum;
        total += sum;
    }
    if (total <= 0) {
        throw ValidationError("no class has a nonzero term count");
    }
    const double avg = total / static_cast<double>(counts.size());

    CtfidfResult out;
    for (const auto& [label, terms] : counts) {
        auto& w = out.weights[label];
        const double size = class_total[label];
        if (size <= 0) {
            out.warnings.push_back("class " + std::to_string(label) + " has no terms");
            continue;
        }
        for (const auto& [term, n] : terms) {
            const double f = term_total[term];
            w[term] = f > 0 ? (n / size) * std::log1p(avg / f) : 0.0;
        }
    }
    return out;
}

struct Topic {
    int label = 0;
    /// Descending weight, ties by term.
    std::vector<std::pair<std::string, double>> descriptors;
    std::size_t doc_count = 0;
};

/// Top-k positive-weight terms per class. Classes absent from `doc_counts` get 0.
inline std::vector<Topic> top_terms(const ClassTermWeights& weights, std::size_t k = 10,
                                    const std::map<int, std::size_t>& doc_counts = {}) {
    if (k < 1) {
        throw ParameterError("k must be at least 1");
    }
    std::vector<Topic> out;
    for (const auto& [label, terms] : weights) {
        Topic t;
        t.label = label;
        if (auto it = doc_counts.find(label); it != doc_counts.end()) {
            t.doc_count = it->second;
        }
        for (const auto& [term, w] : terms) {
            if (w > 0) {
                t.descriptors.emplace_back(term, w);
            }
        }
        const auto keep = std::min(k, t.descriptors.size());
        std::partial_sort(t.descriptors.begin(), t.descriptors.begin() + static_cast<std::ptrdiff_t>(keep),
                          t.descriptors.end(), [](const auto& a, const auto& b) {
                              return a.second != b.second ? a.second > b.second : a.first < b.first;
                          });
        t.descriptors.resize(keep);
        out.push_back(std::move(t));
    }
    return out;
}

/// Row-major points in double precision.
struct PointView {
    std::span<const double> data;
    std::size_t rows = 0;
    std::size_t dim = 0;

    const double* row(std::size_t i) const { return data.data() + i * dim; }
};

inline std::vector<double> to_double(const EmbeddingMatrix& x) {
    return std::vector<double>(x.data().begin(), x.data().end());
}

namespace detail {

inline double euclid(const double* a, const double* b, std::size_t dim) {
    double s = 0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

struct Groups {
    std::vector<int> labels;                       // distinct non-outlier labels, ascending
    std::vector<std::vector<std::size_t>> members; // per label
    std::size_t n = 0;                             // non-outlier points
};

inline Groups group_points(const PointView& x, std::span<const int> labels, const char* metric) {
    if (labels.size() != x.rows) {
        throw ValidationError("label count does not match point count");
    }
    std::map<int, std::vector<std::size_t>> by;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) {
            by[labels[i]].push_back(i);
        } else if (labels[i] != -1) {
            throw ValidationError("labels must be -1 or non-negative");
        }
    }
    if (by.size() < 2) {
        throw MetricUndefinedError(std::string(metric) + " needs at least two clusters, got "
                                   + std::to_string(by.size()));
    }
    Groups g;
    for (auto& [label, m] : by) {
        g.labels.push_back(label);
        g.n += m.size();
        g.members.push_back(std::move(m));
    }
    return g;
}

inline std::vector<std::vector<double>> centroids(const PointView& x, const Groups& g) {
    std::vector<std::vector<double>> c(g.members.size(), std::vector<double>(x.dim, 0.0));
    for (std::size_t k = 0; k < g.members.size(); ++k) {
        for (auto i : g.members[k]) {
            for (std::size_t d = 0; d < x.dim; ++d) {
                c[k][d] += x.row(i)[d];
            }
        }
        for (auto& v : c[k]) {
            v /= static_cast<double>(g.members[k].size());
        }
    }
    return c;
}

} // namespace detail

/// Mean over non-outlier points of (b - a) / max(a, b); singleton clusters score 0.
inline double silhouette(const PointView& x, std::span<const int> labels) {
    const auto g = detail::group_points(x, labels, "silhouette");
    double sum = 0;
    for (std::size_t k = 0; k < g.members.size(); ++k) {
        if (g.members[k].size() == 1) {
            continue;
        }
        for (auto i : g.members[k]) {
            double a = 0;
            double b = std::numeric_limits<double>::infinity();
            for (std::size_t o = 0; o < g.members.size(); ++o) {
                double s = 0;
                for (auto j : g.members[o]) {
                    s += detail::euclid(x.row(i), x.row(j), x.dim);
                }
                if (o == k) {
                    a = s / static_cast<double>(g.members[o].size() - 1);
                } else {
                    b = std::min(b, s / static_cast<double>(g.members[o].size()));
                }
            }
            const double m = std::max(a, b);
            sum += m > 0 ? (b - a) / m : 0.0;
        }
    }
    return sum / static_cast<double>(g.n);
}

/// Between/within dispersion ratio; 1.0 when every cluster is a single location.
inline double calinski_harabasz(const PointView& x, std::span<const int> labels) {
    const auto g = detail::group_points(x, labels, "calinski_harabasz");
    const auto c = detail::centroids(x, g);
    std::vector<double> mean(x.dim, 0.0);
    for (const auto& m : g.members) {
        for (auto i : m) {
            for (std::size_t d = 0; d < x.dim; ++d) {
                mean[d] += x.row(i)[d];
            }
        }
    }
    for (auto& v : mean) {
        v /= static_cast<double>(g.n);
    }
    double between = 0, within = 0;
    for (std::size_t k = 0; k < g.members.size(); ++k) {
        const double dc = detail::euclid(c[k].data(), mean.data(), x.dim);
        between += static_cast<double>(g.members[k].size()) * dc * dc;
        for (auto i : g.members[k]) {
            const double di = detail::euclid(x.row(i), c[k].data(), x.dim);
            within += di * di;
        }
    }
    if (within == 0) {
        return 1.0;
    }
    const double t = static_cast<double>(g.members.size());
    return between * (static_cast<double>(g.n) - t) / (within * (t - 1.0));
}

/// Mean over clusters of max_j (s_i + s_j) / d_ij; coincident centroids are skipped.
inline double davies_bouldin(const PointView& x, std::span<const int> labels) {
    const auto g = detail::group_points(x, labels, "davies_bouldin");
    const auto c = detail::centroids(x, g);
    const std::size_t t = g.members.size();
    std::vector<double> s(t, 0.0);
    for (std::size_t k = 0; k < t; ++k) {
        for (auto i : g.members[k]) {
            s[k] += detail::euclid(x.row(i), c[k].data(), x.dim);
        }
        s[k] /= static_cast<double>(g.members[k].size());
    }
    double sum = 0;
    for (std::size_t i = 0; i < t; ++i) {
        double worst = 0;
        for (std::size_t j = 0; j < t; ++j) {
            if (j == i) {
                continue;
            }
            const double d = detail::euclid(c[i].data(), c[j].data(), x.dim);
            if (d > 0) {
                worst = std::max(worst, (s[i] + s[j]) / d);
            }
        }
        sum += worst;
    }
    return sum / static_cast<double>(t);
}

/// Unique terms among each topic's top-k over the number of collected terms.
inline double topic_diversity(const std::vector<Topic>& topics, std::size_t k = 10) {
    if (k < 1) {
        throw ParameterError("k must be at least 1");
    }
    if (topics.empty()) {
        throw MetricUndefinedError("topic_diversity needs at least one topic");
    }
    std::set<std::string> unique;
    std::size_t collected = 0;
    for (const auto& t : topics) {
        if (t.descriptors.empty()) {
            throw ValidationError("topic " + std::to_string(t.label) + " has no descriptors");
        }
        const auto take = std::min(k, t.descriptors.size());
        collected += take;
        for (std::size_t i = 0; i < take; ++i) {
            unique.insert(t.descriptors[i].first);
        }
    }
    return static_cast<double>(unique.size()) / static_cast<double>(collected);
}

inline double outlier_rate(std::span<const int> labels) {
    if (labels.empty()) {
        throw ValidationError("labels must be non-empty");
    }
    const auto outliers = std::count(labels.begin(), labels.end(), -1);
    return static_cast<double>(outliers) / static_cast<double>(labels.size());
}

struct TopicStats {
    std::size_t count = 0;
    double avg = 0;
    /// Population standard deviation.
    double sd = 0;
};

inline TopicStats topic_stats(std::span<const int> labels) {
    if (labels.empty()) {
        throw ValidationError("labels must be non-empty");
    }
    std::map<int, std::size_t> sizes;
    for (int l : labels) {
        if (l >= 0) {
            ++sizes[l];
        }
    }
    TopicStats s;
    s.count = sizes.size();
    if (s.count == 0) {
        return s;
    }
    for (const auto& [l, n] : sizes) {
        s.avg += static_cast<double>(n);
    }
    s.avg /= static_cast<double>(s.count);
    for (const auto& [l, n] : sizes) {
        s.sd += (static_cast<double>(n) - s.avg) * (static_cast<double>(n) - s.avg);
    }
    s.sd = std::sqrt(s.sd / static_cast<double>(s.count));
    return s;
}

struct JudgeScores {
    double coherence = 0;
    double conciseness = 0;
    double informativity = 0;
    std::size_t scored = 0;
    std::size_t skipped = 0;
};

/// Undefined metrics are empty and serialize as null.
struct TopicEvalReport {
    std::optional<double> silhouette;
    std::optional<double> calinski_harabasz;
    std::optional<double> davies_bouldin;
    std::optional<double> topic_diversity;
    double outlier_rate = 0;
    std::size_t topic_count = 0;
    double avg_docs_per_topic = 0;
    double sd_docs_per_topic = 0;
    std::optional<JudgeScores> judge_scores;
};

/// Clustering indices (in the space given), outlier and size statistics, and
/// diversity over non-outlier topics. Undefined metrics stay empty.
inline TopicEvalReport evaluate_topics(const PointView& x, std::span<const int> labels,
                                       const std::vector<Topic>& topics, std::size_t diversity_k = 10) {
    TopicEvalReport r;
    auto maybe = [&](auto&& fn) -> std::optional<double> {
        try {
            return fn(x, labels);
        } catch (const MetricUndefinedError&) {
            return std::nullopt;
        }
    };
    r.silhouette = maybe(silhouette);
    r.calinski_harabasz = maybe(calinski_harabasz);
    r.davies_bouldin = maybe(davies_bouldin);
    std::vector<Topic> assigned;
    for (const auto& t : topics) {
        if (t.label >= 0 && !t.descriptors.empty()) {
            assigned.push_back(t);
        }
    }
    if (!assigned.empty()) {
        r.topic_diversity = topic_diversity(assigned, diversity_k);
    }
    r.outlier_rate = outlier_rate(labels);
    const auto s = topic_stats(labels);
    r.topic_count = s.count;
    r.avg_docs_per_topic = s.avg;
    r.sd_docs_per_topic = s.sd;
    return r;
}

inline nlohmann::ordered_json to_json(const TopicEvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["silhouette"] = opt(r.silhouette);
    j["calinski_harabasz"] = opt(r.calinski_harabasz);
    j["davies_bouldin"] = opt(r.davies_bouldin);
    j["topic_diversity"] = opt(r.topic_diversity);
    j["outlier_rate"] = r.outlier_rate;
    j["topic_count"] = r.topic_count;
    j["avg_docs_per_topic"] = r.avg_docs_per_topic;
    j["sd_docs_per_topic"] = r.sd_docs_per_topic;
    if (r.judge_scores) {
        j["judge_scores"] = {{"coherence", r.judge_scores->coherence},
                             {"conciseness", r.judge_scores->conciseness},
                             {"informativity", r.judge_scores->informativity},
                             {"scored", r.judge_scores->scored},
                             {"skipped", r.judge_scores->skipped}};
    } else {
        j["judge_scores"] = nullptr;
    }
    return j;
}

inline void write_report(const std::string& path, const TopicEvalReport& r) {
    auto out = detail::open_output(path);
    out << to_json(r).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Topics file: one JSON object per line, {label, size, descriptors: [[term, weight], ...]}

inline void write_topics(const std::string& path, const std::vector<Topic>& topics) {
    auto out = detail::open_output(path);
    for (const auto& t : topics) {
        nlohmann::ordered_json j;
        j["label"] = t.label;
        j["size"] = t.doc_count;
        j["descriptors"] = nlohmann::ordered_json::array();
        for (const auto& [term, w] : t.descriptors) {
            j["descriptors"].push_back({term, w});
        }
        out << j.dump() << '\n';
    }
}

inline std::vector<Topic> load_topics(const std::string& path) {
    std::vector<Topic> out;
    std::size_t lineno = 0;
    for (const auto& line : detail::read_lines(path)) {
        ++lineno;
        if (detail::trim(line).empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            Topic t;
            t.label = j.at("label").get<int>();
            t.doc_count = j.at("size").get<std::size_t>();
            for (const auto& d : j.at("descriptors")) {
                t.descriptors.emplace_back(d.at(0).get<std::string>(), d.at(1).get<double>());
            }
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, lineno, e.what());
        }
    }
    return out;
}

} // namespace finkit

#endif
