#ifndef FINKIT_RETRIEVAL_HPP
#define FINKIT_RETRIEVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "corpus_io.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"
#include "errors.hpp"

/**
 * @file retrieval.hpp
 * @brief Exact cosine retrieval, rank metrics, hard-negative mining,
 * contrastive pair construction and judge-based pair filtering.
 *
 * Ties are always broken by ascending doc id.
 */

namespace finkit {

namespace detail {

inline std::vector<double> row_norms(const EmbeddingMatrix& m) {
    std::vector<double> norms(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0;
        for (float v : m.row(i)) {
            s += static_cast<double>(v) * v;
        }
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) {
            throw ValidationError("zero-norm vector for id '" + m.ids()[i] + "'");
        }
    }
    return norms;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * b[i];
    }
    return s;
}

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

inline bool better(const ScoredDoc& a, const ScoredDoc& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
}

} // namespace detail

/// Cosine similarity in double precision.
inline double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ParameterError("cosine of vectors with different dimensions");
    }
    const double na = std::sqrt(detail::dot(a, a));
    const double nb = std::sqrt(detail::dot(b, b));
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("cosine of a zero-norm vector");
    }
    return detail::clamp_unit(detail::dot(a, b) / (na * nb));
}

/**
 * Exhaustive top-k by cosine similarity for every query row. Queries are
 * scored in parallel; output is identical for any thread count.
 */
inline RetrievalRun cosine_topk(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs, std::size_t k,
                                int threads = 1) {
    if (queries.dim() != docs.dim()) {
        throw ParameterError("query dim " + std::to_string(queries.dim()) + " != doc dim "
                             + std::to_string(docs.dim()));
    }
    if (k == 0) {
        throw ParameterError("k must be at least 1");
    }
    const auto qnorm = detail::row_norms(queries);
    const auto dnorm = detail::row_norms(docs);
    const std::size_t take = std::min(k, docs.rows());

    std::vector<std::vector<ScoredDoc>> results(queries.rows());
    detail::parallel_for(queries.rows(), threads, [&](std::size_t begin, std::size_t end) {
        std::vector<ScoredDoc> scored(docs.rows());
        for (std::size_t q = begin; q < end; ++q) {
            for (std::size_t d = 0; d < docs.rows(); ++d) {
                const double s = detail::dot(queries.row(q), docs.row(d)) / (qnorm[q] * dnorm[d]);
                scored[d] = {docs.ids()[d], detail::clamp_unit(s)};
            }
            std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                              detail::better);
            results[q].assign(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take));
        }
    });

    RetrievalRun run;
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        run.rankings[queries.ids()[q]] = std::move(results[q]);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricResult {
    std::map<std::string, double> per_query;
    double mean = 0.0;
};

namespace detail {

template<class PerQuery>
MetricResult evaluate_queries(const RetrievalRun& run, const QRels& qrels, std::size_t k, PerQuery&& fn) {
    if (k == 0) {
        throw ParameterError("k must be at least 1");
    }
    MetricResult out;
    for (const auto& [query, ranked] : run.rankings) {
        auto it = qrels.entries.find(query);
        if (it == qrels.entries.end()) {
            throw MetricUndefinedError("query '" + query + "' has no judgments");
        }
        std::size_t positives = 0;
        for (const auto& [doc, rel] : it->second) {
            positives += rel > 0 ? 1 : 0;
        }
        if (positives == 0) {
            throw MetricUndefinedError("query '" + query + "' has no relevant documents");
        }
        out.per_query[query] = fn(ranked, it->second);
    }
    double sum = 0;
    for (const auto& [q, v] : out.per_query) {
        sum += v;
    }
    out.mean = out.per_query.empty() ? 0.0 : sum / static_cast<double>(out.per_query.size());
    return out;
}

} // namespace detail

/// |relevant in top-k| / |relevant|, relevance > 0 counting as relevant.
inline MetricResult recall_at_k(const RetrievalRun& run, const QRels& qrels, std::size_t k) {
    return detail::evaluate_queries(run, qrels, k, [k](const std::vector<ScoredDoc>& ranked,
                                                       const std::map<std::string, int>& judged) {
        std::size_t relevant = 0, hit = 0;
        for (const auto& [doc, rel] : judged) {
            relevant += rel > 0 ? 1 : 0;
        }
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
            auto it = judged.find(ranked[i].doc_id);
            hit += (it != judged.end() && it->second > 0) ? 1 : 0;
        }
        return static_cast<double>(hit) / static_cast<double>(relevant);
    });
}

/// Linear-gain nDCG: sum rel_i / log2(i + 1) over the top k, over the ideal ordering.
inline MetricResult ndcg_at_k(const RetrievalRun& run, const QRels& qrels, std::size_t k = 10) {
    return detail::evaluate_queries(run, qrels, k, [k](const std::vector<ScoredDoc>& ranked,
                                                       const std::map<std::string, int>& judged) {
        double dcg = 0;
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
            auto it = judged.find(ranked[i].doc_id);
            if (it != judged.end() && it->second > 0) {
                dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
            }
        }
        std::vector<int> ideal;
        for (const auto& [doc, rel] : judged) {
            if (rel > 0) {
                ideal.push_back(rel);
            }
        }
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0;
        for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
            idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
        }
        return dcg / idcg;
    });
}

// ---------------------------------------------------------------------------
// Hard negatives and training pairs

/**
 * The `max_n` documents most cosine-similar to `query` that are not in
 * `positives`, in descending similarity.
 */
inline std::vector<std::string> mine_hard_negatives(std::span<const float> query,
                                                    const std::set<std::string>& positives,
                                                    const EmbeddingMatrix& docs, std::size_t max_n = 50) {
    if (query.size() != docs.dim()) {
        throw ParameterError("query dim does not match document dim");
    }
    std::set<std::string> known(docs.ids().begin(), docs.ids().end());
    for (const auto& p : positives) {
        if (known.count(p) == 0) {
            throw ValidationError("positive '" + p + "' is not in the document matrix");
        }
    }
    const double qn = std::sqrt(detail::dot(query, query));
    if (qn == 0.0) {
        throw ValidationError("zero-norm query vector");
    }
    const auto dnorm = detail::row_norms(docs);
    std::vector<ScoredDoc> scored;
    for (std::size_t d = 0; d < docs.rows(); ++d) {
        if (positives.count(docs.ids()[d]) != 0) {
            continue;
        }
        scored.push_back({docs.ids()[d], detail::clamp_unit(detail::dot(query, docs.row(d)) / (qn * dnorm[d]))});
    }
    const std::size_t take = std::min(max_n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      detail::better);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back(std::move(scored[i].doc_id));
    }
    return out;
}

struct ContrastiveConfig {
    double temperature = 0.1;
    std::size_t pos_per_query = 2;
    std::size_t neg_per_query = 8;
    std::size_t max_mined_negatives = 50;

    static ContrastiveConfig base() { return {}; }

    /// Preset for higher-capacity encoders: 15 negatives per query.
    static ContrastiveConfig large() {
        ContrastiveConfig c;
        c.neg_per_query = 15;
        return c;
    }

    void validate() const {
        if (!(temperature > 0.0)) {
            throw ParameterError("temperature must be positive");
        }
        if (pos_per_query < 1 || neg_per_query < 1) {
            throw ParameterError("pos_per_query and neg_per_query must be at least 1");
        }
        if (max_mined_negatives < neg_per_query) {
            throw ParameterError("max_mined_negatives must be at least neg_per_query");
        }
    }
};

struct SkippedQuery {
    std::string query_id;
    std::string reason;
};

struct PairBuildResult {
    std::vector<TrainingTriplet> triplets;
    std::vector<SkippedQuery> skipped;
};

/**
 * Samples exactly pos_per_query positives and neg_per_query negatives per
 * query without replacement. Mined lists are truncated to
 * max_mined_negatives and purged of positives first. Each query draws from
 * its own stream derived from (seed, query id), so results do not depend on
 * which other queries are present. Sampled ids keep their source order.
 */
inline PairBuildResult build_training_pairs(const QRels& qrels,
                                            const std::map<std::string, std::vector<std::string>>& mined,
                                            const ContrastiveConfig& cfg, std::uint64_t seed,
                                            const std::map<std::string, std::string>& query_texts = {}) {
    cfg.validate();
    PairBuildResult out;
    for (const auto& [query, judged] : qrels.entries) {
        const auto positives = qrels.relevant(query);
        const std::set<std::string> pos_set(positives.begin(), positives.end());

        std::vector<std::string> negatives;
        if (auto it = mined.find(query); it != mined.end()) {
            std::set<std::string> seen;
            for (const auto& d : it->second) {
                if (negatives.size() == cfg.max_mined_negatives) {
                    break;
                }
                if (pos_set.count(d) == 0 && seen.insert(d).second) {
                    negatives.push_back(d);
                }
            }
        }

        if (positives.size() < cfg.pos_per_query) {
            out.skipped.push_back({query, "has " + std::to_string(positives.size()) + " positives, needs "
                                              + std::to_string(cfg.pos_per_query)});
            continue;
        }
        if (negatives.size() < cfg.neg_per_query) {
            out.skipped.push_back({query, "has " + std::to_string(negatives.size()) + " negatives, needs "
                                              + std::to_string(cfg.neg_per_query)});
            continue;
        }

        detail::Rng rng(seed ^ detail::fnv1a64(query));
        auto pick = [&rng](const std::vector<std::string>& pool, std::size_t count) {
            auto idx = rng.sample_without_replacement(pool.size(), count);
            std::sort(idx.begin(), idx.end());
            std::vector<std::string> chosen;
            for (auto i : idx) {
                chosen.push_back(pool[i]);
            }
            return chosen;
        };

        TrainingTriplet t;
        t.query_id = query;
        if (auto it = query_texts.find(query); it != query_texts.end()) {
            t.query_text = it->second;
        }
        t.positives = pick(positives, cfg.pos_per_query);
        t.negatives = pick(negatives, cfg.neg_per_query);
        out.triplets.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// InfoNCE

struct InfoNceResult {
    double loss = 0.0;
    /// Set when no negatives were given: the denominator holds only the
    /// positive term and the loss is 0 by construction.
    bool degenerate = false;
};

/// Loss from precomputed similarity scores, log-sum-exp stabilised.
inline InfoNceResult infonce_from_scores(double positive, std::span<const double> negatives, double temperature = 0.1) {
    if (!(temperature > 0.0)) {
        throw ParameterError("temperature must be positive");
    }
    if (negatives.empty()) {
        return {0.0, true};
    }
    const double pos = positive / temperature;
    double top = pos;
    for (double n : negatives) {
        top = std::max(top, n / temperature);
    }
    double tail = 0; // sum over all terms except the max, each exp(x - top)
    if (top == pos) {
        for (double n : negatives) {
            tail += std::exp(n / temperature - top);
        }
        return {std::log1p(tail), false};
    }
    tail = std::exp(pos - top);
    for (double n : negatives) {
        tail += std::exp(n / temperature - top);
    }
    return {(top - pos) + std::log(tail), false};
}

/// InfoNCE with cosine similarity as the score.
inline InfoNceResult infonce_loss(std::span<const float> query, std::span<const float> positive,
                                  const std::vector<std::span<const float>>& negatives, double temperature = 0.1) {
    std::vector<double> neg;
    neg.reserve(negatives.size());
    for (const auto& n : negatives) {
        neg.push_back(cosine(query, n));
    }
    return infonce_from_scores(cosine(query, positive), neg, temperature);
}

// ---------------------------------------------------------------------------
// Judge-based filtering

enum class CheckType {
    /// Does the document contain enough information to answer the query?
    sufficiency,
    /// Could the document (potentially) answer the query?
    answerability,
};

inline std::string to_string(CheckType c) { return c == CheckType::sufficiency ? "sufficiency" : "answerability"; }

inline CheckType check_type_from_string(const std::string& s) {
    if (s == "sufficiency") {
        return CheckType::sufficiency;
    }
    if (s == "answerability") {
        return CheckType::answerability;
    }
    throw ValidationError("unknown check type '" + s + "'");
}

struct PairJudgeRequest {
    std::string query_id;
    std::string query_text;
    std::string doc_id;
    std::string doc_text;
    CheckType check;
};

struct PairVerdict {
    bool verdict;
    std::string rationale;
};

inline nlohmann::json to_json(const PairJudgeRequest& r) {
    return {{"query_id", r.query_id}, {"query_text", r.query_text}, {"doc_id", r.doc_id},
            {"doc_text", r.doc_text}, {"check_type", to_string(r.check)}};
}

inline PairVerdict pair_verdict_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("verdict") || !j["verdict"].is_boolean()) {
        throw JudgeTransportError("judge response lacks a boolean 'verdict'");
    }
    return {j["verdict"].get<bool>(), j.value("rationale", std::string{})};
}

/// Binary verdicts on (query, document) pairs. Implementations throw
/// JudgeTransportError for retryable failures.
class PairJudge {
public:
    virtual ~PairJudge() = default;
    virtual PairVerdict judge(const PairJudgeRequest& request) = 0;
};

/**
 * Scripted judge for offline runs. Rules are JSON lines
 * {"check": "sufficiency", "query_id": "q1", "doc_id": "d3", "verdict": false,
 *  "rationale": "..."}; "query_id" may be omitted to match any query.
 * Unmatched sufficiency checks pass, unmatched answerability checks fail,
 * i.e. the default stub keeps every pair.
 */
class StubPairJudge : public PairJudge {
public:
    struct Rule {
        CheckType check;
        std::string query_id; // empty = any
        std::string doc_id;
        bool verdict;
        std::string rationale;
    };

    StubPairJudge() = default;
    explicit StubPairJudge(std::vector<Rule> rules) : rules_(std::move(rules)) {}

    static StubPairJudge from_file(const std::string& path) {
        std::vector<Rule> rules;
        std::size_t lineno = 0;
        for (const auto& line : detail::read_lines(path)) {
            ++lineno;
            if (detail::trim(line).empty()) {
                continue;
            }
            try {
                const auto j = nlohmann::json::parse(line);
                rules.push_back({check_type_from_string(j.at("check").get<std::string>()),
                                 j.value("query_id", std::string{}), j.at("doc_id").get<std::string>(),
                                 j.at("verdict").get<bool>(), j.value("rationale", std::string{"stub"})});
            } catch (const std::exception& e) {
                throw ParseError(path, lineno, e.what());
            }
        }
        return StubPairJudge(std::move(rules));
    }

    PairVerdict judge(const PairJudgeRequest& r) override {
        for (const auto& rule : rules_) {
            if (rule.check == r.check && rule.doc_id == r.doc_id
                && (rule.query_id.empty() || rule.query_id == r.query_id)) {
                return {rule.verdict, rule.rationale};
            }
        }
        return {r.check == CheckType::sufficiency, "stub default"};
    }

private:
    std::vector<Rule> rules_;
};

struct JudgeErrorRecord {
    std::string query_id;
    std::string doc_id;
    CheckType check;
    std::string message;
};

struct FilterResult {
    std::vector<TrainingTriplet> triplets;
    std::vector<SkippedQuery> removed;
    std::vector<JudgeErrorRecord> errors;
    std::size_t dropped_positives = 0;
    std::size_t dropped_negatives = 0;
};

struct FilterOptions {
    std::size_t min_positives = 2;
    std::size_t min_negatives = 8;
    int retries = 1;
};

/**
 * Drops positives the judge finds insufficient and negatives it finds
 * answerable, then removes triplets left below the minimum counts. A pair
 * whose judge call keeps failing after the retries is kept unchanged and
 * recorded in `errors`.
 */
inline FilterResult filter_pairs_with_judge(const std::vector<TrainingTriplet>& triplets, PairJudge& judge,
                                            const std::map<std::string, std::string>& doc_texts,
                                            const FilterOptions& opt = {}) {
    FilterResult out;
    auto ask = [&](const TrainingTriplet& t, const std::string& doc, CheckType check) -> std::optional<bool> {
        auto text = doc_texts.find(doc);
        if (text == doc_texts.end()) {
            out.errors.push_back({t.query_id, doc, check, "document text not found"});
            return std::nullopt;
        }
        const PairJudgeRequest req{t.query_id, t.query_text, doc, text->second, check};
        std::string last_error;
        for (int attempt = 0; attempt <= opt.retries; ++attempt) {
            try {
                return judge.judge(req).verdict;
            } catch (const JudgeTransportError& e) {
                last_error = e.what();
            }
        }
        out.errors.push_back({t.query_id, doc, check, last_error});
        return std::nullopt;
    };

    for (const auto& t : triplets) {
        TrainingTriplet kept{t.query_id, t.query_text, {}, {}};
        for (const auto& p : t.positives) {
            if (ask(t, p, CheckType::sufficiency).value_or(true)) {
                kept.positives.push_back(p);
            } else {
                ++out.dropped_positives;
            }
        }
        for (const auto& n : t.negatives) {
            if (!ask(t, n, CheckType::answerability).value_or(false)) {
                kept.negatives.push_back(n);
            } else {
                ++out.dropped_negatives;
            }
        }
        if (kept.positives.size() < opt.min_positives || kept.negatives.size() < opt.min_negatives) {
            out.removed.push_back({t.query_id, "left with " + std::to_string(kept.positives.size()) + " positives and "
                                                   + std::to_string(kept.negatives.size()) + " negatives"});
            continue;
        }
        out.triplets.push_back(std::move(kept));
    }
    return out;
}

} // namespace finkit

#endif
