#ifndef FINKIT_CHUNKING_HPP
#define FINKIT_CHUNKING_HPP

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "corpus_io.hpp"
#include "errors.hpp"
#include "tokenize.hpp"

namespace finkit {

struct ChunkOptions {
    std::size_t window = 400;
    std::size_t overlap = 20;
};

struct Chunk {
    std::string doc_id;
    std::size_t index;
    std::size_t token_start;
    std::size_t token_end; // exclusive
    std::vector<std::string> tokens;
};

/**
 * Sliding windows over a token sequence. Window i starts at
 * i * (window - overlap); the tail window is kept unless it lies entirely
 * inside its predecessor. An empty sequence yields no chunks.
 */
inline std::vector<Chunk> chunk_tokens(const std::string& doc_id, std::span<const std::string> tokens,
                                       const ChunkOptions& opt = {}) {
    if (opt.window == 0) {
        throw ParameterError("window must be positive");
    }
    if (opt.overlap >= opt.window) {
        throw ParameterError("overlap (" + std::to_string(opt.overlap) + ") must be smaller than window ("
                             + std::to_string(opt.window) + ")");
    }
    const std::size_t n = tokens.size();
    const std::size_t step = opt.window - opt.overlap;
    std::vector<Chunk> chunks;
    for (std::size_t start = 0; start < n; start += step) {
        const std::size_t end = std::min(start + opt.window, n);
        if (!chunks.empty() && end <= chunks.back().token_end) {
            break;
        }
        chunks.push_back({doc_id, chunks.size(), start, end,
                          std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                                   tokens.begin() + static_cast<std::ptrdiff_t>(end))});
        if (end == n) {
            break;
        }
    }
    return chunks;
}

inline std::string chunk_id(const std::string& doc_id, std::size_t index) {
    return doc_id + "#" + std::to_string(index);
}

/// Inverse of chunk_id(); ids without a numeric "#" suffix map to themselves.
inline std::string doc_id_of_chunk(const std::string& id) {
    const auto hash = id.rfind('#');
    if (hash == std::string::npos || hash + 1 == id.size()) {
        return id;
    }
    for (std::size_t i = hash + 1; i < id.size(); ++i) {
        if (id[i] < '0' || id[i] > '9') {
            return id;
        }
    }
    return id.substr(0, hash);
}

/**
 * Chunks every document of a corpus. Words are pre-tokenizer units (CJK
 * ideographs count one each); chunk text is the original source span, so
 * spacing inside a window is preserved.
 */
inline Corpus chunk_corpus(const Corpus& docs, const ChunkOptions& opt = {}, bool split_cjk = true) {
    Corpus out;
    for (const auto& doc : docs) {
        const auto units = pretokenize(doc.text, split_cjk);
        std::vector<std::string> tokens;
        tokens.reserve(units.size());
        for (const auto& u : units) {
            tokens.emplace_back(doc.text.substr(u.begin, u.end - u.begin));
        }
        for (const auto& c : chunk_tokens(doc.id, tokens, opt)) {
            Document d;
            d.id = chunk_id(doc.id, c.index);
            const auto begin = units[c.token_start].begin;
            const auto end = units[c.token_end - 1].end;
            d.text = doc.text.substr(begin, end - begin);
            d.meta = doc.meta;
            d.meta["doc_id"] = doc.id;
            d.meta["token_start"] = std::to_string(c.token_start);
            d.meta["token_end"] = std::to_string(c.token_end);
            out.push_back(std::move(d));
        }
    }
    return out;
}

enum class Aggregation { max, mean };

inline double aggregate(std::span<const double> scores, Aggregation mode) {
    if (scores.empty()) {
        throw ValidationError("cannot aggregate an empty score group");
    }
    if (mode == Aggregation::max) {
        return *std::max_element(scores.begin(), scores.end());
    }
    double sum = 0;
    for (double s : scores) {
        sum += s;
    }
    return sum / static_cast<double>(scores.size());
}

inline std::map<std::string, double> aggregate_chunk_scores(const std::map<std::string, std::vector<double>>& groups,
                                                            Aggregation mode = Aggregation::max) {
    std::map<std::string, double> out;
    for (const auto& [doc, scores] : groups) {
        if (scores.empty()) {
            throw ValidationError("document '" + doc + "' has no chunk scores");
        }
        out[doc] = aggregate(scores, mode);
    }
    return out;
}

/**
 * Collapses a chunk-level run ("<doc>#<i>" ids) into a document-level run,
 * re-ranked by aggregated score with ties by ascending doc id.
 */
inline RetrievalRun aggregate_run(const RetrievalRun& chunk_run, Aggregation mode = Aggregation::max) {
    RetrievalRun out;
    for (const auto& [query, list] : chunk_run.rankings) {
        std::map<std::string, std::vector<double>> groups;
        for (const auto& sd : list) {
            groups[doc_id_of_chunk(sd.doc_id)].push_back(sd.score);
        }
        auto& ranked = out.rankings[query];
        for (const auto& [doc, score] : aggregate_chunk_scores(groups, mode)) {
            ranked.push_back({doc, score});
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
            return a.score > b.score;
        });
    }
    return out;
}

} // namespace finkit

#endif
