#ifndef FINKIT_CORPUS_IO_HPP
#define FINKIT_CORPUS_IO_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "detail/rng.hpp"
#include "detail/text.hpp"
#include "errors.hpp"

/**
 * @file corpus_io.hpp
 * @brief Persistent data formats: corpora, embeddings, judgments, runs, triplets.
 *
 * Text formats are line oriented (one record per line). Corpora and triplets
 * are JSON lines; qrels and runs are tab separated. Embeddings use a small
 * binary container with an id sidecar, see write_embeddings().
 */

namespace finkit {

struct Document {
    std::string id;
    std::string text;
    std::map<std::string, std::string> meta;

    bool operator==(const Document&) const = default;
};

using Corpus = std::vector<Document>;

namespace detail {

inline void validate_document(const Document& doc) {
    if (doc.id.empty()) {
        throw ValidationError("document id must be non-empty");
    }
    if (doc.text.empty() && doc.meta.empty()) {
        throw ValidationError("document '" + doc.id + "' has empty text and no meta");
    }
}

} // namespace detail

/// Reads a JSON-lines corpus: {"id": ..., "text": ..., "meta": {...}}.
/// Blank lines are skipped. `source` names the stream in error messages.
inline Corpus read_corpus(std::istream& in, const std::string& source = "<corpus>") {
    Corpus docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty()) {
            continue;
        }
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source, lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string()) {
            throw ParseError(source, lineno, "record needs a string field 'id'");
        }
        Document doc;
        doc.id = rec["id"].get<std::string>();
        if (rec.contains("text")) {
            if (!rec["text"].is_string()) {
                throw ParseError(source, lineno, "field 'text' must be a string");
            }
            doc.text = rec["text"].get<std::string>();
        }
        if (rec.contains("meta") && !rec["meta"].is_null()) {
            if (!rec["meta"].is_object()) {
                throw ParseError(source, lineno, "field 'meta' must be an object");
            }
            for (const auto& [k, v] : rec["meta"].items()) {
                doc.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
            }
        }
        try {
            detail::validate_document(doc);
        } catch (const ValidationError& e) {
            throw ParseError(source, lineno, e.what());
        }
        if (!seen.insert(doc.id).second) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": duplicate document id '" + doc.id + "'");
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

inline Corpus load_corpus(const std::string& path) {
    auto in = detail::open_input(path);
    return read_corpus(in, path);
}

inline void write_corpus(std::ostream& out, const Corpus& docs) {
    for (const auto& doc : docs) {
        nlohmann::json rec;
        rec["id"] = doc.id;
        rec["text"] = doc.text;
        if (!doc.meta.empty()) {
            rec["meta"] = doc.meta;
        }
        out << rec.dump() << '\n';
    }
}

inline void write_corpus(const std::string& path, const Corpus& docs) {
    auto out = detail::open_output(path);
    write_corpus(out, docs);
}

/// Keeps the documents for which `keep` returns true, in order. This is the
/// hook for quality filtering with an externally trained classifier.
inline Corpus filter_corpus(const Corpus& docs, const std::function<bool(const Document&)>& keep) {
    Corpus out;
    std::copy_if(docs.begin(), docs.end(), std::back_inserter(out), keep);
    return out;
}

/**
 * Dense row-major float matrix with one row per id.
 *
 * The constructor enforces the invariants (row count equals id count, unique
 * ids, finite values), so every live instance is valid.
 */
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;

    EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data)
        : ids_(std::move(ids)), dim_(dim), data_(std::move(data)) {
        if (dim_ == 0) {
            throw ValidationError("embedding dimension must be positive");
        }
        if (data_.size() != ids_.size() * dim_) {
            throw ValidationError("embedding payload has " + std::to_string(data_.size()) + " values, expected "
                                  + std::to_string(ids_.size()) + " x " + std::to_string(dim_));
        }
        std::unordered_set<std::string> seen;
        for (const auto& id : ids_) {
            if (id.empty()) {
                throw ValidationError("embedding id must be non-empty");
            }
            if (!seen.insert(id).second) {
                throw ValidationError("duplicate embedding id '" + id + "'");
            }
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                throw ValidationError("non-finite value in row '" + ids_[i / dim_] + "'");
            }
        }
    }

    std::size_t rows() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<float>& data() const noexcept { return data_; }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    bool operator==(const EmbeddingMatrix& other) const {
        return ids_ == other.ids_ && dim_ == other.dim_ && data_.size() == other.data_.size()
            && std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
    }

private:
    std::vector<std::string> ids_;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

namespace detail {

inline constexpr std::array<char, 4> embedding_magic{'F', 'K', 'E', 'M'};
inline constexpr std::uint32_t embedding_version = 1;
inline constexpr std::size_t embedding_header_size = 24;

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline std::uint64_t get_le(const std::string& buf, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    return v;
}

} // namespace detail

/// Path of the id manifest that accompanies an embedding file.
inline std::string embedding_ids_path(const std::string& path) { return path + ".ids"; }

/**
 * Writes `m` to `path` plus the id manifest `path + ".ids"`.
 *
 * Layout (all little-endian): 4 magic bytes "FKEM", u32 version (1), u32 dim,
 * u32 reserved (0), u64 row count, then rows*dim IEEE-754 binary32 values.
 * The manifest holds one id per line in row order.
 */
inline void write_embeddings(const EmbeddingMatrix& m, const std::string& path) {
    std::string buf;
    buf.reserve(detail::embedding_header_size + m.data().size() * 4);
    buf.append(detail::embedding_magic.data(), detail::embedding_magic.size());
    detail::put_u32(buf, detail::embedding_version);
    detail::put_u32(buf, static_cast<std::uint32_t>(m.dim()));
    detail::put_u32(buf, 0);
    detail::put_u64(buf, m.rows());
    for (float v : m.data()) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, sizeof(bits));
        detail::put_u32(buf, bits);
    }
    {
        auto out = detail::open_output(path, true);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) {
            throw Error("failed writing '" + path + "'");
        }
    }
    auto ids = detail::open_output(embedding_ids_path(path));
    for (const auto& id : m.ids()) {
        if (id.find_first_of("\n\r") != std::string::npos) {
            throw ValidationError("embedding id '" + id + "' contains a line break");
        }
        ids << id << '\n';
    }
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
    const std::string buf = detail::read_file(path);
    if (buf.size() < detail::embedding_header_size) {
        throw FormatError("'" + path + "': truncated header");
    }
    if (!std::equal(detail::embedding_magic.begin(), detail::embedding_magic.end(), buf.begin())) {
        throw FormatError("'" + path + "': bad magic bytes");
    }
    const auto version = detail::get_le(buf, 4, 4);
    if (version != detail::embedding_version) {
        throw FormatError("'" + path + "': unsupported version " + std::to_string(version));
    }
    const auto dim = detail::get_le(buf, 8, 4);
    const auto rows = detail::get_le(buf, 16, 8);
    if (dim == 0) {
        throw FormatError("'" + path + "': declared dimension is zero");
    }
    const auto payload = buf.size() - detail::embedding_header_size;
    if (rows > payload / 4 / dim + 1 || payload != rows * dim * 4) {
        throw FormatError("'" + path + "': payload holds " + std::to_string(payload) + " bytes, header declares "
                          + std::to_string(rows) + " rows x " + std::to_string(dim) + " floats");
    }

    std::vector<std::string> ids;
    {
        auto in = detail::open_input(embedding_ids_path(path));
        std::string line;
        while (std::getline(in, line)) {
            ids.emplace_back(detail::chomp(line));
        }
    }
    if (ids.size() != rows) {
        throw FormatError("'" + path + "': manifest lists " + std::to_string(ids.size()) + " ids, header declares "
                          + std::to_string(rows) + " rows");
    }

    std::vector<float> data(rows * dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto bits = static_cast<std::uint32_t>(detail::get_le(buf, detail::embedding_header_size + 4 * i, 4));
        std::memcpy(&data[i], &bits, sizeof(float));
        if (!std::isfinite(data[i])) {
            throw FormatError("'" + path + "': non-finite value in row " + std::to_string(i / dim));
        }
    }
    try {
        return EmbeddingMatrix(std::move(ids), dim, std::move(data));
    } catch (const ValidationError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

/// query-id -> (doc-id -> relevance). Ordered maps keep iteration deterministic.
struct QRels {
    std::map<std::string, std::map<std::string, int>> entries;

    void add(const std::string& query, const std::string& doc, int relevance) {
        if (relevance < 0) {
            throw ValidationError("negative relevance for (" + query + ", " + doc + ")");
        }
        if (!entries[query].emplace(doc, relevance).second) {
            throw ValidationError("duplicate judgment for (" + query + ", " + doc + ")");
        }
    }

    /// Documents with relevance > 0, ascending id.
    std::vector<std::string> relevant(const std::string& query) const {
        std::vector<std::string> out;
        if (auto it = entries.find(query); it != entries.end()) {
            for (const auto& [doc, rel] : it->second) {
                if (rel > 0) {
                    out.push_back(doc);
                }
            }
        }
        return out;
    }

    bool operator==(const QRels&) const = default;
};

/// Tab-separated: query-id, doc-id, relevance.
inline QRels read_qrels(std::istream& in, const std::string& source = "<qrels>") {
    QRels q;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::chomp(line);
        if (detail::trim(body).empty()) {
            continue;
        }
        const auto fields = detail::split(body, '\t');
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
            throw ParseError(source, lineno, "expected query-id<TAB>doc-id<TAB>relevance");
        }
        int rel = 0;
        if (!detail::parse_number(fields[2], rel)) {
            throw ParseError(source, lineno, "relevance is not an integer");
        }
        try {
            q.add(std::string(fields[0]), std::string(fields[1]), rel);
        } catch (const ValidationError& e) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return q;
}

inline QRels load_qrels(const std::string& path) {
    auto in = detail::open_input(path);
    return read_qrels(in, path);
}

inline void write_qrels(std::ostream& out, const QRels& q) {
    for (const auto& [query, docs] : q.entries) {
        for (const auto& [doc, rel] : docs) {
            out << query << '\t' << doc << '\t' << rel << '\n';
        }
    }
}

inline void write_qrels(const std::string& path, const QRels& q) {
    auto out = detail::open_output(path);
    write_qrels(out, q);
}

struct ScoredDoc {
    std::string doc_id;
    double score;

    bool operator==(const ScoredDoc&) const = default;
};

/// query-id -> ranked list, descending score.
struct RetrievalRun {
    std::map<std::string, std::vector<ScoredDoc>> rankings;

    void validate() const {
        for (const auto& [query, list] : rankings) {
            std::unordered_set<std::string> seen;
            for (std::size_t i = 0; i < list.size(); ++i) {
                if (!seen.insert(list[i].doc_id).second) {
                    throw ValidationError("query '" + query + "' ranks doc '" + list[i].doc_id + "' twice");
                }
                if (i > 0 && list[i].score > list[i - 1].score) {
                    throw ValidationError("query '" + query + "' has increasing scores at rank " + std::to_string(i + 1));
                }
            }
        }
    }

    bool operator==(const RetrievalRun&) const = default;
};

/// Tab-separated: query-id, rank (1-based), doc-id, score. Lines of a query
/// may appear in any order; they are re-sorted by rank.
inline RetrievalRun read_run(std::istream& in, const std::string& source = "<run>") {
    std::map<std::string, std::map<long, ScoredDoc>> by_rank;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::chomp(line);
        if (detail::trim(body).empty()) {
            continue;
        }
        const auto fields = detail::split(body, '\t');
        if (fields.size() != 4 || fields[0].empty() || fields[2].empty()) {
            throw ParseError(source, lineno, "expected query-id<TAB>rank<TAB>doc-id<TAB>score");
        }
        long rank = 0;
        double score = 0;
        if (!detail::parse_number(fields[1], rank) || rank < 1) {
            throw ParseError(source, lineno, "rank must be a positive integer");
        }
        if (!detail::parse_number(fields[3], score) || !std::isfinite(score)) {
            throw ParseError(source, lineno, "score must be a finite number");
        }
        auto& slot = by_rank[std::string(fields[0])];
        if (!slot.emplace(rank, ScoredDoc{std::string(fields[2]), score}).second) {
            throw ParseError(source, lineno, "duplicate rank " + std::to_string(rank));
        }
    }
    RetrievalRun run;
    for (auto& [query, ranks] : by_rank) {
        auto& list = run.rankings[query];
        for (auto& [rank, doc] : ranks) {
            list.push_back(std::move(doc));
        }
    }
    run.validate();
    return run;
}

inline RetrievalRun load_run(const std::string& path) {
    auto in = detail::open_input(path);
    return read_run(in, path);
}

inline void write_run(std::ostream& out, const RetrievalRun& run) {
    for (const auto& [query, list] : run.rankings) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            out << query << '\t' << (i + 1) << '\t' << list[i].doc_id << '\t' << detail::format_float(list[i].score)
                << '\n';
        }
    }
}

inline void write_run(const std::string& path, const RetrievalRun& run) {
    auto out = detail::open_output(path);
    write_run(out, run);
}

struct TrainingTriplet {
    std::string query_id;
    std::string query_text;
    std::vector<std::string> positives;
    std::vector<std::string> negatives;

    bool operator==(const TrainingTriplet&) const = default;
};

inline void validate_triplet(const TrainingTriplet& t) {
    if (t.query_id.empty()) {
        throw ValidationError("triplet query id must be non-empty");
    }
    const std::set<std::string> pos(t.positives.begin(), t.positives.end());
    for (const auto& n : t.negatives) {
        if (pos.count(n) != 0) {
            throw ValidationError("query '" + t.query_id + "': doc '" + n + "' is both positive and negative");
        }
    }
}

/// JSON lines: {"query_id", "query_text", "positives": [...], "negatives": [...]}.
inline std::vector<TrainingTriplet> read_triplets(std::istream& in, const std::string& source = "<triplets>") {
    std::vector<TrainingTriplet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty()) {
            continue;
        }
        try {
            const auto rec = nlohmann::json::parse(body);
            TrainingTriplet t;
            t.query_id = rec.at("query_id").get<std::string>();
            t.query_text = rec.value("query_text", std::string{});
            t.positives = rec.at("positives").get<std::vector<std::string>>();
            t.negatives = rec.at("negatives").get<std::vector<std::string>>();
            validate_triplet(t);
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    return out;
}

inline std::vector<TrainingTriplet> load_triplets(const std::string& path) {
    auto in = detail::open_input(path);
    return read_triplets(in, path);
}

inline void write_triplets(std::ostream& out, const std::vector<TrainingTriplet>& triplets) {
    for (const auto& t : triplets) {
        nlohmann::json rec;
        rec["query_id"] = t.query_id;
        rec["query_text"] = t.query_text;
        rec["positives"] = t.positives;
        rec["negatives"] = t.negatives;
        out << rec.dump() << '\n';
    }
}

inline void write_triplets(const std::string& path, const std::vector<TrainingTriplet>& triplets) {
    auto out = detail::open_output(path);
    write_triplets(out, triplets);
}

// ---------------------------------------------------------------------------
// Quality-labeled split

enum class QualityLabel { high, low };

struct RatedText {
    std::string text;
    int score; // 1..10
};

struct LabeledText {
    std::string text;
    QualityLabel label;

    bool operator==(const LabeledText&) const = default;
};

struct LabeledSplit {
    std::vector<LabeledText> train;
    std::vector<LabeledText> test;
    std::uint64_t seed = 0;
};

struct QualitySplitOptions {
    int high_threshold = 8; // strictly above is high quality
    int low_threshold = 4;  // strictly below is low quality
    std::size_t per_class = 2000;
    double test_fraction = 0.10;
};

/**
 * Samples `per_class` high- and low-quality texts without replacement and
 * splits each class into train/test at `test_fraction` (rounded to the
 * nearest integer), so both partitions stay class balanced.
 */
inline LabeledSplit build_quality_split(std::span<const RatedText> rated, const QualitySplitOptions& opt,
                                        std::uint64_t seed) {
    if (rated.empty()) {
        throw ValidationError("no rated texts supplied");
    }
    if (opt.test_fraction < 0.0 || opt.test_fraction > 1.0) {
        throw ParameterError("test_fraction must lie in [0, 1]");
    }
    if (opt.high_threshold < opt.low_threshold) {
        throw ParameterError("high_threshold must not be below low_threshold");
    }

    std::vector<std::size_t> high, low;
    for (std::size_t i = 0; i < rated.size(); ++i) {
        const int s = rated[i].score;
        if (s < 1 || s > 10) {
            throw ValidationError("rating " + std::to_string(s) + " outside 1..10 at item " + std::to_string(i));
        }
        if (s > opt.high_threshold) {
            high.push_back(i);
        } else if (s < opt.low_threshold) {
            low.push_back(i);
        }
    }
    if (high.size() < opt.per_class || low.size() < opt.per_class) {
        throw CapacityError("need " + std::to_string(opt.per_class) + " items per class, have "
                                + std::to_string(high.size()) + " high and " + std::to_string(low.size()) + " low",
                            high.size(), low.size());
    }

    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(opt.per_class) * opt.test_fraction));
    detail::Rng rng(seed);
    LabeledSplit split;
    split.seed = seed;
    for (auto [pool, label] : {std::pair{&high, QualityLabel::high}, std::pair{&low, QualityLabel::low}}) {
        const auto picks = rng.sample_without_replacement(pool->size(), opt.per_class);
        for (std::size_t j = 0; j < picks.size(); ++j) {
            LabeledText item{rated[(*pool)[picks[j]]].text, label};
            (j < n_test ? split.test : split.train).push_back(std::move(item));
        }
    }
    return split;
}

} // namespace finkit

#endif
