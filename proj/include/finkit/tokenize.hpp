#ifndef FINKIT_TOKENIZE_HPP
#define FINKIT_TOKENIZE_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "detail/text.hpp"
#include "detail/utf8.hpp"
#include "errors.hpp"

/**
 * @file tokenize.hpp
 * @brief Word units, WordPiece vocabularies, dictionary segmentation and the
 * merged longest-coverage tokenizer.
 */

namespace finkit {

/// Byte range [begin, end) of one word unit inside the source text.
struct TextUnit {
    std::size_t begin;
    std::size_t end;
};

/**
 * Splits text into word units: maximal runs of non-whitespace, except that
 * with `split_cjk` every CJK ideograph is a unit of its own.
 */
inline std::vector<TextUnit> pretokenize(std::string_view text, bool split_cjk = true) {
    std::vector<TextUnit> units;
    std::size_t pos = 0;
    constexpr auto none = std::string_view::npos;
    std::size_t start = none; // begin of the open unit
    while (pos < text.size()) {
        const auto cp = detail::decode_utf8(text, pos);
        if (detail::is_space(cp.value)) {
            if (start != none) {
                units.push_back({start, pos});
                start = none;
            }
        } else if (split_cjk && detail::is_cjk(cp.value)) {
            if (start != none) {
                units.push_back({start, pos});
                start = none;
            }
            units.push_back({pos, pos + cp.length});
        } else if (start == none) {
            start = pos;
        }
        pos += cp.length;
    }
    if (start != none) {
        units.push_back({start, text.size()});
    }
    return units;
}

inline std::vector<std::string> word_tokens(std::string_view text, bool split_cjk = true) {
    std::vector<std::string> out;
    for (const auto& u : pretokenize(text, split_cjk)) {
        out.emplace_back(text.substr(u.begin, u.end - u.begin));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subword vocabulary

inline constexpr std::string_view continuation_marker = "##";

/**
 * Ordered WordPiece vocabulary. Word-internal pieces carry the "##" marker.
 * `base_size()` is the size before any expansion; the difference to `size()`
 * is the number of tokens added by training.
 */
class SubwordVocabulary {
public:
    SubwordVocabulary() : SubwordVocabulary(std::vector<std::string>{}) {}

    explicit SubwordVocabulary(std::vector<std::string> tokens, std::string unk = "[UNK]") : unk_(std::move(unk)) {
        for (auto& t : tokens) {
            add(std::move(t));
        }
        if (index_.count(unk_) == 0) {
            add(unk_);
        }
        base_size_ = tokens_.size();
    }

    /// Appends `token`; returns false if it was already present.
    bool add(std::string token) {
        if (token.empty()) {
            throw ValidationError("vocabulary tokens must be non-empty");
        }
        if (!index_.emplace(token, tokens_.size()).second) {
            return false;
        }
        tokens_.push_back(std::move(token));
        return true;
    }

    bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::string& unk_token() const noexcept { return unk_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t base_size() const noexcept { return base_size_; }
    std::size_t expanded_size() const noexcept { return tokens_.size(); }

    /// Marks the current contents as the base for a later expansion.
    void rebase() noexcept { base_size_ = tokens_.size(); }

    /// Longest token matching text[pos, end) as a prefix; 0 when none.
    /// Mid-word positions look up the "##"-marked form.
    std::size_t longest_prefix(std::string_view text, std::size_t pos, std::size_t end, bool word_start) const {
        std::string probe = word_start ? std::string{} : std::string(continuation_marker);
        const std::size_t marker = probe.size();
        probe.append(text.substr(pos, std::min(end - pos, max_token_bytes_)));
        // Try lengths from longest to shortest on codepoint boundaries.
        std::vector<std::size_t> cuts;
        for (std::size_t p = pos; p < end && p - pos < max_token_bytes_;) {
            p += detail::decode_utf8(text, p).length;
            cuts.push_back(p - pos);
        }
        for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
            if (index_.count(probe.substr(0, marker + *it)) != 0) {
                return *it;
            }
        }
        return 0;
    }

private:
    static constexpr std::size_t max_token_bytes_ = 400;

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::string unk_;
    std::size_t base_size_ = 0;
};

/// One token per line; blank lines ignored. The unknown token is appended
/// when the file lacks it.
inline SubwordVocabulary load_vocabulary(const std::string& path, const std::string& unk = "[UNK]") {
    std::vector<std::string> tokens;
    for (auto& line : detail::read_lines(path)) {
        if (!line.empty()) {
            tokens.push_back(std::move(line));
        }
    }
    return SubwordVocabulary(std::move(tokens), unk);
}

inline void write_vocabulary(const std::string& path, const SubwordVocabulary& vocab) {
    auto out = detail::open_output(path);
    for (const auto& t : vocab.tokens()) {
        out << t << '\n';
    }
}

// ---------------------------------------------------------------------------
// WordPiece expansion training

struct WordPieceTrainOptions {
    std::size_t new_tokens = 14000;
    std::uint64_t min_freq = 2;
    bool split_cjk = true;
};

struct WordPieceTrainResult {
    SubwordVocabulary vocab;
    std::size_t added = 0;
    /// Requested tokens that could not be produced because candidate pairs ran out.
    std::size_t shortfall = 0;
    /// Merge order with the frequency each merged symbol had when created.
    std::vector<std::pair<std::string, std::uint64_t>> merges;
};

namespace detail {

inline std::vector<std::string> split_symbols(std::string_view word) {
    std::vector<std::string> symbols;
    for (std::size_t pos = 0; pos < word.size();) {
        const auto len = decode_utf8(word, pos).length;
        std::string s = pos == 0 ? std::string{} : std::string(continuation_marker);
        s.append(word.substr(pos, len));
        symbols.push_back(std::move(s));
        pos += len;
    }
    return symbols;
}

inline std::string merge_symbols(const std::string& left, const std::string& right) {
    std::string out = left;
    out.append(std::string_view(right).substr(right.rfind(continuation_marker, 0) == 0 ? continuation_marker.size() : 0));
    return out;
}

} // namespace detail

/**
 * Expands `base` by up to `new_tokens` WordPiece merges learned from `corpus`.
 *
 * Each step merges the adjacent symbol pair maximising
 * freq(pair) / (freq(left) * freq(right)) among pairs with
 * freq(pair) >= min_freq; ties go to the lexicographically smallest pair.
 * Merges whose result already exists in the vocabulary do not count as new.
 */
inline WordPieceTrainResult train_wordpiece_expansion(std::span<const std::string> corpus,
                                                      const SubwordVocabulary& base,
                                                      const WordPieceTrainOptions& opt) {
    if (corpus.empty()) {
        throw ValidationError("training corpus is empty");
    }
    WordPieceTrainResult result{base, 0, 0, {}};
    result.vocab.rebase();
    if (opt.new_tokens == 0) {
        return result;
    }

    std::map<std::string, std::uint64_t> word_counts;
    for (const auto& line : corpus) {
        for (auto& w : word_tokens(line, opt.split_cjk)) {
            ++word_counts[std::move(w)];
        }
    }
    struct Word {
        std::vector<std::string> symbols;
        std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(word_counts.size());
    for (const auto& [w, c] : word_counts) {
        words.push_back({detail::split_symbols(w), c});
    }

    using Pair = std::pair<std::string, std::string>;
    std::map<Pair, std::uint64_t> pair_freq;
    std::unordered_map<std::string, std::uint64_t> symbol_freq;
    std::map<Pair, std::set<std::size_t>> where;

    auto account = [&](std::size_t wi, int sign) {
        const auto& w = words[wi];
        for (std::size_t i = 0; i < w.symbols.size(); ++i) {
            auto& f = symbol_freq[w.symbols[i]];
            f = sign > 0 ? f + w.count : f - w.count;
            if (i + 1 < w.symbols.size()) {
                Pair p{w.symbols[i], w.symbols[i + 1]};
                auto& pf = pair_freq[p];
                pf = sign > 0 ? pf + w.count : pf - w.count;
                if (sign > 0) {
                    where[p].insert(wi);
                } else if (pf == 0) {
                    pair_freq.erase(p);
                }
            }
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
        account(wi, +1);
    }

    while (result.added < opt.new_tokens) {
        const Pair* best = nullptr;
        std::uint64_t best_pf = 0;
        unsigned __int128 best_den = 1;
        for (const auto& [p, pf] : pair_freq) {
            if (pf < opt.min_freq) {
                continue;
            }
            const unsigned __int128 den =
                static_cast<unsigned __int128>(symbol_freq[p.first]) * symbol_freq[p.second];
            // pf / den > best_pf / best_den, compared exactly. Iteration is in
            // lexicographic pair order, so strict '>' keeps the smallest on ties.
            if (best == nullptr
                || static_cast<unsigned __int128>(pf) * best_den > static_cast<unsigned __int128>(best_pf) * den) {
                best = &p;
                best_pf = pf;
                best_den = den;
            }
        }
        if (best == nullptr) {
            break;
        }
        const Pair chosen = *best;
        const std::string merged = detail::merge_symbols(chosen.first, chosen.second);
        result.merges.emplace_back(merged, best_pf);

        const auto affected = where[chosen];
        for (const auto wi : affected) {
            account(wi, -1);
            auto& syms = words[wi].symbols;
            std::vector<std::string> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size(); ++i) {
                if (i + 1 < syms.size() && syms[i] == chosen.first && syms[i + 1] == chosen.second) {
                    next.push_back(merged);
                    ++i;
                } else {
                    next.push_back(syms[i]);
                }
            }
            syms = std::move(next);
            account(wi, +1);
        }
        where.erase(chosen);
        pair_freq.erase(chosen);

        if (result.vocab.add(merged)) {
            ++result.added;
        }
    }
    result.shortfall = opt.new_tokens - result.added;
    return result;
}

// ---------------------------------------------------------------------------
// Segmentation

enum class SegmentSource { dictionary, subword, whole_unit, unknown };

/// One emitted token with the source byte range it covers.
struct Segment {
    std::size_t begin;
    std::size_t end;
    std::string token;
    SegmentSource source;

    bool operator==(const Segment&) const = default;
};

namespace detail {

/// Greedy longest-prefix decomposition of text[pos, end). Empty when some
/// position has no matching piece.
inline std::vector<Segment> greedy_pieces(std::string_view text, std::size_t pos, std::size_t end, bool word_start,
                                          const SubwordVocabulary& vocab) {
    std::vector<Segment> pieces;
    while (pos < end) {
        const bool at_start = word_start && pieces.empty();
        const std::size_t len = vocab.longest_prefix(text, pos, end, at_start);
        if (len == 0) {
            return {};
        }
        std::string tok = at_start ? std::string{} : std::string(continuation_marker);
        tok.append(text.substr(pos, len));
        pieces.push_back({pos, pos + len, std::move(tok), SegmentSource::subword});
        pos += len;
    }
    return pieces;
}

} // namespace detail

inline constexpr std::size_t max_word_bytes = 400;

/**
 * Greedy longest-match-first WordPiece inference. A unit without a complete
 * decomposition becomes a single unknown token.
 */
inline std::vector<Segment> subword_segment(std::string_view text, const SubwordVocabulary& vocab,
                                            bool split_cjk = true) {
    std::vector<Segment> out;
    for (const auto& u : pretokenize(text, split_cjk)) {
        auto pieces = u.end - u.begin > max_word_bytes ? std::vector<Segment>{}
                                                       : detail::greedy_pieces(text, u.begin, u.end, true, vocab);
        if (pieces.empty()) {
            out.push_back({u.begin, u.end, vocab.unk_token(), SegmentSource::unknown});
        } else {
            out.insert(out.end(), std::make_move_iterator(pieces.begin()), std::make_move_iterator(pieces.end()));
        }
    }
    return out;
}

inline std::vector<std::string> subword_tokenize(std::string_view text, const SubwordVocabulary& vocab,
                                                 bool split_cjk = true) {
    std::vector<std::string> out;
    for (auto& s : subword_segment(text, vocab, split_cjk)) {
        out.push_back(std::move(s.token));
    }
    return out;
}

/**
 * Entity dictionary stored as a byte trie. Entries are matched on raw UTF-8,
 * so multi-character names (including ones containing spaces) match whole.
 */
class EntityDictionary {
public:
    EntityDictionary() : nodes_(1) {}

    explicit EntityDictionary(std::span<const std::string> entries, std::string source = {})
        : nodes_(1), source_(std::move(source)) {
        for (const auto& e : entries) {
            insert(e);
        }
    }

    void insert(std::string_view entry) {
        if (entry.empty()) {
            throw ValidationError("dictionary entries must be non-empty");
        }
        std::size_t node = 0;
        for (unsigned char c : entry) {
            auto it = nodes_[node].children.find(c);
            if (it == nodes_[node].children.end()) {
                nodes_.push_back({});
                it = nodes_[node].children.emplace(c, nodes_.size() - 1).first;
            }
            node = it->second;
        }
        if (!nodes_[node].terminal) {
            nodes_[node].terminal = true;
            ++size_;
        }
    }

    bool contains(std::string_view entry) const {
        std::size_t node = 0;
        for (unsigned char c : entry) {
            auto it = nodes_[node].children.find(c);
            if (it == nodes_[node].children.end()) {
                return false;
            }
            node = it->second;
        }
        return nodes_[node].terminal;
    }

    /// Byte length of the longest entry that starts at `pos`; 0 when none.
    std::size_t longest_match(std::string_view text, std::size_t pos) const {
        std::size_t node = 0;
        std::size_t best = 0;
        for (std::size_t i = pos; i < text.size(); ++i) {
            auto it = nodes_[node].children.find(static_cast<unsigned char>(text[i]));
            if (it == nodes_[node].children.end()) {
                break;
            }
            node = it->second;
            if (nodes_[node].terminal) {
                best = i + 1 - pos;
            }
        }
        return best;
    }

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }
    const std::string& source() const noexcept { return source_; }

private:
    struct Node {
        std::map<unsigned char, std::size_t> children;
        bool terminal = false;
    };
    std::vector<Node> nodes_;
    std::size_t size_ = 0;
    std::string source_;
};

/// One entry per line. Tab-separated extra columns (frequency, tag) are ignored.
inline EntityDictionary load_dictionary(const std::string& path) {
    std::vector<std::string> entries;
    for (const auto& line : detail::read_lines(path)) {
        const auto entry = detail::trim(detail::split(line, '\t').front());
        if (!entry.empty()) {
            entries.emplace_back(entry);
        }
    }
    return EntityDictionary(entries, path);
}

using StopwordSet = std::unordered_set<std::string>;

inline StopwordSet load_stopwords(const std::string& path) {
    StopwordSet out;
    for (const auto& line : detail::read_lines(path)) {
        const auto term = detail::trim(line);
        if (!term.empty()) {
            out.emplace(term);
        }
    }
    return out;
}

inline std::vector<std::string> remove_stopwords(std::span<const std::string> tokens, const StopwordSet& stopwords) {
    std::vector<std::string> out;
    for (const auto& t : tokens) {
        if (stopwords.count(t) == 0) {
            out.push_back(t);
        }
    }
    return out;
}

/**
 * Dictionary + subword tokenizer combined by greedy longest coverage.
 *
 * Without a subword vocabulary, each remaining word unit is one candidate
 * (plain word tokenization).
 */
struct MergedTokenizer {
    EntityDictionary dictionary;
    std::optional<SubwordVocabulary> subwords;
    StopwordSet stopwords;
    bool split_cjk = true;
};

/**
 * Left-to-right segmentation. At each cursor position the candidates are the
 * longest dictionary entry starting there and the subword piece starting
 * there; the one covering more bytes wins, the dictionary on ties. The
 * subword candidate only exists if the rest of the current unit decomposes
 * completely; when neither candidate exists the rest of the unit becomes the
 * unknown token.
 */
inline std::vector<Segment> merged_segment(std::string_view text, const MergedTokenizer& tk) {
    const auto units = pretokenize(text, tk.split_cjk);
    std::vector<Segment> out;
    std::size_t ui = 0;
    std::size_t pos = units.empty() ? text.size() : units.front().begin;
    while (ui < units.size()) {
        if (pos >= units[ui].end) {
            ++ui;
            if (ui < units.size()) {
                pos = std::max(pos, units[ui].begin);
            }
            continue;
        }
        if (pos < units[ui].begin) {
            pos = units[ui].begin;
        }
        const auto& unit = units[ui];
        const bool word_start = pos == unit.begin;

        const std::size_t dict_len = tk.dictionary.longest_match(text, pos);

        std::size_t sub_len = 0;
        std::string sub_token;
        SegmentSource sub_source = SegmentSource::subword;
        if (tk.subwords) {
            if (unit.end - pos <= max_word_bytes) {
                auto pieces = detail::greedy_pieces(text, pos, unit.end, word_start, *tk.subwords);
                if (!pieces.empty()) {
                    sub_len = pieces.front().end - pieces.front().begin;
                    sub_token = std::move(pieces.front().token);
                }
            }
        } else {
            sub_len = unit.end - pos;
            sub_token = std::string(text.substr(pos, sub_len));
            sub_source = SegmentSource::whole_unit;
        }

        if (dict_len > 0 && dict_len >= sub_len) {
            out.push_back({pos, pos + dict_len, std::string(text.substr(pos, dict_len)), SegmentSource::dictionary});
            pos += dict_len;
        } else if (sub_len > 0) {
            out.push_back({pos, pos + sub_len, std::move(sub_token), sub_source});
            pos += sub_len;
        } else {
            out.push_back({pos, unit.end, tk.subwords->unk_token(), SegmentSource::unknown});
            pos = unit.end;
        }
    }
    return out;
}

inline std::vector<std::string> merged_tokenize(std::string_view text, const MergedTokenizer& tk) {
    std::vector<std::string> out;
    for (auto& s : merged_segment(text, tk)) {
        out.push_back(std::move(s.token));
    }
    return out;
}

/// Segmentation followed by stopword removal; the analyzer used for topic terms.
inline std::vector<std::string> analyze(std::string_view text, const MergedTokenizer& tk) {
    auto tokens = merged_tokenize(text, tk);
    return tk.stopwords.empty() ? tokens : remove_stopwords(tokens, tk.stopwords);
}

struct TokenizerPaths {
    std::optional<std::string> dictionary;
    std::optional<std::string> vocabulary;
    std::optional<std::string> stopwords;
    bool split_cjk = true;
};

inline MergedTokenizer load_tokenizer(const TokenizerPaths& paths) {
    MergedTokenizer tk;
    if (paths.dictionary) {
        tk.dictionary = load_dictionary(*paths.dictionary);
    }
    if (paths.vocabulary) {
        tk.subwords = load_vocabulary(*paths.vocabulary);
    }
    if (paths.stopwords) {
        tk.stopwords = load_stopwords(*paths.stopwords);
    }
    tk.split_cjk = paths.split_cjk;
    return tk;
}

// ---------------------------------------------------------------------------
// Tokenizer comparison

struct TokenizerDiffEntry {
    std::string term;
    std::vector<std::string> first;
    std::vector<std::string> second;
    bool consistent;
};

struct TokenizerDiffReport {
    std::vector<TokenizerDiffEntry> entries;
    std::size_t inconsistencies = 0;
    /// Inconsistency counts keyed by term length in characters.
    std::map<std::size_t, std::size_t> by_length;
};

inline TokenizerDiffReport tokenizer_diff(const MergedTokenizer& a, const MergedTokenizer& b,
                                          std::span<const std::string> terms) {
    TokenizerDiffReport report;
    for (const auto& term : terms) {
        TokenizerDiffEntry e{term, merged_tokenize(term, a), merged_tokenize(term, b), false};
        e.consistent = e.first == e.second;
        if (!e.consistent) {
            ++report.inconsistencies;
            ++report.by_length[detail::utf8_length(term)];
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

} // namespace finkit

#endif
