#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "finkit/corpus_io.hpp"
#include "finkit/tokenize.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace finkit;
namespace fs = std::filesystem;

namespace {

using Tokens = std::vector<std::string>;

const fs::path fixture_dir = fs::path(FINKIT_SOURCE_DIR) / "data" / "fixture";

std::string random_string(std::mt19937_64& gen, std::string_view alphabet, std::size_t max_len) {
    std::string s(gen() % (max_len + 1), ' ');
    for (auto& c : s) {
        c = alphabet[gen() % alphabet.size()];
    }
    return s;
}

/// Every non-space byte is covered by exactly one segment, segments are
/// ordered and disjoint, and gaps hold only whitespace.
void expect_partition(const std::string& text, const std::vector<Segment>& segs) {
    std::size_t pos = 0;
    for (const auto& s : segs) {
        ASSERT_LT(s.begin, s.end) << text;
        ASSERT_LE(s.end, text.size()) << text;
        ASSERT_GE(s.begin, pos) << text;
        for (std::size_t i = pos; i < s.begin; ++i) {
            EXPECT_TRUE(text[i] == ' ' || text[i] == '\t') << text;
        }
        if (s.source == SegmentSource::dictionary || s.source == SegmentSource::whole_unit) {
            EXPECT_EQ(s.token, text.substr(s.begin, s.end - s.begin));
        }
        pos = s.end;
    }
    for (std::size_t i = pos; i < text.size(); ++i) {
        EXPECT_TRUE(text[i] == ' ' || text[i] == '\t') << text;
    }
}

/// Word-initial and continuation pieces for every codepoint in `lines`.
SubwordVocabulary alphabet_of(const std::vector<std::string>& lines) {
    std::set<std::string> chars;
    for (const auto& line : lines) {
        for (const auto& w : word_tokens(line)) {
            for (std::size_t p = 0; p < w.size();) {
                const auto len = detail::decode_utf8(w, p).length;
                chars.insert(w.substr(p, len));
                p += len;
            }
        }
    }
    Tokens tokens;
    for (const auto& c : chars) {
        tokens.push_back(c);
        tokens.push_back("##" + c);
    }
    return SubwordVocabulary(tokens);
}

std::vector<std::string> fixture_titles() {
    std::vector<std::string> out;
    for (const auto& d : load_corpus((fixture_dir / "titles.jsonl").string())) {
        out.push_back(d.text);
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Pre-tokenization

TEST(Pretokenize, WhitespaceAndCjkUnits) {
    EXPECT_EQ(word_tokens("  new  york\tcity "), (Tokens{"new", "york", "city"}));
    EXPECT_EQ(word_tokens("央行降准 now"), (Tokens{"央", "行", "降", "准", "now"}));
    EXPECT_EQ(word_tokens("央行降准 now", false), (Tokens{"央行降准", "now"}));
    EXPECT_EQ(word_tokens("abc央行def"), (Tokens{"abc", "央", "行", "def"}));
    EXPECT_TRUE(word_tokens("").empty());
}

// ---------------------------------------------------------------------------
// Subword inference

TEST(Subword, GreedyLongestPrefix) {
    const SubwordVocabulary v({"ab", "##cd", "a", "##b", "##c", "##d"});
    EXPECT_EQ(subword_tokenize("abcd", v), (Tokens{"ab", "##cd"}));
    EXPECT_TRUE(subword_tokenize("", v).empty());
    EXPECT_EQ(subword_tokenize("ab", v), (Tokens{"ab"}));
    EXPECT_EQ(subword_tokenize("abx ab", v), (Tokens{"[UNK]", "ab"}));
}

TEST(Subword, NeverEmitsOutOfVocabularyTokens) {
    std::mt19937_64 gen(2);
    const SubwordVocabulary v({"a", "b", "##a", "##b", "ab", "##ba", "c"});
    for (int i = 0; i < 2000; ++i) {
        for (const auto& t : subword_tokenize(random_string(gen, "abcd ", 15), v)) {
            EXPECT_TRUE(v.contains(t)) << t;
        }
    }
}

TEST(Vocabulary, UnknownTokenAndDuplicates) {
    SubwordVocabulary v({"a", "a", "b"});
    EXPECT_EQ(v.size(), 3u); // a, b, [UNK]
    EXPECT_TRUE(v.contains("[UNK]"));
    EXPECT_FALSE(v.add("b"));
    EXPECT_THROW(v.add(""), ValidationError);
    const auto dir = synth::temp_dir("vocab");
    write_vocabulary((dir / "v.txt").string(), v);
    const auto back = load_vocabulary((dir / "v.txt").string());
    EXPECT_EQ(back.tokens(), v.tokens());
}

// ---------------------------------------------------------------------------
// WordPiece expansion

TEST(WordPiece, SingleMergeOnRepeatedRun) {
    const Tokens corpus(5, "aaaa");
    const auto r = train_wordpiece_expansion(corpus, SubwordVocabulary({"a", "##a"}), {1, 2, true});
    EXPECT_EQ(r.added, 1u);
    EXPECT_EQ(r.vocab.tokens().back(), "aa");
    EXPECT_EQ(r.vocab.size(), r.vocab.base_size() + 1);
}

TEST(WordPiece, ZeroRequestIsNoOp) {
    const SubwordVocabulary base({"a", "##a"});
    const auto r = train_wordpiece_expansion(Tokens{"aaaa"}, base, {0, 2, true});
    EXPECT_EQ(r.vocab.tokens(), base.tokens());
    EXPECT_EQ(r.added, 0u);
    EXPECT_EQ(r.shortfall, 0u);
}

TEST(WordPiece, DominantPairMergesFirst) {
    Tokens corpus(12, "xy");
    corpus.push_back("pq");
    const auto r = train_wordpiece_expansion(corpus, alphabet_of(corpus), {1, 2, true});
    ASSERT_EQ(r.merges.size(), 1u);
    EXPECT_EQ(r.merges[0].first, "xy");
    EXPECT_EQ(r.merges[0].second, 12u);
}

TEST(WordPiece, PicksHighestLikelihoodRatioNotFrequency) {
    // (a,##b) occurs 4 times but "a" and "##b" are common elsewhere;
    // (c,##d) occurs 3 times between symbols seen nowhere else.
    const Tokens corpus{"ab ab ab ab ax ax ax ax yb yb yb yb cd cd cd"};
    const auto r = train_wordpiece_expansion(corpus, alphabet_of(corpus), {1, 2, true});
    EXPECT_EQ(r.merges.front().first, "cd");
}

TEST(WordPiece, ShortfallWhenPairsRunOut) {
    const Tokens corpus{"ab ab"};
    const auto r = train_wordpiece_expansion(corpus, alphabet_of(corpus), {5, 2, true});
    EXPECT_EQ(r.added, 1u);
    EXPECT_EQ(r.shortfall, 4u);
    EXPECT_THROW(train_wordpiece_expansion(Tokens{}, SubwordVocabulary{}, {}), ValidationError);
}

TEST(WordPiece, ExactCountAndFrequencyFloor) {
    std::mt19937_64 gen(31);
    Tokens corpus;
    for (int line = 0; line < 400; ++line) {
        std::string text;
        for (int w = 0; w < 8; ++w) {
            text += random_string(gen, "abcdefghij", 6) + "x ";
        }
        corpus.push_back(text);
    }
    const auto base = alphabet_of(corpus);
    const std::size_t n = 120;
    const std::uint64_t min_freq = 3;
    const auto r = train_wordpiece_expansion(corpus, base, {n, min_freq, true});
    EXPECT_EQ(r.vocab.size(), base.size() + n);
    EXPECT_EQ(r.shortfall, 0u);

    // Independent count: occurrences of each new token at its position class.
    std::map<std::string, std::uint64_t> words;
    for (const auto& line : corpus) {
        for (const auto& w : word_tokens(line)) {
            ++words[w];
        }
    }
    for (std::size_t i = base.size(); i < r.vocab.size(); ++i) {
        const auto& tok = r.vocab.tokens()[i];
        const bool cont = tok.starts_with("##");
        const std::string body = cont ? tok.substr(2) : tok;
        std::uint64_t freq = 0;
        for (const auto& [w, c] : words) {
            if (!cont) {
                freq += w.starts_with(body) ? c : 0;
            } else {
                for (std::size_t p = 1; p + body.size() <= w.size(); ++p) {
                    freq += w.compare(p, body.size(), body) == 0 ? c : 0;
                }
            }
        }
        EXPECT_GE(freq, min_freq) << tok;
    }
    // Deterministic given the corpus.
    EXPECT_EQ(train_wordpiece_expansion(corpus, base, {n, min_freq, true}).vocab.tokens(), r.vocab.tokens());
}

// ---------------------------------------------------------------------------
// Dictionary and merged tokenizer

TEST(Dictionary, TrieLookup) {
    const EntityDictionary d(Tokens{"ab", "abc", "央行", "new york"});
    EXPECT_EQ(d.size(), 4u);
    EXPECT_EQ(d.longest_match("abcd", 0), 3u);
    EXPECT_EQ(d.longest_match("xab", 1), 2u);
    EXPECT_EQ(d.longest_match("new yorker", 0), 8u);
    EXPECT_EQ(d.longest_match("央行", 0), 6u);
    EXPECT_TRUE(d.contains("new york"));
    EXPECT_FALSE(d.contains("new"));
}

TEST(Merged, HandExamples) {
    MergedTokenizer tk;
    tk.dictionary = EntityDictionary(Tokens{"new york"});
    tk.subwords = SubwordVocabulary({"new", "york", "city"});
    EXPECT_EQ(merged_tokenize("new york city", tk), (Tokens{"new york", "city"}));

    MergedTokenizer overlap;
    overlap.dictionary = EntityDictionary(Tokens{"ab", "abc"});
    overlap.subwords = SubwordVocabulary({"a", "##b", "##c", "##d"});
    EXPECT_EQ(merged_tokenize("abcd", overlap), (Tokens{"abc", "##d"}));
}

TEST(Merged, EmptyDictionaryEqualsSubwordTokenizer) {
    std::mt19937_64 gen(6);
    MergedTokenizer tk;
    tk.subwords = SubwordVocabulary({"a", "b", "##a", "##b", "ab", "##ab", "ba"});
    for (int i = 0; i < 1000; ++i) {
        const auto s = random_string(gen, "abc ", 12);
        EXPECT_EQ(merged_tokenize(s, tk), subword_tokenize(s, *tk.subwords)) << s;
    }
}

TEST(Merged, AgreesWithExhaustiveMaxCoverageOracle) {
    std::mt19937_64 gen(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        Tokens entries;
        const std::size_t n_entries = gen() % 9;
        for (std::size_t i = 0; i < n_entries; ++i) {
            auto e = random_string(gen, "abc ", 4);
            if (!e.empty()) {
                entries.push_back(e);
            }
        }
        MergedTokenizer tk;
        tk.dictionary = EntityDictionary(entries);
        Tokens vocab;
        const bool with_vocab = trial % 2 == 1;
        if (with_vocab) {
            for (int i = 0; i < 8; ++i) {
                auto piece = random_string(gen, "abc", 3);
                if (!piece.empty()) {
                    vocab.push_back(gen() % 2 ? piece : "##" + piece);
                }
            }
            tk.subwords = SubwordVocabulary(vocab);
        }
        const auto text = random_string(gen, "abc ", 12);
        EXPECT_EQ(merged_tokenize(text, tk), oracle::max_coverage_tokens(text, entries, with_vocab ? &vocab : nullptr))
            << "text '" << text << "'";
        expect_partition(text, merged_segment(text, tk));
    }
}

TEST(Merged, NoCandidateIsLongerThanTheChosenCut) {
    std::mt19937_64 gen(77);
    for (int trial = 0; trial < 2000; ++trial) {
        Tokens entries;
        for (int i = 0; i < 6; ++i) {
            entries.push_back(random_string(gen, "ab ", 3) + "a");
        }
        MergedTokenizer tk;
        tk.dictionary = EntityDictionary(entries);
        tk.subwords = SubwordVocabulary({"a", "b", "##a", "##b", "aa", "##bb", "ab"});
        const auto text = random_string(gen, "ab ", 12);
        for (const auto& s : merged_segment(text, tk)) {
            EXPECT_GE(s.end - s.begin, tk.dictionary.longest_match(text, s.begin)) << text;
        }
    }
}

TEST(Merged, SpanPartitionOnFixtureLines) {
    const auto titles = fixture_titles();
    ASSERT_EQ(titles.size(), 500u);
    auto tk = load_tokenizer({(fixture_dir / "dict.txt").string(), std::nullopt,
                              (fixture_dir / "stopwords.txt").string(), true});
    auto with_subwords = tk;
    with_subwords.subwords = train_wordpiece_expansion(titles, alphabet_of(titles), {300, 2, true}).vocab;
    for (const auto& line : titles) {
        expect_partition(line, merged_segment(line, tk));
        expect_partition(line, merged_segment(line, with_subwords));
    }
}

TEST(Merged, CjkEntitiesMatchWhole) {
    MergedTokenizer tk;
    tk.dictionary = EntityDictionary(Tokens{"不良贷款", "央行"});
    EXPECT_EQ(merged_tokenize("央行关注不良贷款", tk), (Tokens{"央行", "关", "注", "不良贷款"}));
}

TEST(Merged, ConcurrentCallsAgree) {
    const auto titles = fixture_titles();
    const auto tk = load_tokenizer({(fixture_dir / "dict.txt").string(), std::nullopt, std::nullopt, true});
    std::vector<std::vector<Tokens>> results(4);
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < results.size(); ++t) {
        threads.emplace_back([&, t] {
            for (const auto& line : titles) {
                results[t].push_back(merged_tokenize(line, tk));
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    for (std::size_t t = 1; t < results.size(); ++t) {
        EXPECT_EQ(results[t], results[0]);
    }
}

TEST(Stopwords, OrderPreservingFilter) {
    const Tokens toks{"the", "cat", "the"};
    EXPECT_EQ(remove_stopwords(toks, {"the"}), (Tokens{"cat"}));
    EXPECT_EQ(remove_stopwords(toks, {}), toks);
    EXPECT_TRUE(remove_stopwords(toks, {"the", "cat"}).empty());
}

TEST(Analyze, DropsStopwordsAfterSegmentation) {
    MergedTokenizer tk;
    tk.dictionary = EntityDictionary(Tokens{"ahead of"});
    tk.stopwords = {"ahead of", "the"};
    EXPECT_EQ(analyze("the fed ahead of the data", tk), (Tokens{"fed", "data"}));
}

// ---------------------------------------------------------------------------
// Tokenizer diff

TEST(TokenizerDiff, DictionaryVersusSubwordOnNewYork) {
    MergedTokenizer dict_only;
    dict_only.dictionary = EntityDictionary(Tokens{"new york"});
    MergedTokenizer sub_only;
    sub_only.subwords = SubwordVocabulary({"new", "york", "city"});
    const Tokens terms{"new york", "city"};
    const auto r = tokenizer_diff(dict_only, sub_only, terms);
    EXPECT_EQ(r.inconsistencies, 1u);
    EXPECT_EQ(r.by_length.at(8), 1u);
    EXPECT_EQ(r.entries[0].first, (Tokens{"new york"}));
    EXPECT_EQ(r.entries[0].second, (Tokens{"new", "york"}));
    EXPECT_TRUE(r.entries[1].consistent);
}

TEST(TokenizerDiff, IdenticalTokenizersAndLengthPartition) {
    const auto tk = load_tokenizer({(fixture_dir / "dict.txt").string(), std::nullopt, std::nullopt, true});
    const auto terms = detail::read_lines((fixture_dir / "terms.txt").string());
    EXPECT_EQ(tokenizer_diff(tk, tk, terms).inconsistencies, 0u);

    MergedTokenizer plain; // no dictionary, one unit per CJK ideograph
    const auto r = tokenizer_diff(tk, plain, terms);
    std::size_t sum = 0;
    for (const auto& [len, n] : r.by_length) {
        sum += n;
    }
    EXPECT_EQ(sum, r.inconsistencies);
    EXPECT_GT(r.inconsistencies, 0u);
    EXPECT_EQ(r.by_length.count(4), 1u); // 不良贷款 counts four characters
}

TEST(Loading, DictionaryAndStopwordFiles) {
    const auto dir = synth::temp_dir("tok-files");
    {
        std::ofstream d(dir / "d.txt");
        d << "central bank\t12\tORG\n\n央行\n";
        std::ofstream s(dir / "s.txt");
        s << "the\n  of \n";
    }
    const auto d = load_dictionary((dir / "d.txt").string());
    EXPECT_EQ(d.size(), 2u);
    EXPECT_TRUE(d.contains("central bank"));
    const auto s = load_stopwords((dir / "s.txt").string());
    EXPECT_EQ(s.size(), 2u);
    EXPECT_EQ(s.count("of"), 1u);
}
