#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "finkit/corpus_io.hpp"
#include "synthetic.hpp"

using namespace finkit;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    out << body;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(Corpus, EmptyFileGivesEmptyCorpus) {
    const auto dir = synth::temp_dir("corpus-empty");
    write_text(dir / "c.jsonl", "");
    EXPECT_TRUE(load_corpus((dir / "c.jsonl").string()).empty());
}

TEST(Corpus, KeepsFileOrder) {
    std::istringstream in(R"({"id":"a","text":"x"}
{"id":"b","text":"y","meta":{"k":"v","n":3}}

{"id":"c","text":"z"}
)");
    const auto docs = read_corpus(in);
    ASSERT_EQ(docs.size(), 3u);
    EXPECT_EQ(docs[0].id, "a");
    EXPECT_EQ(docs[1].id, "b");
    EXPECT_EQ(docs[2].id, "c");
    EXPECT_EQ(docs[1].meta.at("k"), "v");
    EXPECT_EQ(docs[1].meta.at("n"), "3");
}

TEST(Corpus, DuplicateIdNamesTheId) {
    std::istringstream in("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
    try {
        read_corpus(in);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos) << e.what();
    }
}

TEST(Corpus, MalformedLineReportsLineNumber) {
    std::istringstream in("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\": 3}\n");
    try {
        read_corpus(in);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::istringstream broken("not json\n");
    EXPECT_THROW(read_corpus(broken), ParseError);
}

TEST(Corpus, RoundTrip) {
    const auto dir = synth::temp_dir("corpus-rt");
    Corpus docs{{"x1", "央行 cuts \"rates\"\ttoday", {{"theme", "monetary"}}}, {"x2", "plain", {}}};
    write_corpus((dir / "c.jsonl").string(), docs);
    EXPECT_EQ(load_corpus((dir / "c.jsonl").string()), docs);
}

TEST(Embeddings, ZeroRowRoundTripsBitExactly) {
    const auto dir = synth::temp_dir("emb-zero");
    const EmbeddingMatrix m({"only"}, 4, {0.0f, -0.0f, 0.0f, 0.0f});
    write_embeddings(m, (dir / "m.emb").string());
    const auto back = load_embeddings((dir / "m.emb").string());
    EXPECT_TRUE(back == m);
    EXPECT_TRUE(std::signbit(back.data()[1]));
}

TEST(Embeddings, RandomMatrixRoundTripsBitExactly) {
    const auto dir = synth::temp_dir("emb-rand");
    std::mt19937 gen(17);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> data(100 * 32);
    for (auto& v : data) {
        v = u(gen);
    }
    data[5] = std::numeric_limits<float>::denorm_min();
    const EmbeddingMatrix m(synth::ids(100, "doc-"), 32, data);
    const auto path = (dir / "m.emb").string();
    write_embeddings(m, path);
    EXPECT_TRUE(load_embeddings(path) == m);
    // Rewriting the loaded matrix reproduces the exact bytes.
    const auto first = slurp(path);
    write_embeddings(load_embeddings(path), (dir / "n.emb").string());
    EXPECT_EQ(slurp(dir / "n.emb"), first);
    EXPECT_EQ(first.size(), 24u + 100 * 32 * 4);
    EXPECT_EQ(first.substr(0, 4), "FKEM");
}

TEST(Embeddings, EmptyMatrixRoundTrips) {
    const auto dir = synth::temp_dir("emb-empty");
    const EmbeddingMatrix m({}, 8, {});
    write_embeddings(m, (dir / "m.emb").string());
    const auto back = load_embeddings((dir / "m.emb").string());
    EXPECT_EQ(back.rows(), 0u);
    EXPECT_EQ(back.dim(), 8u);
}

TEST(Embeddings, ShortRowIsFormatError) {
    const auto dir = synth::temp_dir("emb-short");
    const auto path = (dir / "m.emb").string();
    write_embeddings(EmbeddingMatrix({"r"}, 32, std::vector<float>(32, 1.0f)), path);
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 4); // 31 floats left
    write_text(path, bytes);
    EXPECT_THROW(load_embeddings(path), FormatError);
}

TEST(Embeddings, CorruptHeadersAndPayloads) {
    const auto dir = synth::temp_dir("emb-corrupt");
    const auto path = (dir / "m.emb").string();
    write_embeddings(EmbeddingMatrix({"a", "b"}, 2, {1, 2, 3, 4}), path);
    const auto good = slurp(path);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    write_text(path, bad_magic);
    EXPECT_THROW(load_embeddings(path), FormatError);

    auto bad_version = good;
    bad_version[4] = 9;
    write_text(path, bad_version);
    EXPECT_THROW(load_embeddings(path), FormatError);

    auto nan_payload = good;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan_payload.data() + 24, &nan, 4);
    write_text(path, nan_payload);
    EXPECT_THROW(load_embeddings(path), FormatError);

    write_text(path, good.substr(0, 10));
    EXPECT_THROW(load_embeddings(path), FormatError);

    write_text(path, good);
    write_text(embedding_ids_path(path), "a\n");
    EXPECT_THROW(load_embeddings(path), FormatError);
    write_text(embedding_ids_path(path), "a\na\n");
    EXPECT_THROW(load_embeddings(path), FormatError);
}

TEST(Embeddings, MissingSidecarIsError) {
    const auto dir = synth::temp_dir("emb-sidecar");
    const auto path = (dir / "m.emb").string();
    write_embeddings(EmbeddingMatrix({"a"}, 1, {1}), path);
    EXPECT_EQ(slurp(embedding_ids_path(path)), "a\n");
    fs::remove(embedding_ids_path(path));
    EXPECT_THROW(load_embeddings(path), Error);
}

TEST(Embeddings, ConstructorEnforcesInvariants) {
    EXPECT_THROW(EmbeddingMatrix({"a"}, 0, {}), ValidationError);
    EXPECT_THROW(EmbeddingMatrix({"a"}, 2, {1}), ValidationError);
    EXPECT_THROW(EmbeddingMatrix({"a", "a"}, 1, {1, 2}), ValidationError);
    EXPECT_THROW(EmbeddingMatrix({"a"}, 1, {std::numeric_limits<float>::infinity()}), ValidationError);
}

TEST(Embeddings, RandomCorruptionOnlyRaisesTypedErrors) {
    const auto dir = synth::temp_dir("emb-fuzz");
    const auto path = (dir / "m.emb").string();
    write_embeddings(EmbeddingMatrix(synth::ids(5), 3, std::vector<float>(15, 0.5f)), path);
    const auto good = slurp(path);
    std::mt19937 gen(3);
    for (int trial = 0; trial < 500; ++trial) {
        auto bytes = good;
        const int edits = 1 + static_cast<int>(gen() % 4);
        for (int e = 0; e < edits; ++e) {
            bytes[gen() % bytes.size()] = static_cast<char>(gen() & 0xFF);
        }
        if (gen() % 4 == 0) {
            bytes.resize(gen() % bytes.size());
        }
        write_text(path, bytes);
        try {
            const auto m = load_embeddings(path);
            EXPECT_EQ(m.rows(), m.ids().size());
            EXPECT_EQ(m.data().size(), m.rows() * m.dim());
            for (float v : m.data()) {
                EXPECT_TRUE(std::isfinite(v));
            }
        } catch (const Error&) {
        }
    }
}

TEST(QRelsFormat, RoundTripAndValidation) {
    QRels q;
    q.add("q1", "d1", 2);
    q.add("q1", "d2", 0);
    q.add("q2", "d9", 1);
    std::stringstream ss;
    write_qrels(ss, q);
    EXPECT_EQ(read_qrels(ss), q);
    EXPECT_EQ(q.relevant("q1"), std::vector<std::string>{"d1"});
    EXPECT_THROW(q.add("q1", "d1", 1), ValidationError);
    EXPECT_THROW(q.add("q3", "d1", -1), ValidationError);
    std::istringstream bad("q1\td1\n");
    EXPECT_THROW(read_qrels(bad), ParseError);
    std::istringstream dup("q1\td1\t1\nq1\td1\t2\n");
    EXPECT_THROW(read_qrels(dup), ValidationError);
}

TEST(RunFormat, RoundTripPreservesScoresExactly) {
    RetrievalRun run;
    run.rankings["q1"] = {{"d3", 0.1 + 0.2}, {"d1", 1.0 / 3.0}, {"d2", -1e-300}};
    std::sort(run.rankings["q1"].begin(), run.rankings["q1"].end(),
              [](const auto& a, const auto& b) { return a.score > b.score; });
    run.rankings["q2"] = {{"d5", 7.0}};
    std::stringstream ss;
    write_run(ss, run);
    EXPECT_EQ(read_run(ss), run);
}

TEST(RunFormat, RejectsInvariantViolations) {
    std::istringstream inc("q\t1\ta\t0.1\nq\t2\tb\t0.5\n");
    EXPECT_THROW(read_run(inc), ValidationError);
    std::istringstream dup("q\t1\ta\t0.5\nq\t2\ta\t0.1\n");
    EXPECT_THROW(read_run(dup), ValidationError);
    std::istringstream rank("q\t0\ta\t0.5\n");
    EXPECT_THROW(read_run(rank), ParseError);
    std::istringstream shuffled("q\t2\tb\t0.1\nq\t1\ta\t0.5\n");
    EXPECT_EQ(read_run(shuffled).rankings.at("q")[0].doc_id, "a");
}

TEST(TripletFormat, RoundTripAndOverlapRejected) {
    std::vector<TrainingTriplet> t{{"q1", "rate cut", {"d1", "d2"}, {"d3"}}, {"q2", "", {"d4"}, {}}};
    std::stringstream ss;
    write_triplets(ss, t);
    EXPECT_EQ(read_triplets(ss), t);
    std::istringstream bad(R"({"query_id":"q","positives":["a"],"negatives":["a"]})");
    EXPECT_THROW(read_triplets(bad), ParseError);
}

TEST(QualitySplit, PaperScaleCounts) {
    std::vector<RatedText> rated;
    for (int i = 0; i < 2000; ++i) {
        rated.push_back({"h" + std::to_string(i), 9});
        rated.push_back({"l" + std::to_string(i), 3});
    }
    const auto split = build_quality_split(rated, {}, 42);
    auto count = [](const std::vector<LabeledText>& v, QualityLabel l) {
        return std::count_if(v.begin(), v.end(), [&](const auto& x) { return x.label == l; });
    };
    EXPECT_EQ(count(split.train, QualityLabel::high), 1800);
    EXPECT_EQ(count(split.train, QualityLabel::low), 1800);
    EXPECT_EQ(count(split.test, QualityLabel::high), 200);
    EXPECT_EQ(count(split.test, QualityLabel::low), 200);
}

TEST(QualitySplit, ThresholdsAreStrict) {
    std::vector<RatedText> rated;
    for (int i = 0; i < 50; ++i) {
        rated.push_back({"m" + std::to_string(i), 5});
        rated.push_back({"e" + std::to_string(i), 8});
        rated.push_back({"f" + std::to_string(i), 4});
    }
    try {
        build_quality_split(rated, {8, 4, 1, 0.1}, 1);
        FAIL() << "expected a capacity error";
    } catch (const CapacityError& e) {
        EXPECT_EQ(e.available_high(), 0u);
        EXPECT_EQ(e.available_low(), 0u);
    }
}

TEST(QualitySplit, DeterministicSmallSplit) {
    std::vector<RatedText> rated;
    for (int i = 0; i < 10; ++i) {
        rated.push_back({"h" + std::to_string(i), 10});
        rated.push_back({"l" + std::to_string(i), 1});
    }
    const QualitySplitOptions opt{8, 4, 10, 0.10};
    const auto a = build_quality_split(rated, opt, 5);
    const auto b = build_quality_split(rated, opt, 5);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.train.size(), 18u);
    EXPECT_EQ(a.test.size(), 2u);
    EXPECT_NE(a.test[0].label, a.test[1].label);
}

TEST(QualitySplit, RejectsBadInput) {
    EXPECT_THROW(build_quality_split({}, {}, 1), ValidationError);
    std::vector<RatedText> rated{{"x", 11}};
    EXPECT_THROW(build_quality_split(rated, {}, 1), ValidationError);
    rated = {{"x", 9}};
    EXPECT_THROW(build_quality_split(rated, {8, 4, 1, 1.5}, 1), ParameterError);
}

TEST(Filter, KeepsPredicateMatchesInOrder) {
    Corpus docs{{"a", "keep me", {}}, {"b", "drop", {}}, {"c", "keep too", {}}};
    const auto kept = filter_corpus(docs, [](const Document& d) { return d.text.starts_with("keep"); });
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[1].id, "c");
}
