// Regenerates the bundled topic-modeling fixture: 500 synthetic financial
// news titles, random-projection bag-of-words embeddings, tokenizer files,
// a canned judge and a pipeline config. Output is a pure function of --seed.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "finkit/corpus_io.hpp"
#include "finkit/detail/rng.hpp"
#include "finkit/tokenize.hpp"

namespace {

using finkit::detail::Rng;

struct Theme {
    const char* name;
    std::vector<const char*> subjects;
    std::vector<const char*> terms;
};

const std::vector<Theme>& themes() {
    static const std::vector<Theme> t{
        {"monetary",
         {"central bank", "央行", "the fed", "policy makers"},
         {"interest rate", "rate cut", "inflation", "bond yield", "降准", "liquidity", "monetary easing",
          "reserve ratio", "repo rate", "treasury"}},
        {"earnings",
         {"the company", "shareholders", "analysts", "the board"},
         {"quarterly earnings", "revenue", "net profit", "净利润", "guidance", "dividend", "share buyback",
          "operating margin", "earnings per share", "profit warning"}},
        {"property",
         {"developers", "home buyers", "local governments", "房企"},
         {"property sales", "housing market", "mortgage", "land auction", "房地产", "home prices",
          "debt restructuring", "presale", "housing inventory", "developer bonds"}},
        {"energy",
         {"opec", "refiners", "oil producers", "utilities"},
         {"crude oil", "oil price", "natural gas", "refinery", "新能源", "power grid", "coal output", "brent",
          "energy storage", "solar capacity"}},
        {"banking",
         {"lenders", "regulators", "commercial banks", "银行"},
         {"bank loans", "credit risk", "bad debt", "不良贷款", "capital adequacy", "deposit rates",
          "loan growth", "provision coverage", "interbank market", "credit card"}},
        {"chips",
         {"chipmakers", "new york investors", "tech firms", "芯片企业"},
         {"semiconductor", "chip", "芯片", "export controls", "wafer", "foundry", "ai servers", "memory prices",
          "lithography", "design tools"}},
    };
    return t;
}

const std::vector<const char*> verbs{"weigh", "signal", "report", "expect", "flag", "discuss", "cut", "raise",
                                     "track", "review"};
const std::vector<const char*> connectors{"amid", "as", "on", "after", "despite", "ahead of"};
const std::vector<const char*> fillers{"the outlook", "a new quarter", "the market", "the week", "the data"};
const std::vector<const char*> stopwords{"the", "a", "an", "as", "on", "in", "of", "for", "to", "amid",
                                         "after", "despite", "ahead", "and", "with"};

template<class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[rng.index(v.size())];
}

std::vector<float> term_vector(const std::string& term, std::size_t dim) {
    Rng rng(finkit::detail::fnv1a64(term));
    std::vector<float> v(dim);
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
    }
    return v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the bundled pipeline fixture"};
    std::string out_dir = "data/fixture";
    std::uint64_t seed = 20240617;
    std::size_t titles = 500, dim = 64;
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--seed", seed, "Generator seed")->capture_default_str();
    app.add_option("--titles", titles, "Number of titles")->capture_default_str();
    app.add_option("--dim", dim, "Embedding dimension")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    Rng rng(seed);

    {
        auto out = finkit::detail::open_output((dir / "stopwords.txt").string());
        for (const auto* w : stopwords) {
            out << w << '\n';
        }
    }
    finkit::EntityDictionary dict;
    {
        auto out = finkit::detail::open_output((dir / "dict.txt").string());
        std::vector<std::string> entries;
        for (const auto& t : themes()) {
            for (const auto* s : t.subjects) {
                entries.emplace_back(s);
            }
            for (const auto* s : t.terms) {
                entries.emplace_back(s);
            }
        }
        entries.emplace_back("new york");
        std::sort(entries.begin(), entries.end());
        entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
        for (const auto& e : entries) {
            if (e.find(' ') != std::string::npos || static_cast<unsigned char>(e[0]) >= 0x80) {
                out << e << '\n';
                dict.insert(e);
            }
        }
    }

    finkit::MergedTokenizer tk;
    tk.dictionary = dict;
    tk.stopwords = finkit::load_stopwords((dir / "stopwords.txt").string());

    finkit::Corpus corpus;
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < titles; ++i) {
        const bool noise = i % 50 == 49;
        const auto& theme = pick(rng, themes());
        std::string text;
        if (noise) {
            const auto& other = pick(rng, themes());
            text = std::string(pick(rng, theme.subjects)) + " " + pick(rng, verbs) + " " + pick(rng, other.terms)
                 + " " + pick(rng, connectors) + " " + pick(rng, fillers);
        } else {
            const auto terms = rng.sample_without_replacement(theme.terms.size(), 3);
            text = std::string(pick(rng, theme.subjects)) + " " + pick(rng, verbs) + " " + theme.terms[terms[0]]
                 + " " + pick(rng, connectors) + " " + theme.terms[terms[1]];
            if (rng.uniform() < 0.5) {
                text += std::string(" and ") + theme.terms[terms[2]];
            }
        }
        char id[16];
        std::snprintf(id, sizeof(id), "t%03zu", i);
        finkit::Document d;
        d.id = id;
        d.text = text;
        d.meta["theme"] = noise ? "mixed" : theme.name;
        corpus.push_back(d);

        std::vector<double> v(dim, 0.0);
        for (const auto& tok : finkit::analyze(text, tk)) {
            const auto tv = term_vector(tok, dim);
            for (std::size_t k = 0; k < dim; ++k) {
                v[k] += tv[k];
            }
        }
        double norm = 0;
        for (std::size_t k = 0; k < dim; ++k) {
            v[k] += 0.25 * rng.normal();
            norm += v[k] * v[k];
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < dim; ++k) {
            data.push_back(static_cast<float>(v[k] / norm));
        }
        ids.push_back(d.id);
    }
    finkit::write_corpus((dir / "titles.jsonl").string(), corpus);
    finkit::write_embeddings(finkit::EmbeddingMatrix(ids, dim, data), (dir / "titles.emb").string());

    {
        auto out = finkit::detail::open_output((dir / "judge_stub.txt").string());
        const int scores[][3] = {{3, 3, 2}, {2, 3, 2}, {3, 2, 3}, {2, 2, 2}};
        for (const auto& s : scores) {
            nlohmann::ordered_json j;
            j["Evaluation"]["Coherence"] = {{"Score", s[0]}, {"Explanation", "stub"}};
            j["Evaluation"]["Conciseness"] = {{"Score", s[1]}, {"Explanation", "stub"}};
            j["Evaluation"]["Informativity"] = {{"Score", s[2]}, {"Explanation", "stub"}};
            out << j.dump() << '\n';
        }
    }
    {
        auto out = finkit::detail::open_output((dir / "terms.txt").string());
        for (const auto* t : {"new york", "central bank", "interest rate", "央行", "不良贷款", "chip", "revenue"}) {
            out << t << '\n';
        }
    }
    {
        nlohmann::ordered_json cfg;
        cfg["corpus"] = "titles.jsonl";
        cfg["embeddings"] = "titles.emb";
        cfg["output_dir"] = "out";
        cfg["seed"] = 42;
        cfg["threads"] = 1;
        cfg["tokenizer"] = {{"dictionary", "dict.txt"}, {"stopwords", "stopwords.txt"}, {"split_cjk", true}};
        cfg["umap"] = {{"n_neighbors", 15}, {"out_dim", 32}, {"min_dist", 0.0}, {"metric", "cosine"}};
        cfg["hdbscan"] = {{"min_cluster_size", 2}, {"min_samples", 1}};
        cfg["topics"] = {{"top_k", 10}, {"diversity_k", 10}};
        cfg["judge"] = {{"stub", "judge_stub.txt"}, {"sample", 200}, {"max_in_flight", 4}};
        finkit::detail::open_output((dir / "pipeline.json").string()) << cfg.dump(2) << '\n';
    }
    std::cerr << "wrote " << titles << " titles to " << out_dir << '\n';
    return 0;
}
