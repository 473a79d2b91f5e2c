#ifndef FINKIT_PIPELINE_HPP
#define FINKIT_PIPELINE_HPP

#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cluster.hpp"
#include "corpus_io.hpp"
#include "detail/rng.hpp"
#include "detail/text.hpp"
#include "errors.hpp"
#include "http_judge.hpp"
#include "reduce.hpp"
#include "tokenize.hpp"
#include "topic_judge.hpp"
#include "topics.hpp"

/**
 * @file pipeline.hpp
 * @brief Declarative reduce -> cluster -> topics -> evaluate run.
 *
 * Each stage's outputs live in <output_dir>/cache/<stage>-<key>/ where the
 * key hashes the stage inputs and settings; a stage whose directory holds a
 * DONE marker is not recomputed. Final artifacts are copied to output_dir.
 * Nothing time-dependent is written, so serial runs are byte-identical.
 */

namespace finkit {

struct JudgeSettings {
    /// Exactly one of stub / endpoint is set.
    std::optional<std::string> stub;
    std::optional<std::string> endpoint;
    std::size_t sample = 200;
    std::size_t max_in_flight = 4;
    int retries = 1;
};

struct PipelineConfig {
    std::string corpus;
    std::string embeddings;
    std::string output_dir;
    std::uint64_t seed = 42;
    int threads = 1;
    TokenizerPaths tokenizer;
    UmapConfig umap;
    HdbscanConfig hdbscan;
    std::size_t top_k = 10;
    std::size_t diversity_k = 10;
    std::optional<JudgeSettings> judge;
    /// Relative paths resolve against this directory. Not serialized.
    std::string base_dir = ".";

    std::string resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() ? p : (std::filesystem::path(base_dir) / path).lexically_normal().string();
    }

    void validate() const {
        if (corpus.empty() || embeddings.empty() || output_dir.empty()) {
            throw ValidationError("config needs corpus, embeddings and output_dir");
        }
        if (threads < 1) {
            throw ParameterError("threads must be at least 1");
        }
        umap.validate(std::numeric_limits<std::size_t>::max());
        hdbscan.validate();
        if (top_k < 1 || diversity_k < 1) {
            throw ParameterError("top_k and diversity_k must be at least 1");
        }
        if (judge) {
            if (judge->stub.has_value() == judge->endpoint.has_value()) {
                throw ValidationError("judge needs exactly one of 'stub' or 'endpoint'");
            }
            if (judge->sample < 1 || judge->max_in_flight < 1 || judge->retries < 0) {
                throw ParameterError("judge sample and max_in_flight must be positive, retries non-negative");
            }
        }
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ValidationError(std::string(where) + " must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw ValidationError(std::string("unknown key '") + key + "' in " + where);
        }
    }
}

template<class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

inline nlohmann::ordered_json umap_json(const UmapConfig& u) {
    nlohmann::ordered_json j;
    j["n_neighbors"] = u.n_neighbors;
    j["out_dim"] = u.out_dim;
    j["min_dist"] = u.min_dist;
    j["spread"] = u.spread;
    j["n_epochs"] = u.n_epochs ? nlohmann::ordered_json(*u.n_epochs) : nlohmann::ordered_json();
    j["negative_sample_rate"] = u.negative_sample_rate;
    j["learning_rate"] = u.learning_rate;
    j["metric"] = to_string(u.metric);
    j["parallel_sgd"] = u.parallel_sgd;
    return j;
}

inline nlohmann::ordered_json hdbscan_json(const HdbscanConfig& h) {
    return {{"min_cluster_size", h.min_cluster_size}, {"min_samples", h.min_samples}};
}

} // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".") {
    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        detail::check_keys(j, "config",
                           {"corpus", "embeddings", "output_dir", "seed", "threads", "tokenizer", "umap", "hdbscan",
                            "topics", "judge"});
        c.corpus = j.at("corpus").get<std::string>();
        c.embeddings = j.at("embeddings").get<std::string>();
        c.output_dir = j.at("output_dir").get<std::string>();
        detail::read_opt(j, "seed", c.seed);
        detail::read_opt(j, "threads", c.threads);
        if (j.contains("tokenizer")) {
            const auto& t = j["tokenizer"];
            detail::check_keys(t, "tokenizer", {"dictionary", "vocabulary", "stopwords", "split_cjk"});
            for (auto [key, slot] : {std::pair{"dictionary", &c.tokenizer.dictionary},
                                     std::pair{"vocabulary", &c.tokenizer.vocabulary},
                                     std::pair{"stopwords", &c.tokenizer.stopwords}}) {
                if (t.contains(key) && !t[key].is_null()) {
                    *slot = t[key].get<std::string>();
                }
            }
            detail::read_opt(t, "split_cjk", c.tokenizer.split_cjk);
        }
        if (j.contains("umap")) {
            const auto& u = j["umap"];
            detail::check_keys(u, "umap",
                               {"n_neighbors", "out_dim", "min_dist", "spread", "n_epochs", "negative_sample_rate",
                                "learning_rate", "metric", "parallel_sgd"});
            detail::read_opt(u, "n_neighbors", c.umap.n_neighbors);
            detail::read_opt(u, "out_dim", c.umap.out_dim);
            detail::read_opt(u, "min_dist", c.umap.min_dist);
            detail::read_opt(u, "spread", c.umap.spread);
            if (u.contains("n_epochs") && !u["n_epochs"].is_null()) {
                c.umap.n_epochs = u["n_epochs"].get<int>();
            }
            detail::read_opt(u, "negative_sample_rate", c.umap.negative_sample_rate);
            detail::read_opt(u, "learning_rate", c.umap.learning_rate);
            if (u.contains("metric")) {
                c.umap.metric = metric_from_string(u["metric"].get<std::string>());
            }
            detail::read_opt(u, "parallel_sgd", c.umap.parallel_sgd);
        }
        if (j.contains("hdbscan")) {
            const auto& h = j["hdbscan"];
            detail::check_keys(h, "hdbscan", {"min_cluster_size", "min_samples"});
            detail::read_opt(h, "min_cluster_size", c.hdbscan.min_cluster_size);
            detail::read_opt(h, "min_samples", c.hdbscan.min_samples);
        }
        if (j.contains("topics")) {
            const auto& t = j["topics"];
            detail::check_keys(t, "topics", {"top_k", "diversity_k"});
            detail::read_opt(t, "top_k", c.top_k);
            detail::read_opt(t, "diversity_k", c.diversity_k);
        }
        if (j.contains("judge") && !j["judge"].is_null()) {
            const auto& g = j["judge"];
            detail::check_keys(g, "judge", {"stub", "endpoint", "sample", "max_in_flight", "retries"});
            JudgeSettings s;
            if (g.contains("stub") && !g["stub"].is_null()) {
                s.stub = g["stub"].get<std::string>();
            }
            if (g.contains("endpoint") && !g["endpoint"].is_null()) {
                s.endpoint = g["endpoint"].get<std::string>();
            }
            detail::read_opt(g, "sample", s.sample);
            detail::read_opt(g, "max_in_flight", s.max_in_flight);
            detail::read_opt(g, "retries", s.retries);
            c.judge = s;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid config: ") + e.what());
    }
    c.umap.seed = c.seed;
    c.umap.threads = c.threads;
    c.hdbscan.threads = c.threads;
    c.validate();
    return c;
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
    auto opt = [](const std::optional<std::string>& s) {
        return s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json();
    };
    nlohmann::ordered_json j;
    j["corpus"] = c.corpus;
    j["embeddings"] = c.embeddings;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["tokenizer"] = {{"dictionary", opt(c.tokenizer.dictionary)},
                      {"vocabulary", opt(c.tokenizer.vocabulary)},
                      {"stopwords", opt(c.tokenizer.stopwords)},
                      {"split_cjk", c.tokenizer.split_cjk}};
    j["umap"] = detail::umap_json(c.umap);
    j["hdbscan"] = detail::hdbscan_json(c.hdbscan);
    j["topics"] = {{"top_k", c.top_k}, {"diversity_k", c.diversity_k}};
    if (c.judge) {
        j["judge"] = {{"stub", opt(c.judge->stub)},
                      {"endpoint", opt(c.judge->endpoint)},
                      {"sample", c.judge->sample},
                      {"max_in_flight", c.judge->max_in_flight},
                      {"retries", c.judge->retries}};
    } else {
        j["judge"] = nullptr;
    }
    return j;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    const auto text = detail::read_file(path);
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw ValidationError("config '" + path + "' is not valid JSON");
    }
    const auto dir = std::filesystem::path(path).parent_path();
    return pipeline_config_from_json(j, dir.empty() ? "." : dir.string());
}

struct StageRecord {
    std::string name;
    std::string key;
    bool cached = false;
    std::vector<std::string> artifacts;
};

struct PipelineResult {
    TopicEvalReport report;
    std::vector<StageRecord> stages;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

inline std::uint64_t hash_file(const std::string& path, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(read_file(path), fnv1a64(std::filesystem::path(path).filename().string(), h));
}

inline std::uint64_t hash_text(const std::string& s, std::uint64_t h) { return fnv1a64(s, fnv1a64("|", h)); }

/// Preconditions on paths, checked before any stage runs.
inline void preflight(const PipelineConfig& c) {
    auto need = [&](const std::string& what, const std::string& p) {
        if (!std::filesystem::is_regular_file(c.resolve(p))) {
            throw ValidationError(what + " '" + c.resolve(p) + "' does not exist");
        }
    };
    need("corpus", c.corpus);
    need("embeddings", c.embeddings);
    need("embedding ids", embedding_ids_path(c.embeddings));
    if (c.tokenizer.dictionary) {
        need("dictionary", *c.tokenizer.dictionary);
    }
    if (c.tokenizer.vocabulary) {
        need("vocabulary", *c.tokenizer.vocabulary);
    }
    if (c.tokenizer.stopwords) {
        need("stopwords", *c.tokenizer.stopwords);
    }
    if (c.judge && c.judge->stub) {
        need("judge stub", *c.judge->stub);
    }
}

} // namespace detail

/**
 * Runs every stage in order. A stage failure throws StageError naming the
 * stage; artifacts of completed stages stay on disk. `log` receives one
 * progress line per stage.
 */
inline PipelineResult run_pipeline(const PipelineConfig& cfg,
                                   const std::function<void(const std::string&)>& log = {}) {
    namespace fs = std::filesystem;
    cfg.validate();
    detail::preflight(cfg);

    const fs::path out_dir = cfg.resolve(cfg.output_dir);
    fs::create_directories(out_dir / "cache");

    PipelineResult result;
    auto say = [&](const std::string& s) {
        if (log) {
            log(s);
        }
    };

    // Runs `compute` into the stage cache dir unless already DONE, then
    // copies the named artifacts into the output dir.
    auto stage = [&](const std::string& name, std::uint64_t key, const std::vector<std::string>& artifacts,
                     const std::function<void(const fs::path&)>& compute) -> fs::path {
        StageRecord rec{name, detail::hex64(key), false, artifacts};
        const fs::path dir = out_dir / "cache" / (name + "-" + rec.key);
        try {
            if (fs::exists(dir / "DONE")) {
                rec.cached = true;
            } else {
                fs::remove_all(dir);
                fs::create_directories(dir);
                compute(dir);
                detail::open_output((dir / "DONE").string()) << rec.key << '\n';
            }
            for (const auto& a : artifacts) {
                fs::copy_file(dir / a, out_dir / a, fs::copy_options::overwrite_existing);
            }
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        say(name + (rec.cached ? ": cached " : ": done ") + rec.key);
        result.stages.push_back(std::move(rec));
        return dir;
    };

    const std::string corpus_path = cfg.resolve(cfg.corpus);
    const std::string emb_path = cfg.resolve(cfg.embeddings);

    const std::uint64_t emb_hash = detail::hash_file(embedding_ids_path(emb_path), detail::hash_file(emb_path));
    const std::uint64_t reduce_key =
        detail::hash_text(detail::umap_json(cfg.umap).dump() + "seed=" + std::to_string(cfg.seed), emb_hash);
    const auto reduce_dir = stage("reduce", reduce_key, {"reduced.emb", "reduced.emb.ids"}, [&](const fs::path& dir) {
        const auto x = load_embeddings(emb_path);
        const auto r = umap(x, cfg.umap);
        write_embeddings(r.embedding, (dir / "reduced.emb").string());
    });
    const auto reduced = load_embeddings((reduce_dir / "reduced.emb").string());

    const std::uint64_t cluster_key = detail::hash_text(detail::hdbscan_json(cfg.hdbscan).dump(), reduce_key);
    const auto cluster_dir = stage("cluster", cluster_key, {"assignments.tsv"}, [&](const fs::path& dir) {
        const auto a = hdbscan(reduced, cfg.hdbscan, Metric::euclidean);
        write_assignments((dir / "assignments.tsv").string(), reduced.ids(), a);
    });
    const auto assignments = load_assignments((cluster_dir / "assignments.tsv").string());

    std::uint64_t topics_key = detail::hash_file(corpus_path, cluster_key);
    for (const auto& p : {cfg.tokenizer.dictionary, cfg.tokenizer.vocabulary, cfg.tokenizer.stopwords}) {
        topics_key = p ? detail::hash_file(cfg.resolve(*p), topics_key) : detail::hash_text("-", topics_key);
    }
    topics_key = detail::hash_text("split_cjk=" + std::to_string(cfg.tokenizer.split_cjk)
                                       + ";top_k=" + std::to_string(cfg.top_k),
                                   topics_key);
    const auto topics_dir = stage("topics", topics_key, {"topics.jsonl"}, [&](const fs::path& dir) {
        const auto corpus = load_corpus(corpus_path);
        std::map<std::string, const Document*> by_id;
        for (const auto& d : corpus) {
            by_id[d.id] = &d;
        }
        TokenizerPaths paths = cfg.tokenizer;
        for (auto* p : {&paths.dictionary, &paths.vocabulary, &paths.stopwords}) {
            if (*p) {
                **p = cfg.resolve(**p);
            }
        }
        const auto tk = load_tokenizer(paths);
        std::vector<std::vector<std::string>> tokens;
        std::map<int, std::size_t> sizes;
        for (std::size_t i = 0; i < assignments.ids.size(); ++i) {
            const auto it = by_id.find(assignments.ids[i]);
            if (it == by_id.end()) {
                throw ValidationError("embedding id '" + assignments.ids[i] + "' is not in the corpus");
            }
            tokens.push_back(analyze(it->second->text, tk));
            ++sizes[assignments.labels[i]];
        }
        const auto weights = ctfidf(class_term_counts(tokens, assignments.labels));
        write_topics((dir / "topics.jsonl").string(), top_terms(weights.weights, cfg.top_k, sizes));
    });
    const auto topics = load_topics((topics_dir / "topics.jsonl").string());

    std::uint64_t eval_key = detail::hash_text("diversity_k=" + std::to_string(cfg.diversity_k), topics_key);
    std::vector<std::string> eval_artifacts{"report.json"};
    if (cfg.judge) {
        eval_key = detail::hash_text(to_json(cfg).at("judge").dump(), eval_key);
        if (cfg.judge->stub) {
            eval_key = detail::hash_file(cfg.resolve(*cfg.judge->stub), eval_key);
        }
        eval_artifacts.push_back("judge_transcript.jsonl");
    }
    const auto eval_dir = stage("evaluate", eval_key, eval_artifacts, [&](const fs::path& dir) {
        const auto coords = to_double(reduced);
        const PointView view{coords, reduced.rows(), reduced.dim()};
        auto report = evaluate_topics(view, assignments.labels, topics, cfg.diversity_k);
        if (cfg.judge) {
            std::unique_ptr<TopicJudge> judge;
            if (cfg.judge->stub) {
                judge = std::make_unique<StubTopicJudge>(StubTopicJudge::from_file(cfg.resolve(*cfg.judge->stub)));
            } else {
                judge = std::make_unique<HttpTopicJudge>(HttpJsonClient(*cfg.judge->endpoint));
            }
            TopicJudgeOptions opt;
            opt.sample = cfg.judge->sample;
            opt.seed = cfg.seed;
            opt.max_in_flight = cfg.judge->max_in_flight;
            opt.retries = cfg.judge->retries;
            opt.descriptors = cfg.diversity_k;
            try {
                auto judged = judge_topics(topics, *judge, opt);
                detail::open_output((dir / "judge_transcript.jsonl").string()) << judged.transcript;
                report.judge_scores = judged.scores;
            } catch (const JudgeError& e) {
                detail::open_output((dir / "judge_transcript.jsonl").string()) << e.transcript();
                throw;
            }
        }
        write_report((dir / "report.json").string(), report);
    });
    {
        const auto j = nlohmann::json::parse(detail::read_file((eval_dir / "report.json").string()));
        auto opt = [&](const char* k) { return j[k].is_null() ? std::nullopt : std::optional<double>(j[k].get<double>()); };
        auto& r = result.report;
        r.silhouette = opt("silhouette");
        r.calinski_harabasz = opt("calinski_harabasz");
        r.davies_bouldin = opt("davies_bouldin");
        r.topic_diversity = opt("topic_diversity");
        r.outlier_rate = j["outlier_rate"].get<double>();
        r.topic_count = j["topic_count"].get<std::size_t>();
        r.avg_docs_per_topic = j["avg_docs_per_topic"].get<double>();
        r.sd_docs_per_topic = j["sd_docs_per_topic"].get<double>();
        if (!j["judge_scores"].is_null()) {
            const auto& s = j["judge_scores"];
            r.judge_scores = JudgeScores{s["coherence"].get<double>(), s["conciseness"].get<double>(),
                                         s["informativity"].get<double>(), s["scored"].get<std::size_t>(),
                                         s["skipped"].get<std::size_t>()};
        }
    }

    nlohmann::ordered_json manifest;
    manifest["config"] = to_json(cfg);
    manifest["stages"] = nlohmann::ordered_json::array();
    for (const auto& s : result.stages) {
        manifest["stages"].push_back({{"name", s.name}, {"key", s.key}, {"artifacts", s.artifacts}});
    }
    detail::open_output((out_dir / "manifest.json").string()) << manifest.dump(2) << '\n';
    return result;
}

} // namespace finkit

#endif
