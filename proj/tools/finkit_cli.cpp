// finkit command-line entry point. Data goes to stdout, diagnostics to stderr.

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "finkit/finkit.hpp"

namespace {

using namespace finkit;

struct Globals {
    std::uint64_t seed = 42;
    int threads = 1;
    std::string config;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

std::optional<PipelineConfig> maybe_config(const Globals& g) {
    if (g.config.empty()) {
        return std::nullopt;
    }
    return load_pipeline_config(g.config);
}

std::map<std::string, std::string> corpus_texts(const std::string& path) {
    std::map<std::string, std::string> out;
    for (auto& d : load_corpus(path)) {
        out.emplace(std::move(d.id), std::move(d.text));
    }
    return out;
}

std::vector<std::size_t> parse_ks(const std::string& s) {
    std::vector<std::size_t> ks;
    for (auto part : detail::split(s, ',')) {
        std::size_t k = 0;
        if (!detail::parse_number(detail::trim(part), k) || k == 0) {
            throw ParameterError("bad cutoff '" + std::string(part) + "' in --k");
        }
        ks.push_back(k);
    }
    return ks;
}

struct TokenizerFlags {
    std::string dictionary, vocabulary, stopwords;
    bool no_split_cjk = false;

    void add(CLI::App* app, const std::string& prefix = "") {
        app->add_option("--" + prefix + "dictionary", dictionary, "Entity dictionary (one term per line)");
        app->add_option("--" + prefix + "vocabulary", vocabulary, "Subword vocabulary (one token per line)");
        if (prefix.empty()) {
            app->add_option("--stopwords", stopwords, "Stopword list");
        }
        app->add_flag("--" + prefix + "no-split-cjk", no_split_cjk, "Keep CJK runs as single units");
    }

    TokenizerPaths paths() const {
        TokenizerPaths p;
        if (!dictionary.empty()) {
            p.dictionary = dictionary;
        }
        if (!vocabulary.empty()) {
            p.vocabulary = vocabulary;
        }
        if (!stopwords.empty()) {
            p.stopwords = stopwords;
        }
        p.split_cjk = !no_split_cjk;
        return p;
    }
};

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

nlohmann::ordered_json skipped_json(const std::vector<SkippedQuery>& s) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& q : s) {
        arr.push_back({{"query_id", q.query_id}, {"reason", q.reason}});
    }
    return arr;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finkit: retrieval evaluation, pair construction, tokenizers and topic modeling"};
    app.require_subcommand(1);
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    g.threads_opt = app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--config", g.config, "Run configuration (JSON); stage subcommands take their defaults from it");

    std::function<void()> action;

    // chunk ------------------------------------------------------------------
    auto* chunk = app.add_subcommand("chunk", "Split corpus documents into overlapping word windows");
    std::string chunk_in, chunk_out;
    ChunkOptions chunk_opt;
    bool chunk_no_cjk = false;
    chunk->add_option("--corpus", chunk_in, "Input corpus (JSONL)")->required();
    chunk->add_option("--out", chunk_out, "Output chunk corpus (JSONL)")->required();
    chunk->add_option("--window", chunk_opt.window, "Words per window")->capture_default_str();
    chunk->add_option("--overlap", chunk_opt.overlap, "Words shared by consecutive windows")->capture_default_str();
    chunk->add_flag("--no-split-cjk", chunk_no_cjk, "Count CJK runs as one word");
    chunk->callback([&] {
        action = [&] {
            const auto docs = load_corpus(chunk_in);
            const auto chunks = chunk_corpus(docs, chunk_opt, !chunk_no_cjk);
            write_corpus(chunk_out, chunks);
            std::cerr << "chunk: " << docs.size() << " documents -> " << chunks.size() << " chunks\n";
        };
    });

    // retrieve-eval ------------------------------------------------------------
    auto* reval = app.add_subcommand("retrieve-eval", "Cosine retrieval and Recall@k / nDCG@k");
    std::string re_queries, re_docs, re_qrels, re_run_in, re_run_out, re_ks = "1,3,5,10,20,50", re_agg = "none", re_format = "table", re_report;
    std::size_t re_depth = 100, re_ndcg_k = 10;
    reval->add_option("--qrels", re_qrels, "Relevance judgments (TSV)")->required();
    reval->add_option("--queries", re_queries, "Query embeddings");
    reval->add_option("--docs", re_docs, "Document or chunk embeddings");
    reval->add_option("--run", re_run_in, "Evaluate an existing run (TSV) instead of retrieving");
    reval->add_option("--run-out", re_run_out, "Write the document-level run (TSV)");
    reval->add_option("--depth", re_depth, "Retrieved items per query")->capture_default_str();
    reval->add_option("--k", re_ks, "Recall cutoffs, comma separated")->capture_default_str();
    reval->add_option("--ndcg-k", re_ndcg_k, "nDCG cutoff")->capture_default_str();
    reval->add_option("--format", re_format, "Metrics table on stdout")
        ->check(CLI::IsMember({"table", "tsv"}))
        ->capture_default_str();
    reval->add_option("--report", re_report, "Also write the metrics table (TSV)");
    reval->add_option("--aggregate", re_agg, "Chunk-to-document score aggregation")
        ->check(CLI::IsMember({"none", "max", "mean"}))
        ->capture_default_str();
    reval->callback([&] {
        action = [&] {
            const auto qrels = load_qrels(re_qrels);
            RetrievalRun run;
            if (!re_run_in.empty()) {
                run = load_run(re_run_in);
            } else {
                if (re_queries.empty() || re_docs.empty()) {
                    throw ParameterError("retrieve-eval needs --run or both --queries and --docs");
                }
                run = cosine_topk(load_embeddings(re_queries), load_embeddings(re_docs), re_depth, g.threads);
            }
            if (re_agg != "none") {
                run = aggregate_run(run, re_agg == "max" ? Aggregation::max : Aggregation::mean);
            }
            if (!re_run_out.empty()) {
                write_run(re_run_out, run);
            }
            std::vector<std::pair<std::string, std::string>> rows;
            auto fixed = [](double v) {
                std::ostringstream o;
                o << std::fixed << std::setprecision(4) << v;
                return o.str();
            };
            for (auto k : parse_ks(re_ks)) {
                rows.emplace_back("recall@" + std::to_string(k), fixed(recall_at_k(run, qrels, k).mean));
            }
            rows.emplace_back("ndcg@" + std::to_string(re_ndcg_k), fixed(ndcg_at_k(run, qrels, re_ndcg_k).mean));
            rows.emplace_back("queries", std::to_string(qrels.entries.size()));
            if (!re_report.empty()) {
                auto out = detail::open_output(re_report);
                out << "metric\tvalue\n";
                for (const auto& [m, v] : rows) {
                    out << m << '\t' << v << '\n';
                }
            }
            if (re_format == "tsv") {
                std::cout << "metric\tvalue\n";
                for (const auto& [m, v] : rows) {
                    std::cout << m << '\t' << v << '\n';
                }
            } else {
                std::size_t w = 6;
                for (const auto& r : rows) {
                    w = std::max(w, r.first.size());
                }
                std::cout << std::left << std::setw(static_cast<int>(w)) << "metric" << "  value\n"
                          << std::string(w, '-') << "  " << std::string(6, '-') << '\n';
                for (const auto& [m, v] : rows) {
                    std::cout << std::left << std::setw(static_cast<int>(w)) << m << "  " << v << '\n';
                }
            }
        };
    });

    // mine-negatives -----------------------------------------------------------
    auto* mine = app.add_subcommand("mine-negatives", "Mine hard negatives into a candidate pool");
    std::string mn_queries, mn_docs, mn_qrels, mn_qtext, mn_out;
    std::size_t mn_max = 50;
    mine->add_option("--queries", mn_queries, "Query embeddings")->required();
    mine->add_option("--docs", mn_docs, "Document embeddings")->required();
    mine->add_option("--qrels", mn_qrels, "Relevance judgments (TSV)")->required();
    mine->add_option("--query-corpus", mn_qtext, "Query texts (JSONL corpus)");
    mine->add_option("--max", mn_max, "Mined negatives per query")->capture_default_str();
    mine->add_option("--out", mn_out, "Pool of triplets (JSONL)")->required();
    mine->callback([&] {
        action = [&] {
            const auto queries = load_embeddings(mn_queries);
            const auto docs = load_embeddings(mn_docs);
            const auto qrels = load_qrels(mn_qrels);
            const auto texts = mn_qtext.empty() ? std::map<std::string, std::string>{} : corpus_texts(mn_qtext);
            std::map<std::string, std::size_t> row;
            for (std::size_t i = 0; i < queries.rows(); ++i) {
                row[queries.ids()[i]] = i;
            }
            std::vector<TrainingTriplet> pool;
            for (const auto& [query, judged] : qrels.entries) {
                const auto it = row.find(query);
                if (it == row.end()) {
                    std::cerr << "mine-negatives: no embedding for query '" << query << "', skipped\n";
                    continue;
                }
                TrainingTriplet t;
                t.query_id = query;
                if (auto tt = texts.find(query); tt != texts.end()) {
                    t.query_text = tt->second;
                }
                t.positives = qrels.relevant(query);
                const std::set<std::string> pos(t.positives.begin(), t.positives.end());
                t.negatives = mine_hard_negatives(queries.row(it->second), pos, docs, mn_max);
                pool.push_back(std::move(t));
            }
            write_triplets(mn_out, pool);
            std::cerr << "mine-negatives: " << pool.size() << " queries\n";
        };
    });

    // filter-pairs ----------------------------------------------------------
    auto* filter = app.add_subcommand("filter-pairs", "Drop pairs rejected by a judge");
    std::string fp_pairs, fp_corpus, fp_stub, fp_endpoint, fp_out;
    FilterOptions fp_opt;
    filter->add_option("--pairs", fp_pairs, "Triplets or candidate pool (JSONL)")->required();
    filter->add_option("--corpus", fp_corpus, "Document texts (JSONL corpus)")->required();
    auto* fp_judge = filter->add_option_group("judge", "Exactly one judge source");
    fp_judge->add_option("--judge-stub", fp_stub, "Scripted judge rules (JSONL)");
    fp_judge->add_option("--judge-endpoint", fp_endpoint, "HTTP judge endpoint; token from FINKIT_JUDGE_TOKEN");
    fp_judge->require_option(1);
    filter->add_option("--min-positives", fp_opt.min_positives, "Drop queries left with fewer positives")
        ->capture_default_str();
    filter->add_option("--min-negatives", fp_opt.min_negatives, "Drop queries left with fewer negatives")
        ->capture_default_str();
    filter->add_option("--retries", fp_opt.retries, "Retries per failed judge call")->capture_default_str();
    filter->add_option("--out", fp_out, "Filtered triplets (JSONL)")->required();
    filter->callback([&] {
        action = [&] {
            std::unique_ptr<PairJudge> judge;
            if (!fp_endpoint.empty()) {
                judge = std::make_unique<HttpPairJudge>(HttpJsonClient(fp_endpoint));
            } else {
                judge = std::make_unique<StubPairJudge>(StubPairJudge::from_file(fp_stub));
            }
            const auto r = filter_pairs_with_judge(load_triplets(fp_pairs), *judge, corpus_texts(fp_corpus), fp_opt);
            write_triplets(fp_out, r.triplets);
            nlohmann::ordered_json j;
            j["kept"] = r.triplets.size();
            j["removed"] = skipped_json(r.removed);
            j["dropped_positives"] = r.dropped_positives;
            j["dropped_negatives"] = r.dropped_negatives;
            j["judge_errors"] = r.errors.size();
            print_json(j);
        };
    });

    // build-pairs -------------------------------------------------------------
    auto* build = app.add_subcommand("build-pairs", "Sample balanced training triplets from a pool");
    std::string bp_pool, bp_out, bp_preset = "base";
    ContrastiveConfig bp_cfg;
    CLI::Option* bp_neg_opt = nullptr;
    CLI::Option* bp_pos_opt = nullptr;
    build->add_option("--pool", bp_pool, "Candidate pool (JSONL triplets)")->required();
    build->add_option("--preset", bp_preset, "Sampling preset")->check(CLI::IsMember({"base", "large"}))->capture_default_str();
    bp_pos_opt = build->add_option("--positives", bp_cfg.pos_per_query, "Positives per query (overrides preset)");
    bp_neg_opt = build->add_option("--negatives", bp_cfg.neg_per_query, "Negatives per query (overrides preset)");
    build->add_option("--out", bp_out, "Training triplets (JSONL)")->required();
    build->callback([&] {
        action = [&] {
            auto cfg = bp_preset == "large" ? ContrastiveConfig::large() : ContrastiveConfig::base();
            if (bp_pos_opt->count() > 0) {
                cfg.pos_per_query = bp_cfg.pos_per_query;
            }
            if (bp_neg_opt->count() > 0) {
                cfg.neg_per_query = bp_cfg.neg_per_query;
            }
            QRels qrels;
            std::map<std::string, std::vector<std::string>> mined;
            std::map<std::string, std::string> texts;
            for (const auto& t : load_triplets(bp_pool)) {
                for (const auto& p : t.positives) {
                    qrels.add(t.query_id, p, 1);
                }
                if (t.positives.empty()) {
                    qrels.entries[t.query_id];
                }
                mined[t.query_id] = t.negatives;
                texts[t.query_id] = t.query_text;
            }
            const auto r = build_training_pairs(qrels, mined, cfg, g.seed, texts);
            write_triplets(bp_out, r.triplets);
            print_json({{"triplets", r.triplets.size()}, {"skipped", skipped_json(r.skipped)}});
        };
    });

    // train-vocab -------------------------------------------------------------
    auto* train = app.add_subcommand("train-vocab", "Expand a subword vocabulary from a corpus");
    std::string tv_corpus, tv_base, tv_out;
    WordPieceTrainOptions tv_opt;
    bool tv_no_cjk = false;
    train->add_option("--corpus", tv_corpus, "Training corpus (JSONL)")->required();
    train->add_option("--base", tv_base, "Base vocabulary");
    train->add_option("--new-tokens", tv_opt.new_tokens, "Tokens to add")->capture_default_str();
    train->add_option("--min-freq", tv_opt.min_freq, "Minimum pair frequency")->capture_default_str();
    train->add_flag("--no-split-cjk", tv_no_cjk, "Keep CJK runs as single words");
    train->add_option("--out", tv_out, "Expanded vocabulary")->required();
    train->callback([&] {
        action = [&] {
            tv_opt.split_cjk = !tv_no_cjk;
            std::vector<std::string> lines;
            for (auto& d : load_corpus(tv_corpus)) {
                lines.push_back(std::move(d.text));
            }
            const auto base = tv_base.empty() ? SubwordVocabulary() : load_vocabulary(tv_base);
            const auto r = train_wordpiece_expansion(lines, base, tv_opt);
            write_vocabulary(tv_out, r.vocab);
            print_json({{"base_size", r.vocab.base_size()}, {"added", r.added}, {"shortfall", r.shortfall},
                        {"size", r.vocab.size()}});
        };
    });

    // tokenize ----------------------------------------------------------------
    auto* tok = app.add_subcommand("tokenize", "Segment text with the merged tokenizer");
    TokenizerFlags tok_flags;
    std::string tok_corpus, tok_text, tok_out;
    bool tok_keep_stop = false;
    tok_flags.add(tok);
    tok->add_option("--corpus", tok_corpus, "Corpus to tokenize (JSONL)");
    tok->add_option("--text", tok_text, "Single text to tokenize");
    tok->add_flag("--keep-stopwords", tok_keep_stop, "Do not remove stopwords");
    tok->add_option("--out", tok_out, "Output JSONL {id, tokens}; stdout when omitted");
    tok->callback([&] {
        action = [&] {
            const auto tk = load_tokenizer(tok_flags.paths());
            auto run = [&](const std::string& text) {
                return tok_keep_stop ? merged_tokenize(text, tk) : analyze(text, tk);
            };
            if (!tok_text.empty()) {
                std::cout << nlohmann::json(run(tok_text)).dump() << '\n';
                return;
            }
            if (tok_corpus.empty()) {
                throw ParameterError("tokenize needs --corpus or --text");
            }
            std::ofstream file;
            if (!tok_out.empty()) {
                file = detail::open_output(tok_out);
            }
            std::ostream& out = tok_out.empty() ? std::cout : file;
            for (const auto& d : load_corpus(tok_corpus)) {
                nlohmann::ordered_json j{{"id", d.id}, {"tokens", run(d.text)}};
                out << j.dump() << '\n';
            }
        };
    });

    // tokenizer-diff ------------------------------------------------------------
    auto* diff = app.add_subcommand("tokenizer-diff", "Compare two tokenizers on a term list");
    TokenizerFlags diff_a, diff_b;
    std::string diff_terms;
    bool diff_all = false;
    diff_a.add(diff, "a-");
    diff_b.add(diff, "b-");
    diff->add_option("--terms", diff_terms, "Terms, one per line")->required();
    diff->add_flag("--all", diff_all, "List consistent terms too");
    diff->callback([&] {
        action = [&] {
            std::vector<std::string> terms;
            for (auto& l : detail::read_lines(diff_terms)) {
                if (!detail::trim(l).empty()) {
                    terms.emplace_back(detail::trim(l));
                }
            }
            const auto r = tokenizer_diff(load_tokenizer(diff_a.paths()), load_tokenizer(diff_b.paths()), terms);
            nlohmann::ordered_json j;
            j["terms"] = terms.size();
            j["inconsistencies"] = r.inconsistencies;
            j["by_length"] = nlohmann::ordered_json::object();
            for (const auto& [len, n] : r.by_length) {
                j["by_length"][std::to_string(len)] = n;
            }
            j["entries"] = nlohmann::ordered_json::array();
            for (const auto& e : r.entries) {
                if (diff_all || !e.consistent) {
                    j["entries"].push_back({{"term", e.term}, {"a", e.first}, {"b", e.second}, {"consistent", e.consistent}});
                }
            }
            print_json(j);
        };
    });

    // reduce --------------------------------------------------------------------
    auto* red = app.add_subcommand("reduce", "UMAP dimensionality reduction");
    std::string red_in, red_out, red_metric = "cosine";
    UmapConfig red_cfg;
    int red_epochs = 0;
    red->add_option("--embeddings", red_in, "Input embeddings")->required();
    red->add_option("--out", red_out, "Reduced embeddings")->required();
    auto* o_nn = red->add_option("--n-neighbors", red_cfg.n_neighbors, "Neighbourhood size")->capture_default_str();
    auto* o_dim = red->add_option("--out-dim", red_cfg.out_dim, "Output dimension")->capture_default_str();
    auto* o_md = red->add_option("--min-dist", red_cfg.min_dist, "Minimum embedded distance")->capture_default_str();
    auto* o_ep = red->add_option("--epochs", red_epochs, "SGD epochs (default by size)");
    auto* o_me = red->add_option("--metric", red_metric, "Input metric")
                     ->check(CLI::IsMember({"cosine", "euclidean"}))
                     ->capture_default_str();
    bool red_parallel = false;
    red->add_flag("--parallel-sgd", red_parallel, "Asynchronous SGD over --threads (not reproducible)");
    red->callback([&] {
        action = [&] {
            UmapConfig cfg;
            if (auto c = maybe_config(g)) {
                cfg = c->umap;
            }
            if (o_nn->count() || g.config.empty()) cfg.n_neighbors = red_cfg.n_neighbors;
            if (o_dim->count() || g.config.empty()) cfg.out_dim = red_cfg.out_dim;
            if (o_md->count() || g.config.empty()) cfg.min_dist = red_cfg.min_dist;
            if (o_me->count() || g.config.empty()) cfg.metric = metric_from_string(red_metric);
            if (o_ep->count()) cfg.n_epochs = red_epochs;
            if (red_parallel) cfg.parallel_sgd = true;
            if (g.seed_opt->count() || g.config.empty()) cfg.seed = g.seed;
            if (g.threads_opt->count() || g.config.empty()) cfg.threads = g.threads;
            const auto r = umap(load_embeddings(red_in), cfg);
            write_embeddings(r.embedding, red_out);
            std::cerr << "reduce: " << r.embedding.rows() << " x " << r.embedding.dim() << ", a=" << r.diagnostics.a
                      << " b=" << r.diagnostics.b << " epochs=" << r.diagnostics.n_epochs
                      << (r.diagnostics.spectral_init ? " spectral" : " random") << " init, "
                      << r.sigma_fallbacks << " sigma fallbacks\n";
        };
    });

    // cluster -----------------------------------------------------------------
    auto* clu = app.add_subcommand("cluster", "HDBSCAN density clustering");
    std::string clu_in, clu_out, clu_metric = "euclidean";
    HdbscanConfig clu_cfg;
    clu->add_option("--embeddings", clu_in, "Input (usually reduced) embeddings")->required();
    clu->add_option("--out", clu_out, "Assignments (TSV id, label, probability)")->required();
    auto* o_mcs = clu->add_option("--min-cluster-size", clu_cfg.min_cluster_size, "Smallest cluster")->capture_default_str();
    auto* o_ms = clu->add_option("--min-samples", clu_cfg.min_samples, "Core-distance neighbour")->capture_default_str();
    clu->add_option("--metric", clu_metric, "Distance")->check(CLI::IsMember({"cosine", "euclidean"}))->capture_default_str();
    clu->callback([&] {
        action = [&] {
            HdbscanConfig cfg;
            if (auto c = maybe_config(g)) {
                cfg = c->hdbscan;
            }
            if (o_mcs->count() || g.config.empty()) cfg.min_cluster_size = clu_cfg.min_cluster_size;
            if (o_ms->count() || g.config.empty()) cfg.min_samples = clu_cfg.min_samples;
            cfg.threads = g.threads;
            const auto x = load_embeddings(clu_in);
            const auto a = hdbscan(x, cfg, metric_from_string(clu_metric));
            write_assignments(clu_out, x.ids(), a);
            std::cerr << "cluster: " << a.cluster_count() << " clusters, outlier rate " << outlier_rate(a.labels) << '\n';
        };
    });

    // topics ------------------------------------------------------------------
    auto* top = app.add_subcommand("topics", "c-TF-IDF topic descriptors");
    TokenizerFlags top_flags;
    std::string top_corpus, top_assign, top_out;
    std::size_t top_k = 10;
    top_flags.add(top);
    top->add_option("--corpus", top_corpus, "Corpus (JSONL)")->required();
    top->add_option("--assignments", top_assign, "Cluster assignments (TSV)")->required();
    auto* o_tk = top->add_option("--top-k", top_k, "Descriptors per topic")->capture_default_str();
    top->add_option("--out", top_out, "Topics (JSONL)")->required();
    top->callback([&] {
        action = [&] {
            auto paths = top_flags.paths();
            std::size_t k = top_k;
            if (auto c = maybe_config(g)) {
                if (!o_tk->count()) {
                    k = c->top_k;
                }
                for (auto [flag, slot, from] : {std::tuple{&top_flags.dictionary, &paths.dictionary, &c->tokenizer.dictionary},
                                                std::tuple{&top_flags.vocabulary, &paths.vocabulary, &c->tokenizer.vocabulary},
                                                std::tuple{&top_flags.stopwords, &paths.stopwords, &c->tokenizer.stopwords}}) {
                    if (flag->empty() && *from) {
                        *slot = c->resolve(**from);
                    }
                }
            }
            const auto tk = load_tokenizer(paths);
            const auto texts = corpus_texts(top_corpus);
            const auto a = load_assignments(top_assign);
            std::vector<std::vector<std::string>> tokens;
            std::map<int, std::size_t> sizes;
            for (std::size_t i = 0; i < a.ids.size(); ++i) {
                const auto it = texts.find(a.ids[i]);
                if (it == texts.end()) {
                    throw ValidationError("assigned id '" + a.ids[i] + "' is not in the corpus");
                }
                tokens.push_back(analyze(it->second, tk));
                ++sizes[a.labels[i]];
            }
            const auto w = ctfidf(class_term_counts(tokens, a.labels));
            for (const auto& warn : w.warnings) {
                std::cerr << "topics: warning: " << warn << '\n';
            }
            const auto topics = top_terms(w.weights, k, sizes);
            write_topics(top_out, topics);
            std::cerr << "topics: " << topics.size() << " classes\n";
        };
    });

    // eval-topics -------------------------------------------------------------
    auto* ev = app.add_subcommand("eval-topics", "Label-free topic evaluation");
    std::string ev_emb, ev_assign, ev_topics, ev_stub, ev_endpoint, ev_out, ev_transcript;
    std::size_t ev_div_k = 10, ev_sample = 200, ev_inflight = 4;
    ev->add_option("--embeddings", ev_emb, "Embeddings the clustering saw")->required();
    ev->add_option("--assignments", ev_assign, "Cluster assignments (TSV)")->required();
    ev->add_option("--topics", ev_topics, "Topics (JSONL)")->required();
    ev->add_option("--diversity-k", ev_div_k, "Descriptors per topic for diversity")->capture_default_str();
    ev->add_option("--judge-stub", ev_stub, "Canned judge responses, one per line");
    ev->add_option("--judge-endpoint", ev_endpoint, "HTTP judge endpoint; token from FINKIT_JUDGE_TOKEN");
    ev->add_option("--sample", ev_sample, "Topics sent to the judge")->capture_default_str();
    ev->add_option("--max-in-flight", ev_inflight, "Concurrent judge requests")->capture_default_str();
    ev->add_option("--transcript", ev_transcript, "Write the judge transcript (JSONL)");
    ev->add_option("--out", ev_out, "Report (JSON); stdout when omitted");
    ev->callback([&] {
        action = [&] {
            const auto x = load_embeddings(ev_emb);
            const auto a = load_assignments(ev_assign);
            if (a.ids != x.ids()) {
                throw ValidationError("assignment ids do not match embedding ids");
            }
            const auto topics = load_topics(ev_topics);
            const auto coords = to_double(x);
            auto report = evaluate_topics(PointView{coords, x.rows(), x.dim()}, a.labels, topics, ev_div_k);
            if (!ev_stub.empty() || !ev_endpoint.empty()) {
                std::unique_ptr<TopicJudge> judge;
                if (!ev_stub.empty()) {
                    judge = std::make_unique<StubTopicJudge>(StubTopicJudge::from_file(ev_stub));
                } else {
                    judge = std::make_unique<HttpTopicJudge>(HttpJsonClient(ev_endpoint));
                }
                TopicJudgeOptions opt;
                opt.sample = ev_sample;
                opt.seed = g.seed;
                opt.max_in_flight = ev_inflight;
                opt.descriptors = ev_div_k;
                try {
                    auto r = judge_topics(topics, *judge, opt);
                    if (!ev_transcript.empty()) {
                        detail::open_output(ev_transcript) << r.transcript;
                    }
                    report.judge_scores = r.scores;
                } catch (const JudgeError& e) {
                    if (!ev_transcript.empty()) {
                        detail::open_output(ev_transcript) << e.transcript();
                    }
                    throw;
                }
            }
            if (ev_out.empty()) {
                print_json(to_json(report));
            } else {
                write_report(ev_out, report);
            }
        };
    });

    // run-pipeline ------------------------------------------------------------
    auto* pipe = app.add_subcommand("run-pipeline", "reduce -> cluster -> topics -> evaluate from --config");
    pipe->callback([&] {
        action = [&] {
            if (g.config.empty()) {
                throw ParameterError("run-pipeline needs --config");
            }
            auto cfg = load_pipeline_config(g.config);
            if (g.seed_opt->count()) {
                cfg.seed = cfg.umap.seed = g.seed;
            }
            if (g.threads_opt->count()) {
                cfg.threads = cfg.umap.threads = cfg.hdbscan.threads = g.threads;
            }
            const auto r = run_pipeline(cfg, [](const std::string& s) { std::cerr << "run-pipeline: " << s << '\n'; });
            print_json(to_json(r.report));
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        action();
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
