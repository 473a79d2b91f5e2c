// Minimal library walk-through: chunk a document, cluster a few points and
// describe the clusters with c-TF-IDF.

#include <iostream>

#include "finkit/finkit.hpp"

int main() {
    using namespace finkit;

    const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta"};
    for (const auto& c : chunk_tokens("doc", words, {3, 1})) {
        std::cout << chunk_id(c.doc_id, c.index) << " [" << c.token_start << ", " << c.token_end << ")\n";
    }

    const std::vector<std::string> ids{"a1", "a2", "a3", "b1", "b2", "b3"};
    const std::vector<float> pts{0.0f, 0.0f, 0.1f, 0.0f, 0.0f, 0.1f, 5.0f, 5.0f, 5.1f, 5.0f, 5.0f, 5.1f};
    const EmbeddingMatrix x(ids, 2, pts);
    const auto clusters = hdbscan(x, HdbscanConfig{3, 1});

    const std::vector<std::vector<std::string>> docs{{"rate", "cut"},  {"rate", "bond"},  {"bond", "yield"},
                                                     {"chip", "ai"},   {"chip", "wafer"}, {"ai", "server"}};
    const auto weights = ctfidf(class_term_counts(docs, clusters.labels));
    for (const auto& t : top_terms(weights.weights, 3)) {
        std::cout << "topic " << t.label << ":";
        for (const auto& [term, w] : t.descriptors) {
            std::cout << ' ' << term << '=' << w;
        }
        std::cout << '\n';
    }
    return 0;
}
