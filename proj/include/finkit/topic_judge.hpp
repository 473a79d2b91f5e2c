#ifndef FINKIT_TOPIC_JUDGE_HPP
#define FINKIT_TOPIC_JUDGE_HPP

#include <algorithm>
#include <atomic>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "detail/rng.hpp"
#include "detail/text.hpp"
#include "errors.hpp"
#include "topics.hpp"

/**
 * @file topic_judge.hpp
 * @brief Subjective topic scoring by an external language-model judge.
 *
 * The wire contract is a rendered prompt in, free text out; the text must
 * contain a JSON object with "Evaluation" -> {"Coherence", "Conciseness",
 * "Informativity"} -> {"Score": 1..3, "Explanation": string}.
 */

namespace finkit {

inline std::string render_topic_prompt(const std::vector<std::string>& keywords) {
    static constexpr const char* head =
        "Please evaluate the given topic keyword list based on the following standards for topic quality "
        "assessment. For each criterion, provide a score ranging from 1 to 3, along with a brief explanation "
        "of the score.\n"
        "\n"
        "Topic Quality Assessment Criteria:\n"
        "1. Coherence\n"
        "   Definition: The keywords within a topic should be semantically related and collectively describe a "
        "topic or multiple closely related topics.\n"
        "\n"
        "2. Conciseness\n"
        "   Definition: A topic should not contain irrelevant or meaningless words, such as noise words or "
        "semantically redundant terms.\n"
        "\n"
        "3. Informativity\n"
        "   Definition: A topic should provide sufficient, specific, meaningful, or valuable information, "
        "covering different aspects of the same topic.\n"
        "\n"
        "Evaluation Instructions:\n"
        "For the provided topic keyword list, rate each criterion on a scale of 1 to 3:\n"
        "1 point: Poor performance, does not meet the standard.\n"
        "2 points: Average performance, partially meets the standard.\n"
        "3 points: Excellent performance, fully meets the standard.\n"
        "For each rating, provide a brief explanation to justify the score.\n"
        "Input:";
    static constexpr const char* tail =
        "\n"
        "\n"
        "Example Response Format:\n"
        "{\n"
        "  \"Topic Keyword List\": [\"strategy\", \"market\", \"investment\", \"risk\", \"return\"],\n"
        "  \"Evaluation\": {\n"
        "    \"Coherence\": {\n"
        "      \"Score\": 3,\n"
        "      \"Explanation\": \"Keywords are closely related, all relevant to the field of financial "
        "investment, and collectively describe the theme of investment strategies.\"\n"
        "    },\n"
        "    \"Conciseness\": {\n"
        "      \"Score\": 3,\n"
        "      \"Explanation\": \"Keywords are clear, with no stopwords or meaningless terms, and no redundancy "
        "detected.\"\n"
        "    },\n"
        "    \"Informativity\": {\n"
        "      \"Score\": 2,\n"
        "      \"Explanation\": \"The topic only covers the main aspects of financial investment but lacks "
        "detailed descriptions of specific markets or investment tools.\"\n"
        "    }\n"
        "  }\n"
        "}\n";
    return std::string(head) + nlohmann::json(keywords).dump() + tail;
}

struct TopicScore {
    int coherence;
    int conciseness;
    int informativity;
};

/// Empty when the text holds no well-formed evaluation object.
inline std::optional<TopicScore> parse_topic_scores(const std::string& text) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        return std::nullopt;
    }
    const auto j = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("Evaluation") || !j["Evaluation"].is_object()) {
        return std::nullopt;
    }
    const auto& ev = j["Evaluation"];
    auto score = [&](const char* key) -> std::optional<int> {
        if (!ev.contains(key) || !ev[key].is_object()) {
            return std::nullopt;
        }
        const auto& c = ev[key];
        if (!c.contains("Score") || !c["Score"].is_number_integer() || !c.contains("Explanation")
            || !c["Explanation"].is_string()) {
            return std::nullopt;
        }
        const int s = c["Score"].get<int>();
        if (s < 1 || s > 3) {
            return std::nullopt;
        }
        return s;
    };
    const auto a = score("Coherence"), b = score("Conciseness"), c = score("Informativity");
    if (!a || !b || !c) {
        return std::nullopt;
    }
    return TopicScore{*a, *b, *c};
}

/// `sample_index` and `attempt` identify the call; transport failures throw JudgeTransportError.
class TopicJudge {
public:
    virtual ~TopicJudge() = default;
    virtual std::string complete(const std::string& prompt, std::size_t sample_index, int attempt) = 0;
};

/**
 * Replays canned responses: sample i receives line i modulo the line count,
 * on every attempt. Lines are raw response text.
 */
class StubTopicJudge : public TopicJudge {
public:
    explicit StubTopicJudge(std::vector<std::string> responses) : responses_(std::move(responses)) {
        if (responses_.empty()) {
            throw ValidationError("stub judge needs at least one response");
        }
    }

    static StubTopicJudge from_file(const std::string& path) {
        std::vector<std::string> lines;
        for (auto& line : detail::read_lines(path)) {
            if (!detail::trim(line).empty()) {
                lines.push_back(std::move(line));
            }
        }
        return StubTopicJudge(std::move(lines));
    }

    std::string complete(const std::string&, std::size_t sample_index, int) override {
        return responses_[sample_index % responses_.size()];
    }

private:
    std::vector<std::string> responses_;
};

struct TopicJudgeOptions {
    std::size_t sample = 200;
    std::uint64_t seed = 42;
    std::size_t max_in_flight = 4;
    int retries = 1;
    std::size_t descriptors = 10;
};

struct TopicJudgeResult {
    JudgeScores scores;
    /// One line per attempt, in sample order.
    std::string transcript;
};

/**
 * Scores a seeded sample (without replacement) of the non-outlier topics.
 * Samples are ordered by topic label; results are aggregated in that order
 * whatever the completion order. A response that does not parse is retried,
 * then skipped.
 */
inline TopicJudgeResult judge_topics(const std::vector<Topic>& topics, TopicJudge& judge,
                                     const TopicJudgeOptions& opt = {}) {
    if (opt.max_in_flight < 1) {
        throw ParameterError("max_in_flight must be at least 1");
    }
    std::vector<const Topic*> pool;
    for (const auto& t : topics) {
        if (t.label >= 0 && !t.descriptors.empty()) {
            pool.push_back(&t);
        }
    }
    std::sort(pool.begin(), pool.end(), [](const Topic* a, const Topic* b) { return a->label < b->label; });
    if (pool.empty()) {
        throw JudgeError("no topics to judge");
    }
    std::vector<const Topic*> sample;
    if (opt.sample >= pool.size()) {
        sample = pool;
    } else {
        detail::Rng rng(opt.seed);
        auto idx = rng.sample_without_replacement(pool.size(), opt.sample);
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) {
            sample.push_back(pool[i]);
        }
    }

    struct Slot {
        std::optional<TopicScore> score;
        std::vector<std::string> log;
    };
    std::vector<Slot> slots(sample.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < sample.size(); i = next++) {
            std::vector<std::string> words;
            for (std::size_t d = 0; d < std::min(opt.descriptors, sample[i]->descriptors.size()); ++d) {
                words.push_back(sample[i]->descriptors[d].first);
            }
            const auto prompt = render_topic_prompt(words);
            for (int attempt = 0; attempt <= opt.retries && !slots[i].score; ++attempt) {
                std::string response;
                try {
                    response = judge.complete(prompt, i, attempt);
                } catch (const JudgeTransportError& e) {
                    response = std::string("<transport error> ") + e.what();
                }
                slots[i].score = parse_topic_scores(response);
                nlohmann::ordered_json line{{"topic", sample[i]->label},
                                            {"attempt", attempt},
                                            {"ok", slots[i].score.has_value()},
                                            {"response", response}};
                slots[i].log.push_back(line.dump());
            }
        }
    };
    const auto workers = std::min(opt.max_in_flight, sample.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool_threads;
        for (std::size_t w = 0; w < workers; ++w) {
            pool_threads.emplace_back(worker);
        }
        for (auto& t : pool_threads) {
            t.join();
        }
    }

    TopicJudgeResult out;
    for (const auto& s : slots) {
        for (const auto& l : s.log) {
            out.transcript += l;
            out.transcript += '\n';
        }
        if (s.score) {
            out.scores.coherence += s.score->coherence;
            out.scores.conciseness += s.score->conciseness;
            out.scores.informativity += s.score->informativity;
            ++out.scores.scored;
        } else {
            ++out.scores.skipped;
        }
    }
    if (out.scores.scored == 0) {
        throw JudgeError("every judge response was malformed (" + std::to_string(out.scores.skipped) + " topics)",
                         out.transcript);
    }
    const auto n = static_cast<double>(out.scores.scored);
    out.scores.coherence /= n;
    out.scores.conciseness /= n;
    out.scores.informativity /= n;
    return out;
}

} // namespace finkit

#endif
