#include <atomic>
#include <functional>
#include <sstream>
#include <chrono>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "finkit/topic_judge.hpp"
#include "synthetic.hpp"

using namespace finkit;

namespace {

nlohmann::json evaluation(int coherence, int conciseness, int informativity) {
    return {{"Topic Keyword List", {"a"}},
                     {"Evaluation",
                      {{"Coherence", {{"Score", coherence}, {"Explanation", "c"}}},
                       {"Conciseness", {{"Score", conciseness}, {"Explanation", "c"}}},
                       {"Informativity", {{"Score", informativity}, {"Explanation", "c"}}}}}};
}

std::string response(int coherence, int conciseness, int informativity) {
    return "Here is my evaluation:\n" + evaluation(coherence, conciseness, informativity).dump(2) + "\nDone.";
}

std::vector<Topic> make_topics(int n, bool with_outlier = true) {
    std::vector<Topic> topics;
    if (with_outlier) {
        topics.push_back({-1, {{"outlierterm", 1.0}}, 100});
    }
    for (int i = 0; i < n; ++i) {
        topics.push_back({i, {{"t" + std::to_string(i), 0.9}, {"common", 0.5}}, 10});
    }
    return topics;
}

/// Scripted per (sample, attempt); records calls.
class ScriptedJudge : public TopicJudge {
public:
    std::function<std::string(std::size_t, int)> script;
    std::atomic<int> calls{0};
    std::vector<std::string> prompts;
    std::mutex mu;

    std::string complete(const std::string& prompt, std::size_t sample, int attempt) override {
        ++calls;
        {
            std::lock_guard lock(mu);
            prompts.push_back(prompt);
        }
        return script(sample, attempt);
    }
};

} // namespace

TEST(ParseScores, AcceptsWellFormedAndRejectsMalformed) {
    const auto s = parse_topic_scores(response(1, 2, 3));
    ASSERT_TRUE(s);
    EXPECT_EQ(s->coherence, 1);
    EXPECT_EQ(s->conciseness, 2);
    EXPECT_EQ(s->informativity, 3);
    EXPECT_FALSE(parse_topic_scores("no json here"));
    EXPECT_FALSE(parse_topic_scores(response(0, 2, 2)));
    EXPECT_FALSE(parse_topic_scores(response(2, 4, 2)));
    auto missing = evaluation(2, 2, 2);
    missing["Evaluation"].erase("Informativity");
    EXPECT_FALSE(parse_topic_scores(missing.dump()));
    auto no_expl = evaluation(2, 2, 2);
    no_expl["Evaluation"]["Coherence"].erase("Explanation");
    EXPECT_FALSE(parse_topic_scores(no_expl.dump()));
    auto fractional = evaluation(2, 2, 2);
    fractional["Evaluation"]["Coherence"]["Score"] = 2.5;
    EXPECT_FALSE(parse_topic_scores(fractional.dump()));
}

TEST(Prompt, EmbedsKeywordsAsJsonArray) {
    const auto p = render_topic_prompt({"rate", "央行"});
    EXPECT_NE(p.find("Input:[\"rate\",\"央行\"]\n"), std::string::npos);
    EXPECT_NE(p.find("rate each criterion on a scale of 1 to 3"), std::string::npos);
    EXPECT_NE(p.find("1. Coherence"), std::string::npos);
    EXPECT_NE(p.find("2. Conciseness"), std::string::npos);
    EXPECT_NE(p.find("3. Informativity"), std::string::npos);
    // The example response in the prompt is itself parseable.
    const auto example = p.substr(p.find("Example Response Format:"));
    const auto s = parse_topic_scores(example);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->informativity, 2);
}

TEST(JudgeTopics, ConstantJudge) {
    StubTopicJudge judge({response(3, 3, 3)});
    const auto r = judge_topics(make_topics(7), judge);
    EXPECT_DOUBLE_EQ(r.scores.coherence, 3.0);
    EXPECT_DOUBLE_EQ(r.scores.conciseness, 3.0);
    EXPECT_DOUBLE_EQ(r.scores.informativity, 3.0);
    EXPECT_EQ(r.scores.scored, 7u);
    EXPECT_EQ(r.scores.skipped, 0u);
}

TEST(JudgeTopics, AlternatingCoherenceAveragesToTwo) {
    StubTopicJudge judge({response(1, 2, 2), response(3, 2, 2)});
    const auto r = judge_topics(make_topics(10), judge);
    EXPECT_DOUBLE_EQ(r.scores.coherence, 2.0);
    EXPECT_DOUBLE_EQ(r.scores.conciseness, 2.0);
}

TEST(JudgeTopics, MalformedResponseIsRetriedThenSkipped) {
    ScriptedJudge judge;
    judge.script = [](std::size_t sample, int) { return sample == 2 ? std::string("{\"Evaluation\":{}}") : response(2, 3, 1); };
    TopicJudgeOptions opt;
    opt.max_in_flight = 1;
    const auto r = judge_topics(make_topics(5), judge, opt);
    EXPECT_EQ(judge.calls, 6); // sample 2 answered twice
    EXPECT_EQ(r.scores.scored, 4u);
    EXPECT_EQ(r.scores.skipped, 1u);
    EXPECT_DOUBLE_EQ(r.scores.coherence, 2.0);
    EXPECT_DOUBLE_EQ(r.scores.informativity, 1.0);
    EXPECT_EQ(std::count(r.transcript.begin(), r.transcript.end(), '\n'), 6);
}

TEST(JudgeTopics, RetrySucceedsOnSecondAttempt) {
    ScriptedJudge judge;
    judge.script = [](std::size_t, int attempt) { return attempt == 0 ? std::string("garbage") : response(3, 1, 2); };
    const auto r = judge_topics(make_topics(3), judge);
    EXPECT_EQ(judge.calls, 6);
    EXPECT_EQ(r.scores.scored, 3u);
    EXPECT_EQ(r.scores.skipped, 0u);
    EXPECT_DOUBLE_EQ(r.scores.conciseness, 1.0);
}

TEST(JudgeTopics, TransportErrorsCountAsMalformed) {
    ScriptedJudge judge;
    judge.script = [](std::size_t sample, int) -> std::string {
        if (sample == 0) {
            throw JudgeTransportError("connection refused");
        }
        return response(3, 3, 3);
    };
    const auto r = judge_topics(make_topics(2), judge);
    EXPECT_EQ(r.scores.skipped, 1u);
    EXPECT_NE(r.transcript.find("connection refused"), std::string::npos);
}

TEST(JudgeTopics, AllMalformedRaisesWithTranscript) {
    StubTopicJudge judge({"I cannot help with that."});
    try {
        judge_topics(make_topics(3), judge);
        FAIL() << "expected JudgeError";
    } catch (const JudgeError& e) {
        EXPECT_NE(e.transcript().find("I cannot help with that."), std::string::npos);
        EXPECT_EQ(std::count(e.transcript().begin(), e.transcript().end(), '\n'), 6);
    }
}

TEST(JudgeTopics, NoJudgeableTopicsRaises) {
    StubTopicJudge judge({response(3, 3, 3)});
    EXPECT_THROW(judge_topics(make_topics(0), judge), JudgeError);
    TopicJudgeOptions bad;
    bad.max_in_flight = 0;
    EXPECT_THROW(judge_topics(make_topics(2), judge, bad), ParameterError);
}

TEST(JudgeTopics, OutliersNeverSentAndDescriptorsTruncated) {
    ScriptedJudge judge;
    judge.script = [](std::size_t, int) { return response(2, 2, 2); };
    auto topics = make_topics(4);
    for (int i = 0; i < 20; ++i) {
        topics[1].descriptors.emplace_back("extra" + std::to_string(i), 0.1);
    }
    TopicJudgeOptions opt;
    opt.descriptors = 3;
    judge_topics(topics, judge, opt);
    ASSERT_EQ(judge.prompts.size(), 4u);
    for (const auto& p : judge.prompts) {
        EXPECT_EQ(p.find("outlierterm"), std::string::npos);
        EXPECT_EQ(p.find("extra1"), std::string::npos);
    }
    const bool saw_truncated = std::any_of(judge.prompts.begin(), judge.prompts.end(), [](const std::string& p) {
        return p.find("Input:[\"t0\",\"common\",\"extra0\"]") != std::string::npos;
    });
    EXPECT_TRUE(saw_truncated);
}

TEST(JudgeTopics, SeededSampleWithoutReplacement) {
    auto labels_sent = [](std::uint64_t seed, std::size_t sample) {
        ScriptedJudge judge;
        judge.script = [](std::size_t, int) { return response(2, 2, 2); };
        TopicJudgeOptions opt;
        opt.seed = seed;
        opt.sample = sample;
        const auto r = judge_topics(make_topics(50), judge, opt);
        std::vector<int> labels;
        std::istringstream in(r.transcript);
        for (std::string line; std::getline(in, line);) {
            labels.push_back(nlohmann::json::parse(line)["topic"].get<int>());
        }
        return labels;
    };
    const auto a = labels_sent(7, 20);
    ASSERT_EQ(a.size(), 20u);
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
    EXPECT_EQ(a, labels_sent(7, 20));
    EXPECT_NE(a, labels_sent(8, 20));
    EXPECT_EQ(labels_sent(7, 500).size(), 50u);
}

TEST(JudgeTopics, BoundedInFlightAndOrderIndependentAggregation) {
    class SlowJudge : public TopicJudge {
    public:
        std::atomic<int> in_flight{0}, peak{0};
        std::string complete(const std::string&, std::size_t sample, int) override {
            const int now = ++in_flight;
            for (int p = peak; now > p && !peak.compare_exchange_weak(p, now);) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(1 + (sample * 7) % 5));
            --in_flight;
            return response(1 + static_cast<int>(sample % 3), 2, 3);
        }
    };
    std::string reference;
    for (std::size_t flight : {1u, 3u, 8u}) {
        SlowJudge judge;
        TopicJudgeOptions opt;
        opt.max_in_flight = flight;
        const auto r = judge_topics(make_topics(40), judge, opt);
        EXPECT_LE(judge.peak.load(), static_cast<int>(flight));
        if (reference.empty()) {
            reference = r.transcript;
        }
        EXPECT_EQ(r.transcript, reference);
        EXPECT_DOUBLE_EQ(r.scores.coherence, (14.0 * 1 + 13 * 2 + 13 * 3) / 40.0);
    }
}

TEST(StubJudge, ReplaysFileLines) {
    const auto dir = synth::temp_dir("stub");
    {
        std::ofstream out(dir / "responses.txt");
        out << evaluation(1, 1, 1).dump() << "\n\n" << evaluation(3, 3, 3).dump() << "\n";
    }
    auto judge = StubTopicJudge::from_file((dir / "responses.txt").string());
    const auto r = judge_topics(make_topics(4), judge);
    EXPECT_DOUBLE_EQ(r.scores.coherence, 2.0);
    EXPECT_THROW(StubTopicJudge({}), ValidationError);
}
