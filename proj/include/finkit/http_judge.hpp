#ifndef FINKIT_HTTP_JUDGE_HPP
#define FINKIT_HTTP_JUDGE_HPP

#include <cstdlib>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "errors.hpp"
#include "retrieval.hpp"
#include "topic_judge.hpp"

/**
 * @file http_judge.hpp
 * @brief Judges reached over HTTP POST with a JSON body.
 *
 * The bearer token is read from FINKIT_JUDGE_TOKEN when not given; no
 * Authorization header is sent when both are empty. Only plain http is
 * supported by the bundled client build.
 *
 * Pair judge:  body = PairJudgeRequest JSON, reply = {"verdict": bool, "rationale": str}.
 * Topic judge: body = {"prompt": str, "sample": int, "attempt": int},
 *              reply = {"response": str}, or any other body used verbatim.
 */

namespace finkit {

inline constexpr const char* judge_token_env = "FINKIT_JUDGE_TOKEN";

inline std::string judge_token_from_env() {
    const char* v = std::getenv(judge_token_env);
    return v ? std::string(v) : std::string();
}

class HttpJsonClient {
public:
    explicit HttpJsonClient(const std::string& endpoint, std::string token = judge_token_from_env(),
                            int timeout_seconds = 60)
        : token_(std::move(token)) {
        const auto scheme = endpoint.find("://");
        if (scheme == std::string::npos) {
            throw ParameterError("judge endpoint must start with http://, got '" + endpoint + "'");
        }
        if (endpoint.compare(0, scheme, "http") != 0) {
            throw ParameterError("unsupported judge endpoint scheme in '" + endpoint + "'");
        }
        const auto slash = endpoint.find('/', scheme + 3);
        base_ = endpoint.substr(0, slash);
        path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
        timeout_ = timeout_seconds;
    }

    /// Throws JudgeTransportError on connection failure or non-2xx status.
    std::string post(const std::string& body) const {
        httplib::Client cli(base_);
        cli.set_connection_timeout(timeout_, 0);
        cli.set_read_timeout(timeout_, 0);
        httplib::Headers headers;
        if (!token_.empty()) {
            headers.emplace("Authorization", "Bearer " + token_);
        }
        const auto res = cli.Post(path_, headers, body, "application/json");
        if (!res) {
            throw JudgeTransportError("judge request to " + base_ + path_ + " failed: "
                                      + httplib::to_string(res.error()));
        }
        if (res->status < 200 || res->status >= 300) {
            throw JudgeTransportError("judge returned HTTP " + std::to_string(res->status));
        }
        return res->body;
    }

private:
    std::string base_;
    std::string path_;
    std::string token_;
    int timeout_;
};

class HttpPairJudge : public PairJudge {
public:
    explicit HttpPairJudge(HttpJsonClient client) : client_(std::move(client)) {}

    PairVerdict judge(const PairJudgeRequest& request) override {
        const auto body = client_.post(to_json(request).dump());
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) {
            throw JudgeTransportError("judge reply is not JSON");
        }
        return pair_verdict_from_json(j);
    }

private:
    HttpJsonClient client_;
};

class HttpTopicJudge : public TopicJudge {
public:
    explicit HttpTopicJudge(HttpJsonClient client) : client_(std::move(client)) {}

    std::string complete(const std::string& prompt, std::size_t sample_index, int attempt) override {
        const nlohmann::json req{{"prompt", prompt}, {"sample", sample_index}, {"attempt", attempt}};
        auto body = client_.post(req.dump());
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("response") && j["response"].is_string()) {
            return j["response"].get<std::string>();
        }
        return body;
    }

private:
    HttpJsonClient client_;
};

} // namespace finkit

#endif
