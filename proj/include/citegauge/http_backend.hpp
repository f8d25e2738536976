// SPDX-License-Identifier: Apache-2.0
//
// JSON-over-HTTP clients for the backend wire protocol, and a factory that
// turns endpoint URLs (http://... or mock://...) into backend handles.

#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <semaphore>
#include <set>
#include <string>

#include <json.hpp>

#include "citegauge/backends.hpp"

namespace httplib {
class Client;
}

namespace citegauge::backends {

inline constexpr const char* kBackendUrlEnv = "CITEGAUGE_BACKEND_URL";

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
};

struct BackendEndpoint {
    std::string base_url;
    std::chrono::milliseconds timeout{60000};
    int max_in_flight = 4;
    RetryPolicy retry;
};

/// Throws Error(InvalidConfig) for a non-positive timeout, cap or attempt
/// count, or a URL that is not http://host[:port][/prefix].
void validate(const BackendEndpoint& endpoint);

/// Shared transport: one per endpoint, safe to use from many threads.
/// Every logical call carries an X-Request-Id header that stays the same
/// across its retries.
class HttpTransport {
public:
    explicit HttpTransport(BackendEndpoint endpoint);
    ~HttpTransport();

    /// POSTs `body` to base_url + path and returns the decoded JSON reply.
    /// Connection failures and 502/503/504 are retried and end as
    /// Unavailable, timeouts as Timeout; other statuses raise
    /// ProtocolError(status, body) immediately.
    nlohmann::json post(const std::string& path, const nlohmann::json& body);

    /// GET /health; the decoded body, or Unavailable.
    nlohmann::json health();

    /// Aborts in-flight calls and makes later calls fail with Unavailable.
    void cancel();

    const BackendEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    nlohmann::json call(const std::string& method, const std::string& path, const nlohmann::json* body);
    std::string next_request_id();

    BackendEndpoint endpoint_;
    std::string host_;      // scheme://host:port
    std::string prefix_;    // path prefix without trailing '/'
    std::counting_semaphore<> slots_;
    std::atomic<bool> cancelled_{false};
    std::atomic<std::uint64_t> counter_{0};
    std::uint64_t nonce_;
    std::mutex active_mutex_;
    std::set<httplib::Client*> active_;
};

class HttpGenerationBackend final : public GenerationBackend {
public:
    explicit HttpGenerationBackend(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
    GenerationResponse generate(const GenerationRequest& request) override;

private:
    std::shared_ptr<HttpTransport> transport_;
};

class HttpNliBackend final : public NliBackend {
public:
    explicit HttpNliBackend(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
    EntailmentJudgment nli(const std::string& premise, const std::string& hypothesis) override;

private:
    std::shared_ptr<HttpTransport> transport_;
};

class HttpEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
    std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) override;

private:
    std::shared_ptr<HttpTransport> transport_;
};

class HttpTranslatorBackend final : public TranslatorBackend {
public:
    explicit HttpTranslatorBackend(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}
    std::string translate(const std::string& text, const std::string& source_lang,
                          const std::string& target_lang) override;

private:
    std::shared_ptr<HttpTransport> transport_;
};

// Factory ------------------------------------------------------------------
//
// mock:// URLs select in-process mocks:
//   generation  mock://echo, mock://grounded, mock://always-cite,
//               mock://sampler[?salt=N]; any of them with attn=<dir>
//               also writes attention dumps into <dir>
//   nli         mock://nli-fixed?p=0.9, mock://nli-overlap
//   embed       mock://hash-embed[?dim=64]
//   translate   mock://identity, mock://reverse, mock://shuffle[?seed=N],
//               mock://devanagari
// Any other URL is an HTTP endpoint built from `base` with the URL swapped in.

std::shared_ptr<GenerationBackend> make_generation_backend(const std::string& url, const BackendEndpoint& base = {});
std::shared_ptr<NliBackend> make_nli_backend(const std::string& url, const BackendEndpoint& base = {});
std::shared_ptr<EmbeddingBackend> make_embedding_backend(const std::string& url, const BackendEndpoint& base = {});
std::shared_ptr<TranslatorBackend> make_translator_backend(const std::string& url, const BackendEndpoint& base = {});

/// $CITEGAUGE_BACKEND_URL, or empty when unset.
std::string default_backend_url();

}  // namespace citegauge::backends
