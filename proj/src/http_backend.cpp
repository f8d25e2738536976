// SPDX-License-Identifier: Apache-2.0

#include "citegauge/http_backend.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <thread>

#include <httplib.h>

#include "citegauge/error.hpp"
#include "citegauge/mock_backends.hpp"
#include "citegauge/util.hpp"

namespace citegauge::backends {

using nlohmann::json;

namespace {

struct SplitUrl {
    std::string host;
    std::string prefix;
};

SplitUrl split_url(const std::string& url) {
    constexpr std::string_view scheme = "http://";
    if (url.rfind(scheme, 0) != 0 || url.size() == scheme.size()) {
        throw Error(Errc::InvalidConfig, "backend URL must look like http://host[:port][/prefix]", {{"url", url}});
    }
    const auto slash = url.find('/', scheme.size());
    SplitUrl out;
    out.host = url.substr(0, slash);
    if (slash != std::string::npos) out.prefix = url.substr(slash);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

bool retryable_status(int status) { return status == 502 || status == 503 || status == 504; }

/// Releases a semaphore slot on scope exit.
class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<>& s_;
};

}  // namespace

void validate(const BackendEndpoint& endpoint) {
    if (endpoint.timeout.count() <= 0) throw Error(Errc::InvalidConfig, "timeout must be positive");
    if (endpoint.max_in_flight < 1) throw Error(Errc::InvalidConfig, "max_in_flight must be >= 1");
    if (endpoint.retry.attempts < 1) throw Error(Errc::InvalidConfig, "retry attempts must be >= 1");
    if (endpoint.retry.backoff.count() < 0) throw Error(Errc::InvalidConfig, "retry backoff must be >= 0");
    split_url(endpoint.base_url);
}

HttpTransport::HttpTransport(BackendEndpoint endpoint)
    : endpoint_(std::move(endpoint)),
      slots_((validate(endpoint_), endpoint_.max_in_flight)),
      nonce_(mix64(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) ^
                   reinterpret_cast<std::uintptr_t>(this))) {
    auto split = split_url(endpoint_.base_url);
    host_ = std::move(split.host);
    prefix_ = std::move(split.prefix);
}

HttpTransport::~HttpTransport() = default;

std::string HttpTransport::next_request_id() {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%016llx-%llu", static_cast<unsigned long long>(nonce_),
                  static_cast<unsigned long long>(counter_.fetch_add(1) + 1));
    return buf;
}

void HttpTransport::cancel() {
    cancelled_ = true;
    std::lock_guard lock(active_mutex_);
    for (auto* c : active_) c->stop();
}

json HttpTransport::post(const std::string& path, const json& body) { return call("POST", path, &body); }

json HttpTransport::health() { return call("GET", "/health", nullptr); }

json HttpTransport::call(const std::string& method, const std::string& path, const json* body) {
    const std::string url_path = prefix_ + path;
    const httplib::Headers headers = {{"X-Request-Id", next_request_id()}};
    const std::string payload = body ? body->dump() : std::string();
    const json context = {{"url", endpoint_.base_url + path}};

    SlotGuard slot(slots_);
    auto backoff = endpoint_.retry.backoff;
    Errc last_code = Errc::Unavailable;
    json last_details = context;
    std::string last_message;
    for (int attempt = 1; attempt <= endpoint_.retry.attempts; ++attempt) {
        if (cancelled_) throw Error(Errc::Unavailable, "request cancelled", context);
        httplib::Client client(host_);
        const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
        const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - seconds);
        client.set_connection_timeout(seconds.count(), micros.count());
        client.set_read_timeout(seconds.count(), micros.count());
        client.set_write_timeout(seconds.count(), micros.count());
        {
            std::lock_guard lock(active_mutex_);
            active_.insert(&client);
        }
        const auto started = std::chrono::steady_clock::now();
        auto result = method == "POST" ? client.Post(url_path, headers, payload, "application/json")
                                       : client.Get(url_path, headers);
        const auto elapsed = std::chrono::steady_clock::now() - started;
        {
            std::lock_guard lock(active_mutex_);
            active_.erase(&client);
        }

        if (!result) {
            const auto err = result.error();
            const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                                   (err == httplib::Error::Read && elapsed >= endpoint_.timeout * 9 / 10);
            last_code = timed_out ? Errc::Timeout : Errc::Unavailable;
            last_message = timed_out ? "request timed out" : "backend unreachable: " + httplib::to_string(err);
            last_details = context;
            last_details["attempts"] = attempt;
            if (cancelled_) throw Error(Errc::Unavailable, "request cancelled", context);
        } else if (result->status == 200) {
            try {
                return json::parse(result->body);
            } catch (const json::parse_error&) {
                throw Error(Errc::ProtocolError, "backend replied with malformed JSON",
                            {{"status", result->status}, {"body", result->body}, {"url", endpoint_.base_url + path}});
            }
        } else if (retryable_status(result->status)) {
            last_code = Errc::Unavailable;
            last_message = "backend unavailable (HTTP " + std::to_string(result->status) + ")";
            last_details = {{"status", result->status}, {"body", result->body}, {"attempts", attempt}};
        } else {
            throw Error(Errc::ProtocolError, "backend replied with HTTP " + std::to_string(result->status),
                        {{"status", result->status}, {"body", result->body}, {"url", endpoint_.base_url + path}});
        }
        if (attempt < endpoint_.retry.attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw Error(last_code, last_message, last_details);
}

GenerationResponse HttpGenerationBackend::generate(const GenerationRequest& request) {
    return generation_response_from_wire(transport_->post("/generate", to_wire(request)));
}

EntailmentJudgment HttpNliBackend::nli(const std::string& premise, const std::string& hypothesis) {
    return entailment_from_wire(transport_->post("/nli", nli_request_to_wire(premise, hypothesis)), premise,
                                hypothesis);
}

std::vector<TokenEmbeddings> HttpEmbeddingBackend::embed(std::span<const std::string> texts) {
    return embeddings_from_wire(transport_->post("/embed", embed_request_to_wire(texts)), texts.size());
}

std::string HttpTranslatorBackend::translate(const std::string& text, const std::string& source_lang,
                                             const std::string& target_lang) {
    return translation_from_wire(transport_->post("/translate", translate_request_to_wire(text, source_lang, target_lang)));
}

// Factory ------------------------------------------------------------------

namespace {

struct MockUrl {
    std::string kind;
    std::map<std::string, std::string> params;
};

std::optional<MockUrl> parse_mock_url(const std::string& url) {
    constexpr std::string_view scheme = "mock://";
    if (url.rfind(scheme, 0) != 0) return std::nullopt;
    MockUrl out;
    const auto rest = url.substr(scheme.size());
    const auto q = rest.find('?');
    out.kind = rest.substr(0, q);
    if (q == std::string::npos) return out;
    std::string_view query(rest);
    query.remove_prefix(q + 1);
    while (!query.empty()) {
        const auto amp = query.find('&');
        const auto pair = query.substr(0, amp);
        const auto eq = pair.find('=');
        if (eq == std::string_view::npos) {
            throw Error(Errc::InvalidConfig, "mock URL parameter needs a value", {{"url", url}});
        }
        out.params[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
        if (amp == std::string_view::npos) break;
        query.remove_prefix(amp + 1);
    }
    return out;
}

template <class T>
T param(const MockUrl& m, const std::string& name, T fallback, const std::string& url) {
    const auto it = m.params.find(name);
    if (it == m.params.end()) return fallback;
    T value{};
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(Errc::InvalidConfig, "bad mock URL parameter '" + name + "'", {{"url", url}});
    }
    return value;
}

[[noreturn]] void unknown_mock(const std::string& url, const char* role) {
    throw Error(Errc::InvalidConfig, std::string("unknown ") + role + " mock", {{"url", url}});
}

std::shared_ptr<HttpTransport> transport_for(const std::string& url, const BackendEndpoint& base) {
    BackendEndpoint ep = base;
    ep.base_url = url;
    return std::make_shared<HttpTransport>(std::move(ep));
}

}  // namespace

std::shared_ptr<GenerationBackend> make_generation_backend(const std::string& url, const BackendEndpoint& base) {
    if (const auto m = parse_mock_url(url)) {
        const auto salt = param<std::uint64_t>(*m, "salt", 0, url);
        std::shared_ptr<GenerationBackend> gen;
        if (m->kind == "echo") gen = std::make_shared<mock::EchoGenerator>(salt);
        else if (m->kind == "grounded") gen = std::make_shared<mock::GroundedGenerator>(salt);
        else if (m->kind == "always-cite") gen = std::make_shared<mock::AlwaysCiteGenerator>(salt);
        else if (m->kind == "sampler") gen = std::make_shared<mock::SamplingGenerator>(salt);
        else unknown_mock(url, "generation");
        if (const auto it = m->params.find("attn"); it != m->params.end()) {
            gen = std::make_shared<mock::AttentionDumpGenerator>(std::move(gen), it->second);
        }
        return gen;
    }
    return std::make_shared<HttpGenerationBackend>(transport_for(url, base));
}

std::shared_ptr<NliBackend> make_nli_backend(const std::string& url, const BackendEndpoint& base) {
    if (const auto m = parse_mock_url(url)) {
        if (m->kind == "nli-fixed") return std::make_shared<mock::FixedNli>(param<double>(*m, "p", 0.9, url));
        if (m->kind == "nli-overlap") return std::make_shared<mock::OverlapNli>();
        unknown_mock(url, "nli");
    }
    return std::make_shared<HttpNliBackend>(transport_for(url, base));
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const std::string& url, const BackendEndpoint& base) {
    if (const auto m = parse_mock_url(url)) {
        if (m->kind == "hash-embed") return std::make_shared<mock::HashEmbedder>(param<std::size_t>(*m, "dim", 64, url));
        unknown_mock(url, "embedding");
    }
    return std::make_shared<HttpEmbeddingBackend>(transport_for(url, base));
}

std::shared_ptr<TranslatorBackend> make_translator_backend(const std::string& url, const BackendEndpoint& base) {
    if (const auto m = parse_mock_url(url)) {
        if (m->kind == "identity") return std::make_shared<mock::IdentityTranslator>();
        if (m->kind == "reverse") return std::make_shared<mock::ReverseTranslator>();
        if (m->kind == "shuffle") return std::make_shared<mock::ShuffleTranslator>(param<std::uint64_t>(*m, "seed", 0, url));
        if (m->kind == "devanagari") return std::make_shared<mock::DevanagariTranslator>();
        unknown_mock(url, "translator");
    }
    return std::make_shared<HttpTranslatorBackend>(transport_for(url, base));
}

std::string default_backend_url() {
    const char* v = std::getenv(kBackendUrlEnv);
    return v ? std::string(v) : std::string();
}

}  // namespace citegauge::backends
