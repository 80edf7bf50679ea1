// Copyright 2026 AudioLog Authors
// Prompt rendering against the event table and pluggable LLM providers
// (deterministic offline mock + HTTP chat-completion client).
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/table.hpp"
#include "httplib.h"
#include "json.hpp"

namespace audiolog {

struct PromptTemplate {
  std::string name;              // prompt1 | prompt2 | prompt3
  std::string general_preamble;  // shared context line
  std::string request_text;      // per-template request

  static const char* general_text() {
    return "The above table provides a description of acoustic events and "
           "scenes from an audio clip, along with their start and end times "
           "in seconds.";
  }

  static PromptTemplate by_name(const std::string& name) {
    PromptTemplate t;
    t.name = name;
    t.general_preamble = general_text();
    if (name == "prompt1") {
      t.request_text = "Please provide a concise overview of this audio.";
    } else if (name == "prompt2") {
      t.request_text =
          "Please provide a concise overview of this audio, along with the "
          "timing information for sound scenes and events.";
    } else if (name == "prompt3") {
      t.request_text =
          "Please provide a concise overview of this audio without timing "
          "information.";
    } else {
      throw ConfigError("unknown template '" + name +
                        "' (expected prompt1, prompt2 or prompt3)");
    }
    return t;
  }

  static std::vector<std::string> names() {
    return {"prompt1", "prompt2", "prompt3"};
  }
};

// Deterministic render: preamble, blank line, Markdown table, blank line,
// request. Byte-stable for identical inputs.
inline std::string render_prompt(const EventTable& table,
                                 const PromptTemplate& tmpl) {
  std::string out = tmpl.general_preamble;
  out += "\n\n";
  out += serialize_table(table, TableFormat::kMarkdown);
  out += "\n";
  out += tmpl.request_text;
  out += "\n";
  return out;
}

struct ProviderConfig {
  std::string provider_id = "mock";  // "mock" or "http"
  std::string endpoint;              // base URL, e.g. https://api.example.com/v1
  std::string auth_env = "AUDIOLOG_API_KEY";  // env var holding the secret
  std::string model_name;
  double timeout_s = 30.0;
  int max_retries = 3;
  int backoff_ms = 250;  // doubles per retry

  void validate() const {
    if (timeout_s <= 0) throw ConfigError("provider: timeout_s must be > 0");
    if (max_retries < 0) throw ConfigError("provider: max_retries must be >= 0");
    if (backoff_ms < 0) throw ConfigError("provider: backoff_ms must be >= 0");
  }
};

struct AudioLogResult {
  std::string prompt_used;
  std::string response_text;
  std::string provider_id;
  int64_t latency_ms = 0;
  std::string created_at;  // ISO 8601 UTC
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  // Single attempt; retry policy lives in summarize().
  virtual std::string complete(const std::string& prompt) = 0;
};

namespace llm_detail {

// Retryable failure (connection loss, timeout, 429/5xx).
struct TransientFailure final : Error {
  using Error::Error;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Data rows of the rendered Markdown table: pipe rows minus header and
// separator.
inline int count_prompt_rows(const std::string& prompt) {
  int pipe_lines = 0;
  size_t pos = 0;
  while (pos < prompt.size()) {
    size_t eol = prompt.find('\n', pos);
    if (eol == std::string::npos) eol = prompt.size();
    if (eol > pos && prompt[pos] == '|') ++pipe_lines;
    pos = eol + 1;
  }
  return pipe_lines >= 2 ? pipe_lines - 2 : 0;
}

}  // namespace llm_detail

// Offline provider with a fixed contract: "MOCK SUMMARY: <n> rows" for a
// table of n rows. Keeps the whole pipeline testable with no network.
class MockProvider final : public Provider {
 public:
  std::string id() const override { return "mock"; }
  std::string complete(const std::string& prompt) override {
    return "MOCK SUMMARY: " +
           std::to_string(llm_detail::count_prompt_rows(prompt)) + " rows";
  }
};

// OpenAI-style chat-completion client. Request:
//   POST {endpoint}/chat/completions
//   {"model": <model_name>, "messages": [{"role": "user", "content": <prompt>}]}
// with "Authorization: Bearer $<auth_env>" when the variable is set.
// Response: choices[0].message.content.
class HttpChatProvider final : public Provider {
 public:
  explicit HttpChatProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.endpoint.empty())
      throw ConfigError("http provider: endpoint must be set");
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw ConfigError("http provider: endpoint must include a scheme");
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    base_ = cfg_.endpoint.substr(
        0, path_start == std::string::npos ? cfg_.endpoint.size() : path_start);
    path_prefix_ =
        path_start == std::string::npos ? "" : cfg_.endpoint.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/')
      path_prefix_.pop_back();
  }

  std::string id() const override { return cfg_.provider_id; }

  std::string complete(const std::string& prompt) override {
    httplib::Client client(base_);
    client.set_connection_timeout(std::chrono::milliseconds(
        static_cast<int64_t>(cfg_.timeout_s * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(
        static_cast<int64_t>(cfg_.timeout_s * 1000)));
    client.set_write_timeout(std::chrono::milliseconds(
        static_cast<int64_t>(cfg_.timeout_s * 1000)));

    httplib::Headers headers;
    if (const char* secret = std::getenv(cfg_.auth_env.c_str());
        secret != nullptr && secret[0] != '\0')
      headers.emplace("Authorization", std::string("Bearer ") + secret);

    nlohmann::json body = {
        {"model", cfg_.model_name},
        {"messages",
         nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};

    auto res = client.Post(path_prefix_ + "/chat/completions", headers,
                           body.dump(), "application/json");
    if (!res)
      throw llm_detail::TransientFailure(
          "http provider: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403)
      throw ProviderRejected("http provider: status " +
                             std::to_string(res->status) + ": " + res->body);
    if (res->status == 429 || res->status >= 500)
      throw llm_detail::TransientFailure("http provider: status " +
                                         std::to_string(res->status));
    if (res->status != 200)
      throw ProviderRejected("http provider: unexpected status " +
                             std::to_string(res->status) + ": " + res->body);

    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse("http provider: response is not JSON: " +
                              std::string(e.what()));
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
        parsed["choices"].empty() ||
        !parsed["choices"][0].contains("message") ||
        !parsed["choices"][0]["message"].contains("content") ||
        !parsed["choices"][0]["message"]["content"].is_string())
      throw MalformedResponse(
          "http provider: missing choices[0].message.content");
    const std::string text = parsed["choices"][0]["message"]["content"];
    if (text.empty())
      throw MalformedResponse("http provider: empty completion text");
    return text;
  }

 private:
  ProviderConfig cfg_;
  std::string base_;
  std::string path_prefix_;
};

inline std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
  cfg.validate();
  if (cfg.provider_id == "mock") return std::make_unique<MockProvider>();
  return std::make_unique<HttpChatProvider>(cfg);
}

// Renders the prompt and obtains the completion verbatim, retrying transient
// failures with exponential backoff up to max_retries extra attempts.
inline AudioLogResult summarize(const EventTable& table,
                                const PromptTemplate& tmpl, Provider& provider,
                                const ProviderConfig& cfg) {
  cfg.validate();
  AudioLogResult result;
  result.prompt_used = render_prompt(table, tmpl);
  result.provider_id = provider.id();

  const auto t0 = std::chrono::steady_clock::now();
  const int attempts = cfg.max_retries + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      result.response_text = provider.complete(result.prompt_used);
      break;
    } catch (const llm_detail::TransientFailure& e) {
      if (attempt == attempts)
        throw ProviderTimeout("provider failed after " +
                                  std::to_string(attempts) + " attempts: " +
                                  e.what(),
                              attempts);
      const int64_t delay =
          static_cast<int64_t>(cfg.backoff_ms) << (attempt - 1);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
  }
  result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  result.created_at = llm_detail::utc_timestamp();
  if (result.response_text.empty())
    throw MalformedResponse("provider returned an empty summary");
  return result;
}

inline AudioLogResult summarize(const EventTable& table,
                                const PromptTemplate& tmpl,
                                const ProviderConfig& cfg) {
  auto provider = make_provider(cfg);
  return summarize(table, tmpl, *provider, cfg);
}

inline nlohmann::json result_to_json(const AudioLogResult& r) {
  return {{"prompt_used", r.prompt_used},
          {"response_text", r.response_text},
          {"provider_id", r.provider_id},
          {"latency_ms", r.latency_ms},
          {"created_at", r.created_at}};
}

}  // namespace audiolog
