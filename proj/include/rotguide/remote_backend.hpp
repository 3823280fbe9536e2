// Copyright 2026 The rotguide Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/**
 * Client for the model bridge: an HTTP service exposing the tokenizer,
 * next-token logits, sentence embeddings and the classifiers.
 *
 *   GET  /meta                 -> {"vocab_size", "eos_id", "special_ids", "embed_dim"}
 *   POST /tokenize   {"text"}  -> {"ids"}
 *   POST /detokenize {"ids"}   -> {"text"}
 *   POST /logits     {"ids", "decoder_ids"} -> {"logits"}
 *   POST /embed      {"text"}  -> {"vector"}
 *   POST /classify/safety    {"context", "response"} -> {"label", "prob"}
 *   POST /classify/agreement {"response", "rot"}     -> {"label", "prob"}
 *
 * Errors come back as 4xx/5xx with {"error": string}. Transport failures are
 * reported as retryable (ErrorKind::kTransport); malformed responses as
 * ErrorKind::kSchema naming the offending field. /meta is fetched once per
 * client; nothing else is cached.
 */

#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rotguide/backend.hpp"
#include "rotguide/common.hpp"

namespace rotguide {

struct BridgeMeta {
  std::size_t vocab_size = 0;
  TokenId eos_id = 0;
  std::vector<TokenId> special_ids;
  std::size_t embed_dim = 0;
};

class RemoteBackend final : public LmBackend, public Embedder, public ClassifierBackend {
 public:
  explicit RemoteBackend(std::string base_url, int retries = 2,
                         std::chrono::seconds timeout = std::chrono::seconds(120))
      : base_url_(std::move(base_url)), retries_(retries), timeout_(timeout) {}

  const BridgeMeta& meta() const {
    std::lock_guard lock(meta_mu_);
    if (!meta_) {
      const auto j = get("/meta");
      BridgeMeta m;
      m.vocab_size = field<std::size_t>(j, "vocab_size", "/meta");
      m.eos_id = field<TokenId>(j, "eos_id", "/meta");
      m.special_ids = field<std::vector<TokenId>>(j, "special_ids", "/meta");
      m.embed_dim = field<std::size_t>(j, "embed_dim", "/meta");
      if (m.vocab_size == 0) throw schema("/meta", "vocab_size");
      if (m.eos_id < 0 || static_cast<std::size_t>(m.eos_id) >= m.vocab_size)
        throw schema("/meta", "eos_id");
      meta_ = std::move(m);
    }
    return *meta_;
  }

  // LmBackend
  std::size_t vocab_size() const override { return meta().vocab_size; }
  TokenId eos_id() const override { return meta().eos_id; }
  std::vector<TokenId> special_ids() const override {
    auto ids = meta().special_ids;
    ids.push_back(meta().eos_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  TokenSeq tokenize(std::string_view s) const override {
    return field<TokenSeq>(post("/tokenize", {{"text", s}}), "ids", "/tokenize");
  }

  std::string detokenize(std::span<const TokenId> ids) const override {
    nlohmann::json req;
    req["ids"] = TokenSeq(ids.begin(), ids.end());
    return field<std::string>(post("/detokenize", req), "text", "/detokenize");
  }

  Vector next_logits(std::span<const TokenId> prompt,
                     std::span<const TokenId> generated) const override {
    nlohmann::json req;
    req["ids"] = TokenSeq(prompt.begin(), prompt.end());
    req["decoder_ids"] = TokenSeq(generated.begin(), generated.end());
    auto logits = field<Vector>(post("/logits", req), "logits", "/logits");
    if (logits.size() != vocab_size()) throw schema("/logits", "logits");
    return logits;
  }

  // Embedder
  std::size_t dim() const override { return meta().embed_dim; }
  Vector embed(std::string_view s) const override {
    auto v = field<Vector>(post("/embed", {{"text", s}}), "vector", "/embed");
    if (v.size() != dim()) throw schema("/embed", "vector");
    return v;
  }

  // ClassifierBackend
  std::string name() const override { return "bridge"; }

  SafetyLabel classify_safety(std::string_view context,
                              std::string_view response) const override {
    const auto j = post("/classify/safety", {{"context", context}, {"response", response}});
    const auto label = field<std::string>(j, "label", "/classify/safety");
    if (label == "safe") return SafetyLabel::kSafe;
    if (label == "unsafe") return SafetyLabel::kUnsafe;
    throw schema("/classify/safety", "label");
  }

  AgreementLabel classify_agreement(std::string_view response,
                                    std::string_view rot) const override {
    const auto j = post("/classify/agreement", {{"response", response}, {"rot", rot}});
    const auto label = field<std::string>(j, "label", "/classify/agreement");
    if (label == "agree") return AgreementLabel::kAgree;
    if (label == "other") return AgreementLabel::kOther;
    throw schema("/classify/agreement", "label");
  }

  const std::string& base_url() const noexcept { return base_url_; }

 private:
  static Error schema(const std::string& endpoint, const std::string& fieldname) {
    return Error(ErrorKind::kSchema,
                 "bridge " + endpoint + ": invalid or missing field \"" + fieldname + "\"");
  }

  template <typename T>
  static T field(const nlohmann::json& j, const char* name, const std::string& endpoint) {
    auto it = j.find(name);
    if (it == j.end()) throw schema(endpoint, name);
    try {
      return it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw schema(endpoint, name);
    }
  }

  // One client per request keeps concurrent calls independent.
  template <typename Call>
  nlohmann::json request(const std::string& endpoint, Call call) const {
    for (int attempt = 0;; ++attempt) {
      httplib::Client cli(base_url_);
      cli.set_connection_timeout(timeout_);
      cli.set_read_timeout(timeout_);
      cli.set_write_timeout(timeout_);
      auto res = call(cli);
      if (!res) {
        if (attempt < retries_) continue;
        throw Error(ErrorKind::kTransport, "bridge " + endpoint + ": transport failure (" +
                                               httplib::to_string(res.error()) + ")");
      }
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error&) {
        if (res->status >= 400)
          throw Error(ErrorKind::kBackend,
                      "bridge " + endpoint + ": HTTP " + std::to_string(res->status));
        throw Error(ErrorKind::kSchema, "bridge " + endpoint + ": response is not JSON");
      }
      if (res->status >= 400) {
        const auto msg = body.is_object() && body.contains("error") && body["error"].is_string()
                             ? body["error"].get<std::string>()
                             : std::string("(no error message)");
        throw Error(ErrorKind::kBackend,
                    "bridge " + endpoint + ": HTTP " + std::to_string(res->status) + ": " + msg);
      }
      if (!body.is_object()) throw Error(ErrorKind::kSchema, "bridge " + endpoint + ": not an object");
      return body;
    }
  }

  nlohmann::json get(const std::string& endpoint) const {
    return request(endpoint, [&](httplib::Client& c) { return c.Get(endpoint); });
  }

  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) const {
    const auto payload = body.dump();
    return request(endpoint, [&](httplib::Client& c) {
      return c.Post(endpoint, payload, "application/json");
    });
  }

  std::string base_url_;
  int retries_;
  std::chrono::seconds timeout_;
  mutable std::mutex meta_mu_;
  mutable std::optional<BridgeMeta> meta_;
};

}  // namespace rotguide
