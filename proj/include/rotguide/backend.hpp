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
 * Capability contracts for the models the engine drives, plus a deterministic
 * mock family that needs no weights and no network.
 *
 * All backends are used through const references and must tolerate
 * concurrent calls. Logits, not probabilities, cross this boundary: the
 * decoder owns the softmax.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rotguide/common.hpp"
#include "rotguide/text.hpp"

namespace rotguide {

class LmBackend {
 public:
  virtual ~LmBackend() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos_id() const = 0;
  virtual std::vector<TokenId> special_ids() const = 0;

  virtual TokenSeq tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;

  // Prompt and generated prefix are passed separately so encoder-decoder
  // backends can route them to the right side of the model. Decoder-only
  // backends treat them as one concatenated sequence.
  virtual Vector next_logits(std::span<const TokenId> prompt,
                             std::span<const TokenId> generated) const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Vector embed(std::string_view text) const = 0;
};

enum class SafetyLabel { kSafe, kUnsafe };
enum class AgreementLabel { kAgree, kOther };

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::string name() const = 0;
  virtual SafetyLabel classify_safety(std::string_view context,
                                      std::string_view response) const = 0;
  virtual AgreementLabel classify_agreement(std::string_view response,
                                            std::string_view rot) const = 0;
};

// ---------------------------------------------------------------------------
// Mock language model: word-level vocabulary and a bigram logit table.
// next_logits(seq) is the row of the table indexed by the last token.
// detokenize(tokenize(t)) reproduces t lowercased, with single spaces between
// words, no space before punctuation, and unknown words replaced by the unk
// token's surface form.
// ---------------------------------------------------------------------------
class MockLm final : public LmBackend {
 public:
  struct Specials {
    TokenId eos = 0;
    TokenId unk = -1;  // -1: tokenize rejects out-of-vocabulary words
    std::vector<TokenId> others;
  };

  MockLm(std::vector<std::string> tokens, std::vector<Vector> bigram,
         Specials specials)
      : tokens_(std::move(tokens)),
        bigram_(std::move(bigram)),
        specials_(std::move(specials)) {
    const auto v = tokens_.size();
    if (v == 0) throw Error(ErrorKind::kInvalidArgument, "MockLm: empty vocabulary");
    if (bigram_.size() != v)
      throw Error(ErrorKind::kInvalidArgument, "MockLm: bigram table must be V x V");
    for (const auto& row : bigram_) {
      if (row.size() != v)
        throw Error(ErrorKind::kInvalidArgument, "MockLm: bigram table must be V x V");
      for (double x : row)
        if (!std::isfinite(x))
          throw Error(ErrorKind::kInvalidArgument, "MockLm: non-finite bigram entry");
    }
    auto check = [v](TokenId id, const char* what) {
      if (id < 0 || static_cast<std::size_t>(id) >= v)
        throw Error(ErrorKind::kInvalidArgument,
                    std::string("MockLm: ") + what + " id out of range");
    };
    check(specials_.eos, "eos");
    if (specials_.unk >= 0) check(specials_.unk, "unk");
    for (TokenId id : specials_.others) check(id, "special");
    for (std::size_t i = 0; i < v; ++i) {
      if (!lookup_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw Error(ErrorKind::kInvalidArgument,
                    "MockLm: duplicate token '" + tokens_[i] + "'");
    }
  }

  std::size_t vocab_size() const override { return tokens_.size(); }
  TokenId eos_id() const override { return specials_.eos; }

  std::vector<TokenId> special_ids() const override {
    std::vector<TokenId> ids = specials_.others;
    ids.push_back(specials_.eos);
    if (specials_.unk >= 0) ids.push_back(specials_.unk);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  const std::string& token(TokenId id) const {
    return tokens_.at(static_cast<std::size_t>(id));
  }

  TokenId id_of(std::string_view word) const {
    auto it = lookup_.find(std::string(word));
    if (it == lookup_.end())
      throw Error(ErrorKind::kInvalidArgument,
                  "MockLm: unknown token '" + std::string(word) + "'");
    return it->second;
  }

  TokenSeq tokenize(std::string_view s) const override {
    TokenSeq ids;
    for (const auto& w : text::split_words(s)) {
      auto it = lookup_.find(w);
      if (it != lookup_.end()) {
        ids.push_back(it->second);
      } else if (specials_.unk >= 0) {
        ids.push_back(specials_.unk);
      } else {
        throw Error(ErrorKind::kInvalidArgument,
                    "MockLm: out-of-vocabulary word '" + w + "'");
      }
    }
    return ids;
  }

  std::string detokenize(std::span<const TokenId> ids) const override {
    std::string out;
    for (TokenId id : ids) {
      if (id == specials_.eos) continue;
      const auto& t = token(id);
      if (!out.empty() && !text::is_punct_token(t)) out.push_back(' ');
      out += t;
    }
    return out;
  }

  /// Row of the bigram table for the last token of `seq`.
  const Vector& logits_after(std::span<const TokenId> seq) const {
    if (seq.empty())
      throw Error(ErrorKind::kInvalidArgument, "MockLm: empty token sequence");
    const TokenId last = seq.back();
    if (last < 0 || static_cast<std::size_t>(last) >= tokens_.size())
      throw Error(ErrorKind::kInvalidArgument,
                  "MockLm: token id " + std::to_string(last) + " out of range");
    return bigram_[static_cast<std::size_t>(last)];
  }

  Vector next_logits(std::span<const TokenId> prompt,
                     std::span<const TokenId> generated) const override {
    return generated.empty() ? logits_after(prompt) : logits_after(generated);
  }

  /// Built-in demo model used by the CLI's `--backend mock`. Vocabulary is a
  /// fixed list of everyday and norm-related words; the table is seeded noise
  /// with end-of-sentence punctuation favouring EOS.
  static MockLm demo(std::uint64_t seed = 20240117) {
    static constexpr std::string_view kWords[] = {
        "<pad>", "<eos>", "<unk>", ".", ",", "!", "?",
        "i", "you", "it", "it's", "is", "are", "am", "was", "to", "the", "a",
        "and", "or", "but", "that", "this", "your", "my", "me", "they", "them",
        "do", "don't", "not", "shouldn't", "should", "never", "always", "can",
        "be", "have", "good", "bad", "wrong", "right", "safe", "careful",
        "sorry", "hope", "think", "know", "feel", "help", "hurt", "harm",
        "yourself", "others", "people", "someone", "animals", "pet", "dog",
        "torture", "drive", "driving", "drunk", "drinking", "after", "too",
        "much", "kids", "dangerous", "things", "apologize", "mistreated",
        "fun", "sounds", "like", "lot", "of", "what", "kind", "love", "great",
        "okay", "ok", "so", "really", "please", "talk", "about", "how", "why",
        "get", "go", "home", "friend", "make", "laugh", "at", "cruel", "act",
        "steal", "lie", "honest", "kill", "respect", "trust", "money", "with",
        "when", "for", "in", "on", "no", "yes", "more", "better", "idea",
        "nice", "well", "happy", "sad", "thing", "stop", "ask", "care",
    };
    std::vector<std::string> words(std::begin(kWords), std::end(kWords));
    const std::size_t v = words.size();
    std::vector<Vector> table(v, Vector(v, 0.0));
    const TokenId eos = 1;
    for (std::size_t i = 0; i < v; ++i) {
      for (std::size_t j = 0; j < v; ++j) {
        table[i][j] = 2.0 * text::hashed_unit(seed ^ (i * v + j) * 0x100000001b3ULL);
      }
      table[i][0] = -8.0;  // <pad>
      table[i][2] = -8.0;  // <unk>
      const bool sentence_end = words[i] == "." || words[i] == "!" || words[i] == "?";
      table[i][static_cast<std::size_t>(eos)] = sentence_end ? 1.5 : -1.0;
    }
    return MockLm(std::move(words), std::move(table), Specials{eos, 2, {0}});
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<Vector> bigram_;
  Specials specials_;
  std::unordered_map<std::string, TokenId> lookup_;
};

// ---------------------------------------------------------------------------
// Hashed bag-of-words embedder: each word maps to a fixed pseudo-random
// direction; the text vector is their sum. Texts sharing words are closer.
// ---------------------------------------------------------------------------
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(std::size_t dim = 256, std::uint64_t seed = 0x5eedULL)
      : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw Error(ErrorKind::kInvalidArgument, "MockEmbedder: dim must be > 0");
  }

  std::size_t dim() const override { return dim_; }

  Vector embed(std::string_view s) const override {
    const auto trimmed = trim(s);
    if (trimmed.empty())
      throw Error(ErrorKind::kInvalidArgument, "MockEmbedder: empty text");
    std::vector<std::string> words;
    for (auto& w : text::split_words(trimmed))
      if (!text::is_punct_token(w)) words.push_back(std::move(w));
    if (words.empty()) words.emplace_back(trimmed);

    Vector v(dim_, 0.0);
    for (const auto& w : words) {
      const std::uint64_t h = text::fnv1a(w) ^ seed_;
      for (std::size_t i = 0; i < dim_; ++i)
        v[i] += text::hashed_unit(h + 0x9e3779b97f4a7c15ULL * (i + 1));
    }
    return v;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Desk-scale classifier. Safety: a response is safe when it contains at least
// one cautionary word. Agreement: at least a third of the RoT's content words
// appear in the response. Not a substitute for trained classifiers.
// ---------------------------------------------------------------------------
class LexiconClassifier final : public ClassifierBackend {
 public:
  std::string name() const override { return "lexicon"; }

  SafetyLabel classify_safety(std::string_view /*context*/,
                              std::string_view response) const override {
    static const std::unordered_set<std::string> kCaution = {
        "not", "don't", "shouldn't", "never", "wrong", "bad", "careful",
        "safe", "stop", "harm", "hurt", "dangerous", "sorry", "apologize",
        "respect", "honest", "help", "care"};
    for (const auto& w : text::split_words(response))
      if (kCaution.count(w)) return SafetyLabel::kSafe;
    return SafetyLabel::kUnsafe;
  }

  AgreementLabel classify_agreement(std::string_view response,
                                    std::string_view rot) const override {
    const auto rot_words = content_words(rot);
    if (rot_words.empty()) return AgreementLabel::kOther;
    const auto resp_words = content_words(response);
    std::size_t hit = 0;
    for (const auto& w : rot_words) hit += resp_words.count(w);
    return 3 * hit >= rot_words.size() ? AgreementLabel::kAgree
                                       : AgreementLabel::kOther;
  }

 private:
  static std::unordered_set<std::string> content_words(std::string_view s) {
    static const std::unordered_set<std::string> kStop = {
        "the", "a", "an", "to", "and", "or", "of", "it", "it's", "is", "are",
        "you", "your", "i", "my", "be", "that", "this", "when", "with", "for",
        "in", "on", "at", "too", "much"};
    std::unordered_set<std::string> out;
    for (auto& w : text::split_words(s))
      if (!text::is_punct_token(w) && !kStop.count(w)) out.insert(std::move(w));
    return out;
  }
};

}  // namespace rotguide
