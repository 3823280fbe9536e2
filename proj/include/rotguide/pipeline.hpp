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

// Single-response pipeline: select RoTs -> compose prompt -> tokenize ->
// (guided) greedy decode -> detokenize.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rotguide/backend.hpp"
#include "rotguide/dataset.hpp"
#include "rotguide/hgd.hpp"
#include "rotguide/prompt_composer.hpp"
#include "rotguide/rot_store.hpp"

namespace rotguide {

struct Backends {
  const LmBackend* lm = nullptr;
  const Embedder* embedder = nullptr;  // required for retrieved RoTs
};

struct SelectedRot {
  Rot rot;
  std::optional<double> similarity;  // retrieved only
};

struct GenerationRecord {
  DialogExample example;
  Mode mode = Mode::kVanilla;
  RotSource rot_source = RotSource::kNone;
  std::vector<SelectedRot> selected;
  Prompt prompt;
  TokenSeq prompt_tokens;
  std::vector<TokenId> target_support;  // empty when decoding is unguided
  TokenSeq response_tokens;
  std::string response;
  std::vector<StepDiagnostics> steps;
};

/// Draws k distinct entries uniformly; deterministic in `seed`.
inline std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k,
                                                 std::uint64_t seed) {
  if (k > n) throw Error(ErrorKind::kInvalidArgument, "sample_positions: k exceeds population");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

inline std::vector<SelectedRot> select_rots(const DialogExample& example, const RotIndex* index,
                                            const Backends& backends, const HgdConfig& config,
                                            std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(config.top_k_rots);
  std::vector<SelectedRot> out;
  auto need_index = [&] {
    if (!index || index->empty())
      throw Error(ErrorKind::kInvalidArgument,
                  std::string("rot source '") + std::string(to_string(config.rot_source)) +
                      "' needs a non-empty RoT index");
  };
  switch (config.rot_source) {
    case RotSource::kNone:
      break;
    case RotSource::kGroundTruth:
      if (trim(example.gt_rot).empty())
        throw Error(ErrorKind::kInvalidArgument, "ground-truth RoT is empty");
      out.push_back({Rot{"gt", example.gt_rot}, std::nullopt});
      break;
    case RotSource::kRetrieved:
      need_index();
      if (!backends.embedder)
        throw Error(ErrorKind::kInvalidArgument, "retrieved RoTs need an embedder");
      for (const auto& s : retrieve_top_k(*index, example.context, k, *backends.embedder))
        out.push_back({s.rot(), s.similarity});
      break;
    case RotSource::kRandom:
      need_index();
      for (std::size_t pos : sample_positions(index->size(), k, seed))
        out.push_back({(*index)[pos].rot, std::nullopt});
      break;
  }
  return out;
}

/// `seed` only matters for RotSource::kRandom.
inline GenerationRecord generate_response(const DialogExample& example, const RotIndex* index,
                                          const Backends& backends, const HgdConfig& config,
                                          std::uint64_t seed = 0) {
  config.validate();
  if (!backends.lm) throw Error(ErrorKind::kInvalidArgument, "generate_response: no LM backend");
  if (trim(example.context).empty())
    throw Error(ErrorKind::kInvalidArgument, "generate_response: empty context");
  const LmBackend& lm = *backends.lm;

  GenerationRecord rec;
  rec.example = example;
  rec.mode = config.mode;
  rec.rot_source = config.rot_source;
  rec.selected = select_rots(example, index, backends, config, seed);

  std::vector<std::string_view> rot_texts;
  if (uses_icl(config.mode))
    for (const auto& s : rec.selected) rot_texts.push_back(s.rot.text);
  rec.prompt = compose_prompt(std::span<const std::string_view>(rot_texts), example.context,
                              config.separator);
  rec.prompt_tokens = lm.tokenize(rec.prompt.text);

  std::optional<TargetDist> target;
  if (uses_hgd(config.mode) && !rec.selected.empty()) {
    TokenSeq rot_tokens;
    for (const auto& s : rec.selected) {
      const auto ids = lm.tokenize(s.rot.text);
      rot_tokens.insert(rot_tokens.end(), ids.begin(), ids.end());
    }
    const auto specials = lm.special_ids();
    target = make_target_distribution(rot_tokens, lm.vocab_size(), specials);
    rec.target_support = target->support;
  }

  auto decoded = decode(lm, rec.prompt_tokens, target ? &*target : nullptr, config);
  rec.response_tokens = std::move(decoded.tokens);
  rec.steps = std::move(decoded.steps);
  rec.response = lm.detokenize(rec.response_tokens);
  return rec;
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const StepDiagnostics& d) {
  nlohmann::ordered_json j;
  j["token"] = d.token;
  j["guided"] = d.guided;
  j["objective_before"] = d.objective_before ? nlohmann::ordered_json(*d.objective_before)
                                             : nlohmann::ordered_json(nullptr);
  j["objective_after"] = d.objective_after ? nlohmann::ordered_json(*d.objective_after)
                                           : nlohmann::ordered_json(nullptr);
  j["kl_to_reference"] = d.kl_to_reference;
  return j;
}

inline nlohmann::ordered_json to_json(const GenerationRecord& r, bool with_steps = true) {
  nlohmann::ordered_json j;
  j["context"] = r.example.context;
  j["gt_rot"] = r.example.gt_rot;
  j["mode"] = to_string(r.mode);
  j["rot_source"] = to_string(r.rot_source);
  auto& sel = j["selected_rots"] = nlohmann::ordered_json::array();
  for (const auto& s : r.selected) {
    nlohmann::ordered_json e;
    e["id"] = s.rot.id;
    e["text"] = s.rot.text;
    if (s.similarity) e["similarity"] = *s.similarity;
    sel.push_back(std::move(e));
  }
  j["prompt"] = r.prompt.text;
  j["prompt_tokens"] = r.prompt_tokens;
  j["target_support"] = r.target_support;
  j["response_tokens"] = r.response_tokens;
  j["response"] = r.response;
  if (with_steps) {
    auto& steps = j["steps"] = nlohmann::ordered_json::array();
    for (const auto& d : r.steps) steps.push_back(to_json(d));
  }
  return j;
}

}  // namespace rotguide
