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
 * Rule-of-thumb storage and dense retrieval.
 *
 * Embeddings are L2-normalized once at build time, so query scoring is a dot
 * product against every entry (exact scan; a few thousand rules is small).
 * Ranking is by descending similarity, ties going to the earlier entry.
 * A RotIndex is immutable once built and safe to query from many threads.
 */

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "rotguide/backend.hpp"
#include "rotguide/common.hpp"
#include "rotguide/dataset.hpp"

namespace rotguide {

struct Rot {
  std::string id;
  std::string text;

  friend bool operator==(const Rot&, const Rot&) = default;
};

struct EmbeddedRot {
  Rot rot;
  Vector embedding;  // unit L2 norm
};

inline constexpr double kUnitNormTolerance = 1e-6;

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline Vector l2_normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n))
    throw Error(ErrorKind::kNumeric, "cannot normalize a zero or non-finite vector");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::kInvalidArgument,
                "cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  const double na = l2_norm(a), nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "cosine: zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

class RotIndex {
 public:
  RotIndex() = default;

  /// Validates dimension, unit norm and id uniqueness.
  RotIndex(std::vector<EmbeddedRot> entries, std::size_t dim)
      : entries_(std::move(entries)), dim_(dim) {
    if (dim_ == 0) throw Error(ErrorKind::kInvalidArgument, "RotIndex: dim must be > 0");
    std::unordered_set<std::string> ids;
    for (const auto& e : entries_) {
      if (e.embedding.size() != dim_)
        throw Error(ErrorKind::kInvalidArgument,
                    "RotIndex: entry '" + e.rot.id + "' has dimension " +
                        std::to_string(e.embedding.size()) + ", expected " +
                        std::to_string(dim_));
      if (std::abs(l2_norm(e.embedding) - 1.0) > kUnitNormTolerance)
        throw Error(ErrorKind::kInvalidArgument,
                    "RotIndex: entry '" + e.rot.id + "' is not unit-norm");
      if (!ids.insert(e.rot.id).second)
        throw Error(ErrorKind::kInvalidArgument, "RotIndex: duplicate id '" + e.rot.id + "'");
    }
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<EmbeddedRot>& entries() const noexcept { return entries_; }
  const EmbeddedRot& operator[](std::size_t i) const { return entries_.at(i); }

 private:
  std::vector<EmbeddedRot> entries_;
  std::size_t dim_ = 0;
};

// --- ingestion -------------------------------------------------------------

inline std::vector<Rot> parse_rots(std::istream& in, const std::string& source = "<rots>") {
  std::vector<Rot> out;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(in, source, [&](const nlohmann::json& j, std::size_t lineno) {
    const auto where = source + ":" + std::to_string(lineno);
    Rot r{detail::require_string(j, "id", where), detail::require_string(j, "text", where)};
    if (trim(r.text).empty()) throw Error(ErrorKind::kParse, where + ": empty RoT text");
    if (!seen.insert(r.id).second)
      throw Error(ErrorKind::kParse, where + ": duplicate RoT id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

/// RoT file: JSON Lines, one {"id": str, "text": str} per line.
inline std::vector<Rot> load_rots(const std::string& path) {
  auto in = detail::open_or_throw(path);
  return parse_rots(in, path);
}

inline RotIndex build_index(std::span<const Rot> rots, const Embedder& embedder) {
  if (rots.empty()) throw Error(ErrorKind::kInvalidArgument, "build_index: no RoTs");
  std::vector<EmbeddedRot> entries;
  entries.reserve(rots.size());
  for (const auto& r : rots) {
    try {
      auto v = embedder.embed(r.text);
      if (v.size() != embedder.dim())
        throw Error(ErrorKind::kBackend, "embedder returned dimension " +
                                             std::to_string(v.size()));
      entries.push_back({r, l2_normalized(v)});
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kBackend,
                  "build_index: embedding RoT '" + r.id + "' failed: " + e.what());
    }
  }
  return RotIndex(std::move(entries), embedder.dim());
}

// --- persistence -----------------------------------------------------------
// Header line {"dim": d, "version": 1}, then one {"id","text","embedding"}
// per entry, in index order.

inline constexpr int kIndexFormatVersion = 1;

inline void save_index(const RotIndex& index, std::ostream& out) {
  nlohmann::ordered_json header;
  header["dim"] = index.dim();
  header["version"] = kIndexFormatVersion;
  out << header.dump() << '\n';
  for (const auto& e : index.entries()) {
    nlohmann::ordered_json j;
    j["id"] = e.rot.id;
    j["text"] = e.rot.text;
    j["embedding"] = e.embedding;
    out << j.dump() << '\n';
  }
}

inline RotIndex parse_index(std::istream& in, const std::string& source = "<index>") {
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<EmbeddedRot> entries;
  detail::for_each_jsonl(in, source, [&](const nlohmann::json& j, std::size_t lineno) {
    const auto where = source + ":" + std::to_string(lineno);
    if (!have_header) {
      if (!j.contains("dim") || !j["dim"].is_number_unsigned() || !j.contains("version"))
        throw Error(ErrorKind::kParse, where + ": expected header {\"dim\", \"version\"}");
      if (j["version"] != kIndexFormatVersion)
        throw Error(ErrorKind::kParse, where + ": unsupported index version");
      dim = j["dim"].get<std::size_t>();
      have_header = true;
      return;
    }
    auto emb = j.find("embedding");
    if (emb == j.end() || !emb->is_array())
      throw Error(ErrorKind::kParse, where + ": field \"embedding\" missing");
    EmbeddedRot e{{detail::require_string(j, "id", where),
                   detail::require_string(j, "text", where)},
                  {}};
    try {
      e.embedding = emb->get<Vector>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::kParse, where + ": field \"embedding\" must be numbers");
    }
    entries.push_back(std::move(e));
  });
  if (!have_header) throw Error(ErrorKind::kParse, source + ": missing index header");
  return RotIndex(std::move(entries), dim);
}

inline RotIndex load_index(const std::string& path) {
  auto in = detail::open_or_throw(path);
  return parse_index(in, path);
}

// --- retrieval -------------------------------------------------------------

struct ScoredRot {
  const EmbeddedRot* entry = nullptr;
  std::size_t position = 0;  // ingestion order
  double similarity = 0.0;

  const Rot& rot() const { return entry->rot; }
};

/// Top-k by cosine for an already-computed query vector (any non-zero norm).
inline std::vector<ScoredRot> retrieve_top_k(const RotIndex& index,
                                             std::span<const double> query,
                                             std::size_t k) {
  if (k < 1 || k > index.size())
    throw Error(ErrorKind::kInvalidArgument,
                "retrieve_top_k: k=" + std::to_string(k) + " outside [1, " +
                    std::to_string(index.size()) + "]");
  if (query.size() != index.dim())
    throw Error(ErrorKind::kInvalidArgument, "retrieve_top_k: query dimension mismatch");
  const Vector q = l2_normalized(query);

  std::vector<ScoredRot> scored(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& e = index.entries()[i];
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * e.embedding[d];
    scored[i] = {&e, i, dot};
  }
  const auto ranks_before = [](const ScoredRot& a, const ScoredRot& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.position < b.position;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                    scored.end(), ranks_before);
  scored.resize(k);
  return scored;
}

inline std::vector<ScoredRot> retrieve_top_k(const RotIndex& index, std::string_view query,
                                             std::size_t k, const Embedder& embedder) {
  if (trim(query).empty())
    throw Error(ErrorKind::kInvalidArgument, "retrieve_top_k: empty query");
  const auto q = embedder.embed(query);
  return retrieve_top_k(index, q, k);
}

/// Fraction of contexts whose top-k contains a RoT whose trimmed text equals
/// the trimmed ground-truth text.
inline double retrieval_precision(const RotIndex& index,
                                  std::span<const DialogExample> dataset, std::size_t k,
                                  const Embedder& embedder) {
  if (dataset.empty())
    throw Error(ErrorKind::kInvalidArgument, "retrieval_precision: empty dataset");
  std::size_t hits = 0;
  for (const auto& ex : dataset) {
    const auto gt = trim(ex.gt_rot);
    for (const auto& s : retrieve_top_k(index, ex.context, k, embedder)) {
      if (trim(s.rot().text) == gt) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

}  // namespace rotguide
