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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "rotguide/rot_store.hpp"
#include "support/oracles.hpp"

using namespace rotguide;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<Rot> parse(const std::string& s) {
  std::istringstream in(s);
  return parse_rots(in, "mem");
}

// Builds an index straight from a table of raw vectors keyed by text.
struct VectorFixture {
  std::vector<Rot> rots;
  std::vector<std::vector<double>> raw;
  std::map<std::string, std::vector<double>> table;

  VectorFixture(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    for (std::size_t i = 0; i < n; ++i) {
      rots.push_back({"r" + std::to_string(i), "rot text " + std::to_string(i)});
      raw.push_back(testing::random_unit_vector(rng, dim));
      table[rots.back().text] = raw.back();
    }
  }
};

}  // namespace

// ── load_rots ────────────────────────────────────────────────

TEST_CASE("load_rots: two lines in file order", "[rot_store]") {
  const auto rots = parse(R"({"id":"a","text":"It's wrong to torture animals."}
{"id":"b","text":"You shouldn't harm yourself."}
)");
  REQUIRE(rots.size() == 2);
  CHECK(rots[0] == Rot{"a", "It's wrong to torture animals."});
  CHECK(rots[1].id == "b");
}

TEST_CASE("load_rots: empty input", "[rot_store]") {
  CHECK(parse("").empty());
}

TEST_CASE("load_rots: malformed line names the line number", "[rot_store]") {
  REQUIRE_THROWS_WITH(parse("{\"id\":\"a\",\"text\":\"x\"}\n{not json\n"),
                      ContainsSubstring("mem:2"));
  REQUIRE_THROWS_WITH(parse("{\"id\":\"a\"}\n"), ContainsSubstring("\"text\""));
  REQUIRE_THROWS_WITH(parse("{\"id\":\"a\",\"text\":\"   \"}\n"), ContainsSubstring("empty"));
}

TEST_CASE("load_rots: duplicate id is named", "[rot_store]") {
  REQUIRE_THROWS_WITH(parse("{\"id\":\"dup\",\"text\":\"x\"}\n{\"id\":\"dup\",\"text\":\"y\"}\n"),
                      ContainsSubstring("'dup'"));
}

TEST_CASE("load_rots: bundled sample file", "[rot_store]") {
  const auto rots = load_rots(std::string(ROTGUIDE_DATA_DIR) + "/rots.jsonl");
  CHECK(rots.size() == 30);
  REQUIRE_THROWS_AS(load_rots("/nonexistent/rots.jsonl"), Error);
}

// ── cosine ───────────────────────────────────────────────────

TEST_CASE("cosine: analytic cases", "[rot_store]") {
  const std::vector<double> x{1, 0}, y{0, 1};
  const std::vector<double> d{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)};
  CHECK(cosine(x, x) == 1.0);
  CHECK(cosine(x, y) == 0.0);
  // 1/sqrt(2); the 8-digit literal 0.70710678 is itself 1.2e-9 short of it.
  CHECK_THAT(cosine(d, x), WithinAbs(std::sqrt(0.5), 1e-12));
  CHECK_THAT(cosine(d, x), WithinAbs(0.70710678, 2e-9));
  CHECK(cosine(d, x) == cosine(x, d));
}

TEST_CASE("cosine: errors", "[rot_store]") {
  const std::vector<double> a{1, 0}, b{1, 0, 0}, zero{0, 0};
  REQUIRE_THROWS_AS(cosine(a, b), Error);
  REQUIRE_THROWS_AS(cosine(a, zero), Error);
}

// ── build_index ──────────────────────────────────────────────

TEST_CASE("build_index: normalizes embeddings", "[rot_store]") {
  testing::TableEmbedder emb(2, {{"r", {3, 4}}});
  const std::vector<Rot> rots{{"x", "r"}};
  const auto index = build_index(rots, emb);
  REQUIRE(index.size() == 1);
  CHECK(index.dim() == 2);
  CHECK_THAT(index[0].embedding[0], WithinAbs(0.6, 1e-15));
  CHECK_THAT(index[0].embedding[1], WithinAbs(0.8, 1e-15));
}

TEST_CASE("build_index: embedder failure carries the rot id", "[rot_store]") {
  testing::TableEmbedder emb(2, {{"known", {1, 0}}});
  const std::vector<Rot> rots{{"ok", "known"}, {"bad-id", "unknown"}};
  REQUIRE_THROWS_WITH(build_index(rots, emb), ContainsSubstring("bad-id"));
  REQUIRE_THROWS_AS(build_index(std::vector<Rot>{}, emb), Error);
}

TEST_CASE("build_index: 100 rots agree with the exhaustive scan", "[rot_store]") {
  std::mt19937_64 rng(11);
  VectorFixture fx(rng, 100, 8);
  testing::TableEmbedder emb(8, fx.table);
  const auto index = build_index(fx.rots, emb);
  for (const auto& e : index.entries())
    CHECK_THAT(l2_norm(e.embedding), WithinAbs(1.0, kUnitNormTolerance));
  for (int q = 0; q < 20; ++q) {
    const auto query = testing::random_unit_vector(rng, 8);
    const auto got = retrieve_top_k(index, query, 5);
    const auto want = testing::brute_force_top_k(fx.raw, query, 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(got[i].position == want[i]);
  }
}

// ── retrieve_top_k ───────────────────────────────────────────

TEST_CASE("retrieve_top_k: single entry", "[rot_store]") {
  MockEmbedder emb(16);
  const std::vector<Rot> rots{{"only", "It's wrong to torture animals."}};
  const auto index = build_index(rots, emb);
  const auto hits = retrieve_top_k(index, "anything at all", 1, emb);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].rot().id == "only");
}

TEST_CASE("retrieve_top_k: k out of range and empty query", "[rot_store]") {
  MockEmbedder emb(16);
  const std::vector<Rot> rots{{"a", "one"}, {"b", "two"}};
  const auto index = build_index(rots, emb);
  REQUIRE_THROWS_AS(retrieve_top_k(index, "q", 0, emb), Error);
  REQUIRE_THROWS_AS(retrieve_top_k(index, "q", 3, emb), Error);
  REQUIRE_THROWS_AS(retrieve_top_k(index, "   ", 1, emb), Error);
}

TEST_CASE("retrieve_top_k: ties go to the earlier entry", "[rot_store]") {
  testing::TableEmbedder emb(2, {{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 0}}, {"q", {1, 0}}});
  const std::vector<Rot> rots{{"0", "b"}, {"1", "c"}, {"2", "a"}};
  const auto index = build_index(rots, emb);
  const auto hits = retrieve_top_k(index, "q", 3, emb);
  CHECK(hits[0].position == 1);
  CHECK(hits[1].position == 2);
  CHECK(hits[2].position == 0);
}

TEST_CASE("retrieve_top_k: k1 result is a prefix of k2 result", "[rot_store][property]") {
  std::mt19937_64 rng(3);
  VectorFixture fx(rng, 200, 6);
  testing::TableEmbedder emb(6, fx.table);
  const auto index = build_index(fx.rots, emb);
  for (int q = 0; q < 30; ++q) {
    const auto query = testing::random_unit_vector(rng, 6);
    const auto full = retrieve_top_k(index, query, 20);
    for (std::size_t k = 1; k <= 20; k += 3) {
      const auto part = retrieve_top_k(index, query, k);
      for (std::size_t i = 0; i < k; ++i) REQUIRE(part[i].position == full[i].position);
    }
    CHECK(full[0].position == testing::brute_force_top_k(fx.raw, query, 1)[0]);
  }
}

TEST_CASE("retrieve_top_k: mock embedder ranks word overlap first", "[rot_store]") {
  MockEmbedder emb;
  const auto rots = load_rots(std::string(ROTGUIDE_DATA_DIR) + "/rots.jsonl");
  const auto index = build_index(rots, emb);
  const auto hits =
      retrieve_top_k(index, "I used to torture my dear old dog that I loved when I was 12.", 3, emb);
  bool found = false;
  for (const auto& h : hits) found |= h.rot().text.find("torture") != std::string::npos;
  CHECK(found);
}

TEST_CASE("retrieve_top_k: concurrent queries match sequential ones", "[rot_store]") {
  std::mt19937_64 rng(5);
  VectorFixture fx(rng, 300, 8);
  testing::TableEmbedder emb(8, fx.table);
  const auto index = build_index(fx.rots, emb);
  std::vector<std::vector<double>> queries;
  for (int i = 0; i < 64; ++i) queries.push_back(testing::random_unit_vector(rng, 8));
  std::vector<std::size_t> seq, par(queries.size());
  for (const auto& q : queries) seq.push_back(retrieve_top_k(index, q, 1)[0].position);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < 4; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = static_cast<std::size_t>(t); i < queries.size(); i += 4)
          par[i] = retrieve_top_k(index, queries[i], 1)[0].position;
      });
  }
  CHECK(seq == par);
}

// ── persistence ──────────────────────────────────────────────

TEST_CASE("index persistence: header line and exact round trip", "[rot_store]") {
  MockEmbedder emb(12);
  const auto rots = load_rots(std::string(ROTGUIDE_DATA_DIR) + "/rots.jsonl");
  const auto index = build_index(rots, emb);
  std::stringstream buf;
  save_index(index, buf);
  std::string first;
  std::istringstream lines(buf.str());
  std::getline(lines, first);
  CHECK(first == R"({"dim":12,"version":1})");

  const auto back = parse_index(buf);
  REQUIRE(back.size() == index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    CHECK(back[i].rot == index[i].rot);
    CHECK(back[i].embedding == index[i].embedding);
  }
}

TEST_CASE("index persistence: rejects bad input", "[rot_store]") {
  auto parse_idx = [](const std::string& s) {
    std::istringstream in(s);
    return parse_index(in);
  };
  REQUIRE_THROWS_AS(parse_idx(""), Error);
  REQUIRE_THROWS_AS(parse_idx("{\"dim\":2,\"version\":9}\n"), Error);
  REQUIRE_THROWS_AS(parse_idx("{\"dim\":2,\"version\":1}\n{\"id\":\"a\",\"text\":\"t\",\"embedding\":[1,0,0]}\n"),
                    Error);
  REQUIRE_THROWS_WITH(parse_idx("{\"dim\":2,\"version\":1}\n{\"id\":\"a\",\"text\":\"t\",\"embedding\":[3,4]}\n"),
                      ContainsSubstring("unit-norm"));
}

// ── retrieval_precision ──────────────────────────────────────

TEST_CASE("retrieval_precision: trivial hit and miss", "[rot_store]") {
  MockEmbedder emb(16);
  const std::vector<Rot> rots{{"a", "It's wrong to torture animals."}};
  const auto index = build_index(rots, emb);
  const std::vector<DialogExample> hit{{"I hurt a cat.", "  It's wrong to torture animals. "}};
  const std::vector<DialogExample> miss{{"I hurt a cat.", "Something else entirely."}};
  CHECK(retrieval_precision(index, hit, 1, emb) == 1.0);
  CHECK(retrieval_precision(index, miss, 1, emb) == 0.0);
  REQUIRE_THROWS_AS(retrieval_precision(index, std::vector<DialogExample>{}, 1, emb), Error);
}

TEST_CASE("retrieval_precision: 20 pairs match a hand-counted oracle", "[rot_store]") {
  std::mt19937_64 rng(17);
  VectorFixture fx(rng, 40, 6);
  std::vector<DialogExample> data;
  for (int i = 0; i < 20; ++i) {
    const std::string ctx = "context " + std::to_string(i);
    fx.table[ctx] = testing::random_unit_vector(rng, 6);
    data.push_back({ctx, fx.rots[static_cast<std::size_t>(i) * 2].text});
  }
  testing::TableEmbedder emb(6, fx.table);
  const auto index = build_index(fx.rots, emb);
  for (std::size_t k : {1u, 3u, 5u, 10u}) {
    std::size_t hits = 0;
    for (const auto& ex : data)
      for (std::size_t p : testing::brute_force_top_k(fx.raw, fx.table[ex.context], k))
        if (fx.rots[p].text == ex.gt_rot) ++hits;
    CHECK(retrieval_precision(index, data, k, emb) == static_cast<double>(hits) / 20.0);
  }
}
