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

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "rotguide/prompt_composer.hpp"

using namespace rotguide;

TEST_CASE("compose: single RoT in front of the context", "[prompt]") {
  const std::vector<std::string> rots{"It is bad to drive after drinking too much."};
  const std::string context =
      "I'm planning to drive home after drinking 3 bottle of wine at the winery.";
  const auto p = compose_prompt<std::string>(rots, context, " ");
  CHECK(p.text ==
        "It is bad to drive after drinking too much. I'm planning to drive home after "
        "drinking 3 bottle of wine at the winery.");
  CHECK(p.rots() == rots[0]);
  CHECK(p.context() == context);
}

TEST_CASE("compose: no RoTs leaves the context unchanged", "[prompt]") {
  const std::vector<std::string> none;
  const auto p = compose_prompt<std::string>(none, "x");
  CHECK(p.text == "x");
  CHECK(p.rot_span.empty());
  CHECK(p.context_span == Span{0, 1});
}

TEST_CASE("compose: several RoTs", "[prompt]") {
  const auto p = compose_prompt({"A.", "B.", "C."}, "x", " ");
  CHECK(p.text == "A. B. C. x");
  CHECK(p.rots() == "A. B. C.");
  CHECK(p.context() == "x");
}

TEST_CASE("compose: custom separator", "[prompt]") {
  const auto p = compose_prompt({"A.", "B."}, "x", "\n");
  CHECK(p.text == "A.\nB.\nx");
  CHECK(kDefaultSeparator == " ");
}

namespace {

std::string random_text(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(0, 12), ch('a', 'z');
  std::string s(static_cast<std::size_t>(len(rng)), ' ');
  for (auto& c : s) c = static_cast<char>(ch(rng));
  return s;
}

}  // namespace

TEST_CASE("compose: spans and length over random inputs", "[prompt][property]") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(0, 6);
  const std::string seps[] = {" ", "", " || ", "\n"};
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> rots(static_cast<std::size_t>(count(rng)));
    for (auto& r : rots) r = random_text(rng);
    const std::string context = random_text(rng) + "?";
    const std::string& sep = seps[i % 4];
    const auto p = compose_prompt<std::string>(rots, context, sep);

    std::size_t expected = context.size() + rots.size() * sep.size();
    for (const auto& r : rots) expected += r.size();
    REQUIRE(p.text.size() == expected);

    REQUIRE(p.rot_span.end <= p.context_span.begin);
    REQUIRE(p.context_span.end == p.text.size());
    REQUIRE(p.context() == context);
    // Reassemble: RoT block, trailing separator (when any RoTs), context.
    const std::string rebuilt =
        std::string(p.rots()) + (rots.empty() ? "" : sep) + std::string(p.context());
    REQUIRE(rebuilt == p.text);

    auto shuffled = rots;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto q = compose_prompt<std::string>(shuffled, context, sep);
    REQUIRE(q.context() == p.context());
    REQUIRE(q.context_span == p.context_span);
    REQUIRE(q.rot_span == p.rot_span);
  }
}
