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

#include <initializer_list>
#include <span>
#include <string>
#include <string_view>

namespace rotguide {

/// Half-open character range [begin, end) into Prompt::text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return begin == end; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Prompt {
  std::string text;
  Span rot_span;      // r1 sep r2 ... rk (without the trailing separator)
  Span context_span;  // the user context

  std::string_view rots() const {
    return std::string_view(text).substr(rot_span.begin, rot_span.size());
  }
  std::string_view context() const {
    return std::string_view(text).substr(context_span.begin, context_span.size());
  }
};

inline constexpr std::string_view kDefaultSeparator = " ";

/// Plain concatenation r1 + sep + ... + rk + sep + context. No instructions or
/// role markers are added. With no RoTs the prompt is the bare context.
template <typename RotText = std::string>
Prompt compose_prompt(std::span<const RotText> rots, std::string_view context,
                      std::string_view separator = kDefaultSeparator) {
  Prompt p;
  for (const auto& r : rots) {
    p.text.append(std::string_view(r));
    p.text.append(separator);
  }
  p.rot_span = {0, rots.empty() ? 0 : p.text.size() - separator.size()};
  p.context_span = {p.text.size(), p.text.size() + context.size()};
  p.text.append(context);
  return p;
}

inline Prompt compose_prompt(std::initializer_list<std::string_view> rots,
                             std::string_view context,
                             std::string_view separator = kDefaultSeparator) {
  return compose_prompt(std::span<const std::string_view>(rots.begin(), rots.size()),
                        context, separator);
}

}  // namespace rotguide
