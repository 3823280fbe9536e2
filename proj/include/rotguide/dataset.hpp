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

#include <fstream>
#include <functional>
#include <istream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rotguide/common.hpp"

namespace rotguide {

/// One evaluation item: a user's first turn and its annotated RoT.
struct DialogExample {
  std::string context;
  std::string gt_rot;
};

namespace detail {

/// Calls `fn(json, line_number)` for every non-blank line of a JSON Lines
/// stream. Line numbers are 1-based.
inline void for_each_jsonl(
    std::istream& in, const std::string& source,
    const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::kParse, source + ":" + std::to_string(lineno) +
                                         ": malformed JSON: " + e.what());
    }
    if (!j.is_object())
      throw Error(ErrorKind::kParse,
                  source + ":" + std::to_string(lineno) + ": expected a JSON object");
    fn(j, lineno);
  }
}

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot open '" + path + "'");
  return in;
}

inline std::string require_string(const nlohmann::json& j, const char* field,
                                  const std::string& where) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string())
    throw Error(ErrorKind::kParse,
                where + ": field \"" + field + "\" missing or not a string");
  return it->get<std::string>();
}

}  // namespace detail

inline std::vector<DialogExample> parse_dataset(std::istream& in,
                                                const std::string& source = "<dataset>") {
  std::vector<DialogExample> out;
  detail::for_each_jsonl(in, source, [&](const nlohmann::json& j, std::size_t lineno) {
    const auto where = source + ":" + std::to_string(lineno);
    DialogExample ex{detail::require_string(j, "context", where),
                     detail::require_string(j, "rot", where)};
    if (trim(ex.context).empty())
      throw Error(ErrorKind::kParse, where + ": empty context");
    out.push_back(std::move(ex));
  });
  return out;
}

/// Dataset file: one {"context": str, "rot": str} per line.
inline std::vector<DialogExample> load_dataset(const std::string& path) {
  auto in = detail::open_or_throw(path);
  return parse_dataset(in, path);
}

}  // namespace rotguide
