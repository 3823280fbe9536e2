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

// Command-line front end. Every subcommand is a thin composition of library
// calls. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rotguide/backend.hpp"
#include "rotguide/eval.hpp"
#include "rotguide/hgd.hpp"
#include "rotguide/pipeline.hpp"
#include "rotguide/remote_backend.hpp"
#include "rotguide/rot_store.hpp"

namespace rotguide::cli {

inline constexpr const char* kBridgeUrlEnv = "ROTGUIDE_BRIDGE_URL";

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

struct BackendSet {
  std::unique_ptr<LmBackend> lm_owner;
  std::unique_ptr<Embedder> embedder_owner;
  std::vector<std::unique_ptr<ClassifierBackend>> classifier_owners;
  std::shared_ptr<RemoteBackend> remote;  // all three roles when bridged

  Backends backends() const {
    if (remote) return {remote.get(), remote.get()};
    return {lm_owner.get(), embedder_owner.get()};
  }
  Classifiers classifiers() const {
    Classifiers c;
    if (remote) {
      c.safety.push_back(remote.get());
      c.agreement.push_back(remote.get());
    } else {
      for (const auto& p : classifier_owners) {
        c.safety.push_back(p.get());
        c.agreement.push_back(p.get());
      }
    }
    return c;
  }
};

/// "mock", "bridge" (URL from ROTGUIDE_BRIDGE_URL) or an http(s):// URL.
inline BackendSet make_backends(const std::string& selector) {
  BackendSet set;
  if (selector == "mock") {
    set.lm_owner = std::make_unique<MockLm>(MockLm::demo());
    set.embedder_owner = std::make_unique<MockEmbedder>();
    set.classifier_owners.push_back(std::make_unique<LexiconClassifier>());
    return set;
  }
  std::string url = selector;
  if (selector == "bridge") {
    const char* env = std::getenv(kBridgeUrlEnv);
    if (!env || !*env)
      throw CLI::ValidationError("--backend",
                                 std::string("bridge selected but ") + kBridgeUrlEnv + " is unset");
    url = env;
  }
  if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0)
    throw CLI::ValidationError("--backend", "expected 'mock', 'bridge' or an http:// URL");
  set.remote = std::make_shared<RemoteBackend>(url);
  return set;
}

struct Options {
  std::string backend = "mock";
  std::string rots_path, index_path, out_path, dataset_path, report_path;
  std::string query, context, gt_rot;
  std::string mode = "icl_hgd";
  std::string rot_source = "retrieved";
  std::string grid;
  std::size_t k = 3;
  double beta = 0.01;
  double eta = 1.0;
  int iterations = 1;
  int max_new_tokens = 128;
  std::string separator = " ";
  bool literal_objective = false;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  std::size_t jobs = 1;
  bool pretty = false;
};

inline HgdConfig hgd_config(const Options& o) {
  HgdConfig c;
  c.beta = o.beta;
  c.eta = o.eta;
  c.iterations = o.iterations;
  c.max_new_tokens = o.max_new_tokens;
  c.top_k_rots = static_cast<int>(o.k);
  c.mode = parse_mode(o.mode);
  c.rot_source = parse_rot_source(o.rot_source);
  c.literal_objective = o.literal_objective;
  c.separator = o.separator;
  c.validate();
  return c;
}

/// Index from --index, or built in memory from --rots; empty when neither.
inline std::optional<RotIndex> obtain_index(const Options& o, const Backends& b) {
  if (!o.index_path.empty()) {
    auto index = load_index(o.index_path);
    if (b.embedder && index.dim() != b.embedder->dim())
      throw Error(ErrorKind::kInvalidArgument,
                  "index dimension " + std::to_string(index.dim()) +
                      " does not match embedder dimension " + std::to_string(b.embedder->dim()));
    return index;
  }
  if (!o.rots_path.empty()) {
    const auto rots = load_rots(o.rots_path);
    return build_index(rots, *b.embedder);
  }
  return std::nullopt;
}

/// CLI11 validator from one of the library's string parsers.
template <auto Parse>
CLI::Validator checked(const std::string& name) {
  return CLI::Validator(
      [](std::string& s) {
        try {
          (void)Parse(s);
        } catch (const Error& e) {
          return std::string(e.what());
        }
        return std::string();
      },
      name);
}

inline std::string pretty_record(const GenerationRecord& r) {
  std::string s;
  for (const auto& sel : r.selected) s += "RoT: " + sel.rot.text + "\n";
  s += "User: " + r.example.context + "\n";
  s += "Agent: " + r.response + "\n";
  return s;
}

inline int run_command(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                       std::ostream& err) {
  CLI::App app{"rule-of-thumb grounded response generation", "rotguide"};
  app.require_subcommand(1);
  Options o;

  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", o.backend,
                    "mock | bridge (URL from " + std::string(kBridgeUrlEnv) + ") | http://host:port")
        ->capture_default_str();
  };
  auto add_index_source = [&](CLI::App* sub) {
    auto* idx = sub->add_option("--index", o.index_path, "persisted index (JSONL)")
                    ->check(CLI::ExistingFile);
    sub->add_option("--rots", o.rots_path, "RoT file to index in memory")
        ->check(CLI::ExistingFile)
        ->excludes(idx);
  };
  auto add_decoding = [&](CLI::App* sub) {
    sub->add_option("--mode", o.mode, "vanilla | icl | hgd | icl+hgd")
        ->check(checked<parse_mode>("MODE"))
        ->capture_default_str();
    sub->add_option("--rot-source", o.rot_source, "retrieved | gt | random | none")
        ->check(checked<parse_rot_source>("SOURCE"))
        ->capture_default_str();
    sub->add_option("--k", o.k, "RoTs per response")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--beta", o.beta, "KL coefficient")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--eta", o.eta, "step size")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--iterations", o.iterations, "updates per token")
        ->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--max-new-tokens", o.max_new_tokens)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--separator", o.separator, "text between RoTs and context");
    sub->add_flag("--literal-objective", o.literal_objective, "use the literal reward reading");
    sub->add_option("--seed", o.seed, "seed for random RoT selection")->capture_default_str();
    sub->add_flag("--pretty", o.pretty, "human-readable output");
  };

  auto* index_cmd = app.add_subcommand("index", "embed a RoT file and persist the index");
  index_cmd->add_option("--rots", o.rots_path)->required()->check(CLI::ExistingFile);
  index_cmd->add_option("--out", o.out_path)->required();
  add_backend(index_cmd);

  auto* retrieve_cmd = app.add_subcommand("retrieve", "top-k RoTs for a query");
  retrieve_cmd->add_option("--query", o.query)->required();
  retrieve_cmd->add_option("--k", o.k)->check(CLI::PositiveNumber)->capture_default_str();
  retrieve_cmd->add_flag("--pretty", o.pretty);
  add_index_source(retrieve_cmd);
  add_backend(retrieve_cmd);

  auto* generate_cmd = app.add_subcommand("generate", "generate one response");
  generate_cmd->add_option("--context", o.context)->required();
  generate_cmd->add_option("--gt-rot", o.gt_rot, "ground-truth RoT (for --rot-source gt)");
  add_index_source(generate_cmd);
  add_decoding(generate_cmd);
  add_backend(generate_cmd);

  auto* chat_cmd = app.add_subcommand("chat", "terminal loop: one response per input line");
  add_index_source(chat_cmd);
  add_decoding(chat_cmd);
  add_backend(chat_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "run an ablation grid and score it");
  eval_cmd->add_option("--dataset", o.dataset_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--grid", o.grid, "mode:rot_source,... (default: full grid)")
      ->check(checked<parse_grid>("GRID"));
  eval_cmd->add_option("--limit", o.limit, "seeded subsample size (0 = all)")->capture_default_str();
  eval_cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--report", o.report_path, "also write the JSON report here");
  add_index_source(eval_cmd);
  add_decoding(eval_cmd);
  add_backend(eval_cmd);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  try {
    auto set = make_backends(o.backend);
    const Backends b = set.backends();

    if (index_cmd->parsed()) {
      const auto index = build_index(load_rots(o.rots_path), *b.embedder);
      std::ofstream f(o.out_path);
      if (!f) throw Error(ErrorKind::kInvalidArgument, "cannot write '" + o.out_path + "'");
      save_index(index, f);
      nlohmann::ordered_json j;
      j["entries"] = index.size();
      j["dim"] = index.dim();
      j["out"] = o.out_path;
      out << j.dump() << '\n';
      return kOk;
    }

    if (retrieve_cmd->parsed()) {
      const auto index = obtain_index(o, b);
      if (!index) throw CLI::ValidationError("retrieve", "--index or --rots is required");
      const auto hits = retrieve_top_k(*index, o.query, o.k, *b.embedder);
      if (o.pretty) {
        for (const auto& h : hits) out << h.similarity << "\t" << h.rot().text << '\n';
      } else {
        auto j = nlohmann::ordered_json::array();
        for (const auto& h : hits)
          j.push_back({{"id", h.rot().id}, {"text", h.rot().text}, {"similarity", h.similarity}});
        out << j.dump() << '\n';
      }
      return kOk;
    }

    const HgdConfig config = hgd_config(o);
    const auto index = obtain_index(o, b);
    const RotIndex* index_ptr = index ? &*index : nullptr;

    if (generate_cmd->parsed()) {
      const auto rec = generate_response({o.context, o.gt_rot}, index_ptr, b, config, o.seed);
      out << (o.pretty ? pretty_record(rec) : to_json(rec).dump(2) + "\n");
      return kOk;
    }

    if (chat_cmd->parsed()) {
      // Each line is answered independently; nothing carries across turns.
      std::string line;
      if (o.pretty) out << "> " << std::flush;
      while (std::getline(in, line)) {
        if (!trim(line).empty()) {
          const auto rec = generate_response({line, o.gt_rot}, index_ptr, b, config, o.seed);
          out << (o.pretty ? "Agent: " + rec.response + "\n" : to_json(rec, false).dump() + "\n");
        }
        if (o.pretty) out << "> " << std::flush;
      }
      return kOk;
    }

    if (eval_cmd->parsed()) {
      const auto dataset = subsample(load_dataset(o.dataset_path), o.limit, o.seed);
      const auto grid = o.grid.empty() ? default_grid() : parse_grid(o.grid);
      AblationOptions opts;
      opts.config = config;
      opts.seed = o.seed;
      opts.jobs = o.jobs;
      std::set<std::size_t> ks = {1, 3, o.k};
      opts.precision_ks.assign(ks.begin(), ks.end());
      const auto report = run_ablation(dataset, index_ptr, b, grid, set.classifiers(), opts);
      const auto json = to_json(report).dump(2) + "\n";
      if (!o.report_path.empty()) {
        std::ofstream f(o.report_path, std::ios::binary);
        if (!f) throw Error(ErrorKind::kInvalidArgument, "cannot write '" + o.report_path + "'");
        f << json;
      }
      out << (o.pretty ? format_table(report) : json);
      return kOk;
    }
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

inline int run_command(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cin, std::cout, std::cerr);
}

}  // namespace rotguide::cli
