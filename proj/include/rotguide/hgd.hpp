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
 * Norm-guided decoding.
 *
 * At every decoding step the next-token policy pi = softmax(z) is pulled
 * toward a target distribution pi* (uniform over the token ids of the selected
 * rules of thumb) by gradient ascent on the logits z:
 *
 *   J(z) = -CE(pi*, pi) - beta * KL(pi || pi_ref)
 *        = sum_v pi*_v log pi_v - beta * sum_v pi_v log(pi_v / pi_ref_v)
 *
 *   dJ/dz = (pi* - pi) - beta * pi (.) (log(pi / pi_ref) - KL(pi || pi_ref))
 *
 * pi_ref is the model's own policy at this step (the un-updated logits) and
 * stays fixed across iterations, so the KL term is a trust region around the
 * original response. The token is the argmax of the final policy.
 *
 * `HgdConfig::literal_objective` swaps in the other reading of the reward,
 * J = +CE(pi*, pi) - beta * KL(pi || pi*), for comparison. Because pi* has
 * zeros, its KL anchor is pi* floored at kLiteralTargetFloor and renormalized.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rotguide/backend.hpp"
#include "rotguide/common.hpp"

namespace rotguide {

enum class Mode { kVanilla, kIclOnly, kHgdOnly, kIclHgd };
enum class RotSource { kRetrieved, kGroundTruth, kRandom, kNone };

inline bool uses_icl(Mode m) { return m == Mode::kIclOnly || m == Mode::kIclHgd; }
inline bool uses_hgd(Mode m) { return m == Mode::kHgdOnly || m == Mode::kIclHgd; }

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kVanilla: return "vanilla";
    case Mode::kIclOnly: return "icl_only";
    case Mode::kHgdOnly: return "hgd_only";
    case Mode::kIclHgd: return "icl_hgd";
  }
  return "?";
}

inline std::string_view to_string(RotSource s) {
  switch (s) {
    case RotSource::kRetrieved: return "retrieved";
    case RotSource::kGroundTruth: return "ground_truth";
    case RotSource::kRandom: return "random";
    case RotSource::kNone: return "none";
  }
  return "?";
}

/// Accepts canonical names plus the short forms used on the command line
/// ("icl", "hgd", "icl+hgd", "icl-only", ...).
inline Mode parse_mode(std::string_view s) {
  if (s == "vanilla") return Mode::kVanilla;
  if (s == "icl_only" || s == "icl-only" || s == "icl") return Mode::kIclOnly;
  if (s == "hgd_only" || s == "hgd-only" || s == "hgd") return Mode::kHgdOnly;
  if (s == "icl_hgd" || s == "icl+hgd" || s == "icl-hgd") return Mode::kIclHgd;
  throw Error(ErrorKind::kInvalidArgument, "unknown mode '" + std::string(s) + "'");
}

inline RotSource parse_rot_source(std::string_view s) {
  if (s == "retrieved") return RotSource::kRetrieved;
  if (s == "ground_truth" || s == "ground-truth" || s == "gt") return RotSource::kGroundTruth;
  if (s == "random") return RotSource::kRandom;
  if (s == "none") return RotSource::kNone;
  throw Error(ErrorKind::kInvalidArgument, "unknown rot source '" + std::string(s) + "'");
}

struct HgdConfig {
  double beta = 0.01;
  double eta = 1.0;
  int iterations = 1;
  int max_new_tokens = 128;
  int top_k_rots = 3;
  Mode mode = Mode::kIclHgd;
  RotSource rot_source = RotSource::kRetrieved;
  bool literal_objective = false;
  std::string separator = " ";

  void validate() const {
    auto bad = [](const char* what) {
      throw Error(ErrorKind::kInvalidArgument, std::string("HgdConfig: ") + what);
    };
    if (!(beta >= 0.0) || !std::isfinite(beta)) bad("beta must be >= 0");
    if (!(eta >= 0.0) || !std::isfinite(eta)) bad("eta must be >= 0");
    if (iterations < 0) bad("iterations must be >= 0");
    if (max_new_tokens < 0) bad("max_new_tokens must be >= 0");
    if (top_k_rots < 1) bad("top_k_rots must be >= 1");
  }
};

// --- distributions ---------------------------------------------------------

inline Vector log_softmax(std::span<const double> z) {
  if (z.empty()) throw Error(ErrorKind::kInvalidArgument, "log_softmax: empty vector");
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - m);
  const double lse = m + std::log(s);
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

inline Vector softmax(std::span<const double> z) {
  Vector p = log_softmax(z);
  for (double& x : p) x = std::exp(x);
  return p;
}

/// Probability vector over the vocabulary; entries positive, sum 1.
class Policy {
 public:
  static constexpr double kSumTolerance = 1e-6;

  explicit Policy(Vector probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw Error(ErrorKind::kInvalidArgument, "Policy: empty");
    double s = 0.0;
    for (double p : probs_) {
      if (!(p > 0.0) || !std::isfinite(p))
        throw Error(ErrorKind::kInvalidArgument, "Policy: entries must be positive and finite");
      s += p;
    }
    if (std::abs(s - 1.0) > kSumTolerance)
      throw Error(ErrorKind::kInvalidArgument, "Policy: entries must sum to 1");
  }

  static Policy from_logits(std::span<const double> logits) { return Policy(softmax(logits)); }

  const Vector& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  Vector probs_;
};

/// Uniform distribution over the unique non-special token ids of the RoTs.
struct TargetDist {
  Vector probs;
  std::vector<TokenId> support;  // sorted, unique

  std::size_t size() const noexcept { return probs.size(); }
};

inline TargetDist make_target_distribution(std::span<const TokenId> rot_token_ids,
                                           std::size_t vocab_size,
                                           std::span<const TokenId> special_ids = {}) {
  if (vocab_size == 0)
    throw Error(ErrorKind::kInvalidArgument, "make_target_distribution: empty vocabulary");
  TargetDist t;
  for (TokenId id : rot_token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
      throw Error(ErrorKind::kInvalidArgument,
                  "make_target_distribution: token id " + std::to_string(id) +
                      " outside vocabulary");
    if (std::find(special_ids.begin(), special_ids.end(), id) == special_ids.end())
      t.support.push_back(id);
  }
  std::sort(t.support.begin(), t.support.end());
  t.support.erase(std::unique(t.support.begin(), t.support.end()), t.support.end());
  if (t.support.empty())
    throw Error(ErrorKind::kInvalidArgument, "RoT tokenizes to no usable tokens");
  t.probs.assign(vocab_size, 0.0);
  const double mass = 1.0 / static_cast<double>(t.support.size());
  for (TokenId id : t.support) t.probs[static_cast<std::size_t>(id)] = mass;
  return t;
}

/// KL(p || q) with 0 log 0 = 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw Error(ErrorKind::kInvalidArgument, "kl_divergence: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  return std::max(s, 0.0);
}

/// CE(target, pi) = -sum_v target_v log pi_v, skipping zero-mass target entries.
inline double cross_entropy(std::span<const double> target, std::span<const double> pi) {
  if (target.size() != pi.size())
    throw Error(ErrorKind::kInvalidArgument, "cross_entropy: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i)
    if (target[i] > 0.0) s -= target[i] * std::log(pi[i]);
  return s;
}

inline double hgd_objective(const Policy& pi, const TargetDist& target, const Policy& ref,
                            double beta) {
  if (pi.size() != target.size() || pi.size() != ref.size())
    throw Error(ErrorKind::kInvalidArgument, "hgd_objective: dimension mismatch");
  return -cross_entropy(target.probs, pi.probs()) - beta * kl_divergence(pi.probs(), ref.probs());
}

inline constexpr double kLiteralTargetFloor = 1e-12;

/// The per-step objective as a function of the logits, with its analytic
/// gradient. Holds the log of the KL anchor so repeated evaluations at
/// different z share it.
class HgdObjective {
 public:
  /// J = -CE(pi*, pi) - beta * KL(pi || softmax(ref_logits)).
  static HgdObjective guided(const TargetDist& target, std::span<const double> ref_logits,
                             double beta) {
    if (ref_logits.size() != target.size())
      throw Error(ErrorKind::kInvalidArgument, "HgdObjective: dimension mismatch");
    return HgdObjective(target, log_softmax(ref_logits), beta, +1.0);
  }

  /// J = +CE(pi*, pi) - beta * KL(pi || floor(pi*)).
  static HgdObjective literal(const TargetDist& target, double beta) {
    Vector anchor(target.size());
    double s = 0.0;
    for (std::size_t i = 0; i < anchor.size(); ++i)
      s += anchor[i] = std::max(target.probs[i], kLiteralTargetFloor);
    for (double& a : anchor) a = std::log(a / s);
    return HgdObjective(target, std::move(anchor), beta, -1.0);
  }

  double value(std::span<const double> z) const {
    const Vector logp = log_softmax(check(z));
    double fit = 0.0, kl = 0.0;
    for (std::size_t v = 0; v < logp.size(); ++v) {
      if (target_->probs[v] > 0.0) fit += target_->probs[v] * logp[v];
      kl += std::exp(logp[v]) * (logp[v] - log_anchor_[v]);
    }
    return ce_sign_ * fit - beta_ * kl;
  }

  Vector gradient(std::span<const double> z) const {
    const Vector logp = log_softmax(check(z));
    Vector p(logp.size());
    double kl = 0.0;
    for (std::size_t v = 0; v < logp.size(); ++v) {
      p[v] = std::exp(logp[v]);
      kl += p[v] * (logp[v] - log_anchor_[v]);
    }
    Vector g(p.size());
    for (std::size_t v = 0; v < p.size(); ++v)
      g[v] = ce_sign_ * (target_->probs[v] - p[v]) -
             beta_ * p[v] * (logp[v] - log_anchor_[v] - kl);
    return g;
  }

 private:
  HgdObjective(const TargetDist& target, Vector log_anchor, double beta, double ce_sign)
      : target_(&target), log_anchor_(std::move(log_anchor)), beta_(beta), ce_sign_(ce_sign) {}

  std::span<const double> check(std::span<const double> z) const {
    if (z.size() != log_anchor_.size())
      throw Error(ErrorKind::kInvalidArgument, "HgdObjective: dimension mismatch");
    return z;
  }

  const TargetDist* target_;
  Vector log_anchor_;
  double beta_;
  double ce_sign_;
};

struct StepDiagnostics {
  TokenId token = -1;
  bool guided = false;
  std::optional<double> objective_before;  // set only for guided steps
  std::optional<double> objective_after;
  double kl_to_reference = 0.0;  // KL(final policy || model policy)
};

struct HgdStep {
  Policy policy;
  StepDiagnostics diagnostics;
};

/// Lowest index wins ties.
inline TokenId greedy_argmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorKind::kInvalidArgument, "greedy_argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<TokenId>(best);
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// `config.iterations` steps of z <- z + eta * dJ/dz starting from `logits`.
/// Returns softmax of the final logits.
inline HgdStep hgd_update(std::span<const double> logits, const TargetDist& target,
                          const HgdConfig& config) {
  if (logits.size() != target.size())
    throw Error(ErrorKind::kInvalidArgument, "hgd_update: logits/target dimension mismatch");
  if (!all_finite(logits))
    throw Error(ErrorKind::kNumeric, "hgd_update: non-finite input logits");

  const auto objective = config.literal_objective
                             ? HgdObjective::literal(target, config.beta)
                             : HgdObjective::guided(target, logits, config.beta);
  Vector z(logits.begin(), logits.end());
  StepDiagnostics diag;
  diag.guided = true;
  diag.objective_before = objective.value(z);
  for (int it = 0; it < config.iterations; ++it) {
    const Vector g = objective.gradient(z);
    for (std::size_t v = 0; v < z.size(); ++v) z[v] += config.eta * g[v];
    if (!all_finite(z))
      throw Error(ErrorKind::kNumeric, "hgd_update: non-finite logits after iteration " +
                                           std::to_string(it + 1) +
                                           " (step size too large?)");
  }
  diag.objective_after = objective.value(z);

  Vector probs = softmax(z);
  if (std::any_of(probs.begin(), probs.end(), [](double p) { return !(p > 0.0); }))
    throw Error(ErrorKind::kNumeric,
                "hgd_update: updated policy underflowed to zero mass (step size too large?)");
  Policy policy(std::move(probs));
  const Vector ref = softmax(logits);
  diag.kl_to_reference = kl_divergence(policy.probs(), ref);
  diag.token = greedy_argmax(policy.probs());
  return {std::move(policy), diag};
}

struct DecodeResult {
  TokenSeq tokens;  // EOS excluded
  std::vector<StepDiagnostics> steps;
};

/// Greedy decoding; with a target, each step's policy is first updated by
/// hgd_update. Stops at EOS or after max_new_tokens.
inline DecodeResult decode(const LmBackend& lm, std::span<const TokenId> prompt,
                           const TargetDist* target, const HgdConfig& config) {
  config.validate();
  const std::size_t vocab = lm.vocab_size();
  if (target && target->size() != vocab)
    throw Error(ErrorKind::kInvalidArgument, "decode: target size differs from vocabulary");

  DecodeResult out;
  for (int step = 0; step < config.max_new_tokens; ++step) {
    Vector logits;
    try {
      logits = lm.next_logits(prompt, out.tokens);
    } catch (const Error& e) {
      throw Error(e.kind(), "decode step " + std::to_string(step) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kBackend, "decode step " + std::to_string(step) + ": " + e.what());
    }
    if (logits.size() != vocab)
      throw Error(ErrorKind::kBackend, "decode step " + std::to_string(step) +
                                           ": backend returned " +
                                           std::to_string(logits.size()) + " logits, expected " +
                                           std::to_string(vocab));
    if (!all_finite(logits))
      throw Error(ErrorKind::kBackend,
                  "decode step " + std::to_string(step) + ": non-finite logits");

    StepDiagnostics diag;
    if (target) {
      diag = hgd_update(logits, *target, config).diagnostics;
    } else {
      diag.token = greedy_argmax(softmax(logits));
    }
    out.steps.push_back(diag);
    if (diag.token == lm.eos_id()) break;
    out.tokens.push_back(diag.token);
  }
  return out;
}

}  // namespace rotguide
