#pragma once

// Per-dimension 256-bin action discretization and the 16-slot hybrid-arm
// layout (left arm in slots [0,8), right arm in slots [8,16)).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dexkit/canonical_json.hpp"
#include "dexkit/error.hpp"

namespace dexkit::codec {

inline constexpr int kBins = 256;
inline constexpr std::size_t kHybridSlots = 16;
inline constexpr std::size_t kHalfSlots = kHybridSlots / 2;

using TokenId = int;

struct BoundsPolicy {
  enum class Kind { MinMax, Quantile };
  Kind kind = Kind::Quantile;
  double q = 0.01;

  static BoundsPolicy min_max() { return {Kind::MinMax, 0.0}; }
  static BoundsPolicy quantile(double q) { return {Kind::Quantile, q}; }

  bool operator==(const BoundsPolicy&) const = default;
};

/// Per-dimension bounds for 256-bin quantization.
class ActionSpace {
 public:
  ActionSpace() = default;
  ActionSpace(std::vector<double> lo, std::vector<double> hi, BoundsPolicy policy = {})
      : lo_(std::move(lo)), hi_(std::move(hi)), policy_(policy) {
    if (lo_.size() != hi_.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "lo has " + std::to_string(lo_.size()) + " dims, hi has " + std::to_string(hi_.size()));
    }
    for (std::size_t d = 0; d < lo_.size(); ++d) {
      if (!std::isfinite(lo_[d]) || !std::isfinite(hi_[d]) || lo_[d] > hi_[d]) {
        throw Error(ErrorCode::BadConfig, "invalid bounds for dim " + std::to_string(d));
      }
    }
  }

  std::size_t dims() const { return lo_.size(); }
  static constexpr int bins() { return kBins; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  const BoundsPolicy& policy() const { return policy_; }
  bool degenerate(std::size_t d) const { return lo_[d] == hi_[d]; }

  bool operator==(const ActionSpace&) const = default;

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
  BoundsPolicy policy_;
};

// ---------------------------------------------------------------------------
// Bounds fitting

namespace detail {

/// Linear-interpolated empirical quantile of sorted values.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(h));
  const std::size_t above = std::min(below + 1, sorted.size() - 1);
  return sorted[below] + (h - static_cast<double>(below)) * (sorted[above] - sorted[below]);
}

}  // namespace detail

/// Fits per-dimension bounds to a non-empty set of equal-length action vectors.
template <typename Range>
ActionSpace fit_space(const Range& actions, BoundsPolicy policy = {}) {
  if (policy.kind == BoundsPolicy::Kind::Quantile && !(policy.q > 0.0 && policy.q < 0.5)) {
    throw Error(ErrorCode::BadConfig, "quantile must lie in (0, 0.5)");
  }
  std::vector<std::vector<double>> columns;
  bool first = true;
  for (const auto& row : actions) {
    if (first) {
      columns.resize(std::size(row));
      first = false;
    } else if (std::size(row) != columns.size()) {
      throw Error(ErrorCode::RaggedDimensions,
                  "vector of length " + std::to_string(std::size(row)) + " in a " + std::to_string(columns.size()) + "-dim stream");
    }
    std::size_t d = 0;
    for (double x : row) {
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteAction, "non-finite action value");
      columns[d++].push_back(x);
    }
  }
  if (first) throw Error(ErrorCode::EmptyStream, "no action vectors");

  std::vector<double> lo(columns.size()), hi(columns.size());
  for (std::size_t d = 0; d < columns.size(); ++d) {
    auto& col = columns[d];
    if (policy.kind == BoundsPolicy::Kind::MinMax) {
      auto [mn, mx] = std::minmax_element(col.begin(), col.end());
      lo[d] = *mn;
      hi[d] = *mx;
    } else {
      std::sort(col.begin(), col.end());
      lo[d] = detail::sorted_quantile(col, policy.q);
      hi[d] = detail::sorted_quantile(col, 1.0 - policy.q);
    }
  }
  return ActionSpace(std::move(lo), std::move(hi), policy);
}

// ---------------------------------------------------------------------------
// Quantization

/// Bin index of x for one dimension, before clamping.
inline double raw_bin(double x, double lo, double hi) { return std::floor((x - lo) / (hi - lo) * kBins); }

inline TokenId quantize_value(double x, double lo, double hi) {
  if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteAction, "cannot quantize a non-finite value");
  if (lo == hi) return 0;
  return static_cast<TokenId>(std::clamp(raw_bin(x, lo, hi), 0.0, static_cast<double>(kBins - 1)));
}

inline double dequantize_value(TokenId id, double lo, double hi) {
  if (id < 0 || id >= kBins) throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(id) + " not in [0, 255]");
  if (lo == hi) return lo;
  return lo + (id + 0.5) * (hi - lo) / kBins;
}

inline std::vector<TokenId> quantize_action(std::span<const double> x, const ActionSpace& space) {
  if (x.size() != space.dims()) {
    throw Error(ErrorCode::DimensionMismatch,
                "action has " + std::to_string(x.size()) + " dims, space has " + std::to_string(space.dims()));
  }
  std::vector<TokenId> tokens(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) tokens[d] = quantize_value(x[d], space.lo()[d], space.hi()[d]);
  return tokens;
}

inline std::vector<double> dequantize_tokens(std::span<const TokenId> tokens, const ActionSpace& space) {
  if (tokens.size() != space.dims()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(tokens.size()) + " tokens for a " + std::to_string(space.dims()) + "-dim space");
  }
  std::vector<double> x(tokens.size());
  for (std::size_t d = 0; d < tokens.size(); ++d) x[d] = dequantize_value(tokens[d], space.lo()[d], space.hi()[d]);
  return x;
}

/// A T x N block of continuous actions sharing one ActionSpace.
struct ActionChunk {
  std::vector<std::vector<double>> steps;
  ActionSpace space;
};

inline std::vector<std::vector<TokenId>> quantize_chunk(const ActionChunk& chunk) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(chunk.steps.size());
  for (const auto& row : chunk.steps) out.push_back(quantize_action(row, chunk.space));
  return out;
}

inline ActionChunk dequantize_chunk(const std::vector<std::vector<TokenId>>& tokens, const ActionSpace& space) {
  ActionChunk chunk{{}, space};
  chunk.steps.reserve(tokens.size());
  for (const auto& row : tokens) chunk.steps.push_back(dequantize_tokens(row, space));
  return chunk;
}

// ---------------------------------------------------------------------------
// Serialization (action_space.json)

inline Json to_json(const BoundsPolicy& policy) {
  if (policy.kind == BoundsPolicy::Kind::MinMax) return {{"kind", "minmax"}};
  return {{"kind", "quantile"}, {"q", policy.q}};
}

inline Json to_json(const ActionSpace& space) {
  Json lo = Json::array(), hi = Json::array();
  for (double v : space.lo()) lo.push_back(v);
  for (double v : space.hi()) hi.push_back(v);
  return {{"dims", space.dims()}, {"lo", lo}, {"hi", hi}, {"bins", kBins}, {"policy", to_json(space.policy())}};
}

inline ActionSpace action_space_from_json(const Json& j) {
  try {
    if (j.at("bins").get<int>() != kBins) throw Error(ErrorCode::BadConfig, "action space must use 256 bins");
    BoundsPolicy policy = BoundsPolicy::min_max();
    const auto& p = j.at("policy");
    if (p.at("kind").get<std::string>() == "quantile") {
      policy = BoundsPolicy::quantile(p.at("q").get<double>());
    } else if (p.at("kind").get<std::string>() != "minmax") {
      throw Error(ErrorCode::BadConfig, "unknown bounds policy " + p.at("kind").dump());
    }
    ActionSpace space(j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>(), policy);
    if (j.at("dims").get<std::size_t>() != space.dims()) throw Error(ErrorCode::DimensionMismatch, "dims disagrees with bounds");
    return space;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("action space: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Hybrid-arm layout

enum class Arms { LeftOnly, RightOnly, Dual };

struct Embodiment {
  Arms arms = Arms::LeftOnly;
  std::size_t dof_per_arm = 7;  // 6-DoF + gripper, or 7-DoF + gripper

  bool has_left() const { return arms != Arms::RightOnly; }
  bool has_right() const { return arms != Arms::LeftOnly; }
  bool operator==(const Embodiment&) const = default;
};

inline void check_embodiment(const Embodiment& emb) {
  if (emb.dof_per_arm != 7 && emb.dof_per_arm != 8) {
    throw Error(ErrorCode::BadDof, "dof_per_arm must be 7 or 8, got " + std::to_string(emb.dof_per_arm));
  }
}

struct HybridTokens {
  std::array<double, kHybridSlots> values{};
  std::array<bool, kHybridSlots> mask{};

  bool operator==(const HybridTokens&) const = default;
};

/// Slots supervised for an embodiment. Single-arm data leaves the other
/// arm's half unsupervised; a 7-dof arm leaves the last slot of its half
/// unsupervised.
inline std::array<bool, kHybridSlots> loss_mask_for(const Embodiment& emb) {
  check_embodiment(emb);
  std::array<bool, kHybridSlots> mask{};
  for (std::size_t i = 0; i < emb.dof_per_arm; ++i) {
    if (emb.has_left()) mask[i] = true;
    if (emb.has_right()) mask[kHalfSlots + i] = true;
  }
  return mask;
}

inline HybridTokens pack_hybrid(std::optional<std::span<const double>> left, std::optional<std::span<const double>> right,
                                const Embodiment& emb) {
  check_embodiment(emb);
  if (left.has_value() != emb.has_left() || right.has_value() != emb.has_right()) {
    throw Error(ErrorCode::ArmMismatch, "provided arms do not match the embodiment");
  }
  HybridTokens t;
  auto place = [&](std::span<const double> arm, std::size_t base, const char* name) {
    if (arm.size() != emb.dof_per_arm) {
      throw Error(ErrorCode::BadDof, std::string(name) + " arm has " + std::to_string(arm.size()) + " values, expected " +
                                         std::to_string(emb.dof_per_arm));
    }
    for (std::size_t i = 0; i < arm.size(); ++i) {
      t.values[base + i] = arm[i];
      t.mask[base + i] = true;
    }
  };
  if (left) place(*left, 0, "left");
  if (right) place(*right, kHalfSlots, "right");
  return t;
}

struct ArmActions {
  std::optional<std::vector<double>> left;
  std::optional<std::vector<double>> right;

  bool operator==(const ArmActions&) const = default;
};

inline ArmActions unpack_hybrid(const HybridTokens& t, const Embodiment& emb) {
  if (t.mask != loss_mask_for(emb)) throw Error(ErrorCode::MaskMismatch, "token mask does not match the embodiment");
  auto take = [&](std::size_t base) {
    return std::vector<double>(t.values.begin() + static_cast<std::ptrdiff_t>(base),
                               t.values.begin() + static_cast<std::ptrdiff_t>(base + emb.dof_per_arm));
  };
  ArmActions out;
  if (emb.has_left()) out.left = take(0);
  if (emb.has_right()) out.right = take(kHalfSlots);
  return out;
}

}  // namespace dexkit::codec
