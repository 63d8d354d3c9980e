#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coldgen/common.hpp"

namespace coldgen {

/// One (context, target) pair over identifier tokens. `context` starts with
/// BOS and ends with SEP; `target` is one item's identifier.
struct TrainExample {
  std::vector<TokenId> context;
  std::vector<TokenId> target;
};

/// Incremental decoding state. Recurrent models use `hidden`, count models
/// use `history`.
struct DecodeState {
  std::vector<double> hidden;
  std::vector<TokenId> history;
};

/// Autoregressive next-token model over a fixed vocabulary. Scoring is pure
/// and thread-safe for a given set of parameters.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::string descriptor() const = 0;

  /// State after consuming `context` (non-empty).
  virtual DecodeState start(std::span<const TokenId> context) const = 0;
  virtual void advance(DecodeState& state, TokenId token) const = 0;
  /// Normalized next-token log-probabilities; `out` is resized to V.
  virtual void log_probs(const DecodeState& state, std::vector<double>& out) const = 0;

  virtual std::unique_ptr<SequenceModel> clone() const = 0;

 protected:
  void check_token(TokenId t) const;
};

/// Log-probabilities below this floor are clamped in scoring paths.
inline constexpr double kMinProbability = 1e-12;

std::vector<double> next_token_logprobs(const SequenceModel& model, std::span<const TokenId> context);

/// Sum over t of log P(target_t | context + target_<t).
double sequence_logprob(const SequenceModel& model, std::span<const TokenId> context,
                        std::span<const TokenId> target);

/// Model input for a history of item identifiers:
/// BOS y_1 SEP y_2 SEP ... y_k SEP.
std::vector<TokenId> serialize_context(const std::vector<const std::vector<TokenId>*>& items);

/// Full training serialization: context, then target, then EOS.
std::vector<TokenId> serialize_example(const TrainExample& example);

}  // namespace coldgen
