#pragma once

#include <map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coldgen/model.hpp"

namespace coldgen {

/// Interpolated back-off n-gram model with additive smoothing:
///   P_0(w)     = (c(w) + alpha / V) / (N + alpha)
///   P_k(w | h) = (c(h, w) + alpha * P_{k-1}(w | h')) / (c(h) + alpha)
/// where h' drops the oldest token of h. Unseen contexts fall through to the
/// next lower order.
class MarkovModel final : public SequenceModel {
 public:
  struct Entry {
    std::size_t total = 0;
    std::map<TokenId, std::size_t> next;
  };

  MarkovModel(std::size_t vocab, int order, double alpha);

  std::size_t vocab_size() const override { return vocab_; }
  std::string descriptor() const override;
  DecodeState start(std::span<const TokenId> context) const override;
  void advance(DecodeState& state, TokenId token) const override;
  void log_probs(const DecodeState& state, std::vector<double>& out) const override;
  std::unique_ptr<SequenceModel> clone() const override;

  /// Count every (context of length <= order, next token) pair of `seq`.
  void observe(std::span<const TokenId> seq);

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  /// counts()[k] maps length-k contexts to their continuation counts.
  const std::vector<std::map<std::vector<TokenId>, Entry>>& counts() const { return counts_; }

  nlohmann::json to_json() const;
  static MarkovModel from_json(const nlohmann::json& j);

 private:
  std::size_t vocab_;
  int order_;
  double alpha_;
  std::vector<std::map<std::vector<TokenId>, Entry>> counts_;
};

/// Fit on a corpus of token sequences. Throws on an empty corpus.
MarkovModel fit_markov(const std::vector<std::vector<TokenId>>& sequences, std::size_t vocab, int order,
                       double alpha);

}  // namespace coldgen
