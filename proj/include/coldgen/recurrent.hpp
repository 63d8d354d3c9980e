#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coldgen/model.hpp"

namespace coldgen {

/// Single-layer gated recurrent cell with tied embedding and hidden width:
///   z  = sigmoid(Wz x + Uz h + bz)
///   r  = sigmoid(Wr x + Ur h + br)
///   n  = tanh(Wn x + Un (r * h) + bn)
///   h' = (1 - z) * n + z * h
///   logits = O h' + c
/// The initial hidden state is zero.
struct GruParams {
  int vocab = 0;
  int hidden = 0;
  Eigen::MatrixXd embedding;  // h x V, one column per token
  Eigen::MatrixXd w_gates;    // 3h x h, rows [z; r; n]
  Eigen::MatrixXd u_gates;    // 2h x h, rows [z; r]
  Eigen::MatrixXd u_cand;     // h x h
  Eigen::VectorXd b_gates;    // 3h
  Eigen::MatrixXd out_w;      // V x h
  Eigen::VectorXd out_b;      // V

  /// Same shapes, all zeros.
  static GruParams zeros(int vocab, int hidden);

  /// Visit (name, parameter block) in serialization order.
  void for_each(const std::function<void(const std::string&, Eigen::Map<Eigen::VectorXd>)>& f);
  void for_each(const std::function<void(const std::string&, Eigen::Map<const Eigen::VectorXd>)>& f) const;

  std::size_t num_params() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  bool all_finite() const;

  /// this += scale * other
  void add_scaled(const GruParams& other, double scale);
  void set_zero();
};

class RecurrentModel final : public SequenceModel {
 public:
  explicit RecurrentModel(GruParams params);

  std::size_t vocab_size() const override { return static_cast<std::size_t>(params_.vocab); }
  std::string descriptor() const override;
  DecodeState start(std::span<const TokenId> context) const override;
  void advance(DecodeState& state, TokenId token) const override;
  void log_probs(const DecodeState& state, std::vector<double>& out) const override;
  std::unique_ptr<SequenceModel> clone() const override;

  int hidden() const { return params_.hidden; }
  const GruParams& params() const { return params_; }
  GruParams& params() { return params_; }

 private:
  GruParams params_;
};

/// Uniform [-0.1, 0.1] initialization, deterministic per seed.
RecurrentModel init_recurrent(int vocab, int hidden, std::uint64_t seed);

/// A packed training sequence. Consecutive examples whose context equals the
/// previous context followed by the previous target and SEP share one chain;
/// `scored` lists the positions whose next token is a target token.
struct Chain {
  struct Scored {
    std::uint32_t position;  // output at this position predicts tokens[position + 1]
    std::uint32_t example;   // index into the example list
  };
  std::vector<TokenId> tokens;
  std::vector<Scored> scored;
};

std::vector<Chain> pack_examples(std::span<const TrainExample> examples);

/// Forward and backward pass over a batch of chains. Each scored token adds
/// weight[example] * (-log p) to the objective; its gradient is accumulated
/// into `grad`, and the unweighted -log p into nll[example].
void chain_gradients(const GruParams& params, std::span<const Chain* const> chains, std::span<const double> weight,
                     GruParams& grad, std::span<double> nll);

/// Gradient of the mean NLL of `examples`. Throws UnsupportedError for
/// models without analytic gradients and ValidationError on an empty batch.
GruParams backward(const SequenceModel& model, std::span<const TrainExample> examples);

/// Mean NLL of `examples` under the training (unfloored) forward pass.
double mean_nll(const RecurrentModel& model, std::span<const TrainExample> examples);

}  // namespace coldgen
