#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coldgen/corpus.hpp"
#include "coldgen/decode.hpp"
#include "coldgen/identifiers.hpp"
#include "coldgen/protocol.hpp"
#include "coldgen/recurrent.hpp"

namespace coldgen {

struct TrainConfig {
  int epochs = 10;
  /// Packed chains per mini-batch.
  int batch_size = 4;
  double learning_rate = 1.0;
  /// Rescale each mini-batch gradient to at most this L2 norm (0 = off).
  double clip_norm = 1.0;
  int rl_iters = 0;
  int rl_samples_per_context = 8;
  /// Contexts drawn per RL iteration (0 = all).
  int rl_contexts_per_iter = 64;
  double rl_learning_rate = 0.05;
  int reward_k = 10;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

/// Identifier tokens of the last `max_items` items (0 = all), serialized as
/// BOS y_1 SEP ... y_k SEP.
std::vector<TokenId> context_tokens(const IdentifierMap& id_map, std::span<const ItemId> items, int max_items);

/// One example per train-period position t >= 1 of every warm user. Only the
/// rows listed in `manifest.train_interactions` are read.
std::vector<TrainExample> make_training_examples(const SplitManifest& manifest, const InteractionLog& log,
                                                 const IdentifierMap& id_map, int max_context_items);

struct SftResult {
  /// Mean NLL per epoch, each batch scored before its update.
  std::vector<double> loss_trace;
};

/// Mini-batch gradient descent on the mean NLL. Throws Error when the loss
/// becomes non-finite.
SftResult sft_train(RecurrentModel& model, std::span<const TrainExample> examples, const TrainConfig& config);

/// Sampled identifiers for one context with their rewards.
struct RlGroup {
  std::vector<TokenId> context;
  std::vector<std::vector<TokenId>> samples;
  std::vector<double> rewards;
};

/// Gradient of sum_g sum_s w_gs * NLL(sample_gs | context_g) with
/// w_gs = (r_gs - mean_s r_gs) / (S_g * G). Descending it ascends the
/// baseline-corrected expected reward.
GruParams reinforce_gradient(const RecurrentModel& model, std::span<const RlGroup> groups);

struct RlCase {
  std::vector<TokenId> context;
  ItemId target;
};

/// Reward of each sample: 1/log2(rank+1) when it resolves to `target`, with
/// rank taken among the distinct sampled items ordered by sequence logprob,
/// and 0 otherwise (or when the rank exceeds `reward_k`).
std::vector<double> sample_rewards(const SequenceModel& model, std::span<const TokenId> context,
                                   const IdTrie& trie, const std::vector<std::vector<TokenId>>& samples,
                                   const ItemId& target, int reward_k);

struct RlResult {
  std::vector<double> reward_trace;
};

/// REINFORCE with a per-context mean-reward baseline.
RlResult rl_finetune(RecurrentModel& model, std::span<const RlCase> cases, const IdTrie& trie,
                     const TrainConfig& config);

void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& trace);
void write_reward_trace(const std::filesystem::path& path, const std::vector<double>& trace);

}  // namespace coldgen
