#include "coldgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <unordered_set>

namespace coldgen {

void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
  if (!(c.clip_norm >= 0.0)) throw ValidationError("clip_norm must be >= 0");
  if (c.rl_iters < 0) throw ValidationError("rl_iters must be >= 0");
  if (c.rl_samples_per_context < 1) throw ValidationError("rl_samples_per_context must be >= 1");
  if (c.rl_contexts_per_iter < 0) throw ValidationError("rl_contexts_per_iter must be >= 0");
  if (!(c.rl_learning_rate >= 0.0)) throw ValidationError("rl_learning_rate must be >= 0");
  if (c.reward_k < 1) throw ValidationError("reward_k must be >= 1");
}

std::vector<TokenId> context_tokens(const IdentifierMap& id_map, std::span<const ItemId> items, int max_items) {
  if (max_items > 0 && items.size() > static_cast<std::size_t>(max_items)) {
    items = items.subspan(items.size() - static_cast<std::size_t>(max_items));
  }
  std::vector<const std::vector<TokenId>*> seqs;
  seqs.reserve(items.size());
  for (const auto& i : items) seqs.push_back(&id_map.at(i));
  return serialize_context(seqs);
}

std::vector<TrainExample> make_training_examples(const SplitManifest& manifest, const InteractionLog& log,
                                                 const IdentifierMap& id_map, int max_context_items) {
  const auto& rows = log.interactions();
  std::map<UserId, std::vector<std::size_t>> by_user;
  for (auto p : manifest.train_interactions) {
    if (p >= rows.size()) throw ValidationError("manifest refers to a row outside the log");
    if (manifest.warm_users.contains(rows[p].user_id)) by_user[rows[p].user_id].push_back(p);
  }
  std::vector<TrainExample> out;
  for (auto& [user, pos] : by_user) {
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].timestamp < rows[b].timestamp || (rows[a].timestamp == rows[b].timestamp && a < b);
    });
    std::vector<ItemId> items;
    items.reserve(pos.size());
    for (auto p : pos) items.push_back(rows[p].item_id);
    for (std::size_t t = 1; t < items.size(); ++t) {
      out.push_back({context_tokens(id_map, std::span<const ItemId>(items.data(), t), max_context_items),
                     id_map.at(items[t])});
    }
  }
  return out;
}

namespace {

void check_finite(double loss, const std::string& where) {
  if (!std::isfinite(loss)) throw Error("training diverged: non-finite loss " + where);
}

double clip_scale(const GruParams& grad, double clip_norm) {
  if (clip_norm <= 0.0) return 1.0;
  double sq = 0.0;
  grad.for_each([&](const std::string&, Eigen::Map<const Eigen::VectorXd> b) { sq += b.squaredNorm(); });
  const double norm = std::sqrt(sq);
  return norm > clip_norm ? clip_norm / norm : 1.0;
}

}  // namespace

SftResult sft_train(RecurrentModel& model, std::span<const TrainExample> examples, const TrainConfig& config) {
  validate(config);
  if (examples.empty()) throw ValidationError("sft_train needs at least one example");
  auto& p = model.params();
  const auto chains = pack_examples(examples);
  std::vector<std::size_t> order(chains.size());
  GruParams grad = GruParams::zeros(p.vocab, p.hidden);
  std::vector<double> weight(examples.size(), 0.0);
  std::vector<double> nll(examples.size(), 0.0);
  SftResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "sft/epoch/" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_nll = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Chain*> ptrs;
      for (std::size_t i = start; i < end; ++i) ptrs.push_back(&chains[order[i]]);
      std::unordered_set<std::uint32_t> members;
      for (const auto* c : ptrs) {
        for (const auto& s : c->scored) members.insert(s.example);
      }
      const double w = 1.0 / static_cast<double>(members.size());
      for (auto e : members) {
        weight[e] = w;
        nll[e] = 0.0;
      }
      grad.set_zero();
      chain_gradients(p, ptrs, weight, grad, nll);
      double batch_nll = 0.0;
      for (const auto* c : ptrs) {
        for (const auto& s : c->scored) {
          if (weight[s.example] != 0.0) {
            batch_nll += nll[s.example];
            weight[s.example] = 0.0;
          }
        }
      }
      check_finite(batch_nll, "at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
      epoch_nll += batch_nll;
      if (config.learning_rate != 0.0) p.add_scaled(grad, -config.learning_rate * clip_scale(grad, config.clip_norm));
    }
    result.loss_trace.push_back(epoch_nll / static_cast<double>(examples.size()));
  }
  if (!p.all_finite()) throw Error("training diverged: non-finite parameters");
  return result;
}

GruParams reinforce_gradient(const RecurrentModel& model, std::span<const RlGroup> groups) {
  const auto& p = model.params();
  GruParams grad = GruParams::zeros(p.vocab, p.hidden);
  std::vector<TrainExample> examples;
  std::vector<double> weight;
  const double g = static_cast<double>(groups.size());
  for (const auto& grp : groups) {
    if (grp.samples.size() != grp.rewards.size()) throw ValidationError("one reward per sample is required");
    if (grp.samples.empty()) continue;
    const double s = static_cast<double>(grp.samples.size());
    double baseline = grp.rewards[0];
    if (std::any_of(grp.rewards.begin(), grp.rewards.end(), [&](double r) { return r != grp.rewards[0]; })) {
      baseline = std::accumulate(grp.rewards.begin(), grp.rewards.end(), 0.0) / s;
    }
    for (std::size_t i = 0; i < grp.samples.size(); ++i) {
      const double w = (grp.rewards[i] - baseline) / (s * g);
      if (w == 0.0) continue;
      examples.push_back({grp.context, grp.samples[i]});
      weight.push_back(w);
    }
  }
  if (examples.empty()) return grad;
  auto chains = pack_examples(examples);
  std::vector<const Chain*> ptrs;
  for (const auto& c : chains) ptrs.push_back(&c);
  std::vector<double> nll(examples.size(), 0.0);
  chain_gradients(p, ptrs, weight, grad, nll);
  return grad;
}

std::vector<double> sample_rewards(const SequenceModel& model, std::span<const TokenId> context,
                                   const IdTrie& trie, const std::vector<std::vector<TokenId>>& samples,
                                   const ItemId& target, int reward_k) {
  std::map<ItemId, double> scores;
  std::vector<std::optional<ItemId>> items;
  for (const auto& s : samples) {
    auto item = resolve(trie, s);
    items.push_back(item);
    if (item && !scores.contains(*item)) scores.emplace(*item, sequence_logprob(model, context, s));
  }
  std::vector<double> rewards(samples.size(), 0.0);
  auto it = scores.find(target);
  if (it == scores.end()) return rewards;
  std::size_t rank = 1;
  for (const auto& [item, lp] : scores) {
    if (lp > it->second || (lp == it->second && item < target)) ++rank;
  }
  if (rank > static_cast<std::size_t>(reward_k)) return rewards;
  const double gain = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (items[i] && *items[i] == target) rewards[i] = gain;
  }
  return rewards;
}

RlResult rl_finetune(RecurrentModel& model, std::span<const RlCase> cases, const IdTrie& trie,
                     const TrainConfig& config) {
  validate(config);
  if (trie.empty()) throw ValidationError("rl_finetune needs a non-empty trie");
  if (cases.empty()) throw ValidationError("rl_finetune needs at least one context");
  RlResult result;
  std::vector<std::size_t> order(cases.size());
  for (int iter = 0; iter < config.rl_iters; ++iter) {
    Rng rng(derive_seed(config.seed, "rl/iter/" + std::to_string(iter)));
    std::iota(order.begin(), order.end(), 0);
    std::size_t n = cases.size();
    if (config.rl_contexts_per_iter > 0 && static_cast<std::size_t>(config.rl_contexts_per_iter) < n) {
      n = static_cast<std::size_t>(config.rl_contexts_per_iter);
      for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
      }
    }
    std::vector<RlGroup> groups;
    double reward_sum = 0.0;
    std::size_t reward_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = cases[order[i]];
      RlGroup g{c.context, {}, {}};
      const DecodeState state = model.start(c.context);
      for (int s = 0; s < config.rl_samples_per_context; ++s) {
        g.samples.push_back(sample_identifier(model, state, trie, rng));
      }
      g.rewards = sample_rewards(model, c.context, trie, g.samples, c.target, config.reward_k);
      for (double r : g.rewards) reward_sum += r;
      reward_n += g.rewards.size();
      groups.push_back(std::move(g));
    }
    result.reward_trace.push_back(reward_sum / static_cast<double>(reward_n));
    if (config.rl_learning_rate != 0.0) {
      GruParams grad = reinforce_gradient(model, groups);
      model.params().add_scaled(grad, -config.rl_learning_rate);
      if (!model.params().all_finite()) {
        throw Error("RL fine-tuning diverged at iteration " + std::to_string(iter));
      }
    }
  }
  return result;
}

namespace {

void write_trace(const std::filesystem::path& path, const char* header, const std::vector<double>& trace) {
  std::string out = header;
  out += '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i) + "," + format_double(trace[i]) + "\n";
  write_file(path, out);
}

}  // namespace

void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  write_trace(path, "epoch,loss", trace);
}

void write_reward_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  write_trace(path, "iter,mean_reward", trace);
}

}  // namespace coldgen
