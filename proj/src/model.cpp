#include "coldgen/model.hpp"

#include "coldgen/identifiers.hpp"

namespace coldgen {

void SequenceModel::check_token(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= vocab_size()) {
    throw ValidationError("token id " + std::to_string(t) + " outside vocabulary of size " +
                          std::to_string(vocab_size()));
  }
}

std::vector<double> next_token_logprobs(const SequenceModel& model, std::span<const TokenId> context) {
  std::vector<double> out;
  model.log_probs(model.start(context), out);
  return out;
}

double sequence_logprob(const SequenceModel& model, std::span<const TokenId> context,
                        std::span<const TokenId> target) {
  if (target.empty()) throw ValidationError("sequence_logprob needs a non-empty target");
  DecodeState state = model.start(context);
  std::vector<double> lp;
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    model.log_probs(state, lp);
    if (target[i] < 0 || static_cast<std::size_t>(target[i]) >= lp.size()) {
      throw ValidationError("target token " + std::to_string(target[i]) + " outside vocabulary");
    }
    total += lp[target[i]];
    if (i + 1 < target.size()) model.advance(state, target[i]);
  }
  return total;
}

std::vector<TokenId> serialize_context(const std::vector<const std::vector<TokenId>*>& items) {
  std::vector<TokenId> out{IdentifierMap::kBos};
  for (const auto* seq : items) {
    out.insert(out.end(), seq->begin(), seq->end());
    out.push_back(IdentifierMap::kSep);
  }
  return out;
}

std::vector<TokenId> serialize_example(const TrainExample& example) {
  std::vector<TokenId> out = example.context;
  out.insert(out.end(), example.target.begin(), example.target.end());
  out.push_back(IdentifierMap::kEos);
  return out;
}

}  // namespace coldgen
