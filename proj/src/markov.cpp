#include "coldgen/markov.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace coldgen {

MarkovModel::MarkovModel(std::size_t vocab, int order, double alpha)
    : vocab_(vocab), order_(order), alpha_(alpha), counts_(static_cast<std::size_t>(order) + 1) {
  if (vocab < 2) throw ValidationError("Markov model needs a vocabulary of at least 2 tokens");
  if (order < 1) throw ValidationError("Markov order must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("Markov smoothing alpha must be > 0");
}

std::string MarkovModel::descriptor() const {
  return "markov(order=" + std::to_string(order_) + ";alpha=" + format_double(alpha_) + ")";
}

void MarkovModel::observe(std::span<const TokenId> seq) {
  for (auto t : seq) check_token(t);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    std::size_t max_k = std::min<std::size_t>(static_cast<std::size_t>(order_), i);
    for (std::size_t k = 0; k <= max_k; ++k) {
      std::vector<TokenId> ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - k),
                               seq.begin() + static_cast<std::ptrdiff_t>(i));
      auto& e = counts_[k][ctx];
      ++e.total;
      ++e.next[seq[i]];
    }
  }
}

DecodeState MarkovModel::start(std::span<const TokenId> context) const {
  if (context.empty()) throw ValidationError("context must contain at least BOS");
  DecodeState s;
  for (auto t : context) advance(s, t);
  return s;
}

void MarkovModel::advance(DecodeState& state, TokenId token) const {
  check_token(token);
  state.history.push_back(token);
  if (state.history.size() > static_cast<std::size_t>(order_)) state.history.erase(state.history.begin());
}

void MarkovModel::log_probs(const DecodeState& state, std::vector<double>& out) const {
  std::vector<double> p(vocab_);
  const double v = static_cast<double>(vocab_);
  {
    std::vector<TokenId> empty;
    auto it = counts_[0].find(empty);
    double n = it == counts_[0].end() ? 0.0 : static_cast<double>(it->second.total);
    std::fill(p.begin(), p.end(), (alpha_ / v) / (n + alpha_));
    if (it != counts_[0].end()) {
      for (const auto& [t, c] : it->second.next) p[t] += static_cast<double>(c) / (n + alpha_);
    }
  }
  const auto& h = state.history;
  std::size_t max_k = std::min<std::size_t>(static_cast<std::size_t>(order_), h.size());
  for (std::size_t k = 1; k <= max_k; ++k) {
    std::vector<TokenId> ctx(h.end() - static_cast<std::ptrdiff_t>(k), h.end());
    auto it = counts_[k].find(ctx);
    if (it == counts_[k].end()) continue;
    const double total = static_cast<double>(it->second.total);
    const double scale = alpha_ / (total + alpha_);
    for (auto& x : p) x *= scale;
    for (const auto& [t, c] : it->second.next) p[t] += static_cast<double>(c) / (total + alpha_);
  }
  out.resize(vocab_);
  for (std::size_t i = 0; i < vocab_; ++i) out[i] = std::log(std::max(p[i], kMinProbability));
}

std::unique_ptr<SequenceModel> MarkovModel::clone() const { return std::make_unique<MarkovModel>(*this); }

nlohmann::json MarkovModel::to_json() const {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& level : counts_) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [ctx, e] : level) {
      nlohmann::json next = nlohmann::json::array();
      for (const auto& [t, c] : e.next) next.push_back({t, c});
      entries.push_back({{"context", ctx}, {"next", next}});
    }
    levels.push_back(entries);
  }
  return {{"format_version", 1}, {"kind", "markov"}, {"vocab", vocab_}, {"order", order_},
          {"alpha", alpha_},     {"counts", levels}};
}

MarkovModel MarkovModel::from_json(const nlohmann::json& j) {
  try {
    MarkovModel m(j.at("vocab").get<std::size_t>(), j.at("order").get<int>(), j.at("alpha").get<double>());
    const auto& levels = j.at("counts");
    if (levels.size() != m.counts_.size()) throw ParseError("markov checkpoint", 0, "order mismatch");
    for (std::size_t k = 0; k < levels.size(); ++k) {
      for (const auto& e : levels[k]) {
        auto& entry = m.counts_[k][e.at("context").get<std::vector<TokenId>>()];
        for (const auto& tc : e.at("next")) {
          auto c = tc[1].get<std::size_t>();
          entry.next[tc[0].get<TokenId>()] = c;
          entry.total += c;
        }
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("markov checkpoint", 0, e.what());
  }
}

MarkovModel fit_markov(const std::vector<std::vector<TokenId>>& sequences, std::size_t vocab, int order,
                       double alpha) {
  MarkovModel m(vocab, order, alpha);
  bool any = false;
  for (const auto& s : sequences) {
    if (s.size() >= 2) any = true;
    m.observe(s);
  }
  if (!any) throw ValidationError("fit_markov needs a non-empty corpus");
  return m;
}

}  // namespace coldgen
