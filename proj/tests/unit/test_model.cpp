#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "coldgen/checkpoint.hpp"
#include "coldgen/identifiers.hpp"
#include "coldgen/markov.hpp"
#include "coldgen/recurrent.hpp"

using namespace coldgen;

namespace {

constexpr TokenId kBos = IdentifierMap::kBos;
constexpr TokenId kEos = IdentifierMap::kEos;
constexpr TokenId kSep = IdentifierMap::kSep;

double exp_sum(const std::vector<double>& lp) {
  double s = 0.0;
  for (double v : lp) s += std::exp(v);
  return s;
}

std::vector<TokenId> random_context(std::mt19937_64& rng, int vocab) {
  std::uniform_int_distribution<int> tok(3, vocab - 1), len(0, 6);
  std::vector<TokenId> c{kBos};
  for (int k = len(rng); k > 0; --k) c.push_back(static_cast<TokenId>(tok(rng)));
  return c;
}

}  // namespace

TEST_CASE("markov hand count: a is always followed by b") {
  const TokenId a = 3, b = 4;
  auto m = fit_markov({{kBos, a, b, a, b, kEos}}, 5, 1, 1e-9);
  auto lp = next_token_logprobs(m, std::vector<TokenId>{kBos, a});
  CHECK(std::exp(lp[b]) > 1.0 - 1e-6);
  CHECK(m.counts()[1].at({a}).next.at(b) == 2);
  CHECK(m.counts()[1].at({a}).total == 2);
}

TEST_CASE("markov smoothing limits and back-off") {
  const TokenId a = 3, b = 4;
  auto big = fit_markov({{kBos, a, b, a, b, kEos}}, 5, 2, 1e12);
  for (double v : next_token_logprobs(big, std::vector<TokenId>{kBos, a})) CHECK(std::exp(v) == doctest::Approx(0.2).epsilon(1e-6));

  auto m = fit_markov({{kBos, a, b, a, b, kEos}}, 6, 1, 0.5);
  // Token 5 never occurs, so its context falls through to the unigram level.
  // Unigram counts are over predicted tokens: a, b, a, b, EOS.
  auto unseen = next_token_logprobs(m, std::vector<TokenId>{kBos, 5});
  const double n = 5.0, alpha = 0.5, v = 6.0;
  const std::vector<double> counts{0, 1, 0, 2, 2, 0};
  for (int t = 0; t < 6; ++t) CHECK(std::exp(unseen[t]) == doctest::Approx((counts[t] + alpha / v) / (n + alpha)));
  CHECK_THROWS_AS(fit_markov({}, 5, 1, 0.1), ValidationError);
}

TEST_CASE("markov order-1 probability by hand") {
  const TokenId a = 3, b = 4;
  const double alpha = 1.0;
  auto m = fit_markov({{kBos, a, b, a, b, kEos}}, 5, 1, alpha);
  // Unigram over predicted tokens: N = 5 with counts EOS 1, a 2, b 2.
  const double p0_b = (2 + alpha / 5) / (5 + alpha);
  const double p1_b = (2 + alpha * p0_b) / (2 + alpha);
  CHECK(std::exp(next_token_logprobs(m, std::vector<TokenId>{kBos, a})[b]) == doctest::Approx(p1_b).epsilon(1e-12));
}

TEST_CASE("property: distributions are normalized") {
  std::mt19937_64 rng(4);
  auto rec = init_recurrent(15, 8, 2);
  std::vector<std::vector<TokenId>> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(random_context(rng, 15));
  auto mk = fit_markov(corpus, 15, 3, 0.3);
  for (int i = 0; i < 200; ++i) {
    auto c = random_context(rng, 15);
    CHECK(exp_sum(next_token_logprobs(rec, c)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(exp_sum(next_token_logprobs(mk, c)) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("zero output projection is exactly uniform") {
  auto rec = init_recurrent(10, 6, 3);
  rec.params().out_w.setZero();
  rec.params().out_b.setZero();
  auto lp = next_token_logprobs(rec, std::vector<TokenId>{kBos, 4, kSep});
  for (double v : lp) CHECK(v == -std::log(10.0));
  CHECK(sequence_logprob(rec, std::vector<TokenId>{kBos}, std::vector<TokenId>{3, 7}) == doctest::Approx(2 * std::log(0.1)));
}

TEST_CASE("sequence_logprob chain rule") {
  std::mt19937_64 rng(8);
  auto rec = init_recurrent(12, 8, 5);
  for (int i = 0; i < 50; ++i) {
    auto c = random_context(rng, 12);
    std::vector<TokenId> a{static_cast<TokenId>(3 + i % 9)}, b{5, static_cast<TokenId>(3 + (i * 7) % 9)};
    std::vector<TokenId> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    auto ca = c;
    ca.insert(ca.end(), a.begin(), a.end());
    CHECK(sequence_logprob(rec, c, ab) ==
          doctest::Approx(sequence_logprob(rec, c, a) + sequence_logprob(rec, ca, b)).epsilon(1e-12));
    CHECK(sequence_logprob(rec, c, a) == next_token_logprobs(rec, c)[a[0]]);
    CHECK(sequence_logprob(rec, c, ab) <= sequence_logprob(rec, c, a));
  }
}

TEST_CASE("out-of-range tokens are rejected") {
  auto rec = init_recurrent(10, 6, 3);
  CHECK_THROWS_AS(next_token_logprobs(rec, std::vector<TokenId>{kBos, 10}), ValidationError);
  CHECK_THROWS_AS(next_token_logprobs(rec, std::vector<TokenId>{}), ValidationError);
}

TEST_CASE("serialization format") {
  std::vector<TokenId> y1{5, 6}, y2{7};
  CHECK(serialize_context({&y1, &y2}) == std::vector<TokenId>{kBos, 5, 6, kSep, 7, kSep});
  TrainExample ex{{kBos, 5, kSep}, {8, 9}};
  CHECK(serialize_example(ex) == std::vector<TokenId>{kBos, 5, kSep, 8, 9, kEos});
}

TEST_CASE("markov has no gradients, duplicates average out") {
  auto mk = fit_markov({{kBos, 3, 4, kEos}}, 5, 1, 0.1);
  TrainExample ex{{kBos, 3, kSep}, {4}};
  CHECK_THROWS_AS(backward(mk, std::vector<TrainExample>{ex}), UnsupportedError);

  auto rec = init_recurrent(6, 4, 1);
  auto one = backward(rec, std::vector<TrainExample>{ex}).flatten();
  auto two = backward(rec, std::vector<TrainExample>{ex, ex}).flatten();
  REQUIRE(one.size() == two.size());
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(two[i] == doctest::Approx(one[i]).epsilon(1e-12));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  auto dir = std::filesystem::temp_directory_path() / "coldgen_test_ckpt";
  std::filesystem::create_directories(dir);
  auto rec = init_recurrent(9, 5, 11);
  save_checkpoint(rec, dir / "rec");
  auto back = load_checkpoint(dir / "rec");
  CHECK(checkpoint_digest(*back) == checkpoint_digest(rec));
  CHECK(dynamic_cast<RecurrentModel&>(*back).params().flatten() == rec.params().flatten());

  auto mk = fit_markov({{kBos, 3, 4, kEos}}, 5, 2, 0.1);
  save_checkpoint(mk, dir / "mk");
  auto mback = load_checkpoint(dir / "mk");
  CHECK(checkpoint_digest(*mback) == checkpoint_digest(mk));
  CHECK(next_token_logprobs(*mback, std::vector<TokenId>{kBos, 3}) == next_token_logprobs(mk, std::vector<TokenId>{kBos, 3}));

  // A flipped byte in the parameter blob fails the digest check.
  auto bin = read_file(dir / "rec.bin");
  bin[bin.size() / 2] ^= 1;
  write_file(dir / "rec.bin", bin);
  CHECK_THROWS_AS(load_checkpoint(dir / "rec"), ParseError);
  std::filesystem::remove_all(dir);
}
