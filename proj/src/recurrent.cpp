#include "coldgen/recurrent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "coldgen/identifiers.hpp"

namespace coldgen {

GruParams GruParams::zeros(int vocab, int hidden) {
  GruParams p;
  p.vocab = vocab;
  p.hidden = hidden;
  p.embedding = Eigen::MatrixXd::Zero(hidden, vocab);
  p.w_gates = Eigen::MatrixXd::Zero(3 * hidden, hidden);
  p.u_gates = Eigen::MatrixXd::Zero(2 * hidden, hidden);
  p.u_cand = Eigen::MatrixXd::Zero(hidden, hidden);
  p.b_gates = Eigen::VectorXd::Zero(3 * hidden);
  p.out_w = Eigen::MatrixXd::Zero(vocab, hidden);
  p.out_b = Eigen::VectorXd::Zero(vocab);
  return p;
}

namespace {

template <typename Self, typename F>
void visit_blocks(Self& p, F&& f) {
  f("embedding", p.embedding.data(), p.embedding.size());
  f("w_gates", p.w_gates.data(), p.w_gates.size());
  f("u_gates", p.u_gates.data(), p.u_gates.size());
  f("u_cand", p.u_cand.data(), p.u_cand.size());
  f("b_gates", p.b_gates.data(), p.b_gates.size());
  f("out_w", p.out_w.data(), p.out_w.size());
  f("out_b", p.out_b.data(), p.out_b.size());
}

}  // namespace

void GruParams::for_each(const std::function<void(const std::string&, Eigen::Map<Eigen::VectorXd>)>& f) {
  visit_blocks(*this, [&](const char* name, double* data, Eigen::Index n) {
    f(name, Eigen::Map<Eigen::VectorXd>(data, n));
  });
}

void GruParams::for_each(
    const std::function<void(const std::string&, Eigen::Map<const Eigen::VectorXd>)>& f) const {
  visit_blocks(*this, [&](const char* name, const double* data, Eigen::Index n) {
    f(name, Eigen::Map<const Eigen::VectorXd>(data, n));
  });
}

std::size_t GruParams::num_params() const {
  std::size_t n = 0;
  visit_blocks(*this, [&](const char*, const double*, Eigen::Index k) { n += static_cast<std::size_t>(k); });
  return n;
}

std::vector<double> GruParams::flatten() const {
  std::vector<double> out;
  out.reserve(num_params());
  visit_blocks(*this, [&](const char*, const double* d, Eigen::Index k) { out.insert(out.end(), d, d + k); });
  return out;
}

void GruParams::assign(std::span<const double> flat) {
  if (flat.size() != num_params()) throw ValidationError("parameter vector has the wrong length");
  std::size_t off = 0;
  visit_blocks(*this, [&](const char*, double* d, Eigen::Index k) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), k, d);
    off += static_cast<std::size_t>(k);
  });
}

bool GruParams::all_finite() const {
  bool ok = true;
  visit_blocks(*this, [&](const char*, const double* d, Eigen::Index k) {
    ok = ok && Eigen::Map<const Eigen::VectorXd>(d, k).allFinite();
  });
  return ok;
}

void GruParams::add_scaled(const GruParams& other, double scale) {
  embedding += scale * other.embedding;
  w_gates += scale * other.w_gates;
  u_gates += scale * other.u_gates;
  u_cand += scale * other.u_cand;
  b_gates += scale * other.b_gates;
  out_w += scale * other.out_w;
  out_b += scale * other.out_b;
}

void GruParams::set_zero() {
  visit_blocks(*this, [](const char*, double* d, Eigen::Index k) { std::fill_n(d, k, 0.0); });
}

RecurrentModel::RecurrentModel(GruParams params) : params_(std::move(params)) {
  const auto h = params_.hidden;
  const auto v = params_.vocab;
  if (v < 2 || h < 1 || params_.embedding.rows() != h || params_.embedding.cols() != v ||
      params_.w_gates.rows() != 3 * h || params_.w_gates.cols() != h || params_.u_gates.rows() != 2 * h ||
      params_.u_gates.cols() != h || params_.u_cand.rows() != h || params_.u_cand.cols() != h ||
      params_.b_gates.size() != 3 * h || params_.out_w.rows() != v || params_.out_w.cols() != h ||
      params_.out_b.size() != v) {
    throw ValidationError("recurrent parameter shapes are inconsistent");
  }
}

std::string RecurrentModel::descriptor() const { return "gru(h=" + std::to_string(params_.hidden) + ")"; }

DecodeState RecurrentModel::start(std::span<const TokenId> context) const {
  if (context.empty()) throw ValidationError("context must contain at least BOS");
  DecodeState s;
  s.hidden.assign(static_cast<std::size_t>(params_.hidden), 0.0);
  for (auto t : context) advance(s, t);
  return s;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += A * x with A column-major (rows x cols); fixed column order keeps the
// result independent of call site.
inline void gemv_acc(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t j = 0; j < cols; ++j) {
    const double xj = x[j];
    const double* col = a + j * rows;
    for (std::size_t i = 0; i < rows; ++i) y[i] += col[i] * xj;
  }
}

}  // namespace

void RecurrentModel::advance(DecodeState& state, TokenId token) const {
  check_token(token);
  const auto h = static_cast<std::size_t>(params_.hidden);
  if (state.hidden.size() != h) throw ValidationError("decode state does not match the model width");
  const double* x = params_.embedding.data() + static_cast<std::size_t>(token) * h;
  const double* hp = state.hidden.data();

  std::vector<double> g(params_.b_gates.data(), params_.b_gates.data() + 3 * h);
  gemv_acc(params_.w_gates.data(), 3 * h, h, x, g.data());
  std::vector<double> u(2 * h, 0.0);
  gemv_acc(params_.u_gates.data(), 2 * h, h, hp, u.data());

  std::vector<double> z(h), rh(h);
  for (std::size_t i = 0; i < h; ++i) {
    z[i] = sigmoid(g[i] + u[i]);
    rh[i] = sigmoid(g[h + i] + u[h + i]) * hp[i];
  }
  std::vector<double> a(g.begin() + static_cast<std::ptrdiff_t>(2 * h), g.end());
  gemv_acc(params_.u_cand.data(), h, h, rh.data(), a.data());
  std::vector<double> next(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double n = std::tanh(a[i]);
    next[i] = (1.0 - z[i]) * n + z[i] * hp[i];
  }
  state.hidden = std::move(next);
}

void RecurrentModel::log_probs(const DecodeState& state, std::vector<double>& out) const {
  const auto h = static_cast<std::size_t>(params_.hidden);
  const auto v = static_cast<std::size_t>(params_.vocab);
  if (state.hidden.size() != h) throw ValidationError("decode state does not match the model width");
  out.assign(params_.out_b.data(), params_.out_b.data() + v);
  gemv_acc(params_.out_w.data(), v, h, state.hidden.data(), out.data());
  const double m = *std::max_element(out.begin(), out.end());
  double s = 0.0;
  for (double l : out) s += std::exp(l - m);
  const double lse = m + std::log(s);
  const double floor = std::log(kMinProbability);
  for (double& l : out) l = std::max(l - lse, floor);
}

std::unique_ptr<SequenceModel> RecurrentModel::clone() const { return std::make_unique<RecurrentModel>(*this); }

RecurrentModel init_recurrent(int vocab, int hidden, std::uint64_t seed) {
  if (vocab < 2) throw ValidationError("recurrent model needs a vocabulary of at least 2 tokens");
  if (hidden < 4) throw ValidationError("recurrent hidden width must be >= 4");
  GruParams p = GruParams::zeros(vocab, hidden);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-0.1, 0.1);
  p.for_each([&](const std::string&, Eigen::Map<Eigen::VectorXd> block) {
    for (auto& x : block) x = unif(rng);
  });
  return RecurrentModel(std::move(p));
}

std::vector<Chain> pack_examples(std::span<const TrainExample> examples) {
  std::vector<Chain> chains;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.context.empty()) throw ValidationError("training example with empty context");
    if (ex.target.empty()) throw ValidationError("training example with empty target");
    bool extend = false;
    if (!chains.empty()) {
      const auto& prev = chains.back().tokens;
      extend = ex.context.size() == prev.size() + 1 && ex.context.back() == IdentifierMap::kSep &&
               std::equal(prev.begin(), prev.end(), ex.context.begin());
    }
    if (extend) {
      chains.back().tokens.push_back(IdentifierMap::kSep);
    } else {
      chains.push_back(Chain{ex.context, {}});
    }
    auto& c = chains.back();
    for (std::size_t j = 0; j < ex.target.size(); ++j) {
      c.scored.push_back({static_cast<std::uint32_t>(c.tokens.size() - 1), static_cast<std::uint32_t>(i)});
      c.tokens.push_back(ex.target[j]);
    }
  }
  return chains;
}

namespace {

constexpr std::size_t kMaxChunk = 128;

void check_tokens(const GruParams& p, const Chain& c) {
  for (auto t : c.tokens) {
    if (t < 0 || t >= p.vocab) {
      throw ValidationError("token id " + std::to_string(t) + " outside vocabulary of size " +
                            std::to_string(p.vocab));
    }
  }
}

// Columns of the per-position matrices are laid out step by step: step t
// owns columns [off[t], off[t] + active[t]), and because chains are sorted by
// length the chains alive at step t are a prefix of those alive at t - 1.
// Only the recurrent products run per step; every input-side and
// weight-gradient product is one GEMM over all positions.
void chunk_gradients(const GruParams& p, std::span<const Chain* const> chains, std::span<const double> weight,
                     GruParams& grad, std::span<double> nll) {
  using Eigen::ArrayXXd;
  using Eigen::Index;
  using Eigen::MatrixXd;
  const Index h = p.hidden;

  std::vector<std::size_t> order(chains.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return chains[a]->tokens.size() > chains[b]->tokens.size(); });
  const std::size_t steps = chains[order[0]]->tokens.size();
  std::vector<Index> active(steps), off(steps + 1, 0);
  for (std::size_t t = 0; t < steps; ++t) {
    Index n = 0;
    while (n < static_cast<Index>(order.size()) && chains[order[n]]->tokens.size() > t) ++n;
    active[t] = n;
    off[t + 1] = off[t] + n;
  }
  const Index total = off[steps];
  auto token_at = [&](std::size_t t, Index b) { return chains[order[b]]->tokens[t]; };

  MatrixXd x(h, total);
  for (std::size_t t = 0; t < steps; ++t) {
    for (Index b = 0; b < active[t]; ++b) x.col(off[t] + b) = p.embedding.col(token_at(t, b));
  }
  MatrixXd g(3 * h, total);
  g.noalias() = p.w_gates * x;
  g.colwise() += p.b_gates;

  MatrixXd hs(h, total), hps(h, total), zs(h, total), rs(h, total), ns(h, total), rhs(h, total);
  MatrixXd u(2 * h, active[0]), c(h, active[0]);
  for (std::size_t t = 0; t < steps; ++t) {
    const Index bt = active[t], o = off[t];
    auto hp = hps.middleCols(o, bt);
    if (t) hp = hs.middleCols(off[t - 1], bt);
    else hp.setZero();
    auto ub = u.leftCols(bt);
    ub.noalias() = p.u_gates * hp;
    zs.middleCols(o, bt) = (1.0 + (-(g.block(0, o, h, bt) + ub.topRows(h)).array()).exp()).inverse().matrix();
    rs.middleCols(o, bt) = (1.0 + (-(g.block(h, o, h, bt) + ub.bottomRows(h)).array()).exp()).inverse().matrix();
    rhs.middleCols(o, bt) = rs.middleCols(o, bt).cwiseProduct(hp);
    auto cb = c.leftCols(bt);
    cb.noalias() = p.u_cand * rhs.middleCols(o, bt);
    ns.middleCols(o, bt) = (g.block(2 * h, o, h, bt) + cb).array().tanh().matrix();
    const auto z = zs.middleCols(o, bt).array();
    hs.middleCols(o, bt) = ((1.0 - z) * ns.middleCols(o, bt).array() + z * hp.array()).matrix();
  }

  struct Out {
    Index col;
    std::uint32_t example;
    TokenId target;
  };
  std::vector<Out> outs;
  for (Index b = 0; b < static_cast<Index>(order.size()); ++b) {
    const Chain& ch = *chains[order[b]];
    for (const auto& s : ch.scored) outs.push_back({off[s.position] + b, s.example, ch.tokens[s.position + 1]});
  }
  const auto n_out = static_cast<Index>(outs.size());
  MatrixXd hsel(h, n_out);
  for (Index k = 0; k < n_out; ++k) hsel.col(k) = hs.col(outs[k].col);
  MatrixXd logits(p.vocab, n_out);
  logits.noalias() = p.out_w * hsel;
  logits.colwise() += p.out_b;
  for (Index k = 0; k < n_out; ++k) {
    auto col = logits.col(k);
    const double m = col.maxCoeff();
    col.array() = (col.array() - m).exp();
    const double s = col.sum();
    const double lp = std::log(col(outs[k].target) / s);
    nll[outs[k].example] -= lp;
    const double w = weight[outs[k].example];
    col *= w / s;
    col(outs[k].target) -= w;
  }
  grad.out_w.noalias() += logits * hsel.transpose();
  grad.out_b += logits.rowwise().sum();
  MatrixXd dsel(h, n_out);
  dsel.noalias() = p.out_w.transpose() * logits;

  MatrixXd dh = MatrixXd::Zero(h, total);
  for (Index k = 0; k < n_out; ++k) dh.col(outs[k].col) += dsel.col(k);

  MatrixXd da(3 * h, total);
  MatrixXd carry(h, active[0]), drh(h, active[0]);
  for (std::size_t t = steps; t-- > 0;) {
    const Index bt = active[t], o = off[t];
    auto d = dh.middleCols(o, bt);
    if (t + 1 < steps) d.leftCols(active[t + 1]) += carry.leftCols(active[t + 1]);
    const auto hp = hps.middleCols(o, bt).array();
    const auto z = zs.middleCols(o, bt).array();
    const auto r = rs.middleCols(o, bt).array();
    const auto n = ns.middleCols(o, bt).array();
    const ArrayXXd da_n = d.array() * (1.0 - z) * (1.0 - n * n);
    da.block(0, o, h, bt) = (d.array() * (hp - n) * z * (1.0 - z)).matrix();
    da.block(2 * h, o, h, bt) = da_n.matrix();
    auto drb = drh.leftCols(bt);
    drb.noalias() = p.u_cand.transpose() * da_n.matrix();
    da.block(h, o, h, bt) = (drb.array() * hp * r * (1.0 - r)).matrix();
    if (t) {
      auto cr = carry.leftCols(bt);
      cr = (d.array() * z + drb.array() * r).matrix();
      cr.noalias() += p.u_gates.transpose() * da.block(0, o, 2 * h, bt);
    }
  }

  grad.u_cand.noalias() += da.bottomRows(h) * rhs.transpose();
  grad.u_gates.noalias() += da.topRows(2 * h) * hps.transpose();
  grad.w_gates.noalias() += da * x.transpose();
  grad.b_gates += da.rowwise().sum();
  MatrixXd dx(h, total);
  dx.noalias() = p.w_gates.transpose() * da;
  for (std::size_t t = 0; t < steps; ++t) {
    for (Index b = 0; b < active[t]; ++b) grad.embedding.col(token_at(t, b)) += dx.col(off[t] + b);
  }
}

}  // namespace

void chain_gradients(const GruParams& params, std::span<const Chain* const> chains, std::span<const double> weight,
                     GruParams& grad, std::span<double> nll) {
  for (const Chain* c : chains) {
    check_tokens(params, *c);
    for (const auto& s : c->scored) {
      if (s.example >= weight.size() || s.example >= nll.size()) {
        throw ValidationError("chain refers to an example outside the weight vector");
      }
    }
  }
  for (std::size_t start = 0; start < chains.size(); start += kMaxChunk) {
    const std::size_t len = std::min(kMaxChunk, chains.size() - start);
    chunk_gradients(params, chains.subspan(start, len), weight, grad, nll);
  }
}

GruParams backward(const SequenceModel& model, std::span<const TrainExample> examples) {
  const auto* rnn = dynamic_cast<const RecurrentModel*>(&model);
  if (!rnn) throw UnsupportedError("backward is not available for " + model.descriptor());
  if (examples.empty()) throw ValidationError("backward needs a non-empty batch");
  const auto& p = rnn->params();
  auto chains = pack_examples(examples);
  std::vector<const Chain*> ptrs;
  for (const auto& c : chains) ptrs.push_back(&c);
  std::vector<double> weight(examples.size(), 1.0 / static_cast<double>(examples.size()));
  std::vector<double> nll(examples.size(), 0.0);
  GruParams grad = GruParams::zeros(p.vocab, p.hidden);
  chain_gradients(p, ptrs, weight, grad, nll);
  return grad;
}

double mean_nll(const RecurrentModel& model, std::span<const TrainExample> examples) {
  if (examples.empty()) throw ValidationError("mean_nll needs a non-empty batch");
  const auto& p = model.params();
  auto chains = pack_examples(examples);
  std::vector<const Chain*> ptrs;
  for (const auto& c : chains) ptrs.push_back(&c);
  std::vector<double> weight(examples.size(), 0.0);
  std::vector<double> nll(examples.size(), 0.0);
  GruParams scratch = GruParams::zeros(p.vocab, p.hidden);
  chain_gradients(p, ptrs, weight, scratch, nll);
  double s = 0.0;
  for (double v : nll) s += v;
  return s / static_cast<double>(examples.size());
}

}  // namespace coldgen
