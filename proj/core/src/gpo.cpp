#include <algorithm>
#include <cmath>

#include "plbench/bt.hpp"
#include "plbench/error.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"
#include "plbench/synthgen.hpp"
#include "model_internal.hpp"

namespace plbench {
namespace {

constexpr std::size_t kNullLabel = 2;

struct LayerIndex {
  std::size_t q, k, v, o, w1, b1, w2, b2;
};

// Parameter indices of the in-context network, resolved once per call.
struct Net {
  std::size_t embed, signed_embed, labels, out_w, out_b;
  std::vector<LayerIndex> layers;
  std::size_t width = 0;
  std::size_t heads = 0;
  std::size_t feature_dim = 0;

  static Net bind(const ParamSet& p, std::size_t heads) {
    Net n;
    n.embed = p.index_of("embed.w");
    n.signed_embed = p.index_of("embed.signed");
    n.labels = p.index_of("embed.labels");
    n.out_w = p.index_of("out.w");
    n.out_b = p.index_of("out.b");
    n.width = p[n.embed].rows;
    n.feature_dim = p[n.embed].cols;
    n.heads = heads;
    for (std::size_t l = 0; p.contains("layer" + std::to_string(l) + ".q"); ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      n.layers.push_back({p.index_of(pre + "q"), p.index_of(pre + "k"), p.index_of(pre + "v"),
                          p.index_of(pre + "o"), p.index_of(pre + "mlp.w1"),
                          p.index_of(pre + "mlp.b1"), p.index_of(pre + "mlp.w2"),
                          p.index_of(pre + "mlp.b2")});
    }
    if (heads == 0 || n.width % heads != 0) throw DataError("width must be a multiple of heads");
    return n;
  }
};

// Context tokens and their per-layer keys and values. Context tokens are not
// updated between layers; only the query token flows through the stack.
struct ContextState {
  std::size_t n = 0;
  std::vector<const ContextPair*> pairs;
  std::vector<double> oriented;           // n x f, gap times (2 label - 1)
  std::vector<double> tokens;             // n x W
  std::vector<std::vector<double>> keys;  // per layer, n x W
  std::vector<std::vector<double>> vals;  // per layer, n x W
};

ContextState encode_context(const ParamSet& p, const Net& net,
                            std::vector<const ContextPair*> pairs) {
  const std::size_t W = net.width;
  ContextState s;
  s.n = pairs.size();
  s.pairs = std::move(pairs);
  const std::size_t F = net.feature_dim;
  s.tokens.resize(s.n * W);
  s.oriented.resize(s.n * F);
  auto labels = p.values(net.labels);
  // The signed term carries the label-gap product; an additive label
  // embedding alone leaves attention a kernel smoother.
  std::vector<double> extra(W);
  for (std::size_t i = 0; i < s.n; ++i) {
    const double sign = s.pairs[i]->label == 1 ? 1.0 : -1.0;
    std::span<double> o(s.oriented.data() + i * F, F);
    for (std::size_t c = 0; c < F; ++c) o[c] = sign * s.pairs[i]->gap[c];
    std::span<double> tok(s.tokens.data() + i * W, W);
    nn::affine(p.values(net.embed), labels.subspan(s.pairs[i]->label * W, W), s.pairs[i]->gap, tok);
    nn::affine(p.values(net.signed_embed), {}, o, extra);
    for (std::size_t c = 0; c < W; ++c) tok[c] += extra[c];
  }
  for (const auto& L : net.layers) {
    std::vector<double> k(s.n * W), v(s.n * W);
    for (std::size_t i = 0; i < s.n; ++i) {
      std::span<const double> tok(s.tokens.data() + i * W, W);
      nn::affine(p.values(L.k), {}, tok, std::span<double>(k.data() + i * W, W));
      nn::affine(p.values(L.v), {}, tok, std::span<double>(v.data() + i * W, W));
    }
    s.keys.push_back(std::move(k));
    s.vals.push_back(std::move(v));
  }
  return s;
}

struct LayerTrace {
  std::vector<double> h_in;   // W
  std::vector<double> q;      // W
  std::vector<double> attn;   // heads x n
  std::vector<double> o;      // W, concatenated heads
  std::vector<double> h_mid;  // h_in + Wo o
  std::vector<double> m;      // tanh(W1 h_mid + b1)
};

struct QueryTrace {
  const ContextPair* query = nullptr;
  std::vector<LayerTrace> layers;
  std::vector<double> h_out;
  double logit = 0.0;
};

QueryTrace forward_query(const ParamSet& p, const Net& net, const ContextState& ctx,
                         const ContextPair& query) {
  const std::size_t W = net.width;
  const std::size_t H = net.heads;
  const std::size_t dh = W / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  QueryTrace t;
  t.query = &query;
  std::vector<double> h(W);
  nn::affine(p.values(net.embed), p.values(net.labels).subspan(kNullLabel * W, W), query.gap, h);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    LayerTrace lt;
    lt.h_in = h;
    lt.q.resize(W);
    nn::affine(p.values(L.q), {}, h, lt.q);
    lt.attn.assign(H * ctx.n, 0.0);
    lt.o.assign(W, 0.0);
    const auto& K = ctx.keys[l];
    const auto& V = ctx.vals[l];
    for (std::size_t hd = 0; hd < H && ctx.n > 0; ++hd) {
      double* a = lt.attn.data() + hd * ctx.n;
      double mx = -INFINITY;
      for (std::size_t i = 0; i < ctx.n; ++i) {
        double s = 0.0;
        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) s += lt.q[c] * K[i * W + c];
        a[i] = s * scale;
        mx = std::max(mx, a[i]);
      }
      double z = 0.0;
      for (std::size_t i = 0; i < ctx.n; ++i) {
        a[i] = std::exp(a[i] - mx);
        z += a[i];
      }
      for (std::size_t i = 0; i < ctx.n; ++i) {
        a[i] /= z;
        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) lt.o[c] += a[i] * V[i * W + c];
      }
    }
    lt.h_mid = h;
    std::vector<double> u(W);
    nn::affine(p.values(L.o), {}, lt.o, u);
    for (std::size_t c = 0; c < W; ++c) lt.h_mid[c] += u[c];
    lt.m.resize(W);
    nn::affine(p.values(L.w1), p.values(L.b1), lt.h_mid, lt.m);
    for (auto& v : lt.m) v = std::tanh(v);
    std::vector<double> r(W);
    nn::affine(p.values(L.w2), p.values(L.b2), lt.m, r);
    for (std::size_t c = 0; c < W; ++c) h[c] = lt.h_mid[c] + r[c];
    t.layers.push_back(std::move(lt));
  }
  t.h_out = h;
  t.logit = nn::dot(p.values(net.out_w), h) + p.values(net.out_b)[0];
  return t;
}

// Gradient accumulators for the context side of one episode.
struct ContextGrad {
  std::vector<std::vector<double>> dkeys;
  std::vector<std::vector<double>> dvals;
};

void backward_query(const ParamSet& p, const Net& net, const ContextState& ctx,
                    const QueryTrace& t, double dlogit, ParamSet& g, ContextGrad& cg) {
  const std::size_t W = net.width;
  const std::size_t H = net.heads;
  const std::size_t dh = W / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dh_vec(W);
  auto ow = p.values(net.out_w);
  auto gow = g.values(net.out_w);
  for (std::size_t c = 0; c < W; ++c) {
    gow[c] += dlogit * t.h_out[c];
    dh_vec[c] = dlogit * ow[c];
  }
  g.values(net.out_b)[0] += dlogit;

  std::vector<double> dm(W), dpre(W), dmid(W), dobuf(W), dq(W), dalpha;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& L = net.layers[l];
    const auto& lt = t.layers[l];
    // h_out = h_mid + W2 m + b2, m = tanh(W1 h_mid + b1)
    std::fill(dm.begin(), dm.end(), 0.0);
    nn::affine_backward(p.values(L.w2), lt.m, dh_vec, g.values(L.w2), g.values(L.b2), dm);
    for (std::size_t c = 0; c < W; ++c) dpre[c] = dm[c] * (1.0 - lt.m[c] * lt.m[c]);
    dmid = dh_vec;
    nn::affine_backward(p.values(L.w1), lt.h_mid, dpre, g.values(L.w1), g.values(L.b1), dmid);
    // h_mid = h_in + Wo o
    std::fill(dobuf.begin(), dobuf.end(), 0.0);
    nn::affine_backward(p.values(L.o), lt.o, dmid, g.values(L.o), {}, dobuf);
    std::fill(dq.begin(), dq.end(), 0.0);
    const auto& K = ctx.keys[l];
    const auto& V = ctx.vals[l];
    auto& dK = cg.dkeys[l];
    auto& dV = cg.dvals[l];
    dalpha.resize(ctx.n);
    for (std::size_t hd = 0; hd < H && ctx.n > 0; ++hd) {
      const double* a = lt.attn.data() + hd * ctx.n;
      double weighted = 0.0;
      for (std::size_t i = 0; i < ctx.n; ++i) {
        double s = 0.0;
        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) {
          s += dobuf[c] * V[i * W + c];
          dV[i * W + c] += a[i] * dobuf[c];
        }
        dalpha[i] = s;
        weighted += a[i] * s;
      }
      for (std::size_t i = 0; i < ctx.n; ++i) {
        const double ds = a[i] * (dalpha[i] - weighted) * scale;
        if (ds == 0.0) continue;
        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) {
          dq[c] += ds * K[i * W + c];
          dK[i * W + c] += ds * lt.q[c];
        }
      }
    }
    // q = Wq h_in; the residual passes dmid straight through.
    dh_vec = dmid;
    nn::affine_backward(p.values(L.q), lt.h_in, dq, g.values(L.q), {}, dh_vec);
  }
  // h0 = We gap + labels[null]
  nn::affine_backward(p.values(net.embed), t.query->gap, dh_vec, g.values(net.embed),
                      g.values(net.labels).subspan(kNullLabel * W, W), {});
}

void backward_context(const ParamSet& p, const Net& net, const ContextState& ctx,
                      const ContextGrad& cg, ParamSet& g) {
  const std::size_t W = net.width;
  std::vector<double> dtok(ctx.n * W, 0.0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    for (std::size_t i = 0; i < ctx.n; ++i) {
      std::span<const double> tok(ctx.tokens.data() + i * W, W);
      std::span<double> dt(dtok.data() + i * W, W);
      nn::affine_backward(p.values(L.k), tok, std::span<const double>(cg.dkeys[l].data() + i * W, W),
                          g.values(L.k), {}, dt);
      nn::affine_backward(p.values(L.v), tok, std::span<const double>(cg.dvals[l].data() + i * W, W),
                          g.values(L.v), {}, dt);
    }
  }
  auto glabels = g.values(net.labels);
  for (std::size_t i = 0; i < ctx.n; ++i) {
    nn::affine_backward(p.values(net.embed), ctx.pairs[i]->gap,
                        std::span<const double>(dtok.data() + i * W, W), g.values(net.embed),
                        glabels.subspan(ctx.pairs[i]->label * W, W), {});
    nn::affine_backward(p.values(net.signed_embed),
                        std::span<const double>(ctx.oriented.data() + i * net.feature_dim, net.feature_dim),
                        std::span<const double>(dtok.data() + i * W, W), g.values(net.signed_embed),
                        {}, {});
  }
}

double bce_with_logit(double logit, int label) {
  return -(label == 1 ? log_sigmoid(logit) : log_sigmoid(-logit));
}

}  // namespace

ParamSet GpoObjective::init(const GpoConfig& config, std::size_t feature_dim, std::uint64_t seed) {
  if (config.width == 0 || config.heads == 0 || config.width % config.heads != 0) {
    throw UsageError("in-context width must be a positive multiple of the head count");
  }
  Rng rng(derive_seed(seed, "gpo-init"));
  const std::size_t W = config.width;
  const double ws = 1.0 / std::sqrt(static_cast<double>(W));
  ParamSet p;
  p.add_normal("embed.w", W, feature_dim, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  p.add_normal("embed.signed", W, feature_dim, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  p.add_normal("embed.labels", 3, W, 1.0, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    p.add_normal(pre + "q", W, W, ws, rng);
    p.add_normal(pre + "k", W, W, ws, rng);
    p.add_normal(pre + "v", W, W, ws, rng);
    p.add_normal(pre + "o", W, W, ws, rng);
    p.add_normal(pre + "mlp.w1", W, W, ws, rng);
    p.add(pre + "mlp.b1", W);
    p.add_normal(pre + "mlp.w2", W, W, ws, rng);
    p.add(pre + "mlp.b2", W);
  }
  p.add_normal("out.w", W, 1, ws, rng);
  p.add("out.b", 1);
  return p;
}

GpoObjective::GpoObjective(const PreferenceDataset& data, const GpoConfig& config,
                           std::size_t episodes)
    : config_(config), episodes_(episodes) {
  if (config.queries_per_episode == 0) throw UsageError("episodes need at least one query");
  if (config.context_min > config.context_max) {
    throw UsageError("episode context range is empty (min > max)");
  }
  for (const auto& u : data.users()) {
    auto pairs = to_context_pairs(data.for_user(u));
    if (pairs.size() < config.context_min + 1) {
      throw DataError("context of " + std::to_string(config.context_min) +
                      " pairs is larger than the " + std::to_string(pairs.size()) +
                      " available for user '" + u + "'");
    }
    by_user_.push_back(std::move(pairs));
  }
}

double GpoObjective::evaluate(const ParamSet& params, std::span<const std::size_t> batch,
                              ParamSet* grad, std::uint64_t noise_seed) const {
  if (batch.empty()) throw UsageError("empty episode batch");
  const Net net = Net::bind(params, config_.heads);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t e : batch) {
    Rng rng(derive_seed(noise_seed, "episode", e));
    const auto& pool = by_user_[rng.index(by_user_.size())];
    const std::size_t q = std::min(config_.queries_per_episode, pool.size() - config_.context_min);
    const std::size_t span = config_.context_max - config_.context_min + 1;
    const std::size_t n = std::min(config_.context_min + rng.index(span), pool.size() - q);
    auto picks = rng.sample_without_replacement(pool.size(), n + q);
    // Two augmentations: swapping a pair's responses (gap and label both flip)
    // and inverting every label of the episode, which turns the user into its
    // mirror image so the network cannot ignore the context.
    const bool invert = rng.bernoulli(0.5);
    std::vector<ContextPair> items;
    items.reserve(picks.size());
    for (auto k : picks) {
      ContextPair c = pool[k];
      if (rng.bernoulli(0.5)) {
        for (auto& v : c.gap) v = -v;
        c.label = 1 - c.label;
      }
      if (invert) c.label = 1 - c.label;
      items.push_back(std::move(c));
    }
    std::vector<const ContextPair*> ctx_ptrs;
    for (std::size_t i = 0; i < n; ++i) ctx_ptrs.push_back(&items[i]);
    ContextState ctx = encode_context(params, net, std::move(ctx_ptrs));
    ContextGrad cg;
    if (grad != nullptr) {
      cg.dkeys.assign(net.layers.size(), std::vector<double>(n * net.width, 0.0));
      cg.dvals.assign(net.layers.size(), std::vector<double>(n * net.width, 0.0));
    }
    const double inv_q = 1.0 / static_cast<double>(q);
    for (std::size_t j = n; j < n + q; ++j) {
      QueryTrace t = forward_query(params, net, ctx, items[j]);
      total += bce_with_logit(t.logit, items[j].label) * inv_q * inv_b;
      if (grad != nullptr) {
        const double dlogit = (sigmoid(t.logit) - items[j].label) * inv_q * inv_b;
        backward_query(params, net, ctx, t, dlogit, *grad, cg);
      }
    }
    if (grad != nullptr) backward_context(params, net, ctx, cg, *grad);
  }
  return total;
}

double gpo_predict(const GpoModel& model, std::span<const ContextPair> context,
                   std::span<const double> query_gap) {
  const Net net = Net::bind(model.params, model.config.heads);
  if (query_gap.size() != net.feature_dim) throw DataError("query feature length mismatch");
  std::vector<const ContextPair*> ptrs;
  for (const auto& c : context) ptrs.push_back(&c);
  ContextState ctx = encode_context(model.params, net, std::move(ptrs));
  ContextPair q{Embedding(query_gap.begin(), query_gap.end()), 0};
  return sigmoid(forward_query(model.params, net, ctx, q).logit);
}

namespace {

// Query logits for many queries against one shared context.
std::vector<double> gpo_predict_many(const GpoModel& model, std::span<const ContextPair> context,
                                     std::span<const ContextPair> queries) {
  const Net net = Net::bind(model.params, model.config.heads);
  std::vector<const ContextPair*> ptrs;
  for (const auto& c : context) ptrs.push_back(&c);
  ContextState ctx = encode_context(model.params, net, std::move(ptrs));
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(sigmoid(forward_query(model.params, net, ctx, q).logit));
  return out;
}

}  // namespace

std::vector<double> gpo_predict_batch(const GpoModel& model, const std::string& user,
                                      std::span<const ContextPair> queries) {
  auto it = model.contexts.find(user);
  if (it == model.contexts.end()) throw DataError("no context for user '" + user + "'");
  return gpo_predict_many(model, it->second, queries);
}

PreferenceModel train_gpo_lite(const PreferenceDataset& train, const GpoConfig& config,
                               const OptimConfig& optim, const PreferenceDataset* validation) {
  if (train.users().size() < 2) throw DataError("in-context training needs at least two users");
  if (config.context == 0) throw UsageError("context size must be >= 1");
  GpoObjective objective(train, config, config.episodes_per_epoch);
  std::optional<GpoObjective> val;
  if (validation != nullptr && !validation->empty()) {
    val.emplace(*validation, config, std::max<std::size_t>(64, config.episodes_per_epoch / 4));
  }
  TrainResult r = optimize(objective, GpoObjective::init(config, 2 * train.dimension(), optim.seed),
                           optim, val ? &*val : nullptr);
  r.params.quantize_values();

  GpoModel model;
  model.config = config;
  model.params = std::move(r.params);
  // Training users get a seeded context of the default size.
  for (const auto& u : train.users()) {
    auto pairs = to_context_pairs(train.for_user(u));
    Rng rng(derive_seed(optim.seed, "gpo-context:" + u));
    auto picks = rng.sample_without_replacement(pairs.size(), std::min(config.context, pairs.size()));
    std::sort(picks.begin(), picks.end());
    std::vector<ContextPair> ctx;
    for (auto k : picks) ctx.push_back(pairs[k]);
    model.contexts[u] = std::move(ctx);
  }
  PreferenceModel m;
  m.dimension = train.dimension();
  m.model = std::move(model);
  Json j;
  j["method"] = "gpo";
  j["context"] = config.context;
  j["width"] = config.width;
  j["heads"] = config.heads;
  j["layers"] = config.layers;
  j["context_min"] = config.context_min;
  j["context_max"] = config.context_max;
  j["queries_per_episode"] = config.queries_per_episode;
  j["episodes_per_epoch"] = config.episodes_per_epoch;
  j["optim"] = to_json(optim);
  m.config = std::move(j);
  m.seed = optim.seed;
  return m;
}

}  // namespace plbench
