#include "kneeloc/neural.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "kneeloc/errors.hpp"

namespace kneeloc {
namespace {

constexpr double kNormEps = 1e-12;
constexpr double kOutputRange = 6.0;

std::atomic<std::uint64_t> g_revision{1};

std::uint64_t next_revision() { return g_revision.fetch_add(1, std::memory_order_relaxed); }

enum class OpKind { kConv, kNormalize, kDense };

struct Op {
  OpKind kind = OpKind::kConv;
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  int kernel = 1, stride = 1, pad = 0;
  bool relu = false;
  int tensor = -1;  // weight tensor index; bias follows it

  int in_size() const { return in_c * in_h * in_w; }
  int out_size() const { return out_c * out_h * out_w; }
};

std::vector<Op> build_ops(const LocNetArch& arch) {
  std::vector<Op> ops;
  int c = 1, h = arch.input_height, w = arch.input_width;
  int tensor = 0;
  auto add_conv = [&](int out_c, int k, int s, bool relu) {
    Op op;
    op.kind = OpKind::kConv;
    op.in_c = c, op.in_h = h, op.in_w = w;
    op.kernel = k, op.stride = s, op.pad = k / 2;
    op.out_c = out_c;
    op.out_h = (h + 2 * op.pad - k) / s + 1;
    op.out_w = (w + 2 * op.pad - k) / s + 1;
    if (op.out_h < 1 || op.out_w < 1) throw InvalidArgument("network input too small for the conv stack");
    op.relu = relu;
    op.tensor = tensor;
    tensor += 2;
    ops.push_back(op);
    c = op.out_c, h = op.out_h, w = op.out_w;
  };
  for (const ConvLayerSpec& l : arch.conv) add_conv(l.channels, l.kernel, l.stride, true);
  for (std::size_t i = 0; i < arch.pointwise.size(); ++i) {
    add_conv(arch.pointwise[i], 1, 1, i + 1 < arch.pointwise.size());
  }
  if (arch.channel_normalize) {
    Op op;
    op.kind = OpKind::kNormalize;
    op.in_c = op.out_c = c;
    op.in_h = op.out_h = h;
    op.in_w = op.out_w = w;
    ops.push_back(op);
  }
  std::vector<int> widths = arch.hidden;
  widths.push_back(4);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Op op;
    op.kind = OpKind::kDense;
    op.in_c = c * h * w, op.in_h = 1, op.in_w = 1;
    op.out_c = widths[i], op.out_h = 1, op.out_w = 1;
    op.relu = i + 1 < widths.size();
    op.tensor = tensor;
    tensor += 2;
    ops.push_back(op);
    c = op.out_c, h = 1, w = 1;
  }
  return ops;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void conv_forward(const Op& op, const std::vector<double>& W, const std::vector<double>& b,
                  const std::vector<double>& in, std::vector<double>& out) {
  const int k = op.kernel;
  out.assign(op.out_size(), 0.0);
  for (int co = 0; co < op.out_c; ++co) {
    for (int oy = 0; oy < op.out_h; ++oy) {
      for (int ox = 0; ox < op.out_w; ++ox) {
        double acc = b[co];
        for (int ci = 0; ci < op.in_c; ++ci) {
          const double* wk = W.data() + static_cast<std::size_t>((co * op.in_c + ci) * k * k);
          const double* plane = in.data() + static_cast<std::size_t>(ci) * op.in_h * op.in_w;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * op.stride + ky - op.pad;
            if (iy < 0 || iy >= op.in_h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * op.stride + kx - op.pad;
              if (ix < 0 || ix >= op.in_w) continue;
              acc += wk[ky * k + kx] * plane[iy * op.in_w + ix];
            }
          }
        }
        out[(static_cast<std::size_t>(co) * op.out_h + oy) * op.out_w + ox] = acc;
      }
    }
  }
}

void conv_backward(const Op& op, const std::vector<double>& W, const std::vector<double>& in,
                   const std::vector<double>& dout, std::vector<double>& dW,
                   std::vector<double>& db, std::vector<double>* din) {
  const int k = op.kernel;
  if (din) din->assign(op.in_size(), 0.0);
  for (int co = 0; co < op.out_c; ++co) {
    for (int oy = 0; oy < op.out_h; ++oy) {
      for (int ox = 0; ox < op.out_w; ++ox) {
        const double g = dout[(static_cast<std::size_t>(co) * op.out_h + oy) * op.out_w + ox];
        if (g == 0.0) continue;
        db[co] += g;
        for (int ci = 0; ci < op.in_c; ++ci) {
          const std::size_t wbase = static_cast<std::size_t>((co * op.in_c + ci) * k * k);
          const std::size_t pbase = static_cast<std::size_t>(ci) * op.in_h * op.in_w;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * op.stride + ky - op.pad;
            if (iy < 0 || iy >= op.in_h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * op.stride + kx - op.pad;
              if (ix < 0 || ix >= op.in_w) continue;
              const std::size_t p = pbase + iy * op.in_w + ix;
              dW[wbase + ky * k + kx] += g * in[p];
              if (din) (*din)[p] += g * W[wbase + ky * k + kx];
            }
          }
        }
      }
    }
  }
}

void dense_forward(const Op& op, const std::vector<double>& W, const std::vector<double>& b,
                   const std::vector<double>& in, std::vector<double>& out) {
  const int n = op.in_size();
  out.assign(op.out_c, 0.0);
  for (int o = 0; o < op.out_c; ++o) {
    const double* row = W.data() + static_cast<std::size_t>(o) * n;
    double acc = b[o];
    for (int i = 0; i < n; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void dense_backward(const Op& op, const std::vector<double>& W, const std::vector<double>& in,
                    const std::vector<double>& dout, std::vector<double>& dW,
                    std::vector<double>& db, std::vector<double>* din) {
  const int n = op.in_size();
  if (din) din->assign(n, 0.0);
  for (int o = 0; o < op.out_c; ++o) {
    const double g = dout[o];
    if (g == 0.0) continue;
    db[o] += g;
    const std::size_t base = static_cast<std::size_t>(o) * n;
    for (int i = 0; i < n; ++i) {
      dW[base + i] += g * in[i];
      if (din) (*din)[i] += g * W[base + i];
    }
  }
}

void normalize_forward(const Op& op, const std::vector<double>& in, std::vector<double>& out,
                       std::vector<double>& norms) {
  const int plane = op.in_h * op.in_w;
  out.assign(in.size(), 0.0);
  norms.assign(plane, 0.0);
  for (int p = 0; p < plane; ++p) {
    double ss = 0.0;
    for (int c = 0; c < op.in_c; ++c) ss += in[c * plane + p] * in[c * plane + p];
    const double n = std::sqrt(ss);
    norms[p] = n;
    const double d = std::max(n, kNormEps);
    for (int c = 0; c < op.in_c; ++c) out[c * plane + p] = in[c * plane + p] / d;
  }
}

void normalize_backward(const Op& op, const std::vector<double>& out,
                        const std::vector<double>& norms, const std::vector<double>& dout,
                        std::vector<double>& din) {
  const int plane = op.in_h * op.in_w;
  din.assign(out.size(), 0.0);
  for (int p = 0; p < plane; ++p) {
    const double n = norms[p];
    if (n <= kNormEps) {
      for (int c = 0; c < op.in_c; ++c) din[c * plane + p] = dout[c * plane + p] / kNormEps;
      continue;
    }
    double dot = 0.0;
    for (int c = 0; c < op.in_c; ++c) dot += out[c * plane + p] * dout[c * plane + p];
    for (int c = 0; c < op.in_c; ++c) {
      din[c * plane + p] = (dout[c * plane + p] - out[c * plane + p] * dot) / n;
    }
  }
}

}  // namespace

void LocNetArch::validate() const {
  if (input_height < 1 || input_width < 1) throw InvalidArgument("network input size must be positive");
  for (const ConvLayerSpec& l : conv) {
    if (l.channels < 1 || l.kernel < 1 || l.stride < 1) throw InvalidArgument("bad conv layer spec");
  }
  for (int c : pointwise) {
    if (c < 1) throw InvalidArgument("bad pointwise conv width");
  }
  for (int h : hidden) {
    if (h < 1) throw InvalidArgument("bad hidden layer width");
  }
  build_ops(*this);
}

LocNetWeights::LocNetWeights(LocNetArch arch) : arch_(std::move(arch)), revision_(next_revision()) {
  arch_.validate();
  const std::vector<Op> ops = build_ops(arch_);
  int conv_index = 0, pw_index = 0, fc_index = 0;
  for (const Op& op : ops) {
    if (op.kind == OpKind::kNormalize) continue;
    ParamTensor W, b;
    if (op.kind == OpKind::kConv) {
      const bool backbone = conv_index < static_cast<int>(arch_.conv.size());
      const std::string name =
          backbone ? "conv" + std::to_string(conv_index) : "pointwise" + std::to_string(pw_index++);
      ++conv_index;
      W.name = name + ".weight";
      b.name = name + ".bias";
      W.group = b.group = backbone ? ParamGroup::kBackbone : ParamGroup::kHead;
      W.shape = {op.out_c, op.in_c, op.kernel, op.kernel};
    } else {
      const std::string name = "fc" + std::to_string(fc_index++);
      W.name = name + ".weight";
      b.name = name + ".bias";
      W.group = b.group = ParamGroup::kHead;
      W.shape = {op.out_c, op.in_size()};
    }
    b.shape = {op.out_c};
    W.values.assign(std::accumulate(W.shape.begin(), W.shape.end(), std::size_t{1}, std::multiplies<>()), 0.0);
    b.values.assign(op.out_c, 0.0);
    tensors_.push_back(std::move(W));
    tensors_.push_back(std::move(b));
  }
}

LocNetWeights LocNetWeights::initialize(const LocNetArch& arch, std::uint64_t seed) {
  LocNetWeights w(arch);
  w.seed_ = seed;
  std::mt19937_64 rng(seed);
  auto& ts = w.mutable_tensors();
  for (std::size_t t = 0; t < ts.size(); t += 2) {
    const auto& shape = ts[t].shape;
    const std::size_t fan_in = ts[t].values.size() / static_cast<std::size_t>(shape[0]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    const bool last = t + 2 == ts.size();
    for (double& v : ts[t].values) v = dist(rng) * (last ? 0.01 : 1.0);
  }
  return w;
}

std::vector<ParamTensor>& LocNetWeights::mutable_tensors() {
  revision_ = next_revision();
  return tensors_;
}

std::size_t LocNetWeights::parameter_count() const {
  std::size_t n = 0;
  for (const ParamTensor& t : tensors_) n += t.values.size();
  return n;
}

ParamSet LocNetWeights::zeros_like() const {
  ParamSet out;
  out.reserve(tensors_.size());
  for (const ParamTensor& t : tensors_) out.emplace_back(t.values.size(), 0.0);
  return out;
}

Image prepare_input(const Image& half, const LocNetArch& arch) {
  Image x = (half.height() == arch.input_height && half.width() == arch.input_width)
                ? half
                : resize(half, arch.input_height, arch.input_width);
  double sum = 0.0, sq = 0.0;
  for (float v : x.data()) sum += v;
  const double n = static_cast<double>(x.size());
  const double mean = sum / n;
  for (float v : x.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / n);
  const double inv = sd > 1e-8 ? 1.0 / sd : 1.0;
  for (float& v : x.data()) v = static_cast<float>((v - mean) * inv);
  return x;
}

NetOutput locnet_forward(const LocNetWeights& w, const Image& input, LocNetCache* cache) {
  const LocNetArch& arch = w.arch();
  if (input.height() != arch.input_height || input.width() != arch.input_width) {
    throw ShapeMismatch("network input is " + std::to_string(input.height()) + "x" +
                        std::to_string(input.width()) + ", expected " +
                        std::to_string(arch.input_height) + "x" + std::to_string(arch.input_width));
  }
  const std::vector<Op> ops = build_ops(arch);
  const auto& ts = w.tensors();
  std::vector<std::vector<double>> acts(ops.size() + 1);
  acts[0].assign(input.data().begin(), input.data().end());
  std::vector<double> norms;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const Op& op = ops[i];
    switch (op.kind) {
      case OpKind::kConv:
        conv_forward(op, ts[op.tensor].values, ts[op.tensor + 1].values, acts[i], acts[i + 1]);
        break;
      case OpKind::kDense:
        dense_forward(op, ts[op.tensor].values, ts[op.tensor + 1].values, acts[i], acts[i + 1]);
        break;
      case OpKind::kNormalize:
        normalize_forward(op, acts[i], acts[i + 1], norms);
        break;
    }
    if (op.relu) {
      for (double& v : acts[i + 1]) v = std::max(v, 0.0);
    }
  }
  NetOutput logits{}, out{};
  for (int k = 0; k < 4; ++k) {
    logits[k] = acts.back()[k];
    out[k] = kOutputRange * (sigmoid(logits[k]) - 0.5);
  }
  if (cache) {
    cache->weights = &w;
    cache->revision = w.revision();
    cache->acts = std::move(acts);
    cache->norms = std::move(norms);
    cache->logits = logits;
    cache->output = out;
  }
  return out;
}

ParamSet locnet_backward(const LocNetCache& cache, const NetOutput& upstream) {
  if (!cache.weights) throw StaleCache("backward pass without a forward cache");
  const LocNetWeights& w = *cache.weights;
  if (w.revision() != cache.revision) throw StaleCache("weights changed since the forward pass");
  const std::vector<Op> ops = build_ops(w.arch());
  const auto& ts = w.tensors();
  ParamSet grad = w.zeros_like();

  std::vector<double> delta(4);
  for (int k = 0; k < 4; ++k) {
    const double s = sigmoid(cache.logits[k]);
    delta[k] = upstream[k] * kOutputRange * s * (1.0 - s);
  }
  std::vector<double> next;
  for (std::size_t i = ops.size(); i-- > 0;) {
    const Op& op = ops[i];
    const std::vector<double>& out = cache.acts[i + 1];
    const std::vector<double>& in = cache.acts[i];
    if (op.relu) {
      for (std::size_t j = 0; j < delta.size(); ++j) {
        if (out[j] <= 0.0) delta[j] = 0.0;
      }
    }
    std::vector<double>* din = i > 0 ? &next : nullptr;
    switch (op.kind) {
      case OpKind::kConv:
        conv_backward(op, ts[op.tensor].values, in, delta, grad[op.tensor], grad[op.tensor + 1], din);
        break;
      case OpKind::kDense:
        dense_backward(op, ts[op.tensor].values, in, delta, grad[op.tensor], grad[op.tensor + 1], din);
        break;
      case OpKind::kNormalize:
        normalize_backward(op, out, cache.norms, delta, next);
        break;
    }
    if (i > 0) delta.swap(next);
  }
  return grad;
}

NetOutput predict(const LocNetWeights& w, const Image& half) {
  return locnet_forward(w, prepare_input(half, w.arch()));
}

void TrainConfig::validate() const {
  if (outer_iterations < 1) throw InvalidArgument("outer_iterations must be >= 1");
  if (epochs_per_outer < 1) throw InvalidArgument("epochs_per_outer must be >= 1");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (!(lr_backbone > 0.0) || !(lr_head > 0.0)) throw InvalidArgument("learning rates must be > 0");
  if (!(cu_floor > 0.0)) throw InvalidArgument("cu_floor must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw InvalidArgument("bad Adam moments for training");
  }
  sharpen.validate();
}

namespace {

struct Prepared {
  const TrainingPair* pair;
  Image left;
  Image right;
};

std::vector<Prepared> prepare_all(const std::vector<TrainingPair>& data, const LocNetArch& arch) {
  std::vector<Prepared> out;
  out.reserve(data.size());
  for (const TrainingPair& p : data) {
    out.push_back({&p, prepare_input(p.left, arch), prepare_input(p.right, arch)});
  }
  return out;
}

PairVector join(const NetOutput& a, const NetOutput& b) {
  return {a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]};
}

std::vector<LossBreakdown> example_losses(const LocNetWeights& w, const std::vector<Prepared>& prep,
                                          const Template& T, const ParamConfig& pcfg) {
  PairLossWorkspace ws(T);
  std::vector<LossBreakdown> out;
  out.reserve(prep.size());
  for (const Prepared& p : prep) {
    const PairVector v = join(locnet_forward(w, p.left), locnet_forward(w, p.right));
    out.push_back(ws.evaluate(p.pair->left, p.pair->right, v, pcfg, false).loss);
  }
  return out;
}

double gradient_on(const LocNetWeights& w, const std::vector<Prepared>& prep,
                   const std::vector<std::size_t>& batch, const std::vector<double>& cu,
                   const Template& T, const ParamConfig& pcfg, ParamSet& grad) {
  grad = w.zeros_like();
  PairLossWorkspace ws(T);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double objective = 0.0;
  LocNetCache cl, cr;
  for (std::size_t idx : batch) {
    const Prepared& p = prep.at(idx);
    const NetOutput vl = locnet_forward(w, p.left, &cl);
    const NetOutput vr = locnet_forward(w, p.right, &cr);
    const LossAndGrad lg = ws.evaluate(p.pair->left, p.pair->right, join(vl, vr), pcfg, true);
    const double scale = cu.at(idx) * inv_b;
    objective += scale * lg.loss.total;
    if (!std::isfinite(lg.loss.total)) return lg.loss.total;
    NetOutput ul{}, ur{};
    for (int k = 0; k < 4; ++k) {
      ul[k] = scale * lg.grad[k];
      ur[k] = scale * lg.grad[4 + k];
    }
    const ParamSet gl = locnet_backward(cl, ul);
    const ParamSet gr = locnet_backward(cr, ur);
    for (std::size_t t = 0; t < grad.size(); ++t) {
      for (std::size_t j = 0; j < grad[t].size(); ++j) grad[t][j] += gl[t][j] + gr[t][j];
    }
  }
  return objective;
}

double step_on(TrainState& state, const std::vector<Prepared>& prep,
               const std::vector<std::size_t>& batch, const Template& T, const ParamConfig& pcfg,
               const TrainConfig& cfg) {
  ParamSet grad;
  const double objective = gradient_on(state.weights, prep, batch, state.cu, T, pcfg, grad);
  if (!std::isfinite(objective)) return objective;
  AdamMoments& mo = state.moments;
  if (mo.m.empty()) {
    mo.m = state.weights.zeros_like();
    mo.s = state.weights.zeros_like();
  }
  ++mo.steps;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(mo.steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(mo.steps));
  auto& ts = state.weights.mutable_tensors();
  for (std::size_t t = 0; t < ts.size(); ++t) {
    const double lr = ts[t].group == ParamGroup::kBackbone ? cfg.lr_backbone : cfg.lr_head;
    for (std::size_t j = 0; j < ts[t].values.size(); ++j) {
      const double g = grad[t][j];
      mo.m[t][j] = cfg.beta1 * mo.m[t][j] + (1.0 - cfg.beta1) * g;
      mo.s[t][j] = cfg.beta2 * mo.s[t][j] + (1.0 - cfg.beta2) * g * g;
      ts[t].values[j] -= lr * (mo.m[t][j] / c1) / (std::sqrt(mo.s[t][j] / c2) + cfg.epsilon);
    }
  }
  return objective;
}

std::vector<double> refresh_on(const LocNetWeights& w, const std::vector<Prepared>& prep,
                               const Template& T, const ParamConfig& pcfg, const TrainConfig& cfg) {
  std::vector<double> cu;
  cu.reserve(prep.size());
  for (const Prepared& p : prep) {
    const PairVector v0 = join(locnet_forward(w, p.left), locnet_forward(w, p.right));
    const SharpenResult r = sharpen(p.pair->left, p.pair->right, T, pcfg, v0, cfg.sharpen);
    cu.push_back(1.0 / std::max(r.loss.total, cfg.cu_floor));
  }
  return cu;
}

double scaled_mean(const std::vector<LossBreakdown>& losses, const std::vector<double>& cu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) acc += cu.at(i) * losses[i].total;
  return acc / static_cast<double>(losses.size());
}

}  // namespace

double mean_scaled_loss(const LocNetWeights& w, const std::vector<TrainingPair>& data,
                        const Template& T, const ParamConfig& pcfg, const std::vector<double>& cu) {
  if (data.empty()) throw InvalidArgument("no training data");
  return scaled_mean(example_losses(w, prepare_all(data, w.arch()), T, pcfg), cu);
}

std::vector<double> refresh_scaling(const LocNetWeights& w, const std::vector<TrainingPair>& data,
                                    const Template& T, const ParamConfig& pcfg,
                                    const TrainConfig& cfg) {
  return refresh_on(w, prepare_all(data, w.arch()), T, pcfg, cfg);
}

double batch_gradient(const LocNetWeights& w, const std::vector<TrainingPair>& data,
                      const std::vector<std::size_t>& batch, const std::vector<double>& cu,
                      const Template& T, const ParamConfig& pcfg, ParamSet& grad) {
  if (batch.empty()) throw InvalidArgument("empty minibatch");
  return gradient_on(w, prepare_all(data, w.arch()), batch, cu, T, pcfg, grad);
}

double train_step(TrainState& state, const std::vector<TrainingPair>& data,
                  const std::vector<std::size_t>& batch, const Template& T,
                  const ParamConfig& pcfg, const TrainConfig& cfg) {
  if (batch.empty()) throw InvalidArgument("empty minibatch");
  if (state.cu.size() != data.size()) state.cu.assign(data.size(), 1.0);
  const double obj = step_on(state, prepare_all(data, state.weights.arch()), batch, T, pcfg, cfg);
  if (!std::isfinite(obj)) throw NonFiniteLoss("non-finite training objective");
  return obj;
}

TrainResult train_phase(const std::vector<TrainingPair>& data, const Template& T,
                        const ParamConfig& pcfg, const TrainConfig& cfg, LocNetWeights init) {
  cfg.validate();
  pcfg.validate();
  if (data.empty()) throw InvalidArgument("no training data");
  const std::vector<Prepared> prep = prepare_all(data, init.arch());

  TrainResult result{TrainState{std::move(init), {}, {}, 0, 0}, {}, false, {}};
  TrainState& st = result.state;
  st.cu.assign(data.size(), 1.0);

  auto record = [&](int outer) {
    const std::vector<LossBreakdown> losses = example_losses(st.weights, prep, T, pcfg);
    const std::vector<double> ones(losses.size(), 1.0);
    result.curve.push_back({outer, st.epoch, scaled_mean(losses, st.cu), scaled_mean(losses, ones)});
  };
  record(0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
    st.outer = outer;
    if (outer >= 1) {
      st.cu = refresh_on(st.weights, prep, T, pcfg, cfg);
      // The refreshed c_u rescale the objective by up to 1/cu_floor; stale
      // second moments would turn that into oversized first steps.
      st.moments = {};
    }
    for (int e = 0; e < cfg.epochs_per_outer; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
        const std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);
        const LocNetWeights checkpoint = st.weights;
        const AdamMoments moments = st.moments;
        const double obj = step_on(st, prep, batch, T, pcfg, cfg);
        if (!std::isfinite(obj)) {
          st.weights = checkpoint;
          st.moments = moments;
          result.aborted = true;
          result.abort_reason = "non-finite loss at outer " + std::to_string(outer) + ", epoch " +
                                std::to_string(st.epoch);
          return result;
        }
      }
      ++st.epoch;
      record(outer);
    }
  }
  return result;
}

PoseParams enlarge_pose(const PoseParams& pose, const ParamConfig& pcfg, double factor) {
  PoseParams p = pose;
  p.scale = std::min(factor * pose.scale, pcfg.alpha0 + pcfg.beta0);
  return clamp_to_box(p, pcfg);
}

PoseParams compose_poses(const PoseParams& outer, double f_outer, const PoseParams& inner,
                         double f_inner, double f_result) {
  return pose_from_affine(compose(affine_matrix(outer, f_outer), affine_matrix(inner, f_inner)),
                          f_result);
}

ParamConfig coarse_config(const ParamConfig& base, const Template& T_coarse) {
  ParamConfig c = base;
  c.f = T_coarse.f();
  return c;
}

ParamConfig fine_relative_config(const ParamConfig& base, const Template& T_coarse,
                                 const Template& T_fine) {
  ParamConfig c = base;
  c.f = T_fine.f() / T_coarse.f();
  return c;
}

ParamConfig fine_config(const ParamConfig& base, const Template& T_fine) {
  ParamConfig c = base;
  c.f = T_fine.f();
  return c;
}

PhaseCrop phase_one_crop(const LocNetWeights& coarse, const Image& half, const Template& T_coarse,
                         const ParamConfig& base, double enlarge) {
  const ParamConfig cc = coarse_config(base, T_coarse);
  const NetOutput v = predict(coarse, half);
  PhaseCrop out;
  out.coarse = constrain({v[0], v[1], v[2], v[3]}, cc);
  out.enlarged = enlarge_pose(out.coarse, cc, enlarge);
  out.crop = warp(half, affine_matrix(out.enlarged, cc.f), T_coarse.height(), T_coarse.width());
  return out;
}

TwoPhaseResult two_phase_train(const std::vector<TrainingPair>& data, const Template& T_coarse,
                               const Template& T_fine, const ParamConfig& base,
                               const TwoPhaseConfig& cfg) {
  if (!(cfg.enlarge >= 1.0)) throw InvalidArgument("enlarge factor must be >= 1");
  const ParamConfig cc = coarse_config(base, T_coarse);
  const ParamConfig rel = fine_relative_config(base, T_coarse, T_fine);
  rel.validate();

  TwoPhaseResult out;
  out.coarse = train_phase(data, T_coarse, cc, cfg.coarse,
                           LocNetWeights::initialize(cfg.coarse_arch, cfg.coarse.seed));
  if (out.coarse.aborted) throw NonFiniteLoss("phase 1 training aborted: " + out.coarse.abort_reason);

  std::vector<TrainingPair> crops;
  crops.reserve(data.size());
  for (const TrainingPair& p : data) {
    crops.push_back({phase_one_crop(out.coarse.state.weights, p.left, T_coarse, base, cfg.enlarge).crop,
                     phase_one_crop(out.coarse.state.weights, p.right, T_coarse, base, cfg.enlarge).crop});
  }
  out.fine = train_phase(crops, T_fine, rel, cfg.fine,
                         LocNetWeights::initialize(cfg.fine_arch, cfg.fine.seed));
  if (out.fine.aborted) throw NonFiniteLoss("phase 2 training aborted: " + out.fine.abort_reason);
  out.model = {out.coarse.state.weights, out.fine.state.weights, cfg.enlarge};
  return out;
}

Detection infer(const TwoPhaseModel& model, const Image& u_left, const Image& u_right,
                const Template& T_coarse, const Template& T_fine, const ParamConfig& base,
                const InferConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const ParamConfig cc = coarse_config(base, T_coarse);
  const ParamConfig rel = fine_relative_config(base, T_coarse, T_fine);
  const ParamConfig fc = fine_config(base, T_fine);

  // The reported pose is the image of an unconstrained vector, so sharpening
  // starts exactly from it.
  auto side = [&](const Image& u) {
    const PhaseCrop pc = phase_one_crop(model.coarse, u, T_coarse, base, model.enlarge);
    const NetOutput v2 = predict(model.fine, pc.crop);
    const PoseParams inner = constrain({v2[0], v2[1], v2[2], v2[3]}, rel);
    const PoseParams p = clamp_to_box(compose_poses(pc.enlarged, cc.f, inner, rel.f, fc.f), fc, 1e-6);
    return unconstrain(p, fc);
  };
  const UnconstrainedParams vl = side(u_left);
  const UnconstrainedParams vr = side(u_right);

  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  if (!cfg.sharpen) {
    Detection d = make_detection("neural", u_left, u_right, constrain(vl, fc), constrain(vr, fc),
                                 T_fine, fc.f);
    d.stats.wall_ms = elapsed();
    return d;
  }
  const PairVector v0 = join(vl, vr);
  const SharpenResult r = sharpen(u_left, u_right, T_fine, fc, v0, cfg.sharpen_cfg);
  Detection d = make_detection("neural+sharpen", u_left, u_right,
                               constrain({r.v[0], r.v[1], r.v[2], r.v[3]}, fc),
                               constrain({r.v[4], r.v[5], r.v[6], r.v[7]}, fc), T_fine, fc.f);
  d.stats.inits = 1;
  d.stats.evals = r.evaluations;
  d.stats.wall_ms = elapsed();
  return d;
}

}  // namespace kneeloc
