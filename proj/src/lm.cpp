#include "atdp/lm.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace atdp {

namespace {

constexpr double kRmsEps = 1e-5;
constexpr double kInitStd = 0.02;

// Offsets of each parameter block within the flat theta vector.
struct LayerOffsets {
  size_t ln1_gain, wq, wk, wv, wo;
  size_t ln2_gain, w1, b1, w2, b2;
};

struct Layout {
  size_t tok_emb, pos_emb;
  std::vector<LayerOffsets> layers;
  size_t final_gain, lm_head;
  size_t total;
};

Layout make_layout(const ArchConfig& a) {
  const size_t v = static_cast<size_t>(a.vocab_size);
  const size_t d = static_cast<size_t>(a.embed_dim);
  const size_t h = static_cast<size_t>(a.hidden_dim);
  const size_t t = static_cast<size_t>(a.context_len);

  Layout lo;
  size_t off = 0;
  lo.tok_emb = off;
  off += v * d;
  lo.pos_emb = off;
  off += t * d;
  for (int l = 0; l < a.num_layers; ++l) {
    LayerOffsets L{};
    L.ln1_gain = off; off += d;
    L.wq = off; off += d * d;
    L.wk = off; off += d * d;
    L.wv = off; off += d * d;
    L.wo = off; off += d * d;
    L.ln2_gain = off; off += d;
    L.w1 = off; off += h * d;
    L.b1 = off; off += h;
    L.w2 = off; off += d * h;
    L.b2 = off; off += d;
    lo.layers.push_back(L);
  }
  lo.final_gain = off; off += d;
  lo.lm_head = off; off += v * d;
  lo.total = off;
  return lo;
}

// y = W x  with W stored row-major (rows x cols)
void matvec(const double* w, const double* x, double* y, size_t rows,
            size_t cols) {
  for (size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double acc = 0.0;
    for (size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

// dX += W^T dY ; dW += dY x^T
void matvec_backward(const double* w, const double* x, const double* dy,
                     double* dw, double* dx, size_t rows, size_t cols) {
  for (size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* wr = w + r * cols;
    double* dwr = dw + r * cols;
    for (size_t c = 0; c < cols; ++c) {
      dwr[c] += g * x[c];
      dx[c] += g * wr[c];
    }
  }
}

void rmsnorm(const double* x, const double* gain, double* y, double* rms_out,
             size_t d) {
  double ss = 0.0;
  for (size_t i = 0; i < d; ++i) ss += x[i] * x[i];
  const double rms = std::sqrt(ss / static_cast<double>(d) + kRmsEps);
  for (size_t i = 0; i < d; ++i) y[i] = gain[i] * x[i] / rms;
  *rms_out = rms;
}

// dx += backward of y = gain * x / rms ; dgain accumulated as well
void rmsnorm_backward(const double* x, const double* gain, const double* dy,
                      double rms, double* dx, double* dgain, size_t d) {
  double s = 0.0;
  for (size_t i = 0; i < d; ++i) s += dy[i] * gain[i] * x[i];
  const double inv = 1.0 / rms;
  const double scale = s / (static_cast<double>(d) * rms * rms * rms);
  for (size_t i = 0; i < d; ++i) {
    dgain[i] += dy[i] * x[i] * inv;
    dx[i] += dy[i] * gain[i] * inv - x[i] * scale;
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double z) {
  const double u = kGeluC * (z + 0.044715 * z * z * z);
  return 0.5 * z * (1.0 + std::tanh(u));
}

double gelu_grad(double z) {
  const double u = kGeluC * (z + 0.044715 * z * z * z);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * z * z);
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
}

}  // namespace

struct LmWorkspace {
  // per-layer activation caches, sized on demand
  std::vector<std::vector<double>> h_in;    // input stream per layer, S*d
  std::vector<std::vector<double>> normed1; // S*d
  std::vector<std::vector<double>> q, k, v; // S*d
  std::vector<std::vector<double>> probs;   // S*S attention weights
  std::vector<std::vector<double>> ctx;     // S*d
  std::vector<std::vector<double>> h_mid;   // S*d
  std::vector<std::vector<double>> normed2; // S*d
  std::vector<std::vector<double>> preact;  // S*h
  std::vector<std::vector<double>> hidden;  // S*h (gelu outputs)
  std::vector<std::vector<double>> rms1, rms2;  // S

  std::vector<double> x;        // S*d running stream
  std::vector<double> f_in;     // S*d final pre-norm input
  std::vector<double> f_norm;   // S*d
  std::vector<double> rms_f;    // S
  std::vector<double> logits;   // S*V
  std::vector<double> lse;      // S

  // backward scratch
  std::vector<double> dx, d_tmp, d_ctx, dq, dk, dv, d_norm;
  std::vector<double> d_hidden_row, d_preact_row, d_logit_row;
  std::vector<double> d_scores_row;

  void ensure(const ArchConfig& a, size_t s) {
    const size_t d = static_cast<size_t>(a.embed_dim);
    const size_t h = static_cast<size_t>(a.hidden_dim);
    const size_t vsz = static_cast<size_t>(a.vocab_size);
    const size_t layers = static_cast<size_t>(a.num_layers);
    auto size_all = [&](std::vector<std::vector<double>>& vec, size_t n) {
      vec.resize(layers);
      for (auto& b : vec) b.assign(n, 0.0);
    };
    size_all(h_in, s * d);
    size_all(normed1, s * d);
    size_all(q, s * d);
    size_all(k, s * d);
    size_all(v, s * d);
    size_all(probs, s * s);
    size_all(ctx, s * d);
    size_all(h_mid, s * d);
    size_all(normed2, s * d);
    size_all(preact, s * h);
    size_all(hidden, s * h);
    size_all(rms1, s);
    size_all(rms2, s);
    x.assign(s * d, 0.0);
    f_in.assign(s * d, 0.0);
    f_norm.assign(s * d, 0.0);
    rms_f.assign(s, 0.0);
    logits.assign(s * vsz, 0.0);
    lse.assign(s, 0.0);
    dx.assign(s * d, 0.0);
    d_tmp.assign(s * d, 0.0);
    d_ctx.assign(s * d, 0.0);
    dq.assign(s * d, 0.0);
    dk.assign(s * d, 0.0);
    dv.assign(s * d, 0.0);
    d_norm.assign(s * d, 0.0);
    d_hidden_row.assign(h, 0.0);
    d_preact_row.assign(h, 0.0);
    d_logit_row.assign(vsz, 0.0);
    d_scores_row.assign(s, 0.0);
  }
};

LmWorkspace* new_workspace() { return new LmWorkspace(); }
void free_workspace(LmWorkspace* ws) { delete ws; }

void ArchConfig::validate() const {
  if (vocab_size <= 0 || embed_dim <= 0 || hidden_dim <= 0 ||
      num_layers <= 0 || context_len <= 0)
    fail(ErrorKind::ConfigError, "architecture fields must be positive");
}

size_t param_count(const ArchConfig& arch) {
  return make_layout(arch).total;
}

size_t token_embedding_offset(const ArchConfig& arch) {
  return make_layout(arch).tok_emb;
}

size_t lm_head_offset(const ArchConfig& arch) {
  return make_layout(arch).lm_head;
}

ModelParams zero_model(const ArchConfig& arch) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  p.theta.assign(param_count(arch), 0.0);
  return p;
}

ModelParams init_model(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  const Layout lo = make_layout(arch);
  ModelParams p;
  p.arch = arch;
  p.theta.assign(lo.total, 0.0);
  for (double& w : p.theta) w = kInitStd * rng.gauss();
  // norm gains start at one, biases at zero
  const size_t d = static_cast<size_t>(arch.embed_dim);
  const size_t h = static_cast<size_t>(arch.hidden_dim);
  for (const auto& L : lo.layers) {
    for (size_t i = 0; i < d; ++i) p.theta[L.ln1_gain + i] = 1.0;
    for (size_t i = 0; i < d; ++i) p.theta[L.ln2_gain + i] = 1.0;
    for (size_t i = 0; i < h; ++i) p.theta[L.b1 + i] = 0.0;
    for (size_t i = 0; i < d; ++i) p.theta[L.b2 + i] = 0.0;
  }
  for (size_t i = 0; i < d; ++i) p.theta[lo.final_gain + i] = 1.0;
  return p;
}

namespace {

// Runs the forward pass, filling the workspace caches. Returns the number
// of predicted positions S (= record length - 1).
size_t forward_pass(const ModelParams& params, const TokenizedRecord& record,
                    LmWorkspace& ws, std::vector<double>& losses) {
  const ArchConfig& a = params.arch;
  a.validate();
  const size_t n = record.token_ids.size();
  if (n == 0) fail(ErrorKind::EmptyInput, "empty record");
  if (n > static_cast<size_t>(a.context_len) + 1)
    fail(ErrorKind::ConfigError, "record longer than context window");
  for (int32_t id : record.token_ids) {
    if (id < 0 || id >= a.vocab_size)
      fail(ErrorKind::VocabError, "token id outside vocabulary");
  }
  losses.clear();
  if (n == 1) return 0;  // no prediction targets

  const size_t s = n - 1;
  const size_t d = static_cast<size_t>(a.embed_dim);
  const size_t h = static_cast<size_t>(a.hidden_dim);
  const size_t vsz = static_cast<size_t>(a.vocab_size);
  const Layout lo = make_layout(a);
  const double* th = params.theta.data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  ws.ensure(a, s);

  for (size_t t = 0; t < s; ++t) {
    const size_t tok = static_cast<size_t>(record.token_ids[t]);
    const double* te = th + lo.tok_emb + tok * d;
    const double* pe = th + lo.pos_emb + t * d;
    double* xt = ws.x.data() + t * d;
    for (size_t i = 0; i < d; ++i) xt[i] = te[i] + pe[i];
  }

  for (int l = 0; l < a.num_layers; ++l) {
    const LayerOffsets& L = lo.layers[static_cast<size_t>(l)];
    auto& h_in = ws.h_in[static_cast<size_t>(l)];
    auto& normed1 = ws.normed1[static_cast<size_t>(l)];
    auto& q = ws.q[static_cast<size_t>(l)];
    auto& k = ws.k[static_cast<size_t>(l)];
    auto& v = ws.v[static_cast<size_t>(l)];
    auto& probs = ws.probs[static_cast<size_t>(l)];
    auto& ctx = ws.ctx[static_cast<size_t>(l)];
    auto& h_mid = ws.h_mid[static_cast<size_t>(l)];
    auto& normed2 = ws.normed2[static_cast<size_t>(l)];
    auto& preact = ws.preact[static_cast<size_t>(l)];
    auto& hidden = ws.hidden[static_cast<size_t>(l)];
    auto& rms1 = ws.rms1[static_cast<size_t>(l)];
    auto& rms2 = ws.rms2[static_cast<size_t>(l)];

    std::memcpy(h_in.data(), ws.x.data(), s * d * sizeof(double));

    for (size_t t = 0; t < s; ++t) {
      rmsnorm(h_in.data() + t * d, th + L.ln1_gain, normed1.data() + t * d,
              &rms1[t], d);
      matvec(th + L.wq, normed1.data() + t * d, q.data() + t * d, d, d);
      matvec(th + L.wk, normed1.data() + t * d, k.data() + t * d, d, d);
      matvec(th + L.wv, normed1.data() + t * d, v.data() + t * d, d, d);
    }

    for (size_t t = 0; t < s; ++t) {
      double* pt = probs.data() + t * s;
      double mx = -1e300;
      for (size_t j = 0; j <= t; ++j) {
        double sc = 0.0;
        const double* qt = q.data() + t * d;
        const double* kj = k.data() + j * d;
        for (size_t i = 0; i < d; ++i) sc += qt[i] * kj[i];
        sc *= scale;
        pt[j] = sc;
        if (sc > mx) mx = sc;
      }
      double denom = 0.0;
      for (size_t j = 0; j <= t; ++j) {
        pt[j] = std::exp(pt[j] - mx);
        denom += pt[j];
      }
      for (size_t j = 0; j <= t; ++j) pt[j] /= denom;
      double* ct = ctx.data() + t * d;
      std::memset(ct, 0, d * sizeof(double));
      for (size_t j = 0; j <= t; ++j) {
        const double p = pt[j];
        const double* vj = v.data() + j * d;
        for (size_t i = 0; i < d; ++i) ct[i] += p * vj[i];
      }
      // attention output projection + residual
      double* xt = ws.x.data() + t * d;
      const double* wo = th + L.wo;
      for (size_t r = 0; r < d; ++r) {
        const double* wr = wo + r * d;
        double acc = 0.0;
        for (size_t i = 0; i < d; ++i) acc += wr[i] * ct[i];
        xt[r] = h_in[t * d + r] + acc;
      }
    }

    std::memcpy(h_mid.data(), ws.x.data(), s * d * sizeof(double));

    for (size_t t = 0; t < s; ++t) {
      rmsnorm(h_mid.data() + t * d, th + L.ln2_gain, normed2.data() + t * d,
              &rms2[t], d);
      matvec(th + L.w1, normed2.data() + t * d, preact.data() + t * h, h, d);
      for (size_t i = 0; i < h; ++i) {
        preact[t * h + i] += th[L.b1 + i];
        hidden[t * h + i] = gelu(preact[t * h + i]);
      }
      double* xt = ws.x.data() + t * d;
      const double* w2 = th + L.w2;
      for (size_t r = 0; r < d; ++r) {
        const double* wr = w2 + r * h;
        double acc = th[L.b2 + r];
        for (size_t i = 0; i < h; ++i) acc += wr[i] * hidden[t * h + i];
        xt[r] = h_mid[t * d + r] + acc;
      }
    }
  }

  std::memcpy(ws.f_in.data(), ws.x.data(), s * d * sizeof(double));
  losses.resize(s);
  for (size_t t = 0; t < s; ++t) {
    rmsnorm(ws.f_in.data() + t * d, th + lo.final_gain,
            ws.f_norm.data() + t * d, &ws.rms_f[t], d);
    double* lg = ws.logits.data() + t * vsz;
    matvec(th + lo.lm_head, ws.f_norm.data() + t * d, lg, vsz, d);
    double mx = lg[0];
    for (size_t vv = 1; vv < vsz; ++vv) mx = std::max(mx, lg[vv]);
    double denom = 0.0;
    for (size_t vv = 0; vv < vsz; ++vv) denom += std::exp(lg[vv] - mx);
    ws.lse[t] = mx + std::log(denom);
    const size_t target = static_cast<size_t>(record.token_ids[t + 1]);
    losses[t] = ws.lse[t] - lg[target];
    if (!std::isfinite(losses[t]))
      fail(ErrorKind::NumericsError, "non-finite token loss");
  }
  return s;
}

}  // namespace

std::vector<double> forward_loss(const ModelParams& params,
                                 const TokenizedRecord& record,
                                 LmWorkspace* ws) {
  WorkspaceHandle local;
  LmWorkspace& w = ws ? *ws : *local.get();
  std::vector<double> losses;
  forward_pass(params, record, w, losses);
  return losses;
}

RecordGradient weighted_record_gradient(const ModelParams& params,
                                        const TokenizedRecord& record,
                                        int64_t record_index,
                                        LmWorkspace* ws_in) {
  if (record.weights.size() != record.token_ids.size())
    fail(ErrorKind::AlignmentError, "record weights not populated");

  WorkspaceHandle local;
  LmWorkspace& ws = ws_in ? *ws_in : *local.get();

  RecordGradient out;
  out.record_index = record_index;
  out.grad.assign(param_count(params.arch), 0.0);

  const size_t s = forward_pass(params, record, ws, out.token_losses);
  if (s == 0) return out;

  const ArchConfig& a = params.arch;
  const size_t d = static_cast<size_t>(a.embed_dim);
  const size_t h = static_cast<size_t>(a.hidden_dim);
  const size_t vsz = static_cast<size_t>(a.vocab_size);
  const Layout lo = make_layout(a);
  const double* th = params.theta.data();
  double* gr = out.grad.data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // ----- head and final norm -----
  std::fill(ws.dx.begin(), ws.dx.end(), 0.0);
  for (size_t t = 0; t < s; ++t) {
    const double u = record.weights[t + 1];  // weight of the target token
    const size_t target = static_cast<size_t>(record.token_ids[t + 1]);
    const double* lg = ws.logits.data() + t * vsz;
    double* dl = ws.d_logit_row.data();
    for (size_t vv = 0; vv < vsz; ++vv)
      dl[vv] = u * std::exp(lg[vv] - ws.lse[t]);
    dl[target] -= u;

    std::fill(ws.d_norm.begin(), ws.d_norm.begin() + static_cast<long>(d), 0.0);
    matvec_backward(th + lo.lm_head, ws.f_norm.data() + t * d, dl,
                    gr + lo.lm_head, ws.d_norm.data(), vsz, d);
    rmsnorm_backward(ws.f_in.data() + t * d, th + lo.final_gain,
                     ws.d_norm.data(), ws.rms_f[t], ws.dx.data() + t * d,
                     gr + lo.final_gain, d);
  }

  // ----- transformer layers in reverse -----
  for (int l = a.num_layers - 1; l >= 0; --l) {
    const LayerOffsets& L = lo.layers[static_cast<size_t>(l)];
    const auto& h_in = ws.h_in[static_cast<size_t>(l)];
    const auto& normed1 = ws.normed1[static_cast<size_t>(l)];
    const auto& q = ws.q[static_cast<size_t>(l)];
    const auto& k = ws.k[static_cast<size_t>(l)];
    const auto& v = ws.v[static_cast<size_t>(l)];
    const auto& probs = ws.probs[static_cast<size_t>(l)];
    const auto& ctx = ws.ctx[static_cast<size_t>(l)];
    const auto& h_mid = ws.h_mid[static_cast<size_t>(l)];
    const auto& normed2 = ws.normed2[static_cast<size_t>(l)];
    const auto& preact = ws.preact[static_cast<size_t>(l)];
    const auto& hidden = ws.hidden[static_cast<size_t>(l)];
    const auto& rms1 = ws.rms1[static_cast<size_t>(l)];
    const auto& rms2 = ws.rms2[static_cast<size_t>(l)];

    // MLP block: x_out = h_mid + W2 gelu(W1 normed2 + b1) + b2
    // ws.dx currently holds d(x_out); accumulate into d(h_mid) in d_tmp.
    std::memcpy(ws.d_tmp.data(), ws.dx.data(), s * d * sizeof(double));
    for (size_t t = 0; t < s; ++t) {
      const double* dxo = ws.dx.data() + t * d;
      double* dhid = ws.d_hidden_row.data();
      std::fill(dhid, dhid + h, 0.0);
      const double* w2 = th + L.w2;
      double* dw2 = gr + L.w2;
      for (size_t r = 0; r < d; ++r) {
        const double g = dxo[r];
        gr[L.b2 + r] += g;
        if (g == 0.0) continue;
        const double* wr = w2 + r * h;
        double* dwr = dw2 + r * h;
        const double* hid = hidden.data() + t * h;
        for (size_t i = 0; i < h; ++i) {
          dwr[i] += g * hid[i];
          dhid[i] += g * wr[i];
        }
      }
      double* dpre = ws.d_preact_row.data();
      for (size_t i = 0; i < h; ++i)
        dpre[i] = dhid[i] * gelu_grad(preact[t * h + i]);
      for (size_t i = 0; i < h; ++i) gr[L.b1 + i] += dpre[i];
      std::fill(ws.d_norm.begin(), ws.d_norm.begin() + static_cast<long>(d),
                0.0);
      matvec_backward(th + L.w1, normed2.data() + t * d, dpre, gr + L.w1,
                      ws.d_norm.data(), h, d);
      rmsnorm_backward(h_mid.data() + t * d, th + L.ln2_gain, ws.d_norm.data(),
                       rms2[t], ws.d_tmp.data() + t * d, gr + L.ln2_gain, d);
    }

    // Attention block: h_mid = h_in + Wo ctx. d_tmp holds d(h_mid); build
    // d(h_in) back into ws.dx.
    std::memcpy(ws.dx.data(), ws.d_tmp.data(), s * d * sizeof(double));
    std::fill(ws.d_ctx.begin(), ws.d_ctx.end(), 0.0);
    for (size_t t = 0; t < s; ++t) {
      matvec_backward(th + L.wo, ctx.data() + t * d, ws.d_tmp.data() + t * d,
                      gr + L.wo, ws.d_ctx.data() + t * d, d, d);
    }

    std::fill(ws.dq.begin(), ws.dq.end(), 0.0);
    std::fill(ws.dk.begin(), ws.dk.end(), 0.0);
    std::fill(ws.dv.begin(), ws.dv.end(), 0.0);
    for (size_t t = 0; t < s; ++t) {
      const double* dct = ws.d_ctx.data() + t * d;
      const double* pt = probs.data() + t * s;
      double* dsc = ws.d_scores_row.data();
      double dot_sum = 0.0;
      for (size_t j = 0; j <= t; ++j) {
        const double* vj = v.data() + j * d;
        double dp = 0.0;
        for (size_t i = 0; i < d; ++i) dp += dct[i] * vj[i];
        dsc[j] = dp;
        dot_sum += pt[j] * dp;
        double* dvj = ws.dv.data() + j * d;
        const double p = pt[j];
        for (size_t i = 0; i < d; ++i) dvj[i] += p * dct[i];
      }
      for (size_t j = 0; j <= t; ++j) {
        const double ds = pt[j] * (dsc[j] - dot_sum) * scale;
        if (ds == 0.0) continue;
        const double* kj = k.data() + j * d;
        const double* qt = q.data() + t * d;
        double* dqt = ws.dq.data() + t * d;
        double* dkj = ws.dk.data() + j * d;
        for (size_t i = 0; i < d; ++i) {
          dqt[i] += ds * kj[i];
          dkj[i] += ds * qt[i];
        }
      }
    }

    for (size_t t = 0; t < s; ++t) {
      std::fill(ws.d_norm.begin(), ws.d_norm.begin() + static_cast<long>(d),
                0.0);
      matvec_backward(th + L.wq, normed1.data() + t * d, ws.dq.data() + t * d,
                      gr + L.wq, ws.d_norm.data(), d, d);
      matvec_backward(th + L.wk, normed1.data() + t * d, ws.dk.data() + t * d,
                      gr + L.wk, ws.d_norm.data(), d, d);
      matvec_backward(th + L.wv, normed1.data() + t * d, ws.dv.data() + t * d,
                      gr + L.wv, ws.d_norm.data(), d, d);
      rmsnorm_backward(h_in.data() + t * d, th + L.ln1_gain, ws.d_norm.data(),
                       rms1[t], ws.dx.data() + t * d, gr + L.ln1_gain, d);
    }
  }

  // ----- embeddings -----
  for (size_t t = 0; t < s; ++t) {
    const size_t tok = static_cast<size_t>(record.token_ids[t]);
    const double* dxt = ws.dx.data() + t * d;
    double* dte = gr + lo.tok_emb + tok * d;
    double* dpe = gr + lo.pos_emb + t * d;
    for (size_t i = 0; i < d; ++i) {
      dte[i] += dxt[i];
      dpe[i] += dxt[i];
    }
  }

  for (double g : out.grad) {
    if (!std::isfinite(g))
      fail(ErrorKind::NumericsError, "non-finite gradient");
  }
  return out;
}

double perplexity(const ModelParams& params,
                  std::span<const TokenizedRecord> records) {
  if (records.empty()) fail(ErrorKind::EmptyInput, "no records");
  WorkspaceHandle ws;
  double total = 0.0;
  long count = 0;
  for (const auto& rec : records) {
    const auto losses = forward_loss(params, rec, ws.get());
    for (double l : losses) total += l;
    count += static_cast<long>(losses.size());
  }
  if (count == 0) fail(ErrorKind::EmptyInput, "no prediction targets");
  return std::exp(total / static_cast<double>(count));
}

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& file,
                     const std::string& metadata_json) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    fail(ErrorKind::IoError, "cannot write checkpoint " + file.string());
  out.write("ATDP", 4);
  const uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const int32_t fields[5] = {params.arch.vocab_size, params.arch.embed_dim,
                             params.arch.hidden_dim, params.arch.num_layers,
                             params.arch.context_len};
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  const uint64_t n = params.theta.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  std::vector<float> f32(params.theta.begin(), params.theta.end());
  out.write(reinterpret_cast<const char*>(f32.data()),
            static_cast<std::streamsize>(f32.size() * sizeof(float)));
  if (!out) fail(ErrorKind::IoError, "short write to " + file.string());

  std::ofstream side(file.string() + ".json");
  if (!side)
    fail(ErrorKind::IoError, "cannot write sidecar for " + file.string());
  side << metadata_json << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    fail(ErrorKind::IoError, "cannot open checkpoint " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ATDP", 4) != 0)
    fail(ErrorKind::IoError, "bad checkpoint magic in " + file.string());
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) fail(ErrorKind::IoError, "unsupported checkpoint version");
  int32_t fields[5];
  in.read(reinterpret_cast<char*>(fields), sizeof(fields));
  ModelParams p;
  p.arch = ArchConfig{fields[0], fields[1], fields[2], fields[3], fields[4]};
  p.arch.validate();
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  if (n != param_count(p.arch))
    fail(ErrorKind::IoError, "checkpoint size does not match architecture");
  std::vector<float> f32(n);
  in.read(reinterpret_cast<char*>(f32.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) fail(ErrorKind::IoError, "truncated checkpoint " + file.string());
  p.theta.assign(f32.begin(), f32.end());
  return p;
}

}  // namespace atdp
