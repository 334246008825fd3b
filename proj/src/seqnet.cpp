#include "fallcast/seqnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fallcast/rng.hpp"

namespace fallcast::seqnet {

std::string to_string(CellKind k) {
  switch (k) {
    case CellKind::RNN: return "rnn";
    case CellKind::LSTM: return "lstm";
    case CellKind::GRU: return "gru";
  }
  return "rnn";
}

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "rnn") return CellKind::RNN;
  if (s == "lstm") return CellKind::LSTM;
  if (s == "gru") return CellKind::GRU;
  throw ConfigError("unknown cell kind: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Logistic: return "logistic";
  }
  return "relu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "logistic") return Activation::Logistic;
  throw ConfigError("unknown activation: " + s);
}

namespace {

double logistic_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double v) { return logistic_scalar(v); });
}

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& m) {
  switch (act) {
    case Activation::ReLU:
      return m.cwiseMax(0.0);
    case Activation::Tanh:
      return m.array().tanh().matrix();
    case Activation::Logistic:
      return sigmoid(m);
  }
  return m;
}

// Derivative of the activation expressed through its output value, valid
// for all three supported functions (relu' from the sign of the output).
Eigen::MatrixXd activation_deriv_from_output(Activation act,
                                             const Eigen::MatrixXd& out) {
  switch (act) {
    case Activation::ReLU:
      return out.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Tanh:
      return (1.0 - out.array().square()).matrix();
    case Activation::Logistic:
      return (out.array() * (1.0 - out.array())).matrix();
  }
  return out;
}

// Broadcast helpers over a 1xB mask row.
Eigen::MatrixXd mask_cols(const Eigen::MatrixXd& m, const Eigen::RowVectorXd& mask) {
  return m.array().rowwise() * mask.array();
}

Eigen::MatrixXd blend_masked(const Eigen::MatrixXd& on,
                             const Eigen::MatrixXd& off,
                             const Eigen::RowVectorXd& mask) {
  return (on.array().rowwise() * mask.array() +
          off.array().rowwise() * (1.0 - mask.array()))
      .matrix();
}

void check_finite(const Eigen::MatrixXd& m, const std::string& what, int step) {
  if (!m.allFinite())
    throw NumericError("non-finite " + what + " at step " + std::to_string(step));
}

}  // namespace

ModelParams zero_params(CellKind kind, int hidden_size, Activation act) {
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  ModelParams p;
  p.kind = kind;
  p.hidden_size = hidden_size;
  p.hidden_activation = act;
  const int h = hidden_size;
  const int in = p.input_size;
  auto mat = [](int r, int c) { return Eigen::MatrixXd::Zero(r, c); };
  switch (kind) {
    case CellKind::RNN:
      p.w_xh = mat(h, in);
      p.w_hh = mat(h, h);
      p.b_h = mat(h, 1);
      break;
    case CellKind::LSTM:
      p.w_xi = mat(h, in); p.w_hi = mat(h, h); p.b_i = mat(h, 1);
      p.w_xf = mat(h, in); p.w_hf = mat(h, h); p.b_f = mat(h, 1);
      p.w_xg = mat(h, in); p.w_hg = mat(h, h); p.b_g = mat(h, 1);
      p.w_xo = mat(h, in); p.w_ho = mat(h, h); p.b_o = mat(h, 1);
      break;
    case CellKind::GRU:
      p.w_xz = mat(h, in); p.w_hz = mat(h, h); p.b_z = mat(h, 1);
      p.w_xr = mat(h, in); p.w_hr = mat(h, h); p.b_r = mat(h, 1);
      p.w_xn = mat(h, in); p.w_hn = mat(h, h); p.b_n = mat(h, 1);
      break;
  }
  p.w_out = mat(2, h);
  p.b_out = mat(2, 1);
  return p;
}

ModelParams init_params(CellKind kind, int hidden_size, Activation act,
                        double forget_bias_init, std::uint64_t seed) {
  ModelParams p = zero_params(kind, hidden_size, act);
  std::mt19937_64 rng(seed);
  p.visit([&](const char* name, Eigen::MatrixXd& m) {
    if (name[0] != 'w') return;  // biases stay zero here
    const double fan_in = static_cast<double>(m.cols());
    const double fan_out = static_cast<double>(m.rows());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  });
  if (kind == CellKind::LSTM) p.b_f.setConstant(forget_bias_init);
  return p;
}

Batch make_batch(const std::vector<std::vector<double>>& seqs,
                 const std::vector<int>& labels) {
  if (seqs.empty()) throw DataError("make_batch: empty batch");
  if (seqs.size() != labels.size())
    throw DataError("make_batch: sequence/label count mismatch");
  std::size_t max_len = 0;
  for (const auto& s : seqs) {
    if (s.empty()) throw DataError("make_batch: empty sequence");
    max_len = std::max(max_len, s.size());
  }
  Batch b;
  const auto t_max = static_cast<Eigen::Index>(max_len);
  const auto cols = static_cast<Eigen::Index>(seqs.size());
  b.x = Eigen::MatrixXd::Zero(t_max, cols);
  b.mask = Eigen::MatrixXd::Zero(t_max, cols);
  b.labels = labels;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto& s = seqs[static_cast<std::size_t>(j)];
    const Eigen::Index offset = t_max - static_cast<Eigen::Index>(s.size());
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(s.size()); ++t) {
      b.x(offset + t, j) = s[static_cast<std::size_t>(t)];
      b.mask(offset + t, j) = 1.0;
    }
  }
  return b;
}

BatchTrace forward_batch(const ModelParams& p, const Batch& batch,
                         const Eigen::MatrixXd* dropout_mask) {
  const int t_max = batch.steps();
  const int cols = batch.size();
  if (t_max == 0 || cols == 0) throw DataError("forward: empty batch");
  if (static_cast<int>(batch.labels.size()) != cols)
    throw DataError("forward: label count mismatch");
  const int h = p.hidden_size;

  BatchTrace tr;
  tr.h.reserve(static_cast<std::size_t>(t_max));
  Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(h, cols);
  Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(h, cols);

  for (int t = 0; t < t_max; ++t) {
    const Eigen::RowVectorXd x_row = batch.x.row(t);
    const Eigen::RowVectorXd m_row = batch.mask.row(t);
    Eigen::MatrixXd h_new;

    switch (p.kind) {
      case CellKind::RNN: {
        Eigen::MatrixXd pre = p.w_xh * x_row + p.w_hh * h_prev;
        pre.colwise() += p.b_h.col(0);
        h_new = apply_activation(p.hidden_activation, pre);
        break;
      }
      case CellKind::LSTM: {
        auto gate = [&](const Eigen::MatrixXd& wx, const Eigen::MatrixXd& wh,
                        const Eigen::MatrixXd& b) {
          Eigen::MatrixXd a = wx * x_row + wh * h_prev;
          a.colwise() += b.col(0);
          return a;
        };
        Eigen::MatrixXd gi = sigmoid(gate(p.w_xi, p.w_hi, p.b_i));
        Eigen::MatrixXd gf = sigmoid(gate(p.w_xf, p.w_hf, p.b_f));
        Eigen::MatrixXd gg = gate(p.w_xg, p.w_hg, p.b_g).array().tanh().matrix();
        Eigen::MatrixXd go = sigmoid(gate(p.w_xo, p.w_ho, p.b_o));
        Eigen::MatrixXd c_new =
            (gf.array() * c_prev.array() + gi.array() * gg.array()).matrix();
        h_new = (go.array() * c_new.array().tanh()).matrix();
        Eigen::MatrixXd c_masked = blend_masked(c_new, c_prev, m_row);
        check_finite(c_masked, "cell state", t);
        tr.gate_in.push_back(std::move(gi));
        tr.gate_forget.push_back(std::move(gf));
        tr.candidate.push_back(std::move(gg));
        tr.gate_out.push_back(std::move(go));
        tr.cell.push_back(std::move(c_masked));
        c_prev = tr.cell.back();
        break;
      }
      case CellKind::GRU: {
        auto gate = [&](const Eigen::MatrixXd& wx, const Eigen::MatrixXd& wh,
                        const Eigen::MatrixXd& b, const Eigen::MatrixXd& hin) {
          Eigen::MatrixXd a = wx * x_row + wh * hin;
          a.colwise() += b.col(0);
          return a;
        };
        Eigen::MatrixXd z = sigmoid(gate(p.w_xz, p.w_hz, p.b_z, h_prev));
        Eigen::MatrixXd r = sigmoid(gate(p.w_xr, p.w_hr, p.b_r, h_prev));
        Eigen::MatrixXd rh = (r.array() * h_prev.array()).matrix();
        Eigen::MatrixXd n = gate(p.w_xn, p.w_hn, p.b_n, rh).array().tanh().matrix();
        h_new = ((1.0 - z.array()) * h_prev.array() + z.array() * n.array())
                    .matrix();
        tr.update.push_back(std::move(z));
        tr.reset.push_back(std::move(r));
        tr.hidden_candidate.push_back(std::move(n));
        tr.reset_h.push_back(std::move(rh));
        break;
      }
    }

    Eigen::MatrixXd h_masked = blend_masked(h_new, h_prev, m_row);
    check_finite(h_masked, "hidden state", t);
    tr.h.push_back(std::move(h_masked));
    h_prev = tr.h.back();
  }

  tr.h_final = dropout_mask
                   ? Eigen::MatrixXd((tr.h.back().array() * dropout_mask->array()).matrix())
                   : tr.h.back();
  tr.logits = p.w_out * tr.h_final;
  tr.logits.colwise() += p.b_out.col(0);
  check_finite(tr.logits, "logits", t_max - 1);

  // Numerically stable softmax over the two classes, per column.
  tr.probs.resize(2, cols);
  for (int j = 0; j < cols; ++j) {
    const double m = std::max(tr.logits(0, j), tr.logits(1, j));
    const double e0 = std::exp(tr.logits(0, j) - m);
    const double e1 = std::exp(tr.logits(1, j) - m);
    tr.probs(0, j) = e0 / (e0 + e1);
    tr.probs(1, j) = e1 / (e0 + e1);
  }
  return tr;
}

BatchTrace forward_sequence(const ModelParams& p,
                            const std::vector<double>& seq) {
  return forward_batch(p, make_batch({seq}, {0}));
}

double mean_cross_entropy(const std::vector<double>& prob_fall,
                          const std::vector<int>& labels) {
  if (prob_fall.size() != labels.size())
    throw DataError("loss: probability/label length mismatch");
  if (prob_fall.empty()) throw DataError("loss: empty input");
  constexpr double kEps = 1e-12;
  double total = 0.0;
  for (std::size_t i = 0; i < prob_fall.size(); ++i) {
    const double pf = std::clamp(prob_fall[i], kEps, 1.0 - kEps);
    total += labels[i] == 1 ? -std::log(pf) : -std::log(1.0 - pf);
  }
  return total / static_cast<double>(prob_fall.size());
}

double batch_loss(const ModelParams& p, const Batch& batch,
                  const Eigen::MatrixXd* dropout_mask) {
  BatchTrace tr = forward_batch(p, batch, dropout_mask);
  std::vector<double> pf(static_cast<std::size_t>(batch.size()));
  for (int j = 0; j < batch.size(); ++j) pf[static_cast<std::size_t>(j)] = tr.probs(1, j);
  return mean_cross_entropy(pf, batch.labels);
}

ModelParams backward_batch(const ModelParams& p, const Batch& batch,
                           const BatchTrace& tr,
                           const Eigen::MatrixXd* dropout_mask) {
  const int t_max = batch.steps();
  const int cols = batch.size();
  const int h = p.hidden_size;
  ModelParams g = zero_params(p.kind, h, p.hidden_activation);

  // Softmax + cross-entropy: dL/dlogits = (p - onehot(y)) / B.
  Eigen::MatrixXd dz = tr.probs;
  for (int j = 0; j < cols; ++j) dz(batch.labels[static_cast<std::size_t>(j)], j) -= 1.0;
  dz /= static_cast<double>(cols);

  g.w_out = dz * tr.h_final.transpose();
  g.b_out = dz.rowwise().sum();

  Eigen::MatrixXd dh = p.w_out.transpose() * dz;
  if (dropout_mask) dh = (dh.array() * dropout_mask->array()).matrix();
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(h, cols);

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(h, cols);
  for (int t = t_max - 1; t >= 0; --t) {
    const Eigen::RowVectorXd x_row = batch.x.row(t);
    const Eigen::RowVectorXd m_row = batch.mask.row(t);
    const Eigen::MatrixXd& h_prev = t > 0 ? tr.h[static_cast<std::size_t>(t - 1)] : zero;

    // Gradient flowing through the real update vs. skipped (padded) columns.
    Eigen::MatrixXd dh_real = mask_cols(dh, m_row);
    Eigen::MatrixXd dh_skip = dh - dh_real;

    switch (p.kind) {
      case CellKind::RNN: {
        const Eigen::MatrixXd& h_t = tr.h[static_cast<std::size_t>(t)];
        Eigen::MatrixXd da =
            (dh_real.array() *
             activation_deriv_from_output(p.hidden_activation, h_t).array())
                .matrix();
        g.w_xh += da * x_row.transpose();
        g.w_hh += da * h_prev.transpose();
        g.b_h += da.rowwise().sum();
        dh = p.w_hh.transpose() * da + dh_skip;
        break;
      }
      case CellKind::LSTM: {
        const std::size_t ti = static_cast<std::size_t>(t);
        const Eigen::MatrixXd& gi = tr.gate_in[ti];
        const Eigen::MatrixXd& gf = tr.gate_forget[ti];
        const Eigen::MatrixXd& gg = tr.candidate[ti];
        const Eigen::MatrixXd& go = tr.gate_out[ti];
        const Eigen::MatrixXd& c_prev = t > 0 ? tr.cell[ti - 1] : zero;
        const Eigen::MatrixXd tc = tr.cell[ti].array().tanh().matrix();

        Eigen::MatrixXd dc_real = mask_cols(dc, m_row);
        Eigen::MatrixXd dc_skip = dc - dc_real;

        Eigen::MatrixXd dgo = (dh_real.array() * tc.array()).matrix();
        Eigen::MatrixXd dct =
            (dh_real.array() * go.array() * (1.0 - tc.array().square()) +
             dc_real.array())
                .matrix();
        Eigen::MatrixXd dgf = (dct.array() * c_prev.array()).matrix();
        Eigen::MatrixXd dgi = (dct.array() * gg.array()).matrix();
        Eigen::MatrixXd dgg = (dct.array() * gi.array()).matrix();
        dc = (dct.array() * gf.array()).matrix() + dc_skip;

        Eigen::MatrixXd da_i = (dgi.array() * gi.array() * (1.0 - gi.array())).matrix();
        Eigen::MatrixXd da_f = (dgf.array() * gf.array() * (1.0 - gf.array())).matrix();
        Eigen::MatrixXd da_g = (dgg.array() * (1.0 - gg.array().square())).matrix();
        Eigen::MatrixXd da_o = (dgo.array() * go.array() * (1.0 - go.array())).matrix();

        g.w_xi += da_i * x_row.transpose();
        g.w_hi += da_i * h_prev.transpose();
        g.b_i += da_i.rowwise().sum();
        g.w_xf += da_f * x_row.transpose();
        g.w_hf += da_f * h_prev.transpose();
        g.b_f += da_f.rowwise().sum();
        g.w_xg += da_g * x_row.transpose();
        g.w_hg += da_g * h_prev.transpose();
        g.b_g += da_g.rowwise().sum();
        g.w_xo += da_o * x_row.transpose();
        g.w_ho += da_o * h_prev.transpose();
        g.b_o += da_o.rowwise().sum();

        dh = p.w_hi.transpose() * da_i + p.w_hf.transpose() * da_f +
             p.w_hg.transpose() * da_g + p.w_ho.transpose() * da_o + dh_skip;
        break;
      }
      case CellKind::GRU: {
        const std::size_t ti = static_cast<std::size_t>(t);
        const Eigen::MatrixXd& z = tr.update[ti];
        const Eigen::MatrixXd& r = tr.reset[ti];
        const Eigen::MatrixXd& n = tr.hidden_candidate[ti];
        const Eigen::MatrixXd& rh = tr.reset_h[ti];

        Eigen::MatrixXd dzg = (dh_real.array() * (n.array() - h_prev.array())).matrix();
        Eigen::MatrixXd dn = (dh_real.array() * z.array()).matrix();
        Eigen::MatrixXd dh_prev =
            (dh_real.array() * (1.0 - z.array())).matrix() + dh_skip;

        Eigen::MatrixXd da_n = (dn.array() * (1.0 - n.array().square())).matrix();
        Eigen::MatrixXd drh = p.w_hn.transpose() * da_n;
        dh_prev += (drh.array() * r.array()).matrix();
        Eigen::MatrixXd dr = (drh.array() * h_prev.array()).matrix();

        Eigen::MatrixXd da_z = (dzg.array() * z.array() * (1.0 - z.array())).matrix();
        Eigen::MatrixXd da_r = (dr.array() * r.array() * (1.0 - r.array())).matrix();

        g.w_xn += da_n * x_row.transpose();
        g.w_hn += da_n * rh.transpose();
        g.b_n += da_n.rowwise().sum();
        g.w_xz += da_z * x_row.transpose();
        g.w_hz += da_z * h_prev.transpose();
        g.b_z += da_z.rowwise().sum();
        g.w_xr += da_r * x_row.transpose();
        g.w_hr += da_r * h_prev.transpose();
        g.b_r += da_r.rowwise().sum();

        dh = dh_prev + p.w_hz.transpose() * da_z + p.w_hr.transpose() * da_r;
        break;
      }
    }
  }

  g.visit([](const char* name, const Eigen::MatrixXd& m) {
    if (!m.allFinite())
      throw NumericError(std::string("non-finite gradient in ") + name);
  });
  return g;
}

double grad_check(CellKind kind, int hidden_size, int seq_len,
                  std::uint64_t seed) {
  ModelParams params = init_params(kind, hidden_size, Activation::Tanh, 1.0,
                                   derive_seed(seed, "gradcheck/init"));
  auto rng = make_rng(seed, "gradcheck/data");
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Three sequences of different lengths so padded columns are exercised.
  std::vector<std::vector<double>> seqs;
  std::vector<int> labels = {1, 0, 1};
  for (int len : {seq_len, std::max(1, seq_len - 2), std::max(1, seq_len - 1)}) {
    std::vector<double> s(static_cast<std::size_t>(len));
    for (auto& v : s) v = u(rng);
    seqs.push_back(std::move(s));
  }
  Batch batch = make_batch(seqs, labels);

  BatchTrace trace = forward_batch(params, batch);
  ModelParams analytic = backward_batch(params, batch, trace);

  constexpr double kEps = 1e-5;
  double max_rel = 0.0;
  std::vector<Eigen::MatrixXd*> param_mats, grad_mats;
  params.visit([&](const char*, Eigen::MatrixXd& m) { param_mats.push_back(&m); });
  analytic.visit([&](const char*, Eigen::MatrixXd& m) { grad_mats.push_back(&m); });

  for (std::size_t k = 0; k < param_mats.size(); ++k) {
    Eigen::MatrixXd& m = *param_mats[k];
    const Eigen::MatrixXd& ga = *grad_mats[k];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + kEps;
      const double lp = batch_loss(params, batch);
      m.data()[i] = saved - kEps;
      const double lm = batch_loss(params, batch);
      m.data()[i] = saved;
      const double gn = (lp - lm) / (2.0 * kEps);
      const double gav = ga.data()[i];
      const double rel =
          std::abs(gav - gn) / std::max(1e-8, std::abs(gav) + std::abs(gn));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double lr_at(const HyperParams& h, int epoch) {
  return h.lr0 * std::pow(h.lr_decay, epoch);
}

namespace {

void validate_hyperparams(const HyperParams& h) {
  if (h.hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (h.layers != 1) throw ConfigError("only single-layer models are supported");
  if (!(h.lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
  if (!(h.lr_decay > 0.0 && h.lr_decay <= 1.0))
    throw ConfigError("lr_decay must be in (0, 1]");
  if (h.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (h.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (h.patience < 1) throw ConfigError("patience must be >= 1");
  if (!(h.dropout >= 0.0 && h.dropout < 1.0))
    throw ConfigError("dropout must be in [0, 1)");
}

struct AdamOptimizer {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  void init(const ModelParams& p, TrainState& st) {
    st.adam_m.clear();
    st.adam_v.clear();
    p.visit([&](const char*, const Eigen::MatrixXd& m) {
      st.adam_m.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
      st.adam_v.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    });
    st.adam_step = 0;
  }

  void step(ModelParams& p, const ModelParams& g, TrainState& st, double lr) {
    ++st.adam_step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.adam_step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.adam_step));
    std::size_t k = 0;
    std::vector<const Eigen::MatrixXd*> grads;
    g.visit([&](const char*, const Eigen::MatrixXd& m) { grads.push_back(&m); });
    p.visit([&](const char*, Eigen::MatrixXd& m) {
      Eigen::MatrixXd& mm = st.adam_m[k];
      Eigen::MatrixXd& vv = st.adam_v[k];
      const Eigen::MatrixXd& gg = *grads[k];
      mm = kBeta1 * mm + (1.0 - kBeta1) * gg;
      vv = (kBeta2 * vv.array() + (1.0 - kBeta2) * gg.array().square()).matrix();
      m.array() -=
          lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + kEps);
      ++k;
    });
  }
};

// Per-epoch batching: shuffle, then group similar lengths so padding stays
// cheap, then shuffle the batch order. The stable sort keeps the shuffled
// order within equal lengths.
std::vector<std::vector<std::size_t>> epoch_batches(
    const std::vector<SeqExample>& examples, int batch_size,
    std::mt19937_64& rng) {
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].sequence.size() < examples[b].sequence.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(batch_size));
    batches.emplace_back(idx.begin() + static_cast<long>(at), idx.begin() + static_cast<long>(end));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

Batch gather_batch(const std::vector<SeqExample>& examples,
                   const std::vector<std::size_t>& which) {
  std::vector<std::vector<double>> seqs;
  std::vector<int> labels;
  seqs.reserve(which.size());
  labels.reserve(which.size());
  for (std::size_t i : which) {
    seqs.push_back(examples[i].sequence);
    labels.push_back(examples[i].label);
  }
  return make_batch(seqs, labels);
}

double evaluate_loss(const ModelParams& p, const std::vector<SeqExample>& set,
                     int batch_size) {
  // Dropout disabled; deterministic length-bucketed batches.
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return set[a].sequence.size() < set[b].sequence.size();
  });
  double total = 0.0;
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> which(idx.begin() + static_cast<long>(at),
                                   idx.begin() + static_cast<long>(end));
    Batch b = gather_batch(set, which);
    total += batch_loss(p, b) * static_cast<double>(which.size());
  }
  return total / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(CellKind kind, const std::vector<SeqExample>& train_set,
                  const std::vector<SeqExample>& val_set,
                  const HyperParams& h) {
  validate_hyperparams(h);
  if (train_set.empty()) throw DataError("train: empty training split");
  if (val_set.empty()) throw DataError("train: empty validation split");

  ModelParams params = init_params(kind, h.hidden_size, h.hidden_activation,
                                   h.forget_bias_init, derive_seed(h.seed, "init"));
  TrainState st;
  AdamOptimizer adam;
  adam.init(params, st);

  auto rng_shuffle = make_rng(h.seed, "shuffle");
  auto rng_dropout = make_rng(h.seed, "dropout");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  EarlyStopper stopper{h.patience};
  ModelParams best = params;

  for (int epoch = 0; epoch < h.max_epochs; ++epoch) {
    const double lr = lr_at(h, epoch);
    double epoch_loss = 0.0;

    try {
      for (const auto& which : epoch_batches(train_set, h.batch_size, rng_shuffle)) {
        Batch batch = gather_batch(train_set, which);

        Eigen::MatrixXd dropout_mask;
        const Eigen::MatrixXd* mask_ptr = nullptr;
        if (h.dropout > 0.0) {
          const double keep = 1.0 - h.dropout;
          dropout_mask.resize(h.hidden_size, batch.size());
          for (Eigen::Index i = 0; i < dropout_mask.size(); ++i)
            dropout_mask.data()[i] = unit(rng_dropout) < keep ? 1.0 / keep : 0.0;
          mask_ptr = &dropout_mask;
        }

        BatchTrace trace = forward_batch(params, batch, mask_ptr);
        std::vector<double> pf(static_cast<std::size_t>(batch.size()));
        for (int j = 0; j < batch.size(); ++j) pf[static_cast<std::size_t>(j)] = trace.probs(1, j);
        const double loss = mean_cross_entropy(pf, batch.labels);
        if (!std::isfinite(loss)) throw NumericError("training loss diverged");
        epoch_loss += loss * static_cast<double>(batch.size());

        ModelParams grads = backward_batch(params, batch, trace, mask_ptr);
        adam.step(params, grads, st, lr);
      }
    } catch (const NumericError& ex) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + ex.what());
    }

    epoch_loss /= static_cast<double>(train_set.size());
    double val_loss;
    try {
      val_loss = evaluate_loss(params, val_set, h.batch_size);
    } catch (const NumericError& ex) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + ex.what());
    }
    if (!std::isfinite(val_loss))
      throw NumericError("epoch " + std::to_string(epoch) + ": validation loss diverged");

    st.train_loss_history.push_back(epoch_loss);
    st.val_loss_history.push_back(val_loss);
    st.epochs_run = epoch + 1;

    if (stopper.observe(val_loss, epoch)) best = params;
    st.best_val_loss = stopper.best;
    st.best_epoch = stopper.best_epoch;
    st.epochs_since_improvement = stopper.since_improvement;
    if (stopper.should_stop()) break;
  }

  return TrainResult{std::move(best), std::move(st)};
}

Prediction predict_sequence(const ModelParams& p,
                            const std::vector<double>& seq) {
  BatchTrace tr = forward_sequence(p, seq);
  const double prob = tr.probs(1, 0);
  return Prediction{prob >= 0.5 ? 1 : 0, prob};
}

Prediction predict(const ModelParams& p, const Encounter& e,
                   const ScaleConfig& scale) {
  return predict_sequence(p, derive_sequence(e, scale));
}

}  // namespace fallcast::seqnet
