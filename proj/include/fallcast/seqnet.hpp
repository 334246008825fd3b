// Sequence-to-point recurrent classifiers built from scratch: RNN, LSTM and
// GRU cells with a shared softmax readout, exact backpropagation through
// time, Adam with exponential learning-rate decay, dropout on the final
// hidden state, and early stopping.
//
// Class layout everywhere: index 0 = no fall, index 1 = fall.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fallcast/core.hpp"

namespace fallcast::seqnet {

enum class CellKind { RNN, LSTM, GRU };
enum class Activation { ReLU, Tanh, Logistic };

std::string to_string(CellKind k);
CellKind cell_kind_from_string(const std::string& s);
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// All weights and biases of one recurrent model, biases as Hx1 columns.
// Only the members of the active cell kind are allocated; the softmax
// readout (w_out 2xH, b_out 2x1) is always present. The configurable
// activation applies to the plain RNN hidden update only; gates are always
// logistic and candidate states tanh.
struct ModelParams {
  CellKind kind = CellKind::RNN;
  int hidden_size = 0;
  int input_size = 1;
  Activation hidden_activation = Activation::Tanh;

  // plain RNN
  Eigen::MatrixXd w_xh, w_hh, b_h;
  // LSTM gates: input i, forget f, candidate g, output o
  Eigen::MatrixXd w_xi, w_hi, b_i;
  Eigen::MatrixXd w_xf, w_hf, b_f;
  Eigen::MatrixXd w_xg, w_hg, b_g;
  Eigen::MatrixXd w_xo, w_ho, b_o;
  // GRU gates: update z, reset r, candidate n
  Eigen::MatrixXd w_xz, w_hz, b_z;
  Eigen::MatrixXd w_xr, w_hr, b_r;
  Eigen::MatrixXd w_xn, w_hn, b_n;
  // readout
  Eigen::MatrixXd w_out, b_out;

  // Visits the active kind's parameters in a fixed order (weights, biases,
  // then readout). Adam state, serialization and gradient checks all rely
  // on this order being stable.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    switch (self.kind) {
      case CellKind::RNN:
        f("w_xh", self.w_xh);
        f("w_hh", self.w_hh);
        f("b_h", self.b_h);
        break;
      case CellKind::LSTM:
        f("w_xi", self.w_xi);
        f("w_hi", self.w_hi);
        f("b_i", self.b_i);
        f("w_xf", self.w_xf);
        f("w_hf", self.w_hf);
        f("b_f", self.b_f);
        f("w_xg", self.w_xg);
        f("w_hg", self.w_hg);
        f("b_g", self.b_g);
        f("w_xo", self.w_xo);
        f("w_ho", self.w_ho);
        f("b_o", self.b_o);
        break;
      case CellKind::GRU:
        f("w_xz", self.w_xz);
        f("w_hz", self.w_hz);
        f("b_z", self.b_z);
        f("w_xr", self.w_xr);
        f("w_hr", self.w_hr);
        f("b_r", self.b_r);
        f("w_xn", self.w_xn);
        f("w_hn", self.w_hn);
        f("b_n", self.b_n);
        break;
    }
    f("w_out", self.w_out);
    f("b_out", self.b_out);
  }
};

// Allocates zero parameters of the right shapes.
ModelParams zero_params(CellKind kind, int hidden_size,
                        Activation act = Activation::Tanh);

// Uniform [-a, a] weight init with a = sqrt(6 / (fan_in + fan_out)); biases
// zero except the LSTM forget-gate bias.
ModelParams init_params(CellKind kind, int hidden_size, Activation act,
                        double forget_bias_init, std::uint64_t seed);

// A padded minibatch of variable-length sequences. Sequences are
// left-padded so every column's true final step lands on the last row;
// mask(t, j) is 1.0 on real steps and 0.0 on padding.
struct Batch {
  Eigen::MatrixXd x;     // T x B
  Eigen::MatrixXd mask;  // T x B
  std::vector<int> labels;

  int steps() const { return static_cast<int>(x.rows()); }
  int size() const { return static_cast<int>(x.cols()); }
};

Batch make_batch(const std::vector<std::vector<double>>& seqs,
                 const std::vector<int>& labels);

// Everything the forward pass computed, kept for BPTT. h[t] is the masked
// hidden state after step t; kind-specific gate trajectories live in their
// named slots. cell[] stores the post-mask LSTM cell state.
struct BatchTrace {
  std::vector<Eigen::MatrixXd> h;
  // LSTM
  std::vector<Eigen::MatrixXd> gate_in, gate_forget, candidate, gate_out, cell;
  // GRU
  std::vector<Eigen::MatrixXd> update, reset, hidden_candidate, reset_h;

  Eigen::MatrixXd h_final;  // after dropout when a mask is given
  Eigen::MatrixXd logits;   // 2 x B
  Eigen::MatrixXd probs;    // 2 x B, columns sum to 1
};

// dropout_mask, when non-null, is an HxB matrix of {0, 1/(1-rate)} factors
// applied to the final hidden state before the readout (inverted dropout).
// Throws NumericError naming the step on non-finite intermediates.
BatchTrace forward_batch(const ModelParams& p, const Batch& batch,
                         const Eigen::MatrixXd* dropout_mask = nullptr);

// Single-sequence convenience wrapper (a one-column batch).
BatchTrace forward_sequence(const ModelParams& p,
                            const std::vector<double>& seq);

// Mean binary cross-entropy with probabilities clipped to
// [1e-12, 1 - 1e-12].
double mean_cross_entropy(const std::vector<double>& prob_fall,
                          const std::vector<int>& labels);

// Mean batch loss driven through the same clipping as mean_cross_entropy.
double batch_loss(const ModelParams& p, const Batch& batch,
                  const Eigen::MatrixXd* dropout_mask = nullptr);

// Gradients of the mean batch loss with respect to every parameter, shaped
// like ModelParams. Throws NumericError if any gradient is non-finite.
ModelParams backward_batch(const ModelParams& p, const Batch& batch,
                           const BatchTrace& trace,
                           const Eigen::MatrixXd* dropout_mask = nullptr);

// Max over parameters of |g_analytic - g_numeric| relative error against
// central finite differences (eps = 1e-5) on a small random batch with
// tanh activation. Mixed sequence lengths exercise the padding mask.
double grad_check(CellKind kind, int hidden_size, int seq_len,
                  std::uint64_t seed);

struct HyperParams {
  int hidden_size = 64;  // paper grid: 32, 64, 128, 256
  int layers = 1;
  double lr0 = 0.1;       // paper grid: 0.1, 0.01
  double lr_decay = 0.95;  // exponential per-epoch factor
  int batch_size = 32;
  int max_epochs = 200;
  int patience = 5;
  double dropout = 0.5;
  Activation hidden_activation = Activation::ReLU;
  double forget_bias_init = 1.0;
  std::uint64_t seed = 0;
};

double lr_at(const HyperParams& h, int epoch);

// Tracks the best validation loss; stops after `patience` consecutive
// epochs without improvement.
struct EarlyStopper {
  int patience = 5;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_improvement = 0;

  bool observe(double val_loss, int epoch) {
    if (val_loss < best) {
      best = val_loss;
      best_epoch = epoch;
      since_improvement = 0;
      return true;
    }
    ++since_improvement;
    return false;
  }
  bool should_stop() const { return since_improvement >= patience; }
};

struct TrainState {
  std::vector<Eigen::MatrixXd> adam_m, adam_v;  // aligned with visit order
  long adam_step = 0;
  int epochs_run = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  std::vector<double> train_loss_history;
  std::vector<double> val_loss_history;
};

struct SeqExample {
  std::vector<double> sequence;  // normalized scores up to the origin
  int label = 0;
};

struct TrainResult {
  ModelParams params;  // checkpoint with the best validation loss
  TrainState state;
};

// Full training loop: per-epoch shuffling, length-bucketed batches of
// batch_size, Adam (beta1 0.9, beta2 0.999, eps 1e-8) with lr0 * decay^epoch,
// dropout during training only, early stopping on validation loss.
// Deterministic given HyperParams::seed. Throws NumericError with the epoch
// index on divergence.
TrainResult train(CellKind kind, const std::vector<SeqExample>& train_set,
                  const std::vector<SeqExample>& val_set,
                  const HyperParams& h);

// argmax prediction from the softmax; the 0.5 tie resolves to the fall
// class.
Prediction predict_sequence(const ModelParams& p,
                            const std::vector<double>& seq);
Prediction predict(const ModelParams& p, const Encounter& e,
                   const ScaleConfig& scale);

}  // namespace fallcast::seqnet
