#pragma once

#include "rbno/core.hpp"
#include "rbno/reduction.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rbno {

enum class Activation { Softplus, SiLU, GeLU };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// psi and its first three derivatives at t.
struct ActivationDerivs {
  double v, d1, d2, d3;
};
ActivationDerivs activate(Activation a, double t);

/// Class constants: |psi(t)| <= a_minus for t <= 0 and |psi^(k)| <= a_k.
struct ActivationBounds {
  double a_minus, a1, a2, a3;
};
ActivationBounds activation_bounds(Activation a);

/// phi(s) = W_L psi(... psi(W_1 s + b_1) ...) + b_L with W_1: width x r,
/// interior width x width, W_L: r x width.
struct LatentNetwork {
  Index r = 0;
  Index width = 0;
  int depth = 0;
  Activation activation = Activation::Softplus;
  std::vector<Mat> W;
  std::vector<Vec> b;

  Index n_params() const;
  /// Flattened parameters: W_1, b_1, W_2, b_2, ... (column-major weights).
  Vec params() const;
  void set_params(const Vec& theta);
  void validate() const;
};

/// All-zero network of the given shape.
LatentNetwork make_network(Index r, int depth, Index width, Activation activation);
/// Uniform weights on +-sqrt(6/(fan_in+fan_out)), zero biases.
void xavier_init(LatentNetwork& net, std::uint64_t seed);

Vec forward(const LatentNetwork& net, const Vec& s);
/// r x r Jacobian by forward accumulation.
Mat net_jacobian(const LatentNetwork& net, const Vec& s);

/// Encoded training tuples: s_k = encoded input, q_k = encoded centered output,
/// G_k = reduced Jacobian.  Columns of S and Q are samples.
struct EncodedData {
  Mat S, Q;
  std::vector<Mat> G;

  Index size() const { return S.cols(); }
  Index rank() const { return S.rows(); }
  void validate() const;
};

enum class Normalization { PerSample, Uniform };

/// Per-sample loss weights a0_k (value term) and a1_k (Jacobian term).
struct SampleWeights {
  Vec a0, a1;
};
/// PerSample: a0 = ||q||^2 + tau0, a1 = ||G||_F^2 + tau1 with tau = tau_rel times
/// the dataset mean of the corresponding norm.  Uniform: every sample gets the
/// dataset mean of the norm.
SampleWeights make_weights(const EncodedData& data, Normalization norm, double tau_rel = 1e-8);

struct LossTerms {
  bool value = true;
  bool jacobian = true;
};

struct LossParts {
  double value = 0;     // (1/B) sum ||q - phi||^2 / a0
  double jacobian = 0;  // (1/B) sum ||G - Dphi||_F^2 / a1
  double total() const { return value + jacobian; }
};

/// Sobolev loss over the samples listed in `batch` (all samples when empty).
LossParts sobolev_loss(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                       const std::vector<Index>& batch = {});

/// Exact gradient of the selected loss terms with respect to params().
Vec loss_gradient(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                  const std::vector<Index>& batch = {}, LossTerms terms = {}, LossParts* loss = nullptr);

/// Central finite differences on `n_probe` distinct random parameters:
/// ||fd - g|| / ||g|| over the probed coordinates.
double gradient_check(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                      LossTerms terms = {}, int n_probe = 50, double step = 1e-6, std::uint64_t seed = 0);

struct TrainingSchedule {
  int epochs = 600;
  Index batch_size = 25;
  double lr0 = 1e-3;
  std::vector<int> halvings{450, 480, 510, 540, 570};
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Normalization normalization = Normalization::PerSample;
  double tau_rel = 1e-8;
  std::uint64_t seed = 0;

  /// Learning rate used during `epoch` (0-based).
  double learning_rate(int epoch) const;
  void validate(Index n_samples) const;
};

/// Full schedule: 3000 epochs, halvings from epoch 2250 every 150.
TrainingSchedule full_schedule(double lr0);
/// Desk schedule: the full schedule scaled down by 5.
TrainingSchedule desk_schedule(double lr0);

/// Loss became non-finite during training.
class Divergence : public NumericalError {
 public:
  Divergence(int epoch, double loss);
  int epoch;
};

struct TrainResult {
  LatentNetwork net;
  double initial_loss = 0;
  std::vector<double> history;  // full-dataset loss after each epoch
};

/// Adam with per-epoch shuffling drawn from the schedule seed.  `net` must
/// already be initialized.
TrainResult train(LatentNetwork net, const EncodedData& data, const TrainingSchedule& schedule);

/// Reduced-basis surrogate y = U phi(V^+ x) + mean.
struct Surrogate {
  ReducedBasis in, out;
  LatentNetwork net;

  void validate() const;
};

Vec predict(const Surrogate& s, const Vec& x);
/// Nodal Jacobian U Dphi V^+ (d x d).
Mat predict_jacobian(const Surrogate& s, const Vec& x);
/// Whitened Jacobian U Dphi W^T, comparable with pde whitened Jacobians.
Mat predict_whitened_jacobian(const Surrogate& s, const Vec& x);

/// Training tuple for one sample.
void encode_sample(const ReducedBasis& in, const ReducedBasis& out, const Vec& x, const Vec& y, const Mat& jw,
                   Eigen::Ref<Vec> s, Eigen::Ref<Vec> q, Mat& G);

/// Id_h(t) = (psi(t0 + h t) - psi(t0 - h t)) / (2 h psi'(t0)).
class IdentityLayer {
 public:
  IdentityLayer(Activation a, double h, double t0);
  double operator()(double t) const;
  /// k-th derivative for k in {1, 2, 3}.
  double derivative(double t, int k) const;

 private:
  Activation a_;
  double h_, t0_, scale_;
};

}  // namespace rbno
