#include "rbno/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rbno {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Softplus: return "softplus";
    case Activation::SiLU: return "silu";
    case Activation::GeLU: return "gelu";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  for (Activation a : {Activation::Softplus, Activation::SiLU, Activation::GeLU})
    if (activation_name(a) == name) return a;
  throw PreconditionError("unknown activation '" + name + "'");
}

namespace {

double logistic(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

ActivationDerivs activate(Activation a, double t) {
  switch (a) {
    case Activation::Softplus: {
      const double s = logistic(t);
      const double g = s * (1 - s);
      const double v = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
      return {v, s, g, g * (1 - 2 * s)};
    }
    case Activation::SiLU: {
      const double s = logistic(t);
      const double g = s * (1 - s);
      const double u = 1 - 2 * s;
      return {t * s, s + t * g, g * (2 + t * u), g * u * (2 + t * u) + g * u - 2 * t * g * g};
    }
    case Activation::GeLU: {
      const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2 * M_PI);
      const double cdf = 0.5 * std::erfc(-t / std::sqrt(2.0));
      return {t * cdf, cdf + t * pdf, pdf * (2 - t * t), pdf * (t * t * t - 4 * t)};
    }
  }
  throw PreconditionError("unknown activation");
}

ActivationBounds activation_bounds(Activation a) {
  switch (a) {
    case Activation::Softplus: return {std::log(2.0), 1.0, 0.25, 1.0 / (6.0 * std::sqrt(3.0))};
    case Activation::SiLU: return {0.2785, 1.0999, 0.5, 0.3082};
    case Activation::GeLU: return {0.1700, 1.1290, 2.0 / std::sqrt(2 * M_PI), 0.7788};
  }
  throw PreconditionError("unknown activation");
}

// ---------------------------------------------------------------------------
// Network shape and parameters.

Index LatentNetwork::n_params() const {
  Index n = 0;
  for (std::size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
  return n;
}

Vec LatentNetwork::params() const {
  Vec theta(n_params());
  Index pos = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    theta.segment(pos, W[l].size()) = W[l].reshaped();
    pos += W[l].size();
    theta.segment(pos, b[l].size()) = b[l];
    pos += b[l].size();
  }
  return theta;
}

void LatentNetwork::set_params(const Vec& theta) {
  require(theta.size() == n_params(), "parameter vector length mismatch");
  Index pos = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l].reshaped() = theta.segment(pos, W[l].size());
    pos += W[l].size();
    b[l] = theta.segment(pos, b[l].size());
    pos += b[l].size();
  }
}

void LatentNetwork::validate() const {
  require(depth >= 2 && r >= 1 && width >= 1, "network needs depth >= 2, r >= 1, width >= 1");
  require(static_cast<int>(W.size()) == depth && static_cast<int>(b.size()) == depth, "layer count mismatch");
  for (int l = 0; l < depth; ++l) {
    const Index rows = l == depth - 1 ? r : width;
    const Index cols = l == 0 ? r : width;
    require(W[l].rows() == rows && W[l].cols() == cols && b[l].size() == rows, "layer shape mismatch");
    require(W[l].allFinite() && b[l].allFinite(), "non-finite network parameter");
  }
}

LatentNetwork make_network(Index r, int depth, Index width, Activation activation) {
  LatentNetwork net;
  net.r = r;
  net.width = width;
  net.depth = depth;
  net.activation = activation;
  require(depth >= 2 && r >= 1 && width >= 1, "network needs depth >= 2, r >= 1, width >= 1");
  for (int l = 0; l < depth; ++l) {
    const Index rows = l == depth - 1 ? r : width;
    const Index cols = l == 0 ? r : width;
    net.W.push_back(Mat::Zero(rows, cols));
    net.b.push_back(Vec::Zero(rows));
  }
  return net;
}

void xavier_init(LatentNetwork& net, std::uint64_t seed) {
  CounterRng rng(seed, 0x1417);
  for (Mat& w : net.W) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = limit * (2 * rng.uniform() - 1);
  }
  for (Vec& b : net.b) b.setZero();
}

// ---------------------------------------------------------------------------
// Batched forward pass with Jacobian accumulation.
//
// For a batch of B samples the per-sample Jacobian factors T_l = W_l A_{l-1}
// and A_l = diag(psi'(z_l)) T_l are stored side by side as width x (r B)
// blocks, so every layer is a single GEMM.

namespace {

struct Tape {
  std::vector<Mat> a;      // a[0] = inputs, a[l] = hidden activations
  std::vector<Mat> d1, d2; // psi', psi'' per hidden layer
  std::vector<Mat> T, A;   // Jacobian factors per hidden layer
  Mat y, J;
};

void scale_blocks(Mat& m, const Mat& d, Index r) {
  for (Index k = 0; k < d.cols(); ++k) m.middleCols(k * r, r).array().colwise() *= d.col(k).array();
}

Tape run_forward(const LatentNetwork& net, const Mat& s, bool with_jacobian) {
  const int hidden = net.depth - 1;
  const Index B = s.cols(), r = net.r;
  Tape t;
  t.a.push_back(s);
  for (int l = 0; l < hidden; ++l) {
    Mat z = net.W[l] * t.a.back();
    z.colwise() += net.b[l];
    Mat a(z.rows(), B), d1(z.rows(), B), d2(z.rows(), B);
    for (Index j = 0; j < B; ++j)
      for (Index i = 0; i < z.rows(); ++i) {
        const ActivationDerivs v = activate(net.activation, z(i, j));
        a(i, j) = v.v;
        d1(i, j) = v.d1;
        d2(i, j) = v.d2;
      }
    if (with_jacobian) {
      Mat T = l == 0 ? Mat(net.W[0].replicate(1, B)) : Mat(net.W[l] * t.A.back());
      Mat A = T;
      scale_blocks(A, d1, r);
      t.T.push_back(std::move(T));
      t.A.push_back(std::move(A));
    }
    t.a.push_back(std::move(a));
    t.d1.push_back(std::move(d1));
    t.d2.push_back(std::move(d2));
  }
  t.y = net.W[hidden] * t.a.back();
  t.y.colwise() += net.b[hidden];
  if (with_jacobian) t.J = net.W[hidden] * t.A.back();
  return t;
}

// Adds the per-sample loss sums of `idx` to `sums` and, if `grad` is given,
// the gradient of the (unnormalized) sum of the selected terms.
void accumulate(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                const std::vector<Index>& idx, LossTerms terms, LossParts& sums, Vec* grad) {
  const Index B = static_cast<Index>(idx.size()), r = net.r;
  Mat s(r, B), q(r, B), g(r, r * B);
  for (Index k = 0; k < B; ++k) {
    s.col(k) = data.S.col(idx[k]);
    q.col(k) = data.Q.col(idx[k]);
    g.middleCols(k * r, r) = data.G[static_cast<std::size_t>(idx[k])];
  }
  const Tape t = run_forward(net, s, true);
  Mat ybar = t.y - q, jbar = t.J - g;
  for (Index k = 0; k < B; ++k) {
    const double v = ybar.col(k).squaredNorm() / w.a0[idx[k]];
    const double j = jbar.middleCols(k * r, r).squaredNorm() / w.a1[idx[k]];
    sums.value += v;
    sums.jacobian += j;
    ybar.col(k) *= terms.value ? 2.0 / w.a0[idx[k]] : 0.0;
    jbar.middleCols(k * r, r) *= terms.jacobian ? 2.0 / w.a1[idx[k]] : 0.0;
  }
  if (!grad) return;

  const int hidden = net.depth - 1;
  std::vector<Mat> gW(static_cast<std::size_t>(net.depth));
  std::vector<Vec> gb(static_cast<std::size_t>(net.depth));
  gW[hidden] = ybar * t.a[hidden].transpose() + jbar * t.A[hidden - 1].transpose();
  gb[hidden] = ybar.rowwise().sum();
  Mat abar = net.W[hidden].transpose() * ybar;
  Mat Abar = net.W[hidden].transpose() * jbar;
  for (int l = hidden - 1; l >= 0; --l) {
    const Mat& d1 = t.d1[l];
    const Mat& T = t.T[l];
    Mat Tbar = Abar;
    scale_blocks(Tbar, d1, r);
    Mat zbar = d1.cwiseProduct(abar);
    for (Index k = 0; k < B; ++k)
      zbar.col(k) += t.d2[l].col(k).cwiseProduct(
          Abar.middleCols(k * r, r).cwiseProduct(T.middleCols(k * r, r)).rowwise().sum());
    gW[l] = zbar * t.a[l].transpose();
    gb[l] = zbar.rowwise().sum();
    if (l == 0) {
      for (Index k = 0; k < B; ++k) gW[0] += Tbar.middleCols(k * r, r);
    } else {
      gW[l] += Tbar * t.A[l - 1].transpose();
      abar = net.W[l].transpose() * zbar;
      Abar = net.W[l].transpose() * Tbar;
    }
  }
  Index pos = 0;
  for (int l = 0; l < net.depth; ++l) {
    grad->segment(pos, gW[l].size()) += gW[l].reshaped();
    pos += gW[l].size();
    grad->segment(pos, gb[l].size()) += gb[l];
    pos += gb[l].size();
  }
}

constexpr Index kChunk = 256;

std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

void check_data(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w) {
  net.validate();
  data.validate();
  require(data.rank() == net.r, "data rank does not match the network");
  require(w.a0.size() == data.size() && w.a1.size() == data.size(), "weights length mismatch");
  require(w.a0.minCoeff() > 0 && w.a1.minCoeff() > 0, "loss weights must be positive");
}

}  // namespace

Vec forward(const LatentNetwork& net, const Vec& s) {
  require(s.size() == net.r, "input rank mismatch");
  return run_forward(net, s, false).y;
}

Mat net_jacobian(const LatentNetwork& net, const Vec& s) {
  require(s.size() == net.r, "input rank mismatch");
  return run_forward(net, s, true).J;
}

void EncodedData::validate() const {
  require(S.rows() == Q.rows() && S.cols() == Q.cols(), "encoded inputs and outputs disagree");
  require(static_cast<Index>(G.size()) == S.cols(), "one reduced Jacobian per sample");
  for (const Mat& g : G) require(g.rows() == S.rows() && g.cols() == S.rows(), "reduced Jacobian shape");
}

SampleWeights make_weights(const EncodedData& data, Normalization norm, double tau_rel) {
  data.validate();
  require(data.size() > 0, "weights of an empty dataset");
  const Index n = data.size();
  SampleWeights w{Vec(n), Vec(n)};
  for (Index k = 0; k < n; ++k) {
    w.a0[k] = data.Q.col(k).squaredNorm();
    w.a1[k] = data.G[static_cast<std::size_t>(k)].squaredNorm();
  }
  const double m0 = w.a0.mean(), m1 = w.a1.mean();
  if (norm == Normalization::Uniform) {
    w.a0.setConstant(m0);
    w.a1.setConstant(m1);
  } else {
    w.a0.array() += tau_rel * m0;
    w.a1.array() += tau_rel * m1;
  }
  require(w.a0.minCoeff() > 0 && w.a1.minCoeff() > 0, "loss weights must be positive");
  return w;
}

namespace {

LossParts evaluate_loss(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                        const std::vector<Index>& batch, LossTerms terms, Vec* grad) {
  const std::vector<Index> idx = batch.empty() ? all_indices(data.size()) : batch;
  for (Index i : idx) require(i >= 0 && i < data.size(), "batch index out of range");
  LossParts sums;
  const Index n = static_cast<Index>(idx.size());
  for (Index start = 0; start < n; start += kChunk) {
    const std::vector<Index> chunk(idx.begin() + start, idx.begin() + std::min(n, start + kChunk));
    accumulate(net, data, w, chunk, terms, sums, grad);
  }
  if (n > 0) {
    sums.value /= static_cast<double>(n);
    sums.jacobian /= static_cast<double>(n);
    if (grad) *grad /= static_cast<double>(n);
  }
  return sums;
}

}  // namespace

Vec loss_gradient(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                  const std::vector<Index>& batch, LossTerms terms, LossParts* loss) {
  check_data(net, data, w);
  Vec grad = Vec::Zero(net.n_params());
  const LossParts parts = evaluate_loss(net, data, w, batch, terms, &grad);
  if (loss) *loss = parts;
  return grad;
}

LossParts sobolev_loss(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                       const std::vector<Index>& batch) {
  check_data(net, data, w);
  return evaluate_loss(net, data, w, batch, {}, nullptr);
}

double gradient_check(const LatentNetwork& net, const EncodedData& data, const SampleWeights& w,
                      LossTerms terms, int n_probe, double step, std::uint64_t seed) {
  const Vec grad = loss_gradient(net, data, w, {}, terms);
  const Index n = net.n_params();
  std::vector<Index> idx = all_indices(n);
  CounterRng rng(seed, 0x6c);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  idx.resize(static_cast<std::size_t>(std::min<Index>(n, n_probe)));
  const auto term_loss = [&](const LatentNetwork& m) {
    const LossParts p = sobolev_loss(m, data, w);
    return (terms.value ? p.value : 0.0) + (terms.jacobian ? p.jacobian : 0.0);
  };
  const Vec theta = net.params();
  LatentNetwork probe = net;
  double err2 = 0, ref2 = 0;
  for (Index i : idx) {
    Vec t = theta;
    t[i] = theta[i] + step;
    probe.set_params(t);
    const double up = term_loss(probe);
    t[i] = theta[i] - step;
    probe.set_params(t);
    const double down = term_loss(probe);
    const double fd = (up - down) / (2 * step);
    err2 += (fd - grad[i]) * (fd - grad[i]);
    ref2 += grad[i] * grad[i];
  }
  return ref2 > 0 ? std::sqrt(err2 / ref2) : std::sqrt(err2);
}

// ---------------------------------------------------------------------------
// Training.

double TrainingSchedule::learning_rate(int epoch) const {
  double lr = lr0;
  for (int h : halvings)
    if (epoch >= h) lr *= 0.5;
  return lr;
}

void TrainingSchedule::validate(Index n_samples) const {
  require(epochs >= 1, "epochs must be positive");
  require(batch_size >= 1 && batch_size <= n_samples, "batch size must be in [1, N]");
  require(lr0 > 0, "learning rate must be positive");
  for (std::size_t i = 0; i < halvings.size(); ++i) {
    require(halvings[i] >= 0 && halvings[i] < epochs, "halving epochs must lie in [0, epochs)");
    if (i > 0) require(halvings[i] > halvings[i - 1], "halving epochs must increase");
  }
}

TrainingSchedule full_schedule(double lr0) {
  TrainingSchedule s;
  s.epochs = 3000;
  s.lr0 = lr0;
  s.halvings = {2250, 2400, 2550, 2700, 2850};
  return s;
}

TrainingSchedule desk_schedule(double lr0) {
  TrainingSchedule s;
  s.lr0 = lr0;
  return s;
}

namespace {
std::string divergence_message(int epoch, double loss) {
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << " (loss " << loss << ")";
  return os.str();
}
}  // namespace

Divergence::Divergence(int e, double loss) : NumericalError(divergence_message(e, loss)), epoch(e) {}

TrainResult train(LatentNetwork net, const EncodedData& data, const TrainingSchedule& schedule) {
  schedule.validate(data.size());
  const SampleWeights w = make_weights(data, schedule.normalization, schedule.tau_rel);
  check_data(net, data, w);
  TrainResult out;
  out.initial_loss = sobolev_loss(net, data, w).total();
  if (!std::isfinite(out.initial_loss)) throw Divergence(0, out.initial_loss);

  Vec theta = net.params();
  Vec m = Vec::Zero(theta.size()), v = Vec::Zero(theta.size());
  std::vector<Index> order = all_indices(data.size());
  const CounterRng shuffle_root(schedule.seed, 0x5f);
  double b1t = 1.0, b2t = 1.0;
  out.history.reserve(static_cast<std::size_t>(schedule.epochs));
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    CounterRng rng = shuffle_root.substream(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double lr = schedule.learning_rate(epoch);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      const std::vector<Index> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      Vec grad = Vec::Zero(theta.size());
      const LossParts parts = evaluate_loss(net, data, w, batch, {}, &grad);
      if (!std::isfinite(parts.total()) || !grad.allFinite()) throw Divergence(epoch, parts.total());
      b1t *= schedule.beta1;
      b2t *= schedule.beta2;
      m = schedule.beta1 * m + (1 - schedule.beta1) * grad;
      v = schedule.beta2 * v + (1 - schedule.beta2) * grad.cwiseAbs2();
      const double step = lr * std::sqrt(1 - b2t) / (1 - b1t);
      theta.array() -= step * m.array() / (v.array().sqrt() + schedule.eps * std::sqrt(1 - b2t));
      net.set_params(theta);
    }
    const double loss = sobolev_loss(net, data, w).total();
    if (!std::isfinite(loss)) throw Divergence(epoch, loss);
    out.history.push_back(loss);
  }
  out.net = std::move(net);
  return out;
}

// ---------------------------------------------------------------------------
// Surrogate evaluation.

void Surrogate::validate() const {
  require(in.input_side() && !out.input_side(), "surrogate needs (input, output) bases");
  require(in.r == net.r && out.r == net.r, "basis ranks must equal the network rank");
  require(out.mean.size() == out.dim(), "output basis has no mean");
}

Vec predict(const Surrogate& s, const Vec& x) {
  s.validate();
  return s.out.cols * forward(s.net, encode_input(s.in, x)) + s.out.mean;
}

Mat predict_jacobian(const Surrogate& s, const Vec& x) {
  s.validate();
  return s.out.cols * (net_jacobian(s.net, encode_input(s.in, x)) * s.in.encoder);
}

Mat predict_whitened_jacobian(const Surrogate& s, const Vec& x) {
  s.validate();
  return s.out.cols * (net_jacobian(s.net, encode_input(s.in, x)) * s.in.frame.transpose());
}

void encode_sample(const ReducedBasis& in, const ReducedBasis& out, const Vec& x, const Vec& y, const Mat& jw,
                   Eigen::Ref<Vec> s, Eigen::Ref<Vec> q, Mat& G) {
  require(in.input_side() && !out.input_side(), "encode_sample needs (input, output) bases");
  require(out.mean.size() == out.dim(), "output basis has no mean");
  s = encode_input(in, x);
  q = encode_output(out, y - out.mean);
  G = reduce_whitened_jacobian(jw, out, in);
}

// ---------------------------------------------------------------------------

IdentityLayer::IdentityLayer(Activation a, double h, double t0) : a_(a), h_(h), t0_(t0) {
  require(h > 0 && h <= 1, "Id_h needs h in (0, 1]");
  const double d1 = activate(a, t0).d1;
  require(d1 != 0.0, "Id_h needs psi'(t0) != 0");
  scale_ = 1.0 / (2.0 * d1);
}

double IdentityLayer::operator()(double t) const {
  return (activate(a_, t0_ + h_ * t).v - activate(a_, t0_ - h_ * t).v) * scale_ / h_;
}

double IdentityLayer::derivative(double t, int k) const {
  require(k >= 1 && k <= 3, "Id_h derivatives available for k = 1, 2, 3");
  const ActivationDerivs p = activate(a_, t0_ + h_ * t), m = activate(a_, t0_ - h_ * t);
  const double hp = std::pow(h_, k - 1);
  switch (k) {
    case 1: return hp * (p.d1 + m.d1) * scale_;
    case 2: return hp * (p.d2 - m.d2) * scale_;
    default: return hp * (p.d3 + m.d3) * scale_;
  }
}

}  // namespace rbno
