#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v6forge/addr6.hpp"
#include "v6forge/autograd.hpp"
#include "v6forge/layers.hpp"
#include "v6forge/random.hpp"

namespace v6forge::vae {

using nn::Tensor2;

/// Layer widths. The address model uses 32 positions over a 16-symbol
/// alphabet with 16 gated channels and a 16-dimensional latent space.
struct ModelShape {
  std::size_t positions = addr6::kNybbles;
  std::size_t alphabet = addr6::kAlphabet;
  std::size_t channels = 16;
  std::size_t latent = 16;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

enum ParamIndex : std::size_t {
  kEnc1Kernel,
  kEnc1Bias,
  kEnc2Kernel,
  kEnc2Bias,
  kMuWeight,
  kMuBias,
  kLogVarWeight,
  kLogVarBias,
  kDecInWeight,
  kDecInBias,
  kDecConvKernel,
  kDecConvBias,
  kOutWeight,
  kOutBias,
  kParamCount
};

std::string_view param_name(std::size_t index) noexcept;

/// All trainable tensors of the model, indexed by ParamIndex.
template <typename T>
struct VaeParams {
  ModelShape shape;
  std::vector<Tensor2<T>> tensors;

  /// Correctly shaped tensors filled with zeros.
  static VaeParams zeros(const ModelShape& shape);
  /// Glorot-uniform weights and zero biases from a seeded generator.
  static VaeParams initialize(const ModelShape& shape, std::uint64_t rng_seed);

  [[nodiscard]] std::size_t parameter_count() const noexcept;
  [[nodiscard]] Tensor2<T>& operator[](ParamIndex i) { return tensors[i]; }
  [[nodiscard]] const Tensor2<T>& operator[](ParamIndex i) const { return tensors[i]; }

  template <typename U>
  [[nodiscard]] VaeParams<U> cast() const {
    VaeParams<U> out;
    out.shape = shape;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  friend bool operator==(const VaeParams&, const VaeParams&) = default;
};

/// Expected tensor shapes, in ParamIndex order.
std::vector<std::pair<std::size_t, std::size_t>> expected_shapes(const ModelShape& shape);

struct LatentSample {
  Tensor2<float> mu;
  Tensor2<float> log_var;
  Tensor2<float> eps;
  Tensor2<float> z;
};

struct LossBreakdown {
  double j_xent = 0.0;
  double j_kl = 0.0;
  double j_vae = 0.0;
};

enum class ReconstructionLoss {
  Binary,       // elementwise binary cross-entropy over the whole grid
  Categorical,  // per-position categorical cross-entropy
};

/// Epsilon inside the logarithms of the reconstruction loss.
inline constexpr double kLogEpsilon = 1e-7;

// Graph builders shared by the public functions, training and gradient checks.
using ParamVars = std::array<nn::Var, kParamCount>;

template <typename T>
ParamVars bind_params(nn::Tape<T>& tape, const VaeParams<T>& p, bool trainable);

/// Returns (mu, log_var), each 1 x latent.
template <typename T>
std::pair<nn::Var, nn::Var> encode_graph(nn::Tape<T>& tape, const ParamVars& v, const ModelShape& shape,
                                         nn::Var input);

/// positions x alphabet, row-stochastic.
template <typename T>
nn::Var decode_graph(nn::Tape<T>& tape, const ParamVars& v, const ModelShape& shape, nn::Var z);

struct LossVars {
  nn::Var xent;
  nn::Var kl;
  nn::Var total;
};

template <typename T>
LossVars loss_graph(nn::Tape<T>& tape, nn::Var target, nn::Var y, nn::Var mu, nn::Var log_var,
                    ReconstructionLoss kind = ReconstructionLoss::Binary);

/// Full per-example objective with a fixed noise draw.
template <typename T>
LossVars vae_objective(nn::Tape<T>& tape, const ParamVars& v, const ModelShape& shape, nn::Var input,
                       nn::Var eps, ReconstructionLoss kind = ReconstructionLoss::Binary);

Tensor2<float> to_tensor(const addr6::OneHotGrid& grid);

/// Encoder: two gated convolutions (the second with a residual skip), mean
/// pooling over positions, then dense heads for mu and log variance.
std::pair<Tensor2<float>, Tensor2<float>> encode(const VaeParams<float>& p, const Tensor2<float>& input);
std::pair<Tensor2<float>, Tensor2<float>> encode(const VaeParams<float>& p, const addr6::OneHotGrid& grid);

/// z = mu + eps * exp(log_var / 2).
Tensor2<float> reparameterize(const Tensor2<float>& mu, const Tensor2<float>& log_var, const Tensor2<float>& eps);

/// Draws eps ~ N(0, I) and returns the full reparameterized sample.
LatentSample sample_latent(const Tensor2<float>& mu, const Tensor2<float>& log_var, Rng& rng);

/// Decoder: dense to positions*channels, reshape, gated convolution,
/// per-position dense to the alphabet, row softmax.
Tensor2<float> decode(const VaeParams<float>& p, const Tensor2<float>& z);

/// Losses for one example. Throws DomainError if y leaves [0, 1].
LossBreakdown loss(const Tensor2<double>& x, const Tensor2<double>& y, const Tensor2<double>& mu,
                   const Tensor2<double>& log_var, ReconstructionLoss kind = ReconstructionLoss::Binary);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  std::uint64_t rng_seed = 0;
  /// Stop after this many epochs without improvement of mean j_vae; 0 = off.
  std::size_t patience = 0;
  ReconstructionLoss reconstruction = ReconstructionLoss::Binary;
  ModelShape shape{};
  std::size_t workers = 1;
};

struct TrainResult {
  VaeParams<float> params;
  std::vector<LossBreakdown> history;  // mean per-example losses per epoch
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, const LossBreakdown&)>;

/// Shuffled mini-batch Adam. Sets smaller than the batch size train
/// full-batch. Throws EmptySeedSet, InvalidArgument.
TrainResult train(const addr6::SeedSet& seeds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});
/// Same over an example list that may repeat addresses.
TrainResult train(std::span<const addr6::NybbleSeq> examples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

enum class Decoding { Argmax, Sample };

struct GenerateOptions {
  Decoding decoding = Decoding::Argmax;
  std::size_t workers = 1;
};

/// Decodes n prior draws z ~ N(0, I) into addresses, keeping the first
/// occurrence of each. Deterministic given rng_seed.
std::vector<addr6::NybbleSeq> generate(const VaeParams<float>& p, std::size_t n, std::uint64_t rng_seed,
                                       const GenerateOptions& options = {});

/// Versioned binary model file.
inline constexpr std::array<char, 4> kModelMagic = {'6', 'G', 'C', 'V'};
inline constexpr std::uint8_t kModelVersion = 1;

std::vector<std::uint8_t> save_params(const VaeParams<float>& p);
/// Throws CorruptModel, VersionMismatch.
VaeParams<float> load_params(std::span<const std::uint8_t> bytes);

}  // namespace v6forge::vae
