#include "v6forge/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

#include <zlib.h>

#include "v6forge/errors.hpp"
#include "v6forge/optimizer.hpp"
#include "v6forge/random.hpp"

namespace v6forge::vae {
namespace {

using nn::Tape;
using nn::Var;

// Minibatch gradients are summed over this many fixed slices, each in
// example order, then the slices are summed in order. The split does not
// depend on the worker count, so results are identical for any `workers`.
constexpr std::size_t kSlices = 8;

template <typename Fn>
void run_slices(std::size_t slices, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, slices);
  if (workers == 1) {
    for (std::size_t s = 0; s < slices; ++s) fn(s);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t s = w; s < slices; s += workers) fn(s);
    });
  for (auto& t : pool) t.join();
}

void check_shape(const ModelShape& s) {
  if (s.positions < 1 || s.alphabet < 1 || s.channels < 1 || s.latent < 1)
    throw InvalidArgument("model dimensions must be positive");
}

void check_address_shape(const ModelShape& s) {
  if (s.positions != addr6::kNybbles || s.alphabet != addr6::kAlphabet)
    throw ShapeMismatch("address models need 32 positions over 16 symbols");
}

struct SliceResult {
  std::vector<Tensor2<float>> grads;
  double xent = 0.0;
  double kl = 0.0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint32_t crc_of(std::span<const std::uint8_t> b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, b.data(), static_cast<uInt>(b.size())));
}

}  // namespace

std::string_view param_name(std::size_t index) noexcept {
  static constexpr std::array<std::string_view, kParamCount> names = {
      "encoder.conv1.kernel", "encoder.conv1.bias", "encoder.conv2.kernel", "encoder.conv2.bias",
      "encoder.mu.weight",    "encoder.mu.bias",    "encoder.logvar.weight", "encoder.logvar.bias",
      "decoder.in.weight",    "decoder.in.bias",    "decoder.conv.kernel",  "decoder.conv.bias",
      "decoder.out.weight",   "decoder.out.bias"};
  return index < kParamCount ? names[index] : std::string_view("?");
}

std::vector<std::pair<std::size_t, std::size_t>> expected_shapes(const ModelShape& s) {
  const std::size_t c2 = 2 * s.channels;
  return {{3 * s.alphabet, c2}, {1, c2},
          {3 * s.channels, c2}, {1, c2},
          {s.channels, s.latent}, {1, s.latent},
          {s.channels, s.latent}, {1, s.latent},
          {s.latent, s.positions * s.channels}, {1, s.positions * s.channels},
          {3 * s.channels, c2}, {1, c2},
          {s.channels, s.alphabet}, {1, s.alphabet}};
}

template <typename T>
VaeParams<T> VaeParams<T>::zeros(const ModelShape& shape) {
  check_shape(shape);
  VaeParams p;
  p.shape = shape;
  for (auto [r, c] : expected_shapes(shape)) p.tensors.emplace_back(r, c);
  return p;
}

template <typename T>
VaeParams<T> VaeParams<T>::initialize(const ModelShape& shape, std::uint64_t rng_seed) {
  auto p = zeros(shape);
  Rng rng(rng_seed);
  const auto& s = shape;
  auto conv = [&](std::size_t in) {
    return nn::glorot_uniform<T>(3 * in, 2 * s.channels, 3 * in, 2 * s.channels, rng);
  };
  p[kEnc1Kernel] = conv(s.alphabet);
  p[kEnc2Kernel] = conv(s.channels);
  p[kMuWeight] = nn::glorot_uniform<T>(s.channels, s.latent, s.channels, s.latent, rng);
  p[kLogVarWeight] = nn::glorot_uniform<T>(s.channels, s.latent, s.channels, s.latent, rng);
  p[kDecInWeight] = nn::glorot_uniform<T>(s.latent, s.positions * s.channels, s.latent, s.positions * s.channels, rng);
  p[kDecConvKernel] = conv(s.channels);
  p[kOutWeight] = nn::glorot_uniform<T>(s.channels, s.alphabet, s.channels, s.alphabet, rng);
  return p;
}

template <typename T>
std::size_t VaeParams<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <typename T>
ParamVars bind_params(Tape<T>& tape, const VaeParams<T>& p, bool trainable) {
  if (p.tensors.size() != kParamCount) throw ShapeMismatch("parameter set has the wrong tensor count");
  ParamVars v{};
  for (std::size_t i = 0; i < kParamCount; ++i)
    v[i] = trainable ? tape.leaf(p.tensors[i]) : tape.constant(p.tensors[i]);
  return v;
}

template <typename T>
std::pair<Var, Var> encode_graph(Tape<T>& tape, const ParamVars& v, const ModelShape& shape, Var input) {
  const auto& x = tape.value(input);
  if (x.rows() != shape.positions || x.cols() != shape.alphabet)
    throw ShapeMismatch("encoder input " + nn::shape_string(x));
  const Var h1 = nn::gated_conv(tape, input, v[kEnc1Kernel], v[kEnc1Bias]);
  const Var h2 = tape.add(nn::gated_conv(tape, h1, v[kEnc2Kernel], v[kEnc2Bias]), h1);
  const Var pooled = tape.mean_rows(h2);
  return {tape.dense(pooled, v[kMuWeight], v[kMuBias]), tape.dense(pooled, v[kLogVarWeight], v[kLogVarBias])};
}

template <typename T>
Var decode_graph(Tape<T>& tape, const ParamVars& v, const ModelShape& shape, Var z) {
  const auto& zv = tape.value(z);
  if (zv.rows() != 1 || zv.cols() != shape.latent) throw ShapeMismatch("latent vector " + nn::shape_string(zv));
  const Var wide = tape.dense(z, v[kDecInWeight], v[kDecInBias]);
  const Var grid = tape.reshape(wide, shape.positions, shape.channels);
  const Var h = nn::gated_conv(tape, grid, v[kDecConvKernel], v[kDecConvBias]);
  return tape.softmax_rows(tape.dense(h, v[kOutWeight], v[kOutBias]));
}

template <typename T>
LossVars loss_graph(Tape<T>& tape, Var target, Var y, Var mu, Var log_var, ReconstructionLoss kind) {
  const T eps = static_cast<T>(kLogEpsilon);
  const Var xent = kind == ReconstructionLoss::Binary ? tape.binary_cross_entropy(y, target, eps)
                                                      : tape.categorical_cross_entropy(y, target, eps);
  const Var kl = tape.kl_divergence(mu, log_var);
  return {xent, kl, tape.add(xent, kl)};
}

template <typename T>
LossVars vae_objective(Tape<T>& tape, const ParamVars& v, const ModelShape& shape, Var input, Var eps,
                       ReconstructionLoss kind) {
  const auto [mu, log_var] = encode_graph(tape, v, shape, input);
  const Var z = tape.reparameterize(mu, log_var, eps);
  const Var y = decode_graph(tape, v, shape, z);
  return loss_graph(tape, input, y, mu, log_var, kind);
}

Tensor2<float> to_tensor(const addr6::OneHotGrid& grid) {
  Tensor2<float> t(addr6::kNybbles, addr6::kAlphabet);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = grid.cells()[i];
  return t;
}

std::pair<Tensor2<float>, Tensor2<float>> encode(const VaeParams<float>& p, const Tensor2<float>& input) {
  Tape<float> tape;
  const auto v = bind_params(tape, p, false);
  const auto [mu, lv] = encode_graph(tape, v, p.shape, tape.constant(input));
  return {tape.value(mu), tape.value(lv)};
}

std::pair<Tensor2<float>, Tensor2<float>> encode(const VaeParams<float>& p, const addr6::OneHotGrid& grid) {
  return encode(p, to_tensor(grid));
}

Tensor2<float> reparameterize(const Tensor2<float>& mu, const Tensor2<float>& log_var, const Tensor2<float>& eps) {
  if (!mu.same_shape(log_var) || !mu.same_shape(eps)) throw ShapeMismatch("reparameterize operands differ in shape");
  Tensor2<float> z(mu.rows(), mu.cols());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + eps[i] * std::exp(0.5f * log_var[i]);
  return z;
}

LatentSample sample_latent(const Tensor2<float>& mu, const Tensor2<float>& log_var, Rng& rng) {
  Tensor2<float> eps(mu.rows(), mu.cols());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<float>(rng.normal());
  auto z = reparameterize(mu, log_var, eps);
  return {mu, log_var, std::move(eps), std::move(z)};
}

Tensor2<float> decode(const VaeParams<float>& p, const Tensor2<float>& z) {
  Tape<float> tape;
  const auto v = bind_params(tape, p, false);
  return tape.value(decode_graph(tape, v, p.shape, tape.constant(z)));
}

LossBreakdown loss(const Tensor2<double>& x, const Tensor2<double>& y, const Tensor2<double>& mu,
                   const Tensor2<double>& log_var, ReconstructionLoss kind) {
  Tape<double> tape;
  const auto l = loss_graph(tape, tape.constant(x), tape.constant(y), tape.constant(mu), tape.constant(log_var), kind);
  LossBreakdown b;
  b.j_xent = tape.value(l.xent)[0];
  b.j_kl = tape.value(l.kl)[0];
  b.j_vae = b.j_xent + b.j_kl;
  return b;
}

TrainResult train(const addr6::SeedSet& seeds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return train(std::span<const addr6::NybbleSeq>(seeds.members()), cfg, on_epoch);
}

TrainResult train(std::span<const addr6::NybbleSeq> seeds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (seeds.empty()) throw EmptySeedSet("cannot train on an empty seed set");
  if (cfg.batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  check_shape(cfg.shape);
  check_address_shape(cfg.shape);

  TrainResult result;
  result.params = VaeParams<float>::initialize(cfg.shape, derive_seed(cfg.rng_seed, "init"));
  auto& params = result.params;

  std::vector<Tensor2<float>> grids;
  grids.reserve(seeds.size());
  for (const auto& s : seeds) grids.push_back(to_tensor(addr6::encode_onehot(s)));

  Rng rng(derive_seed(cfg.rng_seed, "train"));
  auto opt = nn::OptimizerState<float>::for_params(params.tensors, nn::AdamConfig{cfg.learning_rate});
  std::vector<std::size_t> order(seeds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch = std::min(cfg.batch_size, seeds.size());
  const std::size_t latent = cfg.shape.latent;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_xent = 0.0, epoch_kl = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<Tensor2<float>> noise;
      noise.reserve(count);
      for (std::size_t e = 0; e < count; ++e) {
        Tensor2<float> eps(1, latent);
        for (std::size_t j = 0; j < latent; ++j) eps[j] = static_cast<float>(rng.normal());
        noise.push_back(std::move(eps));
      }

      const std::size_t slices = std::min(kSlices, count);
      std::vector<SliceResult> parts(slices);
      run_slices(slices, cfg.workers, [&](std::size_t s) {
        const std::size_t lo = s * count / slices, hi = (s + 1) * count / slices;
        Tape<float> tape;
        const auto v = bind_params(tape, params, true);
        std::vector<LossVars> losses;
        Var total{};
        for (std::size_t e = lo; e < hi; ++e) {
          const auto l = vae_objective(tape, v, cfg.shape, tape.constant(grids[order[start + e]]),
                                       tape.constant(noise[e]), cfg.reconstruction);
          losses.push_back(l);
          total = e == lo ? l.total : tape.add(total, l.total);
        }
        tape.backward(total);
        auto& part = parts[s];
        for (std::size_t i = 0; i < kParamCount; ++i) part.grads.push_back(tape.grad(v[i]));
        for (const auto& l : losses) {
          part.xent += tape.value(l.xent)[0];
          part.kl += tape.value(l.kl)[0];
        }
      });

      std::vector<Tensor2<float>> grads = std::move(parts[0].grads);
      for (std::size_t s = 1; s < slices; ++s)
        for (std::size_t i = 0; i < kParamCount; ++i)
          for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += parts[s].grads[i][j];
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& g : grads)
        for (std::size_t j = 0; j < g.size(); ++j) g[j] *= inv;
      for (const auto& part : parts) {
        epoch_xent += part.xent;
        epoch_kl += part.kl;
      }
      nn::optimizer_step<float>(opt, params.tensors, grads);
      ++result.steps;
    }

    LossBreakdown mean;
    mean.j_xent = epoch_xent / static_cast<double>(seeds.size());
    mean.j_kl = epoch_kl / static_cast<double>(seeds.size());
    mean.j_vae = mean.j_xent + mean.j_kl;
    result.history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);

    if (cfg.patience > 0) {
      if (mean.j_vae < best) {
        best = mean.j_vae;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

std::vector<addr6::NybbleSeq> generate(const VaeParams<float>& p, std::size_t n, std::uint64_t rng_seed,
                                       const GenerateOptions& options) {
  if (n == 0) throw InvalidArgument("sampling count must be at least 1");
  check_address_shape(p.shape);
  const std::size_t latent = p.shape.latent;

  constexpr std::size_t kDrawsPerSlice = 256;
  const std::size_t slices = (n + kDrawsPerSlice - 1) / kDrawsPerSlice;
  std::vector<std::vector<addr6::NybbleSeq>> parts(slices);

  run_slices(slices, options.workers, [&](std::size_t s) {
    const std::size_t lo = s * kDrawsPerSlice, hi = std::min(n, lo + kDrawsPerSlice);
    Tape<float> tape;
    const auto v = bind_params(tape, p, false);
    auto& out = parts[s];
    out.reserve(hi - lo);
    for (std::size_t d = lo; d < hi; ++d) {
      Rng rng(derive_seed(rng_seed, d));
      Tensor2<float> z(1, latent);
      for (std::size_t j = 0; j < latent; ++j) z[j] = static_cast<float>(rng.normal());
      const auto& y = tape.value(decode_graph(tape, v, p.shape, tape.constant(std::move(z))));
      addr6::NybbleSeq::storage_type sym{};
      for (std::size_t r = 0; r < addr6::kNybbles; ++r) {
        const auto row = y.row(r);
        if (options.decoding == Decoding::Argmax) {
          sym[r] = static_cast<std::uint8_t>(std::max_element(row.begin(), row.end()) - row.begin());
        } else {
          double u = rng.uniform();
          std::size_t pick = row.size() - 1;
          for (std::size_t c = 0; c < row.size(); ++c) {
            u -= row[c];
            if (u < 0.0) {
              pick = c;
              break;
            }
          }
          sym[r] = static_cast<std::uint8_t>(pick);
        }
      }
      out.emplace_back(sym);
    }
  });

  addr6::SeedSet unique;
  for (const auto& part : parts)
    for (const auto& s : part) unique.insert(s);
  return unique.members();
}

std::vector<std::uint8_t> save_params(const VaeParams<float>& p) {
  std::vector<std::uint8_t> out(kModelMagic.begin(), kModelMagic.end());
  out.push_back(kModelVersion);
  out.insert(out.end(), 3, 0);
  for (auto d : {p.shape.positions, p.shape.alphabet, p.shape.channels, p.shape.latent})
    put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(p.tensors.size()));
  for (const auto& t : p.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
  }
  for (const auto& t : p.tensors)
    for (float f : t.span()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(out, bits);
    }
  put_u32(out, crc_of(out));
  return out;
}

VaeParams<float> load_params(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 8 + 4 * 4 + 4;
  if (bytes.size() < kHeader + 4) throw CorruptModel("file too short (" + std::to_string(bytes.size()) + " bytes)");
  if (!std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin())) throw CorruptModel("bad magic bytes");
  if (bytes[4] != kModelVersion)
    throw VersionMismatch("model version " + std::to_string(bytes[4]) + ", expected " +
                          std::to_string(kModelVersion));

  const auto body = bytes.first(bytes.size() - 4);
  if (crc_of(body) != get_u32(bytes, bytes.size() - 4)) throw CorruptModel("checksum mismatch");

  ModelShape shape;
  shape.positions = get_u32(bytes, 8);
  shape.alphabet = get_u32(bytes, 12);
  shape.channels = get_u32(bytes, 16);
  shape.latent = get_u32(bytes, 20);
  const std::size_t count = get_u32(bytes, 24);
  if (count != kParamCount) throw CorruptModel("unexpected tensor count " + std::to_string(count));
  try {
    check_shape(shape);
  } catch (const InvalidArgument& e) {
    throw CorruptModel(e.what());
  }

  const auto shapes = expected_shapes(shape);
  std::size_t at = kHeader;
  if (body.size() < at + 8 * count) throw CorruptModel("truncated shape table");
  std::size_t floats = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t r = get_u32(bytes, at), c = get_u32(bytes, at + 4);
    at += 8;
    if (r != shapes[i].first || c != shapes[i].second)
      throw CorruptModel(std::string(param_name(i)) + " has shape " + std::to_string(r) + "x" + std::to_string(c));
    floats += r * c;
  }
  if (body.size() != at + 4 * floats) throw CorruptModel("payload size does not match the shape table");

  auto p = VaeParams<float>::zeros(shape);
  for (auto& t : p.tensors)
    for (auto& f : t.span()) {
      const std::uint32_t bits = get_u32(bytes, at);
      std::memcpy(&f, &bits, sizeof f);
      at += 4;
    }
  return p;
}

template struct VaeParams<float>;
template struct VaeParams<double>;
template ParamVars bind_params<float>(Tape<float>&, const VaeParams<float>&, bool);
template ParamVars bind_params<double>(Tape<double>&, const VaeParams<double>&, bool);
template std::pair<Var, Var> encode_graph<float>(Tape<float>&, const ParamVars&, const ModelShape&, Var);
template std::pair<Var, Var> encode_graph<double>(Tape<double>&, const ParamVars&, const ModelShape&, Var);
template Var decode_graph<float>(Tape<float>&, const ParamVars&, const ModelShape&, Var);
template Var decode_graph<double>(Tape<double>&, const ParamVars&, const ModelShape&, Var);
template LossVars loss_graph<float>(Tape<float>&, Var, Var, Var, Var, ReconstructionLoss);
template LossVars loss_graph<double>(Tape<double>&, Var, Var, Var, Var, ReconstructionLoss);
template LossVars vae_objective<float>(Tape<float>&, const ParamVars&, const ModelShape&, Var, Var,
                                       ReconstructionLoss);
template LossVars vae_objective<double>(Tape<double>&, const ParamVars&, const ModelShape&, Var, Var,
                                        ReconstructionLoss);

}  // namespace v6forge::vae
