#include "ld/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ld/errors.hpp"
#include "ld/rng.hpp"

namespace ld {

using ad::Var;

namespace {

constexpr std::size_t kConvKernel = 5;
constexpr std::size_t kConv1Channels = 6;
constexpr std::size_t kConv2Channels = 12;
constexpr std::size_t kEvalChunk = 512;

std::size_t conv_out(std::size_t n) { return n - kConvKernel + 1; }

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

// Rows are (b, y, x) positions, columns channels: an NHWC batch as a matrix.
ad::IndexMap im2col_index(std::size_t batch, std::size_t h, std::size_t w, std::size_t cin) {
  const std::size_t ho = conv_out(h), wo = conv_out(w), k = kConvKernel;
  const std::size_t cols = k * k * cin;
  auto idx = std::make_shared<std::vector<std::int64_t>>(batch * ho * wo * cols);
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            for (std::size_t c = 0; c < cin; ++c)
              (*idx)[o++] = static_cast<std::int64_t>(((b * h + oy + ky) * w + ox + kx) * cin + c);
  return idx;
}

Var conv_relu(const Var& act, std::size_t batch, std::size_t h, std::size_t w, std::size_t cin, const Var& kernel,
              const Var& bias) {
  const std::size_t ho = conv_out(h), wo = conv_out(w);
  Var cols = ad::gather(act, im2col_index(batch, h, w, cin), Shape{batch * ho * wo, kConvKernel * kConvKernel * cin});
  return ad::relu(ad::add_row(ad::matmul(cols, kernel), bias));
}

Var maxpool2(const Var& act, std::size_t batch, std::size_t h, std::size_t w, std::size_t ch) {
  const std::size_t ph = h / 2, pw = w / 2;
  const Tensor& v = act.value();
  auto idx = std::make_shared<std::vector<std::int64_t>>(batch * ph * pw * ch);
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t py = 0; py < ph; ++py)
      for (std::size_t px = 0; px < pw; ++px)
        for (std::size_t c = 0; c < ch; ++c) {
          std::size_t best = ((b * h + 2 * py) * w + 2 * px) * ch + c;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t i = ((b * h + 2 * py + dy) * w + 2 * px + dx) * ch + c;
              if (v[i] > v[best]) best = i;
            }
          (*idx)[o++] = static_cast<std::int64_t>(best);
        }
  return ad::gather(act, std::move(idx), Shape{batch * ph * pw, ch});
}

void require_params(std::span<const Var> p, std::size_t n, const char* what) {
  if (p.size() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) + " parameter tensors, got " +
                         std::to_string(p.size()));
  }
}

}  // namespace

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::linear: return "linear";
    case ArchKind::mlp: return "mlp";
    case ArchKind::smallconv: return "smallconv";
    case ArchKind::logistic: return "logistic";
  }
  return "unknown";
}

ArchKind parse_arch_kind(const std::string& name) {
  static const std::map<std::string, ArchKind> kinds{{"linear", ArchKind::linear},
                                                     {"mlp", ArchKind::mlp},
                                                     {"smallconv", ArchKind::smallconv},
                                                     {"logistic", ArchKind::logistic}};
  auto it = kinds.find(name);
  if (it == kinds.end()) throw ArgumentError("unknown architecture '" + name + "'");
  return it->second;
}

ArchSpec make_arch(ArchKind kind, std::size_t height, std::size_t width) {
  ArchSpec a;
  a.kind = kind;
  a.input_height = height;
  a.input_width = width;
  switch (kind) {
    case ArchKind::linear:
    case ArchKind::logistic: a.feature_dim = height * width; break;
    case ArchKind::mlp: a.hidden = 256; a.feature_dim = 128; break;
    case ArchKind::smallconv: a.feature_dim = feature_width(a); break;
  }
  return a;
}

std::size_t feature_width(const ArchSpec& arch) {
  if (arch.input_height == 0 || arch.input_width == 0) throw ArgumentError("arch: empty input");
  switch (arch.kind) {
    case ArchKind::linear:
    case ArchKind::mlp:
      if (arch.feature_dim == 0) throw ArgumentError("arch: feature dimension must be positive");
      if (arch.kind == ArchKind::mlp && arch.hidden == 0) throw ArgumentError("arch: hidden width must be positive");
      return arch.feature_dim;
    case ArchKind::logistic: return arch.input_dim();
    case ArchKind::smallconv: {
      if (arch.input_height < 16 || arch.input_width < 16) throw ArgumentError("smallconv needs inputs of at least 16×16");
      const std::size_t h = conv_out(conv_out(arch.input_height) / 2) / 2;
      const std::size_t w = conv_out(conv_out(arch.input_width) / 2) / 2;
      return kConv2Channels * h * w;
    }
  }
  throw ArgumentError("arch: unknown kind");
}

ModelState init_model(const ArchSpec& arch, std::size_t num_classes, HeadKind head, std::uint64_t seed) {
  const std::size_t f = feature_width(arch);
  const std::size_t d = arch.input_dim();
  Rng rng(seed);
  ModelState m;
  m.arch = arch;
  m.seed = seed;
  switch (arch.kind) {
    case ArchKind::linear:
      m.theta = {uniform_fan_in({d, f}, d, rng), Tensor({1, f})};
      break;
    case ArchKind::mlp:
      m.theta = {uniform_fan_in({d, arch.hidden}, d, rng), Tensor({1, arch.hidden}),
                 uniform_fan_in({arch.hidden, f}, arch.hidden, rng), Tensor({1, f})};
      break;
    case ArchKind::smallconv: {
      const std::size_t k2 = kConvKernel * kConvKernel;
      m.theta = {uniform_fan_in({k2, kConv1Channels}, k2, rng), Tensor({1, kConv1Channels}),
                 uniform_fan_in({k2 * kConv1Channels, kConv2Channels}, k2 * kConv1Channels, rng),
                 Tensor({1, kConv2Channels})};
      break;
    }
    case ArchKind::logistic: break;
  }
  if (head == HeadKind::standard) {
    if (arch.kind == ArchKind::logistic) {
      if (num_classes != 2) throw ArgumentError("logistic model is binary; got " + std::to_string(num_classes) + " classes");
      m.head = {uniform_fan_in({d, 1}, d, rng)};
    } else {
      m.head = {uniform_fan_in({f, num_classes}, f, rng), Tensor({1, num_classes})};
    }
  }
  return m;
}

Var features(const ArchSpec& arch, std::span<const Var> theta, const Var& x) {
  require_rank(x.value(), 2, "features");
  const std::size_t batch = x.value().rows();
  if (x.value().cols() != arch.input_dim()) {
    throw DimensionError("features: input width " + std::to_string(x.value().cols()) + " does not match arch input " +
                         std::to_string(arch.input_dim()));
  }
  switch (arch.kind) {
    case ArchKind::linear:
      require_params(theta, 2, "linear");
      return ad::add_row(ad::matmul(x, theta[0]), theta[1]);
    case ArchKind::mlp: {
      require_params(theta, 4, "mlp");
      Var h = ad::relu(ad::add_row(ad::matmul(x, theta[0]), theta[1]));
      return ad::relu(ad::add_row(ad::matmul(h, theta[2]), theta[3]));
    }
    case ArchKind::smallconv: {
      require_params(theta, 4, "smallconv");
      std::size_t h = arch.input_height, w = arch.input_width;
      Var a = ad::reshape(x, Shape{batch * h * w, 1});
      a = conv_relu(a, batch, h, w, 1, theta[0], theta[1]);
      h = conv_out(h);
      w = conv_out(w);
      a = maxpool2(a, batch, h, w, kConv1Channels);
      h /= 2;
      w /= 2;
      a = conv_relu(a, batch, h, w, kConv1Channels, theta[2], theta[3]);
      h = conv_out(h);
      w = conv_out(w);
      a = maxpool2(a, batch, h, w, kConv2Channels);
      h /= 2;
      w /= 2;
      return ad::reshape(a, Shape{batch, h * w * kConv2Channels});
    }
    case ArchKind::logistic:
      require_params(theta, 0, "logistic");
      return x;
  }
  throw ArgumentError("features: unknown arch");
}

Var predict_standard(const ArchSpec& arch, std::span<const Var> theta, std::span<const Var> head, const Var& x) {
  Var z = features(arch, theta, x);
  if (arch.kind == ArchKind::logistic) {
    require_params(head, 1, "logistic head");
    Var s = ad::sigmoid(ad::matmul(z, head[0]));
    // [1 − s, s]
    return ad::add_row(ad::matmul(s, Var(Tensor::row({-1.0, 1.0}))), Var(Tensor::row({1.0, 0.0})));
  }
  require_params(head, 2, "softmax head");
  return ad::softmax_rows(ad::add_row(ad::matmul(z, head[0]), head[1]));
}

namespace {

template <typename F>
Tensor chunked(const Tensor& x, F f) {
  const std::size_t n = x.rows();
  if (n <= kEvalChunk) return f(x);
  Tensor out;
  std::vector<double> data;
  std::size_t cols = 0;
  for (std::size_t b = 0; b < n; b += kEvalChunk) {
    Tensor part = f(x.slice_rows(b, std::min(n, b + kEvalChunk)));
    cols = part.cols();
    data.insert(data.end(), part.data().begin(), part.data().end());
  }
  return Tensor({n, cols}, std::move(data));
}

}  // namespace

Tensor features_of(const ModelState& m, const Tensor& x) {
  const auto theta = constants(m.theta);
  return chunked(x, [&](const Tensor& part) { return features(m.arch, theta, Var(part)).value(); });
}

Tensor predict_standard_of(const ModelState& m, const Tensor& x) {
  const auto theta = constants(m.theta);
  const auto head = constants(m.head);
  return chunked(x, [&](const Tensor& part) { return predict_standard(m.arch, theta, head, Var(part)).value(); });
}

Var with_bias_column(const Var& z) { return ad::pad_cols(z, 1, 1.0); }

Tensor with_bias_column(const Tensor& z) {
  const std::size_t m = z.rows(), n = z.cols();
  Tensor out({m, n + 1});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(z.raw() + i * n, n, out.raw() + i * (n + 1));
    out(i, n) = 1.0;
  }
  return out;
}

Var soft_ce(const Var& pred, const Var& target) {
  require_same_shape(pred.value(), target.value(), "soft_ce");
  require_rank(pred.value(), 2, "soft_ce");
  const Tensor& t = target.value();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (t(i, j) < -1e-6) throw ArgumentError("soft_ce: negative target entry in row " + std::to_string(i));
      s += t(i, j);
    }
    if (std::abs(s - 1.0) > 1e-6) throw ArgumentError("soft_ce: target row " + std::to_string(i) + " is not on the simplex");
  }
  const double batch = static_cast<double>(t.rows());
  return ad::scale(ad::dot(target, ad::log_clamped(pred, 1e-12)), -1.0 / batch);
}

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  const std::size_t n = m.cols();
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (m(row, j) > m(row, best)) best = j;
  return best;
}

double accuracy(const Tensor& probs, std::span<const int> labels) {
  if (probs.rows() != labels.size()) throw DimensionError("accuracy: row count does not match labels");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (static_cast<int>(argmax_row(probs, i)) == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<Var> track_all(ad::Tape& tape, const std::vector<Tensor>& tensors) {
  std::vector<Var> out;
  out.reserve(tensors.size());
  for (const Tensor& t : tensors) out.push_back(tape.variable(t));
  return out;
}

std::vector<Var> constants(const std::vector<Tensor>& tensors) {
  std::vector<Var> out;
  out.reserve(tensors.size());
  for (const Tensor& t : tensors) out.emplace_back(t);
  return out;
}

}  // namespace ld
