#pragma once

// Weight-shared network.
//
// SharedWeightStore keeps one maximal-width tensor per layer. A NetworkView
// crops it to a concrete ArchitectureConfig: the first c_out output slices and
// the first c_in input slices of every active layer, where c_in is the width
// of the previous active layer. Dropped blocks are skipped and the input
// resolution is whatever the batch carries, so every candidate architecture
// runs on the same weights. Views alias the store; training through a view
// updates exactly the cropped slices.
//
// Weight layout (row-major, maximal shape):
//   conv            [max_out][max_in][k][k]
//   depthwise_conv  [max_out][1][k][k]
//   dense           [max_out][max_in]

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdprune/errors.hpp"
#include "mdprune/pruning_space.hpp"
#include "mdprune/random.hpp"

namespace mdprune {

/// Images in [count][channels][size][size] layout.
struct Batch {
  int count = 0;
  int channels = 0;
  int size = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t image_stride() const { return static_cast<std::size_t>(channels) * size * size; }
  std::span<const double> image(int n) const {
    return {inputs.data() + static_cast<std::size_t>(n) * image_stride(), image_stride()};
  }
};

struct LayerParams {
  int out = 0;  // maximal output channels
  int in = 0;   // maximal input slices (1 for depthwise)
  int kernel = 1;
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> weight_velocity;
  std::vector<double> bias_velocity;

  std::size_t index(int o, int i, int ky = 0, int kx = 0) const {
    return ((static_cast<std::size_t>(o) * in + i) * kernel + ky) * kernel + kx;
  }
};

class SharedWeightStore {
 public:
  SharedWeightStore() = default;

  /// He-uniform initialization (bound sqrt(6/fan_in)), zero biases.
  SharedWeightStore(ArchitectureSpace space, std::uint64_t seed) : space_(std::move(space)) {
    allocate();
    Rng rng(seed);
    for (auto& p : layers_) {
      const double bound = std::sqrt(6.0 / (static_cast<double>(p.in) * p.kernel * p.kernel));
      for (auto& w : p.weight) w = rng.uniform(-bound, bound);
    }
  }

  /// Zero-initialized store (used when loading checkpoints).
  static SharedWeightStore zeros(ArchitectureSpace space) {
    SharedWeightStore s;
    s.space_ = std::move(space);
    s.allocate();
    return s;
  }

  const ArchitectureSpace& space() const { return space_; }
  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  int num_classes() const { return space_.layers().back().max_out_channels; }

  friend bool operator==(const SharedWeightStore& a, const SharedWeightStore& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const auto& x = a.layers_[i];
      const auto& y = b.layers_[i];
      if (x.weight != y.weight || x.bias != y.bias || x.weight_velocity != y.weight_velocity ||
          x.bias_velocity != y.bias_velocity)
        return false;
    }
    return true;
  }

 private:
  void allocate() {
    layers_.clear();
    for (const auto& l : space_.layers()) {
      LayerParams p;
      p.out = l.max_out_channels;
      p.in = l.kind == LayerKind::depthwise_conv ? 1 : l.max_in_channels;
      p.kernel = l.kind == LayerKind::dense ? 1 : l.kernel;
      const std::size_t n = static_cast<std::size_t>(p.out) * p.in * p.kernel * p.kernel;
      p.weight.assign(n, 0.0);
      p.weight_velocity.assign(n, 0.0);
      p.bias.assign(static_cast<std::size_t>(p.out), 0.0);
      p.bias_velocity.assign(static_cast<std::size_t>(p.out), 0.0);
      layers_.push_back(std::move(p));
    }
  }

  ArchitectureSpace space_;
  std::vector<LayerParams> layers_;
};

/// One active layer of a cropped network.
struct CroppedLayer {
  std::size_t layer_id = 0;
  LayerKind kind = LayerKind::conv;
  int kernel = 1;
  int stride = 1;
  bool relu = false;
  int in_channels = 0;
  int out_channels = 0;
  const LayerParams* params = nullptr;

  /// Input slices actually read per output channel.
  int in_slices() const { return kind == LayerKind::depthwise_conv ? 1 : in_channels; }
  std::size_t cropped_weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_slices() * kernel * kernel;
  }
  double w(int o, int i, int ky = 0, int kx = 0) const { return params->weight[params->index(o, i, ky, kx)]; }
  /// Maps a dense index into the cropped [out][in_slices][k][k] tensor onto the store.
  std::size_t store_index(std::size_t cropped) const {
    const std::size_t kk = static_cast<std::size_t>(kernel) * kernel;
    const std::size_t per_out = static_cast<std::size_t>(in_slices()) * kk;
    const int o = static_cast<int>(cropped / per_out);
    const std::size_t r = cropped % per_out;
    const int i = static_cast<int>(r / kk);
    const int ky = static_cast<int>((r % kk) / kernel);
    const int kx = static_cast<int>(r % kernel);
    return params->index(o, i, ky, kx);
  }
};

/// Cropped view of a store under one architecture config. Valid while the
/// store is alive; reads see every update made to the store.
struct NetworkView {
  const SharedWeightStore* store = nullptr;
  ArchitectureConfig config;
  std::vector<CroppedLayer> layers;
};

inline NetworkView crop_view(const SharedWeightStore& store, const ArchitectureConfig& config) {
  const auto& space = store.space();
  space.check(config);
  NetworkView v;
  v.store = &store;
  v.config = config;
  const auto in_c = layer_input_channels(config, space);
  for (std::size_t i : active_layers(config, space)) {
    const auto& l = space.layer(i);
    CroppedLayer c;
    c.layer_id = i;
    c.kind = l.kind;
    c.kernel = l.kind == LayerKind::dense ? 1 : l.kernel;
    c.stride = l.stride;
    c.relu = l.has_relu;
    c.in_channels = in_c[i];
    c.out_channels = config.out_channels[i];
    c.params = &store.layers()[i];
    if (c.kind == LayerKind::depthwise_conv && c.in_channels != c.out_channels)
      throw ShapeError("depthwise layer " + std::to_string(i) + " needs equal in/out channels");
    v.layers.push_back(c);
  }
  return v;
}

/// Batch activations as [channels][count][size][size].
struct Activation {
  int channels = 0;
  int count = 0;
  int size = 0;
  std::vector<double> data;

  std::size_t plane() const { return static_cast<std::size_t>(count) * size * size; }
};

/// What backward needs from one view layer.
struct LayerTrace {
  Activation input;           // pooled for dense layers that follow a conv
  Activation output;          // after ReLU
  std::vector<double> cols;   // im2col matrix [in_slices*k*k][count*out*out] (conv only)
  std::vector<double> weight; // cropped weights [out][in_slices*k*k]
  int pooled_from = 0;        // spatial size before global pooling, 0 if none
};

struct ForwardResult {
  std::vector<double> logits;  // [count][classes]
  std::vector<double> probs;   // softmax, same layout
  double loss = 0.0;
  int classes = 0;
  int count = 0;
  std::vector<LayerTrace> trace;  // empty unless activations were kept
};

namespace kernels {

inline int conv_out_size(int in, int k, int stride) { return (in + 2 * (k / 2) - k) / stride + 1; }

/// Gathers the cropped weights of a layer into a dense [out][in_slices*k*k] matrix.
inline std::vector<double> gather_weights(const CroppedLayer& L) {
  std::vector<double> w(L.cropped_weight_count());
  for (std::size_t q = 0; q < w.size(); ++q) w[q] = L.params->weight[L.store_index(q)];
  return w;
}

inline void im2col(const Activation& x, int k, int stride, std::vector<double>& cols) {
  const int H = x.size, Ho = conv_out_size(H, k, stride), pad = k / 2;
  const std::size_t np = static_cast<std::size_t>(x.count) * Ho * Ho;
  cols.assign(static_cast<std::size_t>(x.channels) * k * k * np, 0.0);
  for (int i = 0; i < x.channels; ++i)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((static_cast<std::size_t>(i) * k + ky) * k + kx) * np;
        for (int n = 0; n < x.count; ++n) {
          const double* src = x.data.data() + (static_cast<std::size_t>(i) * x.count + n) * H * H;
          double* dst = row + static_cast<std::size_t>(n) * Ho * Ho;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Ho; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < H) dst[oy * Ho + ox] = src[iy * H + ix];
            }
          }
        }
      }
}

inline void col2im(const std::vector<double>& dcols, int channels, int count, int H, int k, int stride,
                   std::vector<double>& dx) {
  const int Ho = conv_out_size(H, k, stride), pad = k / 2;
  const std::size_t np = static_cast<std::size_t>(count) * Ho * Ho;
  dx.assign(static_cast<std::size_t>(channels) * count * H * H, 0.0);
  for (int i = 0; i < channels; ++i)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = dcols.data() + ((static_cast<std::size_t>(i) * k + ky) * k + kx) * np;
        for (int n = 0; n < count; ++n) {
          double* dst = dx.data() + (static_cast<std::size_t>(i) * count + n) * H * H;
          const double* src = row + static_cast<std::size_t>(n) * Ho * Ho;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Ho; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < H) dst[iy * H + ix] += src[oy * Ho + ox];
            }
          }
        }
      }
}

/// Dot product with four fixed-order partial sums (vectorizes without reassociation flags).
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    s0 += a[p] * b[p];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
  }
  for (; p < n; ++p) s0 += a[p] * b[p];
  return (s0 + s1) + (s2 + s3);
}

/// y[o][:] = b[o] + sum_q w[o][q] * cols[q][:]
inline void gemm_forward(const std::vector<double>& w, const std::vector<double>& bias, int out, int q_count,
                         const double* cols, std::size_t np, double* y) {
  for (int o = 0; o < out; ++o) {
    double* yr = y + static_cast<std::size_t>(o) * np;
    const double b = bias[static_cast<std::size_t>(o)];
    for (std::size_t p = 0; p < np; ++p) yr[p] = b;
    const double* wr = w.data() + static_cast<std::size_t>(o) * q_count;
    for (int q = 0; q < q_count; ++q) {
      const double wq = wr[q];
      const double* c = cols + static_cast<std::size_t>(q) * np;
      for (std::size_t p = 0; p < np; ++p) yr[p] += wq * c[p];
    }
  }
}

/// Depthwise convolution: one k x k filter per channel.
inline void depthwise_forward(const CroppedLayer& L, const Activation& x, Activation& y) {
  const int k = L.kernel, s = L.stride, pad = k / 2, H = x.size, Ho = conv_out_size(H, k, s);
  y.channels = L.out_channels;
  y.count = x.count;
  y.size = Ho;
  y.data.assign(static_cast<std::size_t>(y.channels) * y.plane(), 0.0);
  for (int c = 0; c < L.out_channels; ++c)
    for (int n = 0; n < x.count; ++n) {
      const double* src = x.data.data() + (static_cast<std::size_t>(c) * x.count + n) * H * H;
      double* dst = y.data.data() + (static_cast<std::size_t>(c) * x.count + n) * Ho * Ho;
      for (int p = 0; p < Ho * Ho; ++p) dst[p] = L.params->bias[static_cast<std::size_t>(c)];
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const double w = L.w(c, 0, ky, kx);
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * s + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Ho; ++ox) {
              const int ix = ox * s + kx - pad;
              if (ix >= 0 && ix < H) dst[oy * Ho + ox] += w * src[iy * H + ix];
            }
          }
        }
    }
}

inline void depthwise_backward(const CroppedLayer& L, const Activation& x, const std::vector<double>& dy,
                               std::vector<double>& dw, std::vector<double>& db, std::vector<double>* dx) {
  const int k = L.kernel, s = L.stride, pad = k / 2, H = x.size, Ho = conv_out_size(H, k, s);
  if (dx) dx->assign(x.data.size(), 0.0);
  for (int c = 0; c < L.out_channels; ++c)
    for (int n = 0; n < x.count; ++n) {
      const double* src = x.data.data() + (static_cast<std::size_t>(c) * x.count + n) * H * H;
      const double* g = dy.data() + (static_cast<std::size_t>(c) * x.count + n) * Ho * Ho;
      double* d = dx ? dx->data() + (static_cast<std::size_t>(c) * x.count + n) * H * H : nullptr;
      for (int p = 0; p < Ho * Ho; ++p) db[static_cast<std::size_t>(c)] += g[p];
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const double w = L.w(c, 0, ky, kx);
          double acc = 0.0;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * s + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Ho; ++ox) {
              const int ix = ox * s + kx - pad;
              if (ix < 0 || ix >= H) continue;
              acc += src[iy * H + ix] * g[oy * Ho + ox];
              if (d) d[iy * H + ix] += w * g[oy * Ho + ox];
            }
          }
          dw[(static_cast<std::size_t>(c) * k + ky) * k + kx] += acc;
        }
    }
}

inline Activation global_average_pool(const Activation& x) {
  Activation y;
  y.channels = x.channels;
  y.count = x.count;
  y.size = 1;
  y.data.assign(static_cast<std::size_t>(x.channels) * x.count, 0.0);
  const std::size_t hw = static_cast<std::size_t>(x.size) * x.size;
  for (std::size_t cn = 0; cn < y.data.size(); ++cn) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += x.data[cn * hw + p];
    y.data[cn] = s / static_cast<double>(hw);
  }
  return y;
}

}  // namespace kernels

/// Forward pass through the active layers with global average pooling before
/// the first dense layer, then mean softmax cross-entropy (row max subtracted
/// before exponentiation).
inline ForwardResult forward(const NetworkView& view, const Batch& batch, bool keep_activations = true) {
  const auto& space = view.store->space();
  if (batch.size != view.config.spatial)
    throw ShapeError("batch resolution " + std::to_string(batch.size) + " != config spatial " +
                     std::to_string(view.config.spatial));
  if (batch.channels != space.input_channels())
    throw ShapeError("batch has " + std::to_string(batch.channels) + " channels, network expects " +
                     std::to_string(space.input_channels()));
  if (view.layers.empty() || view.layers.back().kind != LayerKind::dense)
    throw ShapeError("network must end with a dense layer");
  const int N = batch.count;
  Activation cur;
  cur.channels = batch.channels;
  cur.count = N;
  cur.size = batch.size;
  cur.data.resize(batch.inputs.size());
  const std::size_t hw = static_cast<std::size_t>(batch.size) * batch.size;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < batch.channels; ++c)
      std::copy_n(batch.inputs.data() + (static_cast<std::size_t>(n) * batch.channels + c) * hw, hw,
                  cur.data.data() + (static_cast<std::size_t>(c) * N + n) * hw);

  ForwardResult r;
  r.count = N;
  std::vector<double> cols;
  for (const auto& L : view.layers) {
    LayerTrace t;
    if (L.kind == LayerKind::dense && cur.size > 1) {
      t.pooled_from = cur.size;
      cur = kernels::global_average_pool(cur);
    }
    Activation next;
    if (L.kind == LayerKind::depthwise_conv) {
      kernels::depthwise_forward(L, cur, next);
    } else {
      t.weight = kernels::gather_weights(L);
      const int k = L.kind == LayerKind::dense ? 1 : L.kernel;
      next.channels = L.out_channels;
      next.count = N;
      next.size = L.kind == LayerKind::dense ? 1 : kernels::conv_out_size(cur.size, k, L.stride);
      next.data.resize(static_cast<std::size_t>(next.channels) * next.plane());
      const double* src = cur.data.data();
      if (L.kind == LayerKind::conv) {
        kernels::im2col(cur, k, L.stride, cols);
        src = cols.data();
      }
      kernels::gemm_forward(t.weight, L.params->bias, L.out_channels, L.in_slices() * k * k, src,
                            next.plane(), next.data.data());
      if (keep_activations && L.kind == LayerKind::conv) t.cols = cols;
    }
    if (L.relu)
      for (auto& a : next.data) a = a > 0.0 ? a : 0.0;
    for (double a : next.data)
      if (!std::isfinite(a)) throw NumericalFault("non-finite activation", static_cast<int>(L.layer_id));
    if (keep_activations) {
      t.input = std::move(cur);
      t.output = next;
      r.trace.push_back(std::move(t));
    }
    cur = std::move(next);
  }

  r.classes = view.layers.back().out_channels;
  r.logits.resize(static_cast<std::size_t>(N) * r.classes);
  r.probs.resize(r.logits.size());
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    double* z = r.logits.data() + static_cast<std::size_t>(n) * r.classes;
    double* p = r.probs.data() + static_cast<std::size_t>(n) * r.classes;
    for (int c = 0; c < r.classes; ++c) z[c] = cur.data[static_cast<std::size_t>(c) * N + n];
    const double mx = *std::max_element(z, z + r.classes);
    double sum = 0.0;
    for (int c = 0; c < r.classes; ++c) sum += std::exp(z[c] - mx);
    for (int c = 0; c < r.classes; ++c) p[c] = std::exp(z[c] - mx) / sum;
    const int label = batch.labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= r.classes) throw ShapeError("label out of range");
    total += -(z[label] - mx - std::log(sum));
  }
  r.loss = total / N;
  return r;
}

/// Gradients of the mean loss w.r.t. the cropped parameters, in view layer
/// order. Weights use the dense cropped layout [out][in_slices][k][k].
struct Gradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
};

inline Gradients backward(const NetworkView& view, const Batch& batch, const ForwardResult& fwd) {
  const std::size_t nl = view.layers.size();
  if (fwd.trace.size() != nl) throw ShapeError("backward needs a forward pass with kept activations");
  const int N = batch.count;
  Gradients g;
  g.weight.resize(nl);
  g.bias.resize(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    g.weight[l].assign(view.layers[l].cropped_weight_count(), 0.0);
    g.bias[l].assign(static_cast<std::size_t>(view.layers[l].out_channels), 0.0);
  }
  // d(mean loss)/d(logits), layout [classes][N].
  std::vector<double> dy(static_cast<std::size_t>(fwd.classes) * N);
  const double inv_n = 1.0 / N;
  for (int n = 0; n < N; ++n) {
    const double* p = fwd.probs.data() + static_cast<std::size_t>(n) * fwd.classes;
    for (int c = 0; c < fwd.classes; ++c) dy[static_cast<std::size_t>(c) * N + n] = p[c] * inv_n;
    dy[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(n)]) * N + n] -= inv_n;
  }
  std::vector<double> dx, dcols;
  for (std::size_t l = nl; l-- > 0;) {
    const auto& L = view.layers[l];
    const auto& t = fwd.trace[l];
    if (L.relu)
      for (std::size_t q = 0; q < dy.size(); ++q)
        if (!(t.output.data[q] > 0.0)) dy[q] = 0.0;
    const bool need_dx = l > 0;
    const std::size_t np = t.output.plane();
    auto& gw = g.weight[l];
    auto& gb = g.bias[l];
    if (L.kind == LayerKind::depthwise_conv) {
      kernels::depthwise_backward(L, t.input, dy, gw, gb, need_dx ? &dx : nullptr);
    } else {
      const int k = L.kind == LayerKind::dense ? 1 : L.kernel;
      const int qn = L.in_slices() * k * k;
      const double* cols = L.kind == LayerKind::conv ? t.cols.data() : t.input.data.data();
      for (int o = 0; o < L.out_channels; ++o) {
        const double* gr = dy.data() + static_cast<std::size_t>(o) * np;
        double sb = 0.0;
        for (std::size_t p = 0; p < np; ++p) sb += gr[p];
        gb[static_cast<std::size_t>(o)] += sb;
        for (int q = 0; q < qn; ++q)
          gw[static_cast<std::size_t>(o) * qn + q] += kernels::dot(gr, cols + static_cast<std::size_t>(q) * np, np);
      }
      if (need_dx) {
        dcols.assign(static_cast<std::size_t>(qn) * np, 0.0);
        for (int o = 0; o < L.out_channels; ++o) {
          const double* gr = dy.data() + static_cast<std::size_t>(o) * np;
          for (int q = 0; q < qn; ++q) {
            const double w = t.weight[static_cast<std::size_t>(o) * qn + q];
            double* d = dcols.data() + static_cast<std::size_t>(q) * np;
            for (std::size_t p = 0; p < np; ++p) d[p] += w * gr[p];
          }
        }
        if (L.kind == LayerKind::conv)
          kernels::col2im(dcols, L.in_channels, N, t.input.size, k, L.stride, dx);
        else
          dx.swap(dcols);
      }
    }
    if (need_dx && t.pooled_from > 1) {
      const std::size_t hw = static_cast<std::size_t>(t.pooled_from) * t.pooled_from;
      std::vector<double> spread(dx.size() * hw);
      for (std::size_t cn = 0; cn < dx.size(); ++cn)
        for (std::size_t p = 0; p < hw; ++p) spread[cn * hw + p] = dx[cn] / static_cast<double>(hw);
      dx.swap(spread);
    }
    for (double x : gw)
      if (!std::isfinite(x)) throw NumericalFault("non-finite gradient", static_cast<int>(L.layer_id));
    dy.swap(dx);
  }
  return g;
}

struct SgdParams {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
};

/// SGD with momentum (v = m*v + g + wd*w; w -= lr*v) on the slices covered by the view.
inline void apply_sgd(SharedWeightStore& store, const NetworkView& view, const Gradients& g,
                      const SgdParams& opt) {
  if (view.store != &store) throw ShapeError("view does not belong to this store");
  for (std::size_t l = 0; l < view.layers.size(); ++l) {
    const auto& L = view.layers[l];
    auto& P = store.layers()[L.layer_id];
    for (std::size_t q = 0; q < g.weight[l].size(); ++q) {
      const std::size_t s = L.store_index(q);
      auto& v = P.weight_velocity[s];
      v = opt.momentum * v + g.weight[l][q] + opt.weight_decay * P.weight[s];
      P.weight[s] -= opt.lr * v;
    }
    for (int o = 0; o < L.out_channels; ++o) {
      const auto s = static_cast<std::size_t>(o);
      auto& v = P.bias_velocity[s];
      v = opt.momentum * v + g.bias[l][s] + opt.weight_decay * P.bias[s];
      P.bias[s] -= opt.lr * v;
    }
  }
}

/// One training step on a batch already at config.spatial resolution. Returns the pre-step loss.
inline double backward_and_step(SharedWeightStore& store, const NetworkView& view, const Batch& batch,
                                const SgdParams& opt) {
  const auto fwd = forward(view, batch);
  apply_sgd(store, view, backward(view, batch, fwd), opt);
  return fwd.loss;
}

/// Standalone network holding copies of the cropped slices: its maximal
/// config is the given config, with no droppable blocks or ties.
inline SharedWeightStore materialize(const SharedWeightStore& store, const ArchitectureConfig& config) {
  const auto& space = store.space();
  space.check(config);
  const auto active = active_layers(config, space);
  const auto in_c = layer_input_channels(config, space);
  std::vector<LayerSpec> layers;
  for (std::size_t i : active) {
    LayerSpec l = space.layer(i);
    l.max_in_channels = in_c[i];
    l.max_out_channels = l.min_out_channels = config.out_channels[i];
    l.block_id = 0;
    layers.push_back(l);
  }
  ArchitectureSpace sub(layers, {}, {}, config.spatial, config.spatial, 0, space.input_channels());
  auto out = SharedWeightStore::zeros(sub);
  const auto view = crop_view(store, config);
  for (std::size_t l = 0; l < view.layers.size(); ++l) {
    const auto& L = view.layers[l];
    auto& dst = out.layers()[l];
    for (std::size_t q = 0; q < L.cropped_weight_count(); ++q) {
      dst.weight[q] = L.params->weight[L.store_index(q)];
      dst.weight_velocity[q] = L.params->weight_velocity[L.store_index(q)];
    }
    for (int o = 0; o < L.out_channels; ++o) {
      dst.bias[static_cast<std::size_t>(o)] = L.params->bias[static_cast<std::size_t>(o)];
      dst.bias_velocity[static_cast<std::size_t>(o)] = L.params->bias_velocity[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

}  // namespace mdprune
