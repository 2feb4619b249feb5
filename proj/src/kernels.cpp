#include "hppi/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hppi::kernels {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void LstmParams::validate(std::size_t input_size) const {
  require(hidden_size > 0, "lstm: hidden_size must be positive");
  const std::size_t h4 = 4 * hidden_size;
  require(wx.shape == std::vector<std::size_t>{input_size, h4},
          "lstm: input weight shape mismatch");
  require(wh.shape == std::vector<std::size_t>{hidden_size, h4},
          "lstm: recurrent weight shape mismatch");
  require(bias.shape == std::vector<std::size_t>{h4}, "lstm: bias shape mismatch");
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      int stride, Padding padding, std::uint64_t* macc) {
  require(input.rank() == 3, "conv2d: input must be HxWxC");
  require(kernels.rank() == 4, "conv2d: kernels must be kxkxCinxCout");
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t k = kernels.dim(0);
  const std::size_t cout = kernels.dim(3);
  require(kernels.dim(1) == k, "conv2d: kernel must be square");
  require(k % 2 == 1, "conv2d: kernel size must be odd");
  require(kernels.dim(2) == cin, "conv2d: kernel Cin mismatch");
  require(bias.shape == std::vector<std::size_t>{cout}, "conv2d: bias shape mismatch");
  require(stride >= 1, "conv2d: stride must be >= 1");

  const std::size_t s = static_cast<std::size_t>(stride);
  std::size_t oh, ow, pad;
  if (padding == Padding::Same) {
    oh = (h + s - 1) / s;
    ow = (w + s - 1) / s;
    pad = (k - 1) / 2;
  } else {
    require(h >= k && w >= k, "conv2d: input smaller than kernel");
    oh = (h - k) / s + 1;
    ow = (w - k) / s + 1;
    pad = 0;
  }

  Tensor out({oh, ow, cout});
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = bias.at(co);
        for (std::size_t u = 0; u < k; ++u) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * s + u) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t v = 0; v < k; ++v) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * s + v) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci)
              acc += input.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) *
                     kernels.at((u * k + v) * cin * cout + ci * cout + co);
          }
        }
        out.at(oy, ox, co) = acc;
      }
    }
  }
  if (macc) *macc += static_cast<std::uint64_t>(k) * k * cin * cout * oh * ow;
  return out;
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         const Tensor& mean, const Tensor& var, double eps) {
  const std::size_t c = input.shape.back();
  require(gamma.numel() == c && beta.numel() == c && mean.numel() == c && var.numel() == c,
          "batchnorm: per-channel parameter length mismatch");
  for (std::size_t i = 0; i < c; ++i)
    require(var.at(i) >= 0.0, "batchnorm: negative variance");
  Tensor out = input;
  const std::size_t rows = input.numel() / c;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(var.at(ch) + eps);
      out.data[r * c + ch] =
          (input.data[r * c + ch] - mean.at(ch)) * inv * gamma.at(ch) + beta.at(ch);
    }
  return out;
}

Tensor maxpool2d_forward(const Tensor& input, int pool, int stride,
                         std::vector<std::size_t>* argmax) {
  require(input.rank() == 3, "maxpool2d: input must be HxWxC");
  require(pool >= 1 && stride >= 1, "maxpool2d: bad pool/stride");
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t p = static_cast<std::size_t>(pool);
  const std::size_t s = static_cast<std::size_t>(stride);
  require(h >= p && w >= p, "maxpool2d: input smaller than pool window");
  const std::size_t oh = (h - p) / s + 1;
  const std::size_t ow = (w - p) / s + 1;
  Tensor out({oh, ow, c});
  if (argmax) argmax->assign(out.numel(), 0);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t u = 0; u < p; ++u)
          for (std::size_t v = 0; v < p; ++v) {
            const std::size_t iy = oy * s + u, ix = ox * s + v;
            const std::size_t idx = (iy * w + ix) * c + ch;
            if (input.data[idx] > best) {
              best = input.data[idx];
              best_idx = idx;
            }
          }
        out.at(oy, ox, ch) = best;
        if (argmax) (*argmax)[(oy * ow + ox) * c + ch] = best_idx;
      }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  require(input.rank() == 3, "global_avg_pool: input must be HxWxC");
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  require(h * w >= 1, "global_avg_pool: empty spatial dims");
  Tensor out({c});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out.at(ch) += input.at(y, x, ch);
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::size_t ch = 0; ch < c; ++ch) out.at(ch) *= inv;
  return out;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     std::uint64_t* macc) {
  require(weights.rank() == 2, "dense: weights must be n x m");
  const std::size_t n = weights.dim(0), m = weights.dim(1);
  require(input.numel() == n, "dense: input length mismatch");
  require(bias.numel() == m, "dense: bias length mismatch");
  Tensor out({m});
  for (std::size_t j = 0; j < m; ++j) out.at(j) = bias.at(j);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = input.data[i];
    for (std::size_t j = 0; j < m; ++j) out.at(j) += weights.at(i, j) * xi;
  }
  if (macc) *macc += static_cast<std::uint64_t>(n) * m;
  return out;
}

Tensor softmax(const Tensor& logits) {
  require(logits.numel() >= 1, "softmax: empty input");
  for (double v : logits.data)
    require(std::isfinite(v), "softmax: non-finite logit");
  Tensor out = logits;
  const double mx = *std::max_element(logits.data.begin(), logits.data.end());
  double sum = 0.0;
  for (double& v : out.data) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out.data) v /= sum;
  return out;
}

LstmResult lstm_forward(const Tensor& sequence, const LstmParams& params,
                        const Tensor& h0, const Tensor& c0, std::uint64_t* macc,
                        LstmCache* cache) {
  require(sequence.rank() == 2, "lstm: sequence must be T x F");
  const std::size_t t_len = sequence.dim(0), f = sequence.dim(1);
  const std::size_t h = params.hidden_size;
  params.validate(f);
  require(h0.numel() == h && c0.numel() == h, "lstm: initial state length mismatch");

  const std::size_t h4 = 4 * h;
  Tensor hs({t_len, h});
  std::vector<double> hidden(h0.data), cell(c0.data), pre(h4);
  if (cache) {
    cache->inputs = sequence;
    cache->gates = Tensor({t_len, h4});
    cache->cells = Tensor({t_len, h});
    cache->tanhc = Tensor({t_len, h});
    cache->hidden = Tensor({t_len, h});
  }

  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t q = 0; q < h4; ++q) pre[q] = params.bias.at(q);
    for (std::size_t i = 0; i < f; ++i) {
      const double xi = sequence.at(t, i);
      const double* row = &params.wx.data[i * h4];
      for (std::size_t q = 0; q < h4; ++q) pre[q] += xi * row[q];
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double hj = hidden[j];
      const double* row = &params.wh.data[j * h4];
      for (std::size_t q = 0; q < h4; ++q) pre[q] += hj * row[q];
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double gi = sigmoid(pre[j]);
      const double gf = sigmoid(pre[h + j]);
      const double gg = std::tanh(pre[2 * h + j]);
      const double go = sigmoid(pre[3 * h + j]);
      cell[j] = gf * cell[j] + gi * gg;
      const double tc = std::tanh(cell[j]);
      hidden[j] = go * tc;
      hs.at(t, j) = hidden[j];
      if (cache) {
        cache->gates.at(t, j) = gi;
        cache->gates.at(t, h + j) = gf;
        cache->gates.at(t, 2 * h + j) = gg;
        cache->gates.at(t, 3 * h + j) = go;
        cache->cells.at(t, j) = cell[j];
        cache->tanhc.at(t, j) = tc;
        cache->hidden.at(t, j) = hidden[j];
      }
    }
  }
  if (macc) *macc += static_cast<std::uint64_t>(t_len) * 4 * (f + h) * h;
  LstmResult result;
  result.final_hidden = Tensor({h}, hidden);
  result.hidden_states = std::move(hs);
  return result;
}

Tensor dsc_forward(const Tensor& input, const Tensor& depthwise, const Tensor& dw_bias,
                   const Tensor& pointwise, const Tensor& pw_bias, std::uint64_t* macc,
                   Tensor* mid_out) {
  require(input.rank() == 3, "dsc: input must be HxWxC");
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  require(depthwise.rank() == 3 && depthwise.dim(0) == depthwise.dim(1),
          "dsc: depthwise must be kxkxCin");
  const std::size_t k = depthwise.dim(0);
  require(k % 2 == 1, "dsc: kernel size must be odd");
  require(depthwise.dim(2) == cin, "dsc: depthwise Cin mismatch");
  require(pointwise.rank() == 2 && pointwise.dim(0) == cin, "dsc: pointwise shape mismatch");
  const std::size_t cout = pointwise.dim(1);
  require(dw_bias.numel() == cin && pw_bias.numel() == cout, "dsc: bias length mismatch");

  const std::size_t pad = (k - 1) / 2;
  Tensor mid({h, w, cin});
  for (std::size_t oy = 0; oy < h; ++oy)
    for (std::size_t ox = 0; ox < w; ++ox)
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double acc = dw_bias.at(ci);
        for (std::size_t u = 0; u < k; ++u) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy + u) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t v = 0; v < k; ++v) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox + v) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            acc += input.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) *
                   depthwise.at(u, v, ci);
          }
        }
        mid.at(oy, ox, ci) = acc;
      }

  Tensor out({h, w, cout});
  for (std::size_t oy = 0; oy < h; ++oy)
    for (std::size_t ox = 0; ox < w; ++ox)
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = pw_bias.at(co);
        for (std::size_t ci = 0; ci < cin; ++ci)
          acc += mid.at(oy, ox, ci) * pointwise.at(ci, co);
        out.at(oy, ox, co) = acc;
      }
  if (macc)
    *macc += (static_cast<std::uint64_t>(k) * k * cin + static_cast<std::uint64_t>(cin) * cout) * h * w;
  if (mid_out) *mid_out = std::move(mid);
  return out;
}

EcaResult eca_forward(const Tensor& input, const Tensor& kernel, std::uint64_t* macc) {
  require(kernel.rank() == 1, "eca: kernel must be 1-D");
  const std::size_t ke = kernel.numel();
  require(ke % 2 == 1, "eca: kernel size must be odd");
  require(input.rank() == 1 || input.rank() == 3, "eca: input must be {C} or {H,W,C}");

  Tensor pooled = input.rank() == 1 ? input : global_avg_pool(input);
  const std::size_t c = pooled.numel();
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(ke / 2);

  EcaResult result;
  result.weights = Tensor({c});
  for (std::size_t i = 0; i < c; ++i) {
    double acc = 0.0;
    for (std::size_t u = 0; u < ke; ++u) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + u) - off;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(c)) continue;  // zero padding
      acc += kernel.at(u) * pooled.at(static_cast<std::size_t>(j));
    }
    result.weights.at(i) = sigmoid(acc);
  }

  result.output = input;
  if (input.rank() == 1) {
    for (std::size_t i = 0; i < c; ++i) result.output.at(i) *= result.weights.at(i);
  } else {
    const std::size_t rows = input.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch)
        result.output.data[r * c + ch] *= result.weights.at(ch);
  }
  if (macc) *macc += static_cast<std::uint64_t>(ke) * c + c;
  return result;
}

}  // namespace hppi::kernels
