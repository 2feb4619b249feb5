#pragma once

#include <cstdint>
#include <vector>

#include "hppi/tensor.hpp"

namespace hppi::kernels {

enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

// Input-to-hidden / hidden-to-hidden weights and bias for the four LSTM
// gates, packed along the second axis in blocks of H: [i | f | g | o].
struct LstmParams {
  Tensor wx;   // {F, 4H}
  Tensor wh;   // {H, 4H}
  Tensor bias; // {4H}
  std::size_t hidden_size = 0;

  void validate(std::size_t input_size) const;
};

struct LstmResult {
  Tensor hidden_states;  // {T, H}
  Tensor final_hidden;   // {H}
};

struct EcaResult {
  Tensor output;   // same shape as input
  Tensor weights;  // {C}
};

// Standard cross-correlation (no kernel flip), stride >= 1, k odd.
// kernels {k, k, Cin, Cout}, bias {Cout}. MACC += k^2*Cin*Cout*H'*W'.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      int stride, Padding padding, std::uint64_t* macc = nullptr);

// Per-channel (x - mean)/sqrt(var + eps) * gamma + beta. The channel axis is
// the last dimension.
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         const Tensor& mean, const Tensor& var, double eps);

// Channel-wise max over pool x pool windows; floor division of spatial dims.
// argmax, when given, receives the flat input index feeding each output cell.
Tensor maxpool2d_forward(const Tensor& input, int pool = 2, int stride = 2,
                         std::vector<std::size_t>* argmax = nullptr);

// Per-channel mean over all spatial positions: {H, W, C} -> {C}.
Tensor global_avg_pool(const Tensor& input);

// out = W^T x + b with W {n, m}, b {m}. MACC += n*m.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     std::uint64_t* macc = nullptr);

// Max-subtracted exponentials normalized to sum 1.
Tensor softmax(const Tensor& logits);

// Internal per-step values kept for backpropagation through time.
struct LstmCache {
  Tensor inputs;  // {T, F}
  Tensor gates;   // {T, 4H} post-nonlinearity, [i | f | g | o]
  Tensor cells;   // {T, H}
  Tensor tanhc;   // {T, H}
  Tensor hidden;  // {T, H}
};

// Standard LSTM recurrence over a {T, F} sequence.
// MACC += T * 4 * (F + H) * H.
LstmResult lstm_forward(const Tensor& sequence, const LstmParams& params,
                        const Tensor& h0, const Tensor& c0,
                        std::uint64_t* macc = nullptr, LstmCache* cache = nullptr);

// Depthwise separable convolution: per-channel k x k spatial convolution
// (same padding, stride 1) followed by 1x1 channel mixing.
// depthwise {k, k, Cin} + bias {Cin}; pointwise {Cin, Cout} + bias {Cout}.
// MACC += (k^2*Cin + Cin*Cout)*H*W. `mid`, when given, receives the
// depthwise stage output.
Tensor dsc_forward(const Tensor& input, const Tensor& depthwise, const Tensor& dw_bias,
                   const Tensor& pointwise, const Tensor& pw_bias,
                   std::uint64_t* macc = nullptr, Tensor* mid = nullptr);

// Efficient channel attention: w = sigmoid(conv1d(GAP(x))) with zero padding
// on the channel axis; output = x with channel c scaled by w_c.
// Accepts a {C} vector (GAP already applied upstream) or an {H, W, C} map.
// MACC += kE*C + C.
EcaResult eca_forward(const Tensor& input, const Tensor& kernel,
                      std::uint64_t* macc = nullptr);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace hppi::kernels
