// Convolutional LSTM cell and bidirectional unrolling. The cell computes
//
//   i_t = sig(x_t * W_xi + h_{t-1} * W_hi + b_i)
//   f_t = sig(x_t * W_xf + h_{t-1} * W_hf + b_f)
//   c_t = c_{t-1} . f_t + i_t . tanh(x_t * W_xc + h_{t-1} * W_hc + b_c)
//   o_t = sig(x_t * W_xo + h_{t-1} * W_ho + b_o)
//   h_t = o_t . tanh(c_t)
//
// with same-padding convolutions and no peephole terms. The bidirectional
// wrapper runs an independent backward-in-time stream and concatenates the
// two hidden states per frame.

#pragma once

#include "aoseg/adam.hpp"
#include "aoseg/ops.hpp"
#include "aoseg/unet.hpp"

namespace aoseg {

template <class S>
struct CLSTMParams {
  int input_channels = 16;
  int hidden_channels = 16;
  int kernel_size = 3;
  Tensor<S> w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho;
  Tensor<S> b_i, b_f, b_c, b_o;

  std::vector<NamedTensor<S>> named_params(const std::string& prefix) const {
    return {{prefix + ".w_xi", w_xi}, {prefix + ".w_hi", w_hi},
            {prefix + ".w_xf", w_xf}, {prefix + ".w_hf", w_hf},
            {prefix + ".w_xc", w_xc}, {prefix + ".w_hc", w_hc},
            {prefix + ".w_xo", w_xo}, {prefix + ".w_ho", w_ho},
            {prefix + ".b_i", b_i},   {prefix + ".b_f", b_f},
            {prefix + ".b_c", b_c},   {prefix + ".b_o", b_o}};
  }
};

template <class S>
struct CLSTMState {
  Tensor<S> h;
  Tensor<S> c;
};

// Forget-gate bias starts at 1 (open), all other biases at zero.
template <class S>
CLSTMParams<S> build_clstm(int input_channels, int hidden_channels, int kernel_size,
                           std::uint64_t seed) {
  if (kernel_size % 2 == 0) throw Error("clstm: kernel size must be odd");
  Rng rng(seed);
  CLSTMParams<S> p;
  p.input_channels = input_channels;
  p.hidden_channels = hidden_channels;
  p.kernel_size = kernel_size;
  auto xk = [&] { return detail::glorot_kernel<S>(hidden_channels, input_channels, kernel_size, rng); };
  auto hk = [&] { return detail::glorot_kernel<S>(hidden_channels, hidden_channels, kernel_size, rng); };
  p.w_xi = xk(); p.w_hi = hk();
  p.w_xf = xk(); p.w_hf = hk();
  p.w_xc = xk(); p.w_hc = hk();
  p.w_xo = xk(); p.w_ho = hk();
  p.b_i = Tensor<S>({hidden_channels});
  p.b_f = Tensor<S>({hidden_channels}, S(1));
  p.b_c = Tensor<S>({hidden_channels});
  p.b_o = Tensor<S>({hidden_channels});
  return p;
}

template <class S>
CLSTMState<S> zero_state(int n, int channels, int h, int w) {
  return {Tensor<S>({n, channels, h, w}), Tensor<S>({n, channels, h, w})};
}

template <class S>
CLSTMState<S> clstm_cell(const Tensor<S>& x, const CLSTMState<S>& prev,
                         const CLSTMParams<S>& p, Graph<S>* g = nullptr) {
  detail::require_rank(x.shape(), 4, "clstm_cell");
  if (x.dim(2) != prev.h.dim(2) || x.dim(3) != prev.h.dim(3))
    throw Error("clstm_cell: input " + shape_str(x.shape()) +
                " and state " + shape_str(prev.h.shape()) + " spatial sizes differ");
  detail::require_same_shape(prev.h.shape(), prev.c.shape(), "clstm_cell(state)");
  const int pad = (p.kernel_size - 1) / 2;
  Tensor<S> hb({p.hidden_channels});  // zero bias for the recurrent convs

  auto gate = [&](const Tensor<S>& wx, const Tensor<S>& wh, const Tensor<S>& b) {
    return add(conv2d(x, wx, b, pad, g), conv2d(prev.h, wh, hb, pad, g), g);
  };
  Tensor<S> i = sigmoid(gate(p.w_xi, p.w_hi, p.b_i), g);
  Tensor<S> f = sigmoid(gate(p.w_xf, p.w_hf, p.b_f), g);
  Tensor<S> c = add(mul_hadamard(prev.c, f, g),
                    mul_hadamard(i, tanh_act(gate(p.w_xc, p.w_hc, p.b_c), g), g), g);
  Tensor<S> o = sigmoid(gate(p.w_xo, p.w_ho, p.b_o), g);
  Tensor<S> h = mul_hadamard(o, tanh_act(c, g), g);
  return {h, c};
}

// Unrolls both directions from zero initial states and concatenates the
// per-frame hidden states: out[t] = concat(h_fwd[t], h_bwd[t]).
template <class S>
std::vector<Tensor<S>> bidirectional_unroll(const std::vector<Tensor<S>>& xs,
                                            const CLSTMParams<S>& fwd,
                                            const CLSTMParams<S>& bwd,
                                            Graph<S>* g = nullptr) {
  if (xs.empty()) throw Error("bidirectional_unroll: empty input sequence");
  const int t_len = static_cast<int>(xs.size());
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);

  std::vector<Tensor<S>> hf(t_len), hb(t_len);
  CLSTMState<S> sf = zero_state<S>(n, fwd.hidden_channels, h, w);
  for (int t = 0; t < t_len; ++t) {
    sf = clstm_cell(xs[t], sf, fwd, g);
    hf[t] = sf.h;
  }
  CLSTMState<S> sb = zero_state<S>(n, bwd.hidden_channels, h, w);
  for (int t = t_len - 1; t >= 0; --t) {
    sb = clstm_cell(xs[t], sb, bwd, g);
    hb[t] = sb.h;
  }
  std::vector<Tensor<S>> out(t_len);
  for (int t = 0; t < t_len; ++t) out[t] = concat_channels(hf[t], hb[t], g);
  return out;
}

// 1x1 conv mapping the fused bidirectional features to class logits.
template <class S>
struct HeadParams {
  Tensor<S> kernel;  // [C, 2*hidden, 1, 1]
  Tensor<S> bias;

  std::vector<NamedTensor<S>> named_params(const std::string& prefix) const {
    return {{prefix + ".kernel", kernel}, {prefix + ".bias", bias}};
  }
};

template <class S>
HeadParams<S> build_head(int fused_channels, int num_classes, std::uint64_t seed) {
  Rng rng(seed);
  return {detail::glorot_kernel<S>(num_classes, fused_channels, 1, rng),
          Tensor<S>({num_classes})};
}

template <class S>
Tensor<S> head_logits(const Tensor<S>& fused, const HeadParams<S>& head,
                      Graph<S>* g = nullptr) {
  return conv2d(fused, head.kernel, head.bias, 0, g);
}

}  // namespace aoseg
