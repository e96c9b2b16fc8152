#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ganinv/rng.hpp"
#include "ganinv/tensor.hpp"

namespace ganinv {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
};

/// Per-layer activations saved by a traced forward pass.
template <class T>
struct LayerCtx {
  Tensor<T> a;
  Tensor<T> b;
  Shape in_shape;
  int flag = 0;
};

/// A differentiable layer. Inference-mode forward never mutates the layer, so
/// a built model can be evaluated concurrently; gradients are written to
/// caller-owned buffers. Layers with train-time statistics (batch norm)
/// mutate those only while their network is in training mode, which demands
/// exclusive access.
template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape out_shape(const Shape& in) const = 0;
  /// x is [B, ...in]; when ctx is non-null the layer saves whatever its
  /// backward pass needs.
  virtual Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const = 0;
  /// dy is [B, ...out]. Accumulates parameter gradients into *param_grads
  /// (aligned with params()) when non-null, and returns dx.
  virtual Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                             std::vector<Tensor<T>>* param_grads) const = 0;
  /// Trainable parameters.
  virtual std::vector<ParamRef<T>> params() { return {}; }
  /// Persisted non-trainable state (running statistics).
  virtual std::vector<ParamRef<T>> buffers() { return {}; }
  virtual void init_params(Rng&) {}
  virtual void set_training(bool) {}
};

// ---------------------------------------------------------------------------

template <class T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(int64_t in, int64_t out)
      : in_(in), out_(out), w_(Shape{in, out}), b_(Shape{out}) {}

  std::string kind() const override { return "dense"; }
  Shape out_shape(const Shape& in) const override {
    if (shape_numel(in) != in_)
      throw std::invalid_argument("dense expects " + std::to_string(in_) + " inputs, got " +
                                  shape_str(in));
    return {out_};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    const int64_t bsz = x.dim(0);
    Tensor<T> y(Shape{bsz, out_});
    ConstMatMap<T> xm(x.data(), bsz, in_);
    ConstMatMap<T> wm(w_.data(), in_, out_);
    MatMap<T> ym(y.data(), bsz, out_);
    ym.noalias() = xm * wm;
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b_.data(), out_);
    if (ctx) ctx->a = x.reshaped({bsz, in_});
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>* param_grads) const override {
    const int64_t bsz = dy.dim(0);
    ConstMatMap<T> dym(dy.data(), bsz, out_);
    ConstMatMap<T> wm(w_.data(), in_, out_);
    Tensor<T> dx(Shape{bsz, in_});
    MatMap<T> dxm(dx.data(), bsz, in_);
    dxm.noalias() = dym * wm.transpose();
    if (param_grads) {
      ConstMatMap<T> xm(ctx.a.data(), bsz, in_);
      MatMap<T> dwm((*param_grads)[0].data(), in_, out_);
      dwm.noalias() += xm.transpose() * dym;
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> dbm((*param_grads)[1].data(), out_);
      dbm += dym.colwise().sum();
    }
    return dx;
  }

  std::vector<ParamRef<T>> params() override { return {{"w", &w_}, {"b", &b_}}; }
  void init_params(Rng& rng) override {
    rng.fill_truncated_normal(w_, 0.02);
    b_.fill(T(0));
  }

  Tensor<T>& weights() { return w_; }
  Tensor<T>& bias() { return b_; }

 private:
  int64_t in_, out_;
  Tensor<T> w_, b_;
};

// ---------------------------------------------------------------------------

namespace detail {

/// Gathers k x k patches of src (NHWC) into rows of cols: row (b, oy, ox),
/// column (ky, kx, c). Out-of-range taps read as zero.
template <class T>
void im2col(const Tensor<T>& src, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
            int64_t oh, int64_t ow, Tensor<T>& cols) {
  const int64_t bsz = src.dim(0), h = src.dim(1), w = src.dim(2), c = src.dim(3);
  const int64_t row_len = kh * kw * c;
  cols.fill(T(0));
  T* out = cols.data();
  const T* in = src.data();
  for (int64_t b = 0; b < bsz; ++b) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        T* row = out + ((b * oh + oy) * ow + ox) * row_len;
        for (int64_t ky = 0; ky < kh; ++ky) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int64_t kx = 0; kx < kw; ++kx) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const T* s = in + ((b * h + iy) * w + ix) * c;
            T* d = row + (ky * kw + kx) * c;
            for (int64_t ch = 0; ch < c; ++ch) d[ch] = s[ch];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds rows of cols back into dst (NHWC).
template <class T>
void col2im_add(const Tensor<T>& cols, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                int64_t oh, int64_t ow, Tensor<T>& dst) {
  const int64_t bsz = dst.dim(0), h = dst.dim(1), w = dst.dim(2), c = dst.dim(3);
  const int64_t row_len = kh * kw * c;
  const T* in = cols.data();
  T* out = dst.data();
  for (int64_t b = 0; b < bsz; ++b) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        const T* row = in + ((b * oh + oy) * ow + ox) * row_len;
        for (int64_t ky = 0; ky < kh; ++ky) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int64_t kx = 0; kx < kw; ++kx) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            T* d = out + ((b * h + iy) * w + ix) * c;
            const T* s = row + (ky * kw + kx) * c;
            for (int64_t ch = 0; ch < c; ++ch) d[ch] += s[ch];
          }
        }
      }
    }
  }
}

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}
inline int64_t deconv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in - 1) * stride - 2 * pad + k;
}

}  // namespace detail

/// Strided 2-D convolution over NHWC tensors. Kernel layout [kh, kw, cin, cout].
template <class T>
class Conv2dLayer final : public Layer<T> {
 public:
  Conv2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad)
      : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
        w_(Shape{k, k, cin, cout}), b_(Shape{cout}) {}

  std::string kind() const override { return "conv"; }
  Shape out_shape(const Shape& in) const override {
    check_in(in);
    return {detail::conv_out_dim(in[0], k_, stride_, pad_),
            detail::conv_out_dim(in[1], k_, stride_, pad_), cout_};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    const int64_t bsz = x.dim(0);
    const int64_t oh = detail::conv_out_dim(x.dim(1), k_, stride_, pad_);
    const int64_t ow = detail::conv_out_dim(x.dim(2), k_, stride_, pad_);
    const int64_t rows = bsz * oh * ow, row_len = k_ * k_ * cin_;
    Tensor<T> cols(Shape{rows, row_len});
    detail::im2col(x, k_, k_, stride_, pad_, oh, ow, cols);
    Tensor<T> y(Shape{bsz, oh, ow, cout_});
    ConstMatMap<T> cm(cols.data(), rows, row_len);
    ConstMatMap<T> wm(w_.data(), row_len, cout_);
    MatMap<T> ym(y.data(), rows, cout_);
    ym.noalias() = cm * wm;
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b_.data(), cout_);
    if (ctx) ctx->a = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>* param_grads) const override {
    const Tensor<T>& x = ctx.a;
    const int64_t bsz = x.dim(0), oh = dy.dim(1), ow = dy.dim(2);
    const int64_t rows = bsz * oh * ow, row_len = k_ * k_ * cin_;
    ConstMatMap<T> dym(dy.data(), rows, cout_);
    ConstMatMap<T> wm(w_.data(), row_len, cout_);

    Tensor<T> dcols(Shape{rows, row_len});
    MatMap<T> dcm(dcols.data(), rows, row_len);
    dcm.noalias() = dym * wm.transpose();
    Tensor<T> dx(x.shape());
    detail::col2im_add(dcols, k_, k_, stride_, pad_, oh, ow, dx);

    if (param_grads) {
      // im2col is recomputed here: cheaper than holding the patch matrix alive
      Tensor<T> cols(Shape{rows, row_len});
      detail::im2col(x, k_, k_, stride_, pad_, oh, ow, cols);
      ConstMatMap<T> cm(cols.data(), rows, row_len);
      MatMap<T> dwm((*param_grads)[0].data(), row_len, cout_);
      dwm.noalias() += cm.transpose() * dym;
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> dbm((*param_grads)[1].data(), cout_);
      dbm += dym.colwise().sum();
    }
    return dx;
  }

  std::vector<ParamRef<T>> params() override { return {{"w", &w_}, {"b", &b_}}; }
  void init_params(Rng& rng) override {
    rng.fill_truncated_normal(w_, 0.02);
    b_.fill(T(0));
  }

 private:
  void check_in(const Shape& in) const {
    if (in.size() != 3 || in[2] != cin_)
      throw std::invalid_argument("conv expects [h,w," + std::to_string(cin_) + "], got " +
                                  shape_str(in));
  }

  int64_t cin_, cout_, k_, stride_, pad_;
  Tensor<T> w_, b_;
};

/// Transposed (fractionally strided) convolution. Kernel layout
/// [cin, kh, kw, cout], the adjoint geometry of Conv2dLayer.
template <class T>
class Deconv2dLayer final : public Layer<T> {
 public:
  Deconv2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad)
      : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
        w_(Shape{cin, k, k, cout}), b_(Shape{cout}) {}

  std::string kind() const override { return "deconv"; }
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3 || in[2] != cin_)
      throw std::invalid_argument("deconv expects [h,w," + std::to_string(cin_) + "], got " +
                                  shape_str(in));
    return {detail::deconv_out_dim(in[0], k_, stride_, pad_),
            detail::deconv_out_dim(in[1], k_, stride_, pad_), cout_};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    const int64_t bsz = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    const int64_t oh = detail::deconv_out_dim(ih, k_, stride_, pad_);
    const int64_t ow = detail::deconv_out_dim(iw, k_, stride_, pad_);
    const int64_t rows = bsz * ih * iw, row_len = k_ * k_ * cout_;

    Tensor<T> cols(Shape{rows, row_len});
    ConstMatMap<T> xm(x.data(), rows, cin_);
    ConstMatMap<T> wm(w_.data(), cin_, row_len);
    MatMap<T> cm(cols.data(), rows, row_len);
    cm.noalias() = xm * wm;

    Tensor<T> y(Shape{bsz, oh, ow, cout_});
    detail::col2im_add(cols, k_, k_, stride_, pad_, ih, iw, y);
    T* yd = y.data();
    for (int64_t i = 0; i < y.size(); ++i) yd[i] += b_[i % cout_];
    if (ctx) ctx->a = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>* param_grads) const override {
    const Tensor<T>& x = ctx.a;
    const int64_t bsz = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    const int64_t rows = bsz * ih * iw, row_len = k_ * k_ * cout_;

    Tensor<T> dcols(Shape{rows, row_len});
    detail::im2col(dy, k_, k_, stride_, pad_, ih, iw, dcols);

    ConstMatMap<T> dcm(dcols.data(), rows, row_len);
    ConstMatMap<T> wm(w_.data(), cin_, row_len);
    Tensor<T> dx(x.shape());
    MatMap<T> dxm(dx.data(), rows, cin_);
    dxm.noalias() = dcm * wm.transpose();

    if (param_grads) {
      ConstMatMap<T> xm(x.data(), rows, cin_);
      MatMap<T> dwm((*param_grads)[0].data(), cin_, row_len);
      dwm.noalias() += xm.transpose() * dcm;
      Tensor<T>& db = (*param_grads)[1];
      const T* dyd = dy.data();
      for (int64_t i = 0; i < dy.size(); ++i) db[i % cout_] += dyd[i];
    }
    return dx;
  }

  std::vector<ParamRef<T>> params() override { return {{"w", &w_}, {"b", &b_}}; }
  void init_params(Rng& rng) override {
    rng.fill_truncated_normal(w_, 0.02);
    b_.fill(T(0));
  }

 private:
  int64_t cin_, cout_, k_, stride_, pad_;
  Tensor<T> w_, b_;
};

// ---------------------------------------------------------------------------

enum class Act { Relu, LeakyRelu, Tanh, Sigmoid };

inline std::string act_name(Act a) {
  switch (a) {
    case Act::Relu: return "relu";
    case Act::LeakyRelu: return "lrelu";
    case Act::Tanh: return "tanh";
    case Act::Sigmoid: return "sigmoid";
  }
  return "?";
}

template <class T>
class ActivationLayer final : public Layer<T> {
 public:
  explicit ActivationLayer(Act fn, double alpha = 0.2) : fn_(fn), alpha_(static_cast<T>(alpha)) {}

  std::string kind() const override { return "act:" + act_name(fn_); }
  Shape out_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    Tensor<T> y(x.shape());
    const T* xs = x.data();
    T* ys = y.data();
    switch (fn_) {
      case Act::Relu:
        for (int64_t i = 0; i < x.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
        break;
      case Act::LeakyRelu:
        for (int64_t i = 0; i < x.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : alpha_ * xs[i];
        break;
      case Act::Tanh:
        for (int64_t i = 0; i < x.size(); ++i) ys[i] = std::tanh(xs[i]);
        break;
      case Act::Sigmoid:
        for (int64_t i = 0; i < x.size(); ++i) ys[i] = T(1) / (T(1) + std::exp(-xs[i]));
        break;
    }
    if (ctx) {
      if (fn_ == Act::Tanh || fn_ == Act::Sigmoid) ctx->a = y;
      else ctx->a = x;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>*) const override {
    Tensor<T> dx(dy.shape());
    const T* d = dy.data();
    const T* s = ctx.a.data();
    T* o = dx.data();
    switch (fn_) {
      case Act::Relu:
        for (int64_t i = 0; i < dy.size(); ++i) o[i] = s[i] > T(0) ? d[i] : T(0);
        break;
      case Act::LeakyRelu:
        for (int64_t i = 0; i < dy.size(); ++i) o[i] = s[i] > T(0) ? d[i] : alpha_ * d[i];
        break;
      case Act::Tanh:
        for (int64_t i = 0; i < dy.size(); ++i) o[i] = d[i] * (T(1) - s[i] * s[i]);
        break;
      case Act::Sigmoid:
        for (int64_t i = 0; i < dy.size(); ++i) o[i] = d[i] * s[i] * (T(1) - s[i]);
        break;
    }
    return dx;
  }

  Act fn() const { return fn_; }
  double alpha() const { return alpha_; }

 private:
  Act fn_;
  T alpha_;
};

/// Per-channel batch normalization over the trailing axis (channels for NHWC
/// maps, features for dense stacks). Training mode normalizes with batch
/// statistics and maintains running averages; inference mode is a fixed
/// affine map using the running statistics.
template <class T>
class BatchNormLayer final : public Layer<T> {
 public:
  explicit BatchNormLayer(int64_t channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_(Shape{channels}), beta_(Shape{channels}),
        run_mean_(Shape{channels}), run_var_(Shape{channels}) {
    gamma_.fill(T(1));
    run_var_.fill(T(1));
  }

  std::string kind() const override { return "bnorm"; }
  Shape out_shape(const Shape& in) const override {
    if (in.empty() || in.back() != c_)
      throw std::invalid_argument("bnorm expects trailing dim " + std::to_string(c_) + ", got " +
                                  shape_str(in));
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    const int64_t n = x.size() / c_;  // batch x spatial positions
    Tensor<T> y(x.shape());
    if (training_) {
      std::vector<double> mu(c_, 0.0), var(c_, 0.0);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) mu[ch] += double(x[i * c_ + ch]);
      for (int64_t ch = 0; ch < c_; ++ch) mu[ch] /= double(n);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const double d = double(x[i * c_ + ch]) - mu[ch];
          var[ch] += d * d;
        }
      for (int64_t ch = 0; ch < c_; ++ch) var[ch] /= double(n);

      Tensor<T> xhat(x.shape());
      Tensor<T> istd(Shape{c_});
      for (int64_t ch = 0; ch < c_; ++ch) istd[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + eps_));
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const int64_t k = i * c_ + ch;
          xhat[k] = static_cast<T>((double(x[k]) - mu[ch]) * double(istd[ch]));
          y[k] = gamma_[ch] * xhat[k] + beta_[ch];
        }
      // running statistics (unbiased variance, standard convention)
      const double unbias = n > 1 ? double(n) / double(n - 1) : 1.0;
      for (int64_t ch = 0; ch < c_; ++ch) {
        run_mean_[ch] = static_cast<T>((1 - momentum_) * double(run_mean_[ch]) + momentum_ * mu[ch]);
        run_var_[ch] =
            static_cast<T>((1 - momentum_) * double(run_var_[ch]) + momentum_ * var[ch] * unbias);
      }
      if (ctx) {
        ctx->a = std::move(xhat);
        ctx->b = std::move(istd);
        ctx->flag = 1;  // batch-statistics phase
      }
    } else {
      Tensor<T> istd(Shape{c_});
      for (int64_t ch = 0; ch < c_; ++ch)
        istd[ch] = static_cast<T>(1.0 / std::sqrt(double(run_var_[ch]) + eps_));
      Tensor<T> xhat(x.shape());
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const int64_t k = i * c_ + ch;
          xhat[k] = static_cast<T>((double(x[k]) - double(run_mean_[ch])) * double(istd[ch]));
          y[k] = gamma_[ch] * xhat[k] + beta_[ch];
        }
      if (ctx) {
        ctx->a = std::move(xhat);
        ctx->b = std::move(istd);
        ctx->flag = 0;  // frozen-statistics phase
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>* param_grads) const override {
    const Tensor<T>& xhat = ctx.a;
    const Tensor<T>& istd = ctx.b;
    const int64_t n = dy.size() / c_;
    Tensor<T> dx(dy.shape());

    if (param_grads) {
      Tensor<T>& dgamma = (*param_grads)[0];
      Tensor<T>& dbeta = (*param_grads)[1];
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const int64_t k = i * c_ + ch;
          dgamma[ch] += dy[k] * xhat[k];
          dbeta[ch] += dy[k];
        }
    }

    if (ctx.flag == 1) {
      // batch statistics couple the samples
      std::vector<double> sum_dxhat(c_, 0.0), sum_dxhat_xhat(c_, 0.0);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const int64_t k = i * c_ + ch;
          const double dxhat = double(dy[k]) * double(gamma_[ch]);
          sum_dxhat[ch] += dxhat;
          sum_dxhat_xhat[ch] += dxhat * double(xhat[k]);
        }
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const int64_t k = i * c_ + ch;
          const double dxhat = double(dy[k]) * double(gamma_[ch]);
          dx[k] = static_cast<T>(double(istd[ch]) *
                                 (dxhat - sum_dxhat[ch] / n -
                                  double(xhat[k]) * sum_dxhat_xhat[ch] / n));
        }
    } else {
      // frozen statistics: a per-channel affine map
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c_; ++ch) {
          const int64_t k = i * c_ + ch;
          dx[k] = static_cast<T>(double(dy[k]) * double(gamma_[ch]) * double(istd[ch]));
        }
    }
    return dx;
  }

  std::vector<ParamRef<T>> params() override { return {{"gamma", &gamma_}, {"beta", &beta_}}; }
  std::vector<ParamRef<T>> buffers() override {
    return {{"running_mean", &run_mean_}, {"running_var", &run_var_}};
  }
  void set_training(bool on) override { training_ = on; }

 private:
  int64_t c_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_;
  mutable Tensor<T> run_mean_, run_var_;  // updated during training-mode forward
  bool training_ = false;
};

/// Reinterprets the per-sample feature shape; no arithmetic.
template <class T>
class ReshapeLayer final : public Layer<T> {
 public:
  explicit ReshapeLayer(Shape target) : target_(std::move(target)) {}
  std::string kind() const override { return "reshape"; }
  Shape out_shape(const Shape& in) const override {
    if (shape_numel(in) != shape_numel(target_))
      throw std::invalid_argument("reshape " + shape_str(in) + " -> " + shape_str(target_));
    return target_;
  }
  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    if (ctx) ctx->in_shape = x.shape();
    Shape s = target_;
    s.insert(s.begin(), x.dim(0));
    return x.reshaped(std::move(s));
  }
  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>*) const override {
    return dy.reshaped(ctx.in_shape);
  }
  const Shape& target() const { return target_; }

 private:
  Shape target_;
};

template <class T>
class FlattenLayer final : public Layer<T> {
 public:
  std::string kind() const override { return "flatten"; }
  Shape out_shape(const Shape& in) const override { return {shape_numel(in)}; }
  Tensor<T> forward(const Tensor<T>& x, LayerCtx<T>* ctx) const override {
    if (ctx) ctx->in_shape = x.shape();
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  Tensor<T> backward(const Tensor<T>& dy, const LayerCtx<T>& ctx,
                     std::vector<Tensor<T>>*) const override {
    return dy.reshaped(ctx.in_shape);
  }
};

// ---------------------------------------------------------------------------

/// Gradient buffers aligned with a network's layers/params.
template <class T>
struct NetGrads {
  std::vector<std::vector<Tensor<T>>> by_layer;

  void zero() {
    for (auto& layer : by_layer)
      for (auto& g : layer) g.fill(T(0));
  }
  bool all_finite() const {
    for (const auto& layer : by_layer)
      for (const auto& g : layer)
        if (!g.all_finite()) return false;
    return true;
  }
};

template <class T>
struct Trace {
  std::vector<LayerCtx<T>> ctx;
};

/// A feed-forward stack of layers with per-sample feature shape tracking.
template <class T>
class Network {
 public:
  Network() = default;
  explicit Network(Shape in_shape) : in_shape_(std::move(in_shape)) {}

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void add(std::unique_ptr<Layer<T>> layer) {
    Shape cur = layers_.empty() ? in_shape_ : out_shape_;
    out_shape_ = layer->out_shape(cur);
    layers_.push_back(std::move(layer));
  }

  const Shape& in_shape() const { return in_shape_; }
  const Shape& out_shape() const { return layers_.empty() ? in_shape_ : out_shape_; }
  size_t num_layers() const { return layers_.size(); }
  Layer<T>& layer(size_t i) { return *layers_[i]; }
  const Layer<T>& layer(size_t i) const { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> cur = x;
    for (const auto& l : layers_) cur = l->forward(cur, nullptr);
    return cur;
  }

  Tensor<T> forward(const Tensor<T>& x, Trace<T>& trace) const {
    trace.ctx.assign(layers_.size(), LayerCtx<T>{});
    Tensor<T> cur = x;
    for (size_t i = 0; i < layers_.size(); ++i) cur = layers_[i]->forward(cur, &trace.ctx[i]);
    return cur;
  }

  /// Forward through layers [0, end_layer).
  Tensor<T> forward_prefix(const Tensor<T>& x, size_t end_layer) const {
    Tensor<T> cur = x;
    for (size_t i = 0; i < end_layer && i < layers_.size(); ++i)
      cur = layers_[i]->forward(cur, nullptr);
    return cur;
  }

  /// Forward through layers [start_layer, end).
  Tensor<T> forward_suffix(const Tensor<T>& x, size_t start_layer) const {
    Tensor<T> cur = x;
    for (size_t i = start_layer; i < layers_.size(); ++i) cur = layers_[i]->forward(cur, nullptr);
    return cur;
  }

  /// Backpropagates dy through the traced pass. Accumulates parameter
  /// gradients into *grads when non-null (pass nullptr for frozen networks)
  /// and returns the gradient w.r.t. the network input.
  Tensor<T> backward(const Trace<T>& trace, const Tensor<T>& dy, NetGrads<T>* grads) const {
    Tensor<T> cur = dy;
    for (size_t i = layers_.size(); i-- > 0;) {
      std::vector<Tensor<T>>* pg = grads ? &grads->by_layer[i] : nullptr;
      cur = layers_[i]->backward(cur, trace.ctx[i], pg);
    }
    return cur;
  }

  NetGrads<T> make_grads() {
    NetGrads<T> g;
    g.by_layer.resize(layers_.size());
    for (size_t i = 0; i < layers_.size(); ++i)
      for (const auto& p : layers_[i]->params())
        g.by_layer[i].push_back(Tensor<T>(p.value->shape()));
    return g;
  }

  std::vector<ParamRef<T>> named_params() {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < layers_.size(); ++i)
      for (auto& p : layers_[i]->params())
        out.push_back({"layer" + std::to_string(i) + "." + p.name, p.value});
    return out;
  }

  std::vector<ParamRef<T>> named_buffers() {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < layers_.size(); ++i)
      for (auto& p : layers_[i]->buffers())
        out.push_back({"layer" + std::to_string(i) + "." + p.name, p.value});
    return out;
  }

  /// Training mode switches batch-norm layers to batch statistics (and lets
  /// them update running averages); inference mode keeps every forward pure.
  void set_training(bool on) {
    training_ = on;
    for (auto& l : layers_) l->set_training(on);
  }
  bool is_training() const { return training_; }

  int64_t param_count() {
    int64_t n = 0;
    for (const auto& p : named_params()) n += p.value->size();
    return n;
  }

  void init_params(uint64_t seed) {
    // each layer draws from its own derived stream so initialization does not
    // depend on parameter visitation order
    for (size_t i = 0; i < layers_.size(); ++i) {
      Rng rng(mix_seed(seed, i));
      layers_[i]->init_params(rng);
    }
  }

 private:
  Shape in_shape_;
  Shape out_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  bool training_ = false;
};

// ---------------------------------------------------------------------------

/// Adam with bias correction over a fixed parameter list.
template <class T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::vector<ParamRef<T>> params, const NetGrads<T>& grads) {
    std::vector<const Tensor<T>*> gs;
    for (const auto& layer : grads.by_layer)
      for (const auto& g : layer) gs.push_back(&g);
    if (gs.size() != params.size()) throw std::logic_error("adam: param/grad mismatch");
    if (m_.empty()) {
      for (auto& p : params) {
        m_.emplace_back(p.value->shape());
        v_.emplace_back(p.value->shape());
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i].value;
      const Tensor<T>& g = *gs[i];
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (int64_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        m[j] = static_cast<T>(b1_ * m[j] + (1 - b1_) * gj);
        v[j] = static_cast<T>(b2_ * v[j] + (1 - b2_) * gj * gj);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p[j] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Classification losses.

/// Row-wise softmax of logits [B, C].
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const int64_t b = logits.dim(0), c = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (int64_t i = 0; i < b; ++i) {
    const T* row = logits.data() + i * c;
    T* orow = out.data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double den = 0;
    for (int64_t j = 0; j < c; ++j) den += std::exp(double(row[j] - mx));
    for (int64_t j = 0; j < c; ++j) orow[j] = static_cast<T>(std::exp(double(row[j] - mx)) / den);
  }
  return out;
}

/// Mean cross-entropy over the batch; optionally writes d(loss)/d(logits).
template <class T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tensor<T>* dlogits = nullptr) {
  const int64_t b = logits.dim(0), c = logits.dim(1);
  Tensor<T> p = softmax(logits);
  double loss = 0;
  for (int64_t i = 0; i < b; ++i) {
    const double py = std::max(double(p[i * c + labels[i]]), 1e-300);
    loss -= std::log(py);
  }
  loss /= double(b);
  if (dlogits) {
    *dlogits = p;
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t j = 0; j < c; ++j) (*dlogits)[i * c + j] /= T(b);
      (*dlogits)[i * c + labels[i]] -= T(1) / T(b);
    }
  }
  return loss;
}

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const int64_t b = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(b);
  for (int64_t i = 0; i < b; ++i) {
    const T* row = logits.data() + i * c;
    int best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    out[i] = best;
  }
  return out;
}

}  // namespace ganinv
