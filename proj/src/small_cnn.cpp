#include "small_cnn.hpp"

#include <Eigen/Core>

namespace esure::detail {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct LayerDims {
  std::size_t fin;
  std::size_t fout;
  std::size_t weight_offset;
  std::size_t bias_offset;
};

LayerDims layer_dims(const CnnArchitecture& arch, std::size_t l) {
  const std::size_t kk = arch.kernel * arch.kernel;
  std::size_t offset = 0;
  for (std::size_t i = 0;; ++i) {
    const std::size_t fin = i == 0 ? arch.channels : arch.features;
    const std::size_t fout = i + 1 == arch.layers ? arch.channels : arch.features;
    if (i == l) return {fin, fout, offset, offset + fout * fin * kk};
    offset += fout * fin * kk + fout;
  }
}

// HWC interleaved -> planar (C x H*W).
template <typename T>
RowMat<T> to_planar(const BasicImage<T>& img) {
  const std::size_t c = img.channels();
  const std::size_t p = img.height() * img.width();
  RowMat<T> out(c, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) out(ch, i) = img[i * c + ch];
  return out;
}

// Zero-padded patch matrix: row (ci, ky, kx), column = output pixel.
template <typename T>
void im2col(const T* in, std::size_t fin, std::size_t h, std::size_t w, std::size_t k, RowMat<T>& col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  col.resize(static_cast<Eigen::Index>(fin * k * k), H * W);
  for (std::size_t ci = 0; ci < fin; ++ci) {
    const T* plane = in + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col.row(static_cast<Eigen::Index>((ci * k + ky) * k + kx)).data();
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          T* row = dst + y * W;
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(row, row + W, T(0));
            continue;
          }
          const T* src = plane + sy * W + dx;
          for (std::ptrdiff_t x = 0; x < x0; ++x) row[x] = T(0);
          for (std::ptrdiff_t x = x0; x < x1; ++x) row[x] = src[x];
          for (std::ptrdiff_t x = x1; x < W; ++x) row[x] = T(0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add the patch matrix back onto the planes.
template <typename T>
void col2im(const RowMat<T>& col, std::size_t fin, std::size_t h, std::size_t w, std::size_t k, T* out) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  std::fill(out, out + fin * h * w, T(0));
  for (std::size_t ci = 0; ci < fin; ++ci) {
    T* plane = out + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* srcrow = col.row(static_cast<Eigen::Index>((ci * k + ky) * k + kx)).data();
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          T* dst = plane + sy * W + dx;
          const T* src = srcrow + y * W;
          for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

template <typename T>
Eigen::Map<const RowMat<T>> weights(std::span<const T> params, const LayerDims& d, std::size_t kk) {
  return {params.data() + d.weight_offset, static_cast<Eigen::Index>(d.fout), static_cast<Eigen::Index>(d.fin * kk)};
}

}  // namespace

template <std::floating_point T>
BasicImage<T> cnn_forward(const CnnArchitecture& arch, std::span<const T> params, const BasicImage<T>& y,
                          ForwardTape<T>* tape) {
  const std::size_t h = y.height(), w = y.width(), p = h * w, kk = arch.kernel * arch.kernel;
  if (tape) {
    tape->input = y;
    tape->activations.assign(arch.layers - 1, {});
  }
  RowMat<T> act = to_planar(y);
  RowMat<T> col, z;
  for (std::size_t l = 0; l < arch.layers; ++l) {
    const LayerDims d = layer_dims(arch, l);
    im2col(act.data(), d.fin, h, w, arch.kernel, col);
    z.resize(static_cast<Eigen::Index>(d.fout), static_cast<Eigen::Index>(p));
    z.noalias() = weights(params, d, kk) * col;
    Eigen::Map<const Vec<T>> bias(params.data() + d.bias_offset, static_cast<Eigen::Index>(d.fout));
    z.colwise() += bias;
    if (l + 1 < arch.layers) {
      z = z.cwiseMax(T(0));
      if (tape) tape->activations[l].assign(z.data(), z.data() + z.size());
    }
    act.swap(z);
  }
  // act now holds the residual f(y), planar.
  BasicImage<T> out = y;
  const std::size_t c = y.channels();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] -= act(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(i));
  return out;
}

template <std::floating_point T>
void cnn_accumulate_vjp(const CnnArchitecture& arch, std::span<const T> params, const ForwardTape<T>& tape,
                        const BasicImage<T>& u, std::span<T> grad) {
  const BasicImage<T>& y = tape.input;
  const std::size_t h = y.height(), w = y.width(), p = h * w, kk = arch.kernel * arch.kernel;
  const auto P = static_cast<Eigen::Index>(p);

  // out = y - f(y): cotangent of f is -u.
  RowMat<T> dz = -to_planar(u);
  const RowMat<T> input_planar = to_planar(y);
  RowMat<T> col, dcol, da;
  for (std::size_t l = arch.layers; l-- > 0;) {
    const LayerDims d = layer_dims(arch, l);
    const T* in = l == 0 ? input_planar.data() : tape.activations[l - 1].data();
    im2col(in, d.fin, h, w, arch.kernel, col);

    Eigen::Map<RowMat<T>> gw(grad.data() + d.weight_offset, static_cast<Eigen::Index>(d.fout),
                             static_cast<Eigen::Index>(d.fin * kk));
    gw.noalias() += dz * col.transpose();
    Eigen::Map<Vec<T>> gb(grad.data() + d.bias_offset, static_cast<Eigen::Index>(d.fout));
    gb += dz.rowwise().sum();

    if (l == 0) break;
    dcol.resize(static_cast<Eigen::Index>(d.fin * kk), P);
    dcol.noalias() = weights(params, d, kk).transpose() * dz;
    da.resize(static_cast<Eigen::Index>(d.fin), P);
    col2im(dcol, d.fin, h, w, arch.kernel, da.data());
    const T* a = tape.activations[l - 1].data();
    T* g = da.data();
    for (std::size_t i = 0; i < d.fin * p; ++i)
      if (!(a[i] > T(0))) g[i] = T(0);
    dz.swap(da);
  }
}

template BasicImage<float> cnn_forward<float>(const CnnArchitecture&, std::span<const float>, const BasicImage<float>&,
                                              ForwardTape<float>*);
template BasicImage<double> cnn_forward<double>(const CnnArchitecture&, std::span<const double>,
                                                const BasicImage<double>&, ForwardTape<double>*);
template void cnn_accumulate_vjp<float>(const CnnArchitecture&, std::span<const float>, const ForwardTape<float>&,
                                        const BasicImage<float>&, std::span<float>);
template void cnn_accumulate_vjp<double>(const CnnArchitecture&, std::span<const double>, const ForwardTape<double>&,
                                         const BasicImage<double>&, std::span<double>);

}  // namespace esure::detail
