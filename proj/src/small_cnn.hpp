#pragma once

#include <span>

#include "esure/denoiser.hpp"

namespace esure::detail {

template <std::floating_point T>
BasicImage<T> cnn_forward(const CnnArchitecture& arch, std::span<const T> params, const BasicImage<T>& y,
                          ForwardTape<T>* tape);

template <std::floating_point T>
void cnn_accumulate_vjp(const CnnArchitecture& arch, std::span<const T> params, const ForwardTape<T>& tape,
                        const BasicImage<T>& u, std::span<T> grad);

}  // namespace esure::detail
