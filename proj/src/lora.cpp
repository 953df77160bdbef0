// SPDX-License-Identifier: Apache-2.0

#include "spiel/lora.hpp"

#include <cmath>
#include <string>

#include "spiel/error.hpp"
#include "spiel/kernels.hpp"

namespace spiel {
namespace {

// y += scaling * u B^T, u: b x r, B: d_out x r.
template <typename T>
void add_low_rank(const Matrix<T>& u, const Matrix<T>& bmat, T scaling, Matrix<T>& y) {
  const std::size_t r = u.cols();
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t o = 0; o < bmat.rows(); ++o) {
      T acc = T(0);
      for (std::size_t k = 0; k < r; ++k) acc += u(i, k) * bmat(o, k);
      y(i, o) += scaling * acc;
    }
  }
}

// u = x A^T, A: r x d_in.
template <typename T>
Matrix<T> project(const Matrix<T>& x, const Matrix<T>& a) {
  Matrix<T> u(x.rows(), a.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < a.rows(); ++k) {
      T acc = T(0);
      for (std::size_t j = 0; j < a.cols(); ++j) acc += x(i, j) * a(k, j);
      u(i, k) = acc;
    }
  }
  return u;
}

}  // namespace

template <typename T>
std::vector<T> lora_merge(const LoraFactors<T>& f, T scaling, std::span<const T> w) {
  const std::size_t r = f.a.rows();
  const std::size_t d_in = f.a.cols();
  const std::size_t d_out = f.b.rows();
  if (f.b.cols() != r) throw Error("lora_merge: A and B ranks differ");
  if (w.size() != d_in * d_out) throw Error("lora_merge: weight shape mismatch");
  std::vector<T> out(w.begin(), w.end());
  for (std::size_t i = 0; i < d_in; ++i) {
    for (std::size_t o = 0; o < d_out; ++o) {
      T acc = T(0);
      for (std::size_t k = 0; k < r; ++k) acc += f.b(o, k) * f.a(k, i);
      out[i * d_out + o] += scaling * acc;
    }
  }
  return out;
}

template <typename T>
Matrix<T> lora_forward(const LoraFactors<T>& f, T scaling, std::span<const T> w,
                       const Matrix<T>& x) {
  const std::size_t d_out = f.b.rows();
  if (x.cols() != f.a.cols() || w.size() != x.cols() * d_out) {
    throw Error("lora_forward: shape mismatch");
  }
  Matrix<T> y;
  kernels::matmul<T>(x, w, d_out, y);
  add_low_rank(project(x, f.a), f.b, scaling, y);
  return y;
}

template <typename T>
LoraAdapter<T>::LoraAdapter(const MlpSpec& spec, std::size_t rank, double alpha, double dropout,
                            uint64_t seed)
    : rank_(rank),
      scaling_(static_cast<T>(alpha / static_cast<double>(rank))),
      dropout_(dropout),
      rng_(seed) {
  if (rank == 0) throw ConfigError("LoRA rank must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("LoRA dropout must lie in [0, 1)");
  for (const auto& layer : spec.layers) {
    LoraFactors<T> f{Matrix<T>(rank, layer.d_in), Matrix<T>(layer.d_out, rank)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.d_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : f.a.flat()) v = static_cast<T>(dist(rng_));
    factors_.push_back(std::move(f));
    grads_.push_back({Matrix<T>(rank, layer.d_in), Matrix<T>(layer.d_out, rank)});
  }
  mask_.resize(spec.layers.size());
  u_.resize(spec.layers.size());
}

template <typename T>
void LoraAdapter<T>::zero_grad() {
  for (auto& g : grads_) {
    for (auto& v : g.a.flat()) v = T(0);
    for (auto& v : g.b.flat()) v = T(0);
  }
}

template <typename T>
uint64_t LoraAdapter<T>::parameter_count() const {
  uint64_t n = 0;
  for (const auto& f : factors_) n += f.a.size() + f.b.size();
  return n;
}

template <typename T>
void LoraAdapter<T>::forward(std::size_t layer, const Matrix<T>& x, Matrix<T>& z) {
  const auto& f = factors_.at(layer);
  Matrix<T> xin = x;
  if (training_ && dropout_ > 0.0) {
    std::bernoulli_distribution keep(1.0 - dropout_);
    const T inv_keep = static_cast<T>(1.0 / (1.0 - dropout_));
    mask_[layer] = Matrix<T>(x.rows(), x.cols());
    for (std::size_t i = 0; i < xin.size(); ++i) {
      const T m = keep(rng_) ? inv_keep : T(0);
      mask_[layer].flat()[i] = m;
      xin.flat()[i] *= m;
    }
  } else {
    mask_[layer] = Matrix<T>();
  }
  u_[layer] = project(xin, f.a);
  add_low_rank(u_[layer], f.b, scaling_, z);
}

template <typename T>
void LoraAdapter<T>::backward(std::size_t layer, const Matrix<T>& x, const Matrix<T>& dz,
                              Matrix<T>* dx) {
  const auto& f = factors_.at(layer);
  auto& g = grads_.at(layer);
  const Matrix<T>& u = u_[layer];
  const Matrix<T>& mask = mask_[layer];
  const std::size_t b = x.rows();
  const std::size_t r = rank_;
  // dB[o,k] = s * sum_i dz[i,o] u[i,k]
  for (std::size_t o = 0; o < f.b.rows(); ++o) {
    for (std::size_t k = 0; k < r; ++k) {
      T acc = T(0);
      for (std::size_t i = 0; i < b; ++i) acc += dz(i, o) * u(i, k);
      g.b(o, k) += scaling_ * acc;
    }
  }
  // du[i,k] = s * sum_o dz[i,o] B[o,k]
  Matrix<T> du(b, r);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < r; ++k) {
      T acc = T(0);
      for (std::size_t o = 0; o < f.b.rows(); ++o) acc += dz(i, o) * f.b(o, k);
      du(i, k) = scaling_ * acc;
    }
  }
  // dA[k,j] = sum_i du[i,k] xin[i,j]
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      T acc = T(0);
      for (std::size_t i = 0; i < b; ++i) {
        const T xin = mask.empty() ? x(i, j) : x(i, j) * mask(i, j);
        acc += du(i, k) * xin;
      }
      g.a(k, j) += acc;
    }
  }
  if (dx != nullptr) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) {
        T acc = T(0);
        for (std::size_t k = 0; k < r; ++k) acc += du(i, k) * f.a(k, j);
        (*dx)(i, j) += mask.empty() ? acc : acc * mask(i, j);
      }
    }
  }
}

#define SPIEL_INSTANTIATE(T)                                                                  \
  template std::vector<T> lora_merge<T>(const LoraFactors<T>&, T, std::span<const T>);        \
  template Matrix<T> lora_forward<T>(const LoraFactors<T>&, T, std::span<const T>,            \
                                     const Matrix<T>&);                                       \
  template class LoraAdapter<T>;

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel
