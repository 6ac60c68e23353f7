#pragma once

// Data-parallel inner loops used by the graph ops and the retrieval code.
//
// Each kernel exists twice: `serial::` is the plain reference kept for tests
// and benchmarks, `omp::` splits the outermost loop across OpenMP threads.
// Every output element is produced by exactly one thread using the same
// accumulation order as the serial loop, so both variants agree bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

namespace rrid::kernels {

// Effective worker count. RRID_THREADS caps it; 0 or unset means the
// OpenMP default.
int thread_count();

// Reads RRID_THREADS once and applies it to the OpenMP runtime.
void configure_threads_from_env();

namespace detail {

inline constexpr std::size_t kBlock = 256;

// Channels [b0, b1) of one [len x inner] slab, streamed row by row. argmax
// keeps the lowest r on ties.
template <typename T>
void max_rows(const T* x, T* out, std::uint32_t* argmax, std::size_t len, std::size_t inner,
              std::size_t b0, std::size_t b1) {
  for (std::size_t b = b0; b < b1; ++b) {
    out[b] = x[b];
    argmax[b] = 0;
  }
  for (std::size_t r = 1; r < len; ++r) {
    const T* row = x + r * inner;
    for (std::size_t b = b0; b < b1; ++b) {
      if (row[b] > out[b]) {
        out[b] = row[b];
        argmax[b] = static_cast<std::uint32_t>(r);
      }
    }
  }
}

// Accumulates offsets from row 0 so a constant slab returns its value exactly.
template <typename T>
void mean_rows(const T* x, T* out, std::size_t len, std::size_t inner, std::size_t b0,
               std::size_t b1) {
  const T scale = T(1) / static_cast<T>(len);
  for (std::size_t b = b0; b < b1; ++b) out[b] = 0;
  for (std::size_t r = 1; r < len; ++r) {
    const T* row = x + r * inner;
    for (std::size_t b = b0; b < b1; ++b) out[b] += row[b] - x[b];
  }
  for (std::size_t b = b0; b < b1; ++b) out[b] = x[b] + out[b] * scale;
}

}  // namespace detail

namespace serial {

// out[n,o] = b[o] + sum_i x[n,i] * w[i,o]
template <typename T>
void affine(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> out,
            std::size_t rows, std::size_t in, std::size_t outdim) {
  for (std::size_t n = 0; n < rows; ++n) {
    T* o = out.data() + n * outdim;
    for (std::size_t j = 0; j < outdim; ++j) o[j] = b[j];
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = x[n * in + i];
      const T* wr = w.data() + i * outdim;
      for (std::size_t j = 0; j < outdim; ++j) o[j] += xv * wr[j];
    }
  }
}

// gx[n,i] += sum_o g[n,o] * w[i,o]
template <typename T>
void affine_grad_input(std::span<const T> g, std::span<const T> w, std::span<T> gx,
                       std::size_t rows, std::size_t in, std::size_t outdim) {
  for (std::size_t n = 0; n < rows; ++n) {
    const T* gr = g.data() + n * outdim;
    for (std::size_t i = 0; i < in; ++i) {
      const T* wr = w.data() + i * outdim;
      T acc = 0;
      for (std::size_t j = 0; j < outdim; ++j) acc += gr[j] * wr[j];
      gx[n * in + i] += acc;
    }
  }
}

// gw[i,o] += sum_n x[n,i] * g[n,o]
template <typename T>
void affine_grad_weight(std::span<const T> x, std::span<const T> g, std::span<T> gw,
                        std::size_t rows, std::size_t in, std::size_t outdim) {
  for (std::size_t i = 0; i < in; ++i) {
    T* gwr = gw.data() + i * outdim;
    for (std::size_t n = 0; n < rows; ++n) {
      const T xv = x[n * in + i];
      const T* gr = g.data() + n * outdim;
      for (std::size_t j = 0; j < outdim; ++j) gwr[j] += xv * gr[j];
    }
  }
}

// View x as [outer x len x inner]; out[a,b] = max_r x[a,r,b]. argmax holds
// the winning r, lowest r on ties.
template <typename T>
void reduce_max(std::span<const T> x, std::span<T> out, std::span<std::uint32_t> argmax,
                std::size_t outer, std::size_t len, std::size_t inner) {
  for (std::size_t a = 0; a < outer; ++a) {
    detail::max_rows(x.data() + a * len * inner, out.data() + a * inner,
                     argmax.data() + a * inner, len, inner, 0, inner);
  }
}

// View x as [outer x len x inner]; out[a,b] = mean_r x[a,r,b]. Accumulates
// offsets from the first element so a constant slice returns its value
// exactly.
template <typename T>
void reduce_mean(std::span<const T> x, std::span<T> out, std::size_t outer, std::size_t len,
                 std::size_t inner) {
  for (std::size_t a = 0; a < outer; ++a) {
    detail::mean_rows(x.data() + a * len * inner, out.data() + a * inner, len, inner, 0, inner);
  }
}

// d[q,g] = ||queries[q] - gallery[g]||_2, accumulated in double.
template <typename T>
void euclidean_distances(std::span<const T> queries, std::span<const T> gallery,
                         std::span<double> d, std::size_t nq, std::size_t ng, std::size_t dim) {
  for (std::size_t q = 0; q < nq; ++q) {
    const T* qr = queries.data() + q * dim;
    for (std::size_t g = 0; g < ng; ++g) {
      const T* gr = gallery.data() + g * dim;
      double acc = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = static_cast<double>(qr[k]) - static_cast<double>(gr[k]);
        acc += diff * diff;
      }
      d[q * ng + g] = std::sqrt(acc);
    }
  }
}

}  // namespace serial

namespace omp {

template <typename T>
void affine(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> out,
            std::size_t rows, std::size_t in, std::size_t outdim) {
  const auto nrows = static_cast<long long>(rows);
#pragma omp parallel for schedule(static)
  for (long long nn = 0; nn < nrows; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    T* o = out.data() + n * outdim;
    for (std::size_t j = 0; j < outdim; ++j) o[j] = b[j];
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = x[n * in + i];
      const T* wr = w.data() + i * outdim;
      for (std::size_t j = 0; j < outdim; ++j) o[j] += xv * wr[j];
    }
  }
}

template <typename T>
void affine_grad_input(std::span<const T> g, std::span<const T> w, std::span<T> gx,
                       std::size_t rows, std::size_t in, std::size_t outdim) {
  const auto nrows = static_cast<long long>(rows);
#pragma omp parallel for schedule(static)
  for (long long nn = 0; nn < nrows; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    const T* gr = g.data() + n * outdim;
    for (std::size_t i = 0; i < in; ++i) {
      const T* wr = w.data() + i * outdim;
      T acc = 0;
      for (std::size_t j = 0; j < outdim; ++j) acc += gr[j] * wr[j];
      gx[n * in + i] += acc;
    }
  }
}

template <typename T>
void affine_grad_weight(std::span<const T> x, std::span<const T> g, std::span<T> gw,
                        std::size_t rows, std::size_t in, std::size_t outdim) {
  const auto nin = static_cast<long long>(in);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < nin; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* gwr = gw.data() + i * outdim;
    for (std::size_t n = 0; n < rows; ++n) {
      const T xv = x[n * in + i];
      const T* gr = g.data() + n * outdim;
      for (std::size_t j = 0; j < outdim; ++j) gwr[j] += xv * gr[j];
    }
  }
}

// Work items are (a, block of kBlock channels); each output sees the same
// operation sequence as the serial kernel.
template <typename T>
void reduce_max(std::span<const T> x, std::span<T> out, std::span<std::uint32_t> argmax,
                std::size_t outer, std::size_t len, std::size_t inner) {
  const std::size_t blocks = (inner + detail::kBlock - 1) / detail::kBlock;
  const auto total = static_cast<long long>(outer * blocks);
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < total; ++k) {
    const auto a = static_cast<std::size_t>(k) / blocks;
    const auto b0 = static_cast<std::size_t>(k) % blocks * detail::kBlock;
    detail::max_rows(x.data() + a * len * inner, out.data() + a * inner,
                     argmax.data() + a * inner, len, inner, b0,
                     std::min(inner, b0 + detail::kBlock));
  }
}

template <typename T>
void reduce_mean(std::span<const T> x, std::span<T> out, std::size_t outer, std::size_t len,
                 std::size_t inner) {
  const std::size_t blocks = (inner + detail::kBlock - 1) / detail::kBlock;
  const auto total = static_cast<long long>(outer * blocks);
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < total; ++k) {
    const auto a = static_cast<std::size_t>(k) / blocks;
    const auto b0 = static_cast<std::size_t>(k) % blocks * detail::kBlock;
    detail::mean_rows(x.data() + a * len * inner, out.data() + a * inner, len, inner, b0,
                      std::min(inner, b0 + detail::kBlock));
  }
}

template <typename T>
void euclidean_distances(std::span<const T> queries, std::span<const T> gallery,
                         std::span<double> d, std::size_t nq, std::size_t ng, std::size_t dim) {
  const auto nqueries = static_cast<long long>(nq);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long qq = 0; qq < nqueries; ++qq) {
    const auto q = static_cast<std::size_t>(qq);
    const T* qr = queries.data() + q * dim;
    for (std::size_t g = 0; g < ng; ++g) {
      const T* gr = gallery.data() + g * dim;
      double acc = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = static_cast<double>(qr[k]) - static_cast<double>(gr[k]);
        acc += diff * diff;
      }
      d[q * ng + g] = std::sqrt(acc);
    }
  }
}

}  // namespace omp

// Small problems stay serial; thread start-up dominates below this many
// multiply-adds.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

template <typename T>
void affine(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> out,
            std::size_t rows, std::size_t in, std::size_t outdim) {
  if (rows * in * outdim < kParallelThreshold) {
    serial::affine(x, w, b, out, rows, in, outdim);
  } else {
    omp::affine(x, w, b, out, rows, in, outdim);
  }
}

template <typename T>
void affine_grad_input(std::span<const T> g, std::span<const T> w, std::span<T> gx,
                       std::size_t rows, std::size_t in, std::size_t outdim) {
  if (rows * in * outdim < kParallelThreshold) {
    serial::affine_grad_input(g, w, gx, rows, in, outdim);
  } else {
    omp::affine_grad_input(g, w, gx, rows, in, outdim);
  }
}

template <typename T>
void affine_grad_weight(std::span<const T> x, std::span<const T> g, std::span<T> gw,
                        std::size_t rows, std::size_t in, std::size_t outdim) {
  if (rows * in * outdim < kParallelThreshold) {
    serial::affine_grad_weight(x, g, gw, rows, in, outdim);
  } else {
    omp::affine_grad_weight(x, g, gw, rows, in, outdim);
  }
}

template <typename T>
void reduce_max(std::span<const T> x, std::span<T> out, std::span<std::uint32_t> argmax,
                std::size_t outer, std::size_t len, std::size_t inner) {
  if (x.size() < kParallelThreshold) {
    serial::reduce_max(x, out, argmax, outer, len, inner);
  } else {
    omp::reduce_max(x, out, argmax, outer, len, inner);
  }
}

template <typename T>
void reduce_mean(std::span<const T> x, std::span<T> out, std::size_t outer, std::size_t len,
                 std::size_t inner) {
  if (x.size() < kParallelThreshold) {
    serial::reduce_mean(x, out, outer, len, inner);
  } else {
    omp::reduce_mean(x, out, outer, len, inner);
  }
}

template <typename T>
void euclidean_distances(std::span<const T> queries, std::span<const T> gallery,
                         std::span<double> d, std::size_t nq, std::size_t ng, std::size_t dim) {
  if (nq * ng * dim < kParallelThreshold) {
    serial::euclidean_distances(queries, gallery, d, nq, ng, dim);
  } else {
    omp::euclidean_distances(queries, gallery, d, nq, ng, dim);
  }
}

}  // namespace rrid::kernels
