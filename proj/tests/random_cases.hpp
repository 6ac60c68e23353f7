#pragma once

// Random inputs shared by the unit and acceptance tests.

#include <vector>

#include "rrid/rng.hpp"

namespace cases {

struct Gallery {
  std::vector<std::vector<double>> d;  // [nq][ng]
  std::vector<int> qp, qc, gp, gc;
};

// Up to 32 gallery images, a handful of queries, coarse distances so ties
// happen, some junk (-1) rows and same-camera matches.
inline Gallery random_gallery(rrid::Rng& rng) {
  Gallery c;
  const auto ng = static_cast<std::size_t>(1 + rng.below(32));
  const auto nq = static_cast<std::size_t>(1 + rng.below(6));
  const auto ids = static_cast<int>(1 + rng.below(5));
  for (std::size_t g = 0; g < ng; ++g) {
    c.gp.push_back(rng.bernoulli(0.1) ? -1 : static_cast<int>(rng.below(ids)));
    c.gc.push_back(static_cast<int>(rng.below(3)));
  }
  for (std::size_t q = 0; q < nq; ++q) {
    c.qp.push_back(static_cast<int>(rng.below(ids)));
    c.qc.push_back(static_cast<int>(rng.below(3)));
    std::vector<double> row;
    for (std::size_t g = 0; g < ng; ++g) row.push_back(static_cast<double>(rng.below(12)) * 0.25);
    c.d.push_back(std::move(row));
  }
  return c;
}

}  // namespace cases
