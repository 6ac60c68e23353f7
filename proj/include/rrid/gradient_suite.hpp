#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrid/gradcheck.hpp"
#include "rrid/head.hpp"

namespace rrid {

struct HeadCheckCase {
  std::string name;
  HeadConfig head;
  std::size_t batch = 8;  // labels 0,0,1,1,...; batch must be even
  std::size_t height = 12;
  std::size_t width = 4;
  Mode mode = Mode::training;
  double alpha = 0.3;
  double lambda = 2.0;
  std::uint64_t seed = 1;
};

// Random feature maps and freshly initialised head + classifier bank; checks
// d(combined loss)/d(every trainable parameter).
GradCheckReport check_head_gradients(const HeadCheckCase& c, const GradCheckOptions& options = {});

// The full head at P=6, C=64, c=32, batch 8 with GCP and the relation module.
HeadCheckCase full_head_case(std::uint64_t seed = 1);

// full_head_case plus smaller cases covering the other pooling variants,
// multi-scale heads and inference-mode batchnorm.
std::vector<HeadCheckCase> gradient_suite_cases(std::uint64_t seed = 1);

}  // namespace rrid
