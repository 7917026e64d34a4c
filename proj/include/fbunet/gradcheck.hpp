// Copyright 2026 The fbunet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FBUNET_GRADCHECK_HPP_
#define FBUNET_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fbunet/tensor.hpp"

namespace fbunet
{

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStep = 1e-6;
/// Denominator floor of the relative error, so near-zero gradients compare absolutely.
inline constexpr double kGradcheckFloor = 1e-4;

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = kGradcheckFloor);

using LossFn = std::function<Tensor<double>()>;

/// Compares reverse-mode gradients of `loss` with finite differences over
/// every element of every leaf. `loss` must rebuild its graph on each call.
/// Each element is scored against the central difference and both one-sided
/// differences and keeps the best match, so a ReLU or max-pool kink lying
/// inside the step on one side does not register as an error.
double max_relative_error(
  const LossFn & loss, const std::vector<Tensor<double>> & leaves, double step = kGradcheckStep);

struct GradcheckCase
{
  std::string name;
  /// Returns the maximum relative error for the given seed.
  std::function<double(std::uint64_t)> run;
};

/// Every differentiable op and layer, plus tiny two-round models
/// (C = 3, 16x16 input, filters 2,3,4,5,6).
std::vector<GradcheckCase> gradcheck_registry();

struct GradcheckResult
{
  std::string name;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport
{
  double tolerance = kGradcheckTolerance;
  std::vector<GradcheckResult> results;

  bool passed() const;
  /// `name<TAB>max_rel_error<TAB>PASS|FAIL` per case.
  std::string format() const;
};

GradcheckReport run_gradcheck(
  const std::vector<GradcheckCase> & cases, std::uint64_t seed = 1,
  double tolerance = kGradcheckTolerance);

}  // namespace fbunet

#endif  // FBUNET_GRADCHECK_HPP_
