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

#include "fbunet/optim.hpp"

#include <cmath>

namespace fbunet
{

template <typename T>
void adam_step(std::span<Parameter<T> * const> params, const AdamOptions & options)
{
  const T b1 = static_cast<T>(options.beta1);
  const T b2 = static_cast<T>(options.beta2);
  for (Parameter<T> * p : params) {
    const Vec<T> & g = p->tensor.grad();
    p->step += 1;
    p->m = b1 * p->m + (T(1) - b1) * g;
    p->v = b2 * p->v + (T(1) - b2) * g.square();
    const double t = static_cast<double>(p->step);
    const T c1 = static_cast<T>(1.0 - std::pow(options.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(options.beta2, t));
    const T lr = static_cast<T>(options.lr);
    const T eps = static_cast<T>(options.eps);
    p->tensor.values() -= lr * (p->m / c1) / ((p->v / c2).sqrt() + eps);
  }
}

template void adam_step(std::span<Parameter<float> * const>, const AdamOptions &);
template void adam_step(std::span<Parameter<double> * const>, const AdamOptions &);

}  // namespace fbunet
