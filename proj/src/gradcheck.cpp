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

#include "fbunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fbunet/layers.hpp"
#include "fbunet/loss.hpp"
#include "fbunet/model.hpp"
#include "fbunet/ops.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{

double relative_error(double analytic, double numeric, double floor)
{
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(const LossFn & loss, const std::vector<Tensor<double>> & leaves, double step)
{
  for (auto leaf : leaves) leaf.zero_grad();
  backward(loss());
  std::vector<Vec<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto leaf : leaves) analytic.push_back(leaf.grad());

  NoGradGuard no_grad;
  const double centre = loss().values()[0];
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor<double> leaf = leaves[l];
    Vec<double> & values = leaf.values();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = loss().values()[0];
      values[i] = saved - step;
      const double minus = loss().values()[0];
      values[i] = saved;
      const double a = analytic[l][i];
      const double err = std::min(
        {relative_error(a, (plus - minus) / (2.0 * step)), relative_error(a, (plus - centre) / step),
         relative_error(a, (centre - minus) / step)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

namespace
{

using D = double;

Tensor<D> random_tensor(const Shape & shape, Rng & rng, double scale = 1.0)
{
  Vec<D> v(shape.numel());
  for (auto & x : v) x = scale * normal(rng);
  Tensor<D> t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

/// Values bounded away from zero so ReLU kinks are never crossed.
Tensor<D> kink_free_tensor(const Shape & shape, Rng & rng)
{
  Vec<D> v(shape.numel());
  for (auto & x : v) {
    const double n = normal(rng);
    x = (n < 0 ? -1.0 : 1.0) * (0.1 + std::abs(n));
  }
  Tensor<D> t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

/// Distinct values with gaps far above the finite-difference step.
Tensor<D> distinct_tensor(const Shape & shape, Rng & rng)
{
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i);
  shuffle(v, rng);
  Tensor<D> t(shape, Eigen::Map<Vec<D>>(v.data(), static_cast<Eigen::Index>(v.size())));
  t.set_requires_grad(true);
  return t;
}

/// sum(y * R) for a fixed random R, so every output element gets a distinct weight.
Tensor<D> project(const Tensor<D> & y, std::uint64_t seed)
{
  Rng rng = derive_rng(seed, 0xBEEF);
  Vec<D> r(y.numel());
  for (auto & x : r) x = uniform(rng, -1.0, 1.0);
  return sum(hadamard(y, Tensor<D>(y.shape(), std::move(r))));
}

LabelMap random_labels(int n, int h, int w, int classes, Rng & rng)
{
  LabelMap labels(n, h, w);
  for (auto & v : labels.values) v = static_cast<std::int32_t>(uniform_index(rng, classes));
  return labels;
}

std::vector<Tensor<D>> tensors_of(const std::vector<Parameter<D> *> & params)
{
  std::vector<Tensor<D>> out;
  for (auto * p : params) out.push_back(p->tensor);
  return out;
}

GradcheckCase unary_case(std::string name, Tensor<D> (*op)(const Tensor<D> &), bool kinked)
{
  return {name, [op, kinked](std::uint64_t seed) {
            Rng rng = derive_rng(seed, 1);
            const Shape s{2, 3, 4, 4};
            Tensor<D> x = kinked ? kink_free_tensor(s, rng) : random_tensor(s, rng);
            return max_relative_error([&] { return project(op(x), seed); }, {x});
          }};
}

double model_case(Variant variant, std::uint64_t seed)
{
  ModelConfig config = ModelConfig::for_variant(variant);
  config.num_classes = 3;
  config.filters = {2, 3, 4, 5, 6};
  Model<D> model(config, seed);
  Rng rng = derive_rng(seed, 2);
  Vec<D> pixels(2 * 16 * 16);
  for (auto & p : pixels) p = uniform01(rng);
  const Tensor<D> image(Shape{2, 1, 16, 16}, std::move(pixels));
  const LabelMap labels = random_labels(2, 16, 16, 3, rng);
  const ClassWeights weights({0.5, 1.0, 2.0});
  for (auto & np : model.named_parameters()) {
    if (np.name.ends_with(".gamma")) {
      for (auto & g : np.param->values()) g = uniform(rng, 0.5, 1.5);
    } else if (np.name.ends_with(".beta")) {
      for (auto & b : np.param->values()) b = 0.3 * normal(rng);
    } else if (np.name.ends_with(".bias")) {
      for (auto & b : np.param->values()) b = 0.1 * normal(rng);
    }
  }
  for (auto & ns : model.named_running_stats()) {
    const bool is_var = ns.name.ends_with("running_var");
    for (auto & v : *ns.values) v = is_var ? uniform(rng, 0.5, 2.0) : 0.3 * normal(rng);
  }
  auto loss = [&] {
    model.reset_state();
    const ForwardOutput<D> out = model.forward(image, false);
    Tensor<D> first = weighted_cross_entropy(out.probs_round1, labels, weights);
    if (!out.probs_round2) return first;
    return feedback_loss(first, weighted_cross_entropy(*out.probs_round2, labels, weights), config.lambda);
  };
  return max_relative_error(loss, tensors_of(model.parameters()));
}

}  // namespace

std::vector<GradcheckCase> gradcheck_registry()
{
  std::vector<GradcheckCase> cases;
  cases.push_back({"conv2d", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> x = random_tensor({2, 3, 5, 4}, rng);
                     Tensor<D> w = random_tensor({4, 3, 3, 3}, rng, 0.3);
                     Tensor<D> b = random_tensor({4, 1, 1, 1}, rng);
                     return max_relative_error([&] { return project(conv2d(x, w, b), seed); }, {x, w, b});
                   }});
  cases.push_back({"transposed_conv2d", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> x = random_tensor({2, 3, 3, 2}, rng);
                     Tensor<D> w = random_tensor({3, 2, 2, 2}, rng, 0.5);
                     Tensor<D> b = random_tensor({2, 1, 1, 1}, rng);
                     return max_relative_error(
                       [&] { return project(transposed_conv2d(x, w, b), seed); }, {x, w, b});
                   }});
  cases.push_back({"maxpool2d", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> x = distinct_tensor({2, 2, 4, 6}, rng);
                     return max_relative_error([&] { return project(maxpool2d(x), seed); }, {x});
                   }});
  cases.push_back(unary_case("relu", [](const Tensor<D> & x) { return relu(x); }, true));
  cases.push_back(unary_case("sigmoid", [](const Tensor<D> & x) { return sigmoid(x); }, false));
  cases.push_back(unary_case("tanh", [](const Tensor<D> & x) { return fbunet::tanh(x); }, false));
  cases.push_back(unary_case("channel_softmax", [](const Tensor<D> & x) { return channel_softmax(x); }, false));
  cases.push_back({"channel_concat", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> a = random_tensor({2, 2, 3, 3}, rng);
                     Tensor<D> b = random_tensor({2, 3, 3, 3}, rng);
                     return max_relative_error([&] { return project(channel_concat(a, b), seed); }, {a, b});
                   }});
  cases.push_back({"channel_slice", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> x = random_tensor({2, 5, 3, 3}, rng);
                     return max_relative_error([&] { return project(channel_slice(x, 1, 3), seed); }, {x});
                   }});
  cases.push_back({"add", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> a = random_tensor({2, 3, 3, 3}, rng);
                     Tensor<D> b = random_tensor({2, 3, 3, 3}, rng);
                     return max_relative_error([&] { return project(add(a, b), seed); }, {a, b});
                   }});
  cases.push_back({"hadamard", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> a = random_tensor({2, 3, 3, 3}, rng);
                     Tensor<D> b = random_tensor({2, 3, 3, 3}, rng);
                     return max_relative_error([&] { return project(hadamard(a, b), seed); }, {a, b});
                   }});
  cases.push_back({"scale", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> x = random_tensor({2, 3, 3, 3}, rng);
                     return max_relative_error([&] { return project(scale(x, -1.7), seed); }, {x});
                   }});
  cases.push_back({"sum", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> x = random_tensor({2, 3, 3, 3}, rng);
                     return max_relative_error([&] { return scale(sum(x), 0.3); }, {x});
                   }});
  for (bool training : {true, false}) {
    cases.push_back({training ? "batchnorm_train" : "batchnorm_eval", [training](std::uint64_t seed) {
                       Rng rng = derive_rng(seed, 1);
                       Tensor<D> x = random_tensor({3, 2, 3, 3}, rng);
                       Tensor<D> gamma = random_tensor({2, 1, 1, 1}, rng);
                       Tensor<D> beta = random_tensor({2, 1, 1, 1}, rng);
                       RunningStats<D> stats(2);
                       stats.mean << 0.2, -0.1;
                       stats.var << 1.5, 0.7;
                       return max_relative_error(
                         [&] {
                           RunningStats<D> scratch = stats;
                           return project(batchnorm(x, gamma, beta, scratch, training), seed);
                         },
                         {x, gamma, beta});
                     }});
  }
  cases.push_back({"weighted_cross_entropy", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> logits = random_tensor({2, 4, 3, 3}, rng);
                     const LabelMap labels = random_labels(2, 3, 3, 4, rng);
                     const ClassWeights weights({0.5, 1.0, 1.5, 4.0});
                     return max_relative_error(
                       [&] { return weighted_cross_entropy(channel_softmax(logits), labels, weights); },
                       {logits});
                   }});
  cases.push_back({"feedback_loss", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     Tensor<D> a = random_tensor({1, 1, 1, 1}, rng);
                     Tensor<D> b = random_tensor({1, 1, 1, 1}, rng);
                     return max_relative_error([&] { return feedback_loss(a, b, 0.5); }, {a, b});
                   }});
  cases.push_back({"conv_bn_block", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     auto block = make_conv_bn_block<D>(2, 3, 2, rng);
                     Tensor<D> x = random_tensor({2, 2, 4, 4}, rng);
                     std::vector<Tensor<D>> leaves{x, block.conv.weight.tensor, block.conv.bias.tensor};
                     for (auto & bn : block.bn) {
                       leaves.push_back(bn.gamma.tensor);
                       leaves.push_back(bn.beta.tensor);
                     }
                     return max_relative_error(
                       [&] {
                         return add(
                           project(convbn_apply(block, x, Round::first, true), seed),
                           project(convbn_apply(block, x, Round::second, true), seed + 1));
                       },
                       leaves);
                   }});
  cases.push_back({"convlstm_two_rounds", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     auto cell = make_convlstm_cell<D>(2, 3, 2, rng);
                     Tensor<D> x1 = random_tensor({2, 2, 4, 4}, rng);
                     Tensor<D> x2 = random_tensor({2, 2, 4, 4}, rng);
                     std::vector<Tensor<D>> leaves{x1, x2, cell.gates.weight.tensor, cell.gates.bias.tensor};
                     for (auto & bn : cell.bn) {
                       leaves.push_back(bn.gamma.tensor);
                       leaves.push_back(bn.beta.tensor);
                     }
                     return max_relative_error(
                       [&] {
                         reset_state(cell);
                         Tensor<D> h1 = convlstm_step(cell, x1, Round::first, true);
                         Tensor<D> h2 = convlstm_step(cell, x2, Round::second, true);
                         return add(project(h1, seed), project(h2, seed + 1));
                       },
                       leaves);
                   }});
  cases.push_back({"recurrent_conv_layer", [](std::uint64_t seed) {
                     Rng rng = derive_rng(seed, 1);
                     auto layer = make_recurrent_conv_layer<D>(2, 3, 1, 3, rng);
                     Tensor<D> x = random_tensor({2, 2, 4, 4}, rng);
                     return max_relative_error(
                       [&] { return project(rcl_apply(layer, x, true), seed); },
                       {x, layer.feedforward.weight.tensor, layer.feedforward.bias.tensor,
                        layer.recurrent.weight.tensor, layer.recurrent.bias.tensor,
                        layer.bn[0].gamma.tensor, layer.bn[0].beta.tensor});
                   }});
  for (Variant v : {Variant::unet, Variant::runet, Variant::feedback_plain, Variant::feedback_rcl,
                    Variant::feedback_convlstm}) {
    cases.push_back({"model_" + to_string(v), [v](std::uint64_t seed) { return model_case(v, seed); }});
  }
  return cases;
}

bool GradcheckReport::passed() const
{
  return std::all_of(results.begin(), results.end(), [](const auto & r) { return r.passed; });
}

std::string GradcheckReport::format() const
{
  std::string out;
  for (const auto & r : results) {
    char buf[256];
    std::snprintf(
      buf, sizeof(buf), "%s\t%.3e\t%s\n", r.name.c_str(), r.max_relative_error, r.passed ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

GradcheckReport run_gradcheck(const std::vector<GradcheckCase> & cases, std::uint64_t seed, double tolerance)
{
  GradcheckReport report;
  report.tolerance = tolerance;
  for (const auto & c : cases) {
    const double err = c.run(seed);
    report.results.push_back({c.name, err, std::isfinite(err) && err < tolerance});
  }
  return report;
}

}  // namespace fbunet
