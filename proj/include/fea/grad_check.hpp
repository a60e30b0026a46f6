#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fea/autograd.hpp"

namespace fea::nn {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  size_t checked = 0;  // number of input elements probed
  bool passed = false;
};

template <class T>
using GraphBuilder = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

template <class T>
struct GradCheckDefaults;
template <>
struct GradCheckDefaults<float> {
  static constexpr float step = 1e-3f;
  static constexpr double tol = 1e-3;
};
template <>
struct GradCheckDefaults<double> {
  static constexpr double step = 1e-6;
  static constexpr double tol = 1e-5;
};

// Compares reverse-mode gradients of sum(f(inputs)) against central
// differences, element by element over every input. The reported error is
// max |g_a - g_n| / max(|g_a|, |g_n|, s) where s is the largest analytic
// entry over all inputs. Entries far below that scale are measured against
// it, since round-off in the difference quotient is set by the output
// magnitude and would otherwise swamp structurally zero entries (the input
// gradient of a two-wide layer norm, for one).
template <class T>
GradCheckReport grad_check(const std::string& name, const GraphBuilder<T>& f, std::vector<Tensor<T>> inputs,
                           T h = GradCheckDefaults<T>::step, double tol = GradCheckDefaults<T>::tol) {
  auto evaluate = [&](const std::vector<Tensor<T>>& xs) {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    Var<T> out = f(tape, vars);
    double acc = 0.0;
    for (T v : out.value().values()) acc += static_cast<double>(v);
    return acc;
  };

  Tape<T> tape;
  std::vector<Var<T>> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  Var<T> out = f(tape, vars);
  Var<T> root = out.value().size() == 1 ? out : sum(out);
  tape.backward(root);

  std::vector<Tensor<T>> grads;
  double scale = 1e-12;
  for (size_t i = 0; i < inputs.size(); ++i) {
    grads.push_back(tape.has_grad(vars[i].id()) ? tape.grad(vars[i].id()) : Tensor<T>(inputs[i].shape()));
    for (T g : grads.back().values()) scale = std::max(scale, std::abs(static_cast<double>(g)));
  }

  GradCheckReport report;
  report.name = name;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<T>& analytic = grads[i];
    for (size_t j = 0; j < inputs[i].size(); ++j) {
      const T saved = inputs[i][j];
      // Divide by the representable step actually taken, not 2h.
      inputs[i][j] = saved + h;
      const double x_up = static_cast<double>(inputs[i][j]);
      const double up = evaluate(inputs);
      inputs[i][j] = saved - h;
      const double x_down = static_cast<double>(inputs[i][j]);
      const double down = evaluate(inputs);
      inputs[i][j] = saved;
      const double numeric = (up - down) / (x_up - x_down);
      const double a = static_cast<double>(analytic[j]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), scale});
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace fea::nn
