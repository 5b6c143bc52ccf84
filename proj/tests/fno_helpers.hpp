#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sok/fno.hpp"

namespace testing_helpers {

// Loss used for gradient checks: mean squared mismatch against a fixed target.
inline sok::ad::Var mse_against(sok::ad::Var y, const sok::RealTensor& target) {
  auto& t = *y.tape;
  return sok::ad::mean(sok::ad::square(sok::ad::sub(y, t.constant(target))));
}

struct GradCheck {
  double worst = 0.0;       // largest per-tensor normwise relative error
  std::string worst_name;
  std::size_t checked = 0;  // scalars compared
  // tensors whose finite-difference gradient is at round-off level; for these
  // the tape gradient must be at that level too
  std::vector<std::string> vanishing;
  bool vanishing_ok = true;
};

// Central differences (step h) over every stored scalar of the model, compared
// per parameter tensor against the tape gradient.
inline GradCheck check_model_gradients(sok::FnoModel& model, const sok::RealTensor& x, const sok::RealTensor& target,
                                       double h = 1e-5) {
  using namespace sok;
  auto loss_of = [&](const FnoModel& m) {
    ad::Tape t;
    auto b = m.params().bind(t, false);
    return mse_against(m.forward(t, b, t.constant(x)), target).value()[0];
  };
  ad::Tape tape;
  auto bound = model.params().bind(tape, true);
  tape.backward(mse_against(model.forward(tape, bound, tape.constant(x)), target));
  const auto g = model.params().gather_grads(tape, bound);
  auto flat = model.params().flatten();
  std::vector<double> fd(g.size());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double keep = flat[k];
    flat[k] = keep + h;
    model.params().unflatten(flat);
    const double up = loss_of(model);
    flat[k] = keep - h;
    model.params().unflatten(flat);
    const double dn = loss_of(model);
    flat[k] = keep;
    fd[k] = (up - dn) / (2.0 * h);
  }
  model.params().unflatten(flat);
  const double base = std::abs(loss_of(model));
  GradCheck out;
  std::size_t offset = 0;
  for (const auto& p : model.params()) {
    double num = 0.0, den = 0.0, gg = 0.0;
    for (std::size_t i = 0; i < p.scalars(); ++i) {
      const std::size_t k = offset + i;
      num += (g[k] - fd[k]) * (g[k] - fd[k]);
      den += fd[k] * fd[k];
      gg += g[k] * g[k];
      ++out.checked;
    }
    offset += p.scalars();
    // round-off of a central difference: about eps |L| / h per entry
    const double noise = 1e3 * 2.2e-16 * std::max(base, 1e-300) / h * std::sqrt(double(p.scalars()));
    if (std::sqrt(den) <= noise) {
      out.vanishing.push_back(p.name);
      if (std::sqrt(gg) > noise) out.vanishing_ok = false;
      continue;
    }
    const double rel = std::sqrt(num / den);
    if (rel > out.worst) {
      out.worst = rel;
      out.worst_name = p.name;
    }
  }
  return out;
}

}  // namespace testing_helpers
