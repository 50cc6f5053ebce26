// Copyright 2026 The modbridge authors
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

#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "mb/ops.hpp"
#include "mb/rng.hpp"
#include "mb/tape.hpp"

namespace mb {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
};

// Compares reverse-mode gradients against central finite differences on a
// seeded subset of elements (at least 32 per tensor, or all of a smaller
// tensor).
//
// build must replay the identical computation each call: it receives an
// empty tape, registers parameters via tape.trainable(), and returns the
// rank-0 loss node. Any stochastic inputs must be sampled once by the
// caller and captured, never drawn inside build.
//
// The analytic side runs on the float tape (the values training actually
// uses). The difference quotients run the same graph on the double tape:
// a float forward perturbed by 1e-3 loses the difference signal to
// rounding, and a float analytic side checked against itself would prove
// nothing.
template <class BuildFn>
GradCheckReport gradient_check(BuildFn&& build, const ParamRefs& params,
                               double epsilon, uint64_t sample_seed = 1234) {
  GradCheckReport report;

  zero_grad(params);
  {
    Tape<float> tape;
    const int loss = build(tape);
    tape.backward(loss);
    tape.apply_param_grads();
  }

  const double floor = 1e-8;
  RngState rng(sample_seed);
  for (Parameter* p : params) {
    const size_t n = p->value.data.size();
    std::vector<size_t> picks;
    if (n <= 32) {
      picks.resize(n);
      for (size_t i = 0; i < n; ++i) picks[i] = i;
    } else {
      std::set<size_t> chosen;
      while (chosen.size() < 32) chosen.insert(static_cast<size_t>(rng.uniform_below(n)));
      picks.assign(chosen.begin(), chosen.end());
    }

    GradCheckEntry entry;
    entry.name = p->name;
    for (size_t idx : picks) {
      const auto eval_at = [&](double delta) {
        Tens<double> v = widen(p->value);
        v.data[idx] += delta;
        Tape<double> tape;
        tape.set_override(p, std::move(v));
        const int loss = build(tape);
        return static_cast<double>(tape.val(loss).data[0]);
      };
      const double plus = eval_at(epsilon);
      const double minus = eval_at(-epsilon);
      const double g_num = (plus - minus) / (2.0 * epsilon);
      const double g_ana = static_cast<double>(p->grad.data[idx]);
      const double rel = std::abs(g_ana - g_num) /
                         std::max({std::abs(g_ana), std::abs(g_num), floor});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.per_param.push_back(entry);
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
  }
  return report;
}

}  // namespace mb
