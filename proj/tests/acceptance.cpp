// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "caeq/bundle.hpp"
#include "caeq/engine.hpp"
#include "caeq/flows.hpp"
#include "caeq/oracle.hpp"
#include "test_support.hpp"

using namespace caeq;
using caeq::testing::random_lower;
using caeq::testing::random_matrix;
using caeq::testing::random_problem;
using caeq::testing::slow_P;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

MethodSpec spec_for(bool p1, bool p2, int bits, std::size_t group, std::size_t block) {
  MethodSpec s;
  s.use_p1 = p1;
  s.use_p2 = p2;
  s.grid = {bits, group, kDefaultClipGrid};
  s.block_size = block;
  return s;
}

const std::pair<bool, bool> kMethods[] = {{false, false}, {true, false}, {false, true}, {true, true}};

// Random divisor of n, so grouped grids tile the width.
std::size_t random_group(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::size_t> divisors;
  for (std::size_t d = 1; d <= n; ++d)
    if (n % d == 0 && d >= 2) divisors.push_back(d);
  if (divisors.empty()) return n;
  return divisors[std::uniform_int_distribution<std::size_t>(0, divisors.size() - 1)(rng)];
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Walks every column of one instance, handing the caller the pre-step state.
void walk_columns(const LayerProblem& p, const MethodSpec& spec,
                  const std::function<void(const Calibrated&, const EngineState&, std::size_t, const Matrix&,
                                           const QuantizedColumn&)>& visit) {
  const Calibrated cal = calibrate(p, calib_options(spec));
  EngineState state(cal.problem.w, make_grid(cal.problem.w, cal.state, spec));
  for (std::size_t q = 0; q < p.n(); ++q) {
    prepare_column(state, spec);
    const EngineState before = state;
    const QuantizedColumn qc = state.grid.quantize(q, state.w.col(q));
    const Matrix delta = column_step(state, cal.state, spec);
    visit(cal, before, q, delta, qc);
  }
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  std::size_t steps = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t m = uniform(rng, 1, 8), n = uniform(rng, 2, 12), k = uniform(rng, 4, 64);
    const LayerProblem p = random_problem(rng(), m, n, k, 0.1);
    const std::size_t group = random_group(rng, n);
    const bool act = rng() % 2;
    const int bits = 3 + int(rng() % 2);
    for (const auto& [p1, p2] : kMethods) {
      MethodSpec spec = spec_for(p1, p2, bits, group, 4);
      spec.act_order = act;
      walk_columns(p, spec, [&](const Calibrated& cal, const EngineState& before, std::size_t q, const Matrix& delta,
                                const QuantizedColumn& qc) {
        const auto step = oracle::step_problem(before.w0, before.w, qc.dequant, cal.problem, q, p1, p2,
                                               cal.state.lambda);
        worst = std::max(worst, relative_diff(delta, oracle::solve_constrained_ls(step).delta));
        ++steps;
      });
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu steps, worst relative diff %.3g (tol 1e-8), %.2f s (limit 30 s)", steps, worst,
                secs);
  return {worst <= 1e-8 && secs < 30.0, buf};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2002);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 2 * uniform(rng, 2, 24), m = uniform(rng, 1, 16), k = uniform(rng, 8, 96);
    const LayerProblem p = random_problem(rng(), m, n, k, 0.1);
    const std::size_t group = random_group(rng, n);
    const bool act = rng() % 2;
    for (const auto& [p1, p2] : kMethods) {
      MethodSpec spec = spec_for(p1, p2, 3, group, 1);
      spec.act_order = act;
      const Matrix naive = run_layer_naive(p, spec);
      for (std::size_t b : {std::size_t{1}, std::size_t{2}, n / 2, n}) {
        spec.block_size = b;
        worst = std::max(worst, relative_diff(run_layer(p, spec).q, naive));
      }
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "worst relative diff %.3g (tol 1e-8), %.2f s (limit 30 s)", worst, secs);
  return {worst <= 1e-8 && secs < 30.0, buf};
}

Outcome criterion3() {
  double worst = 0.0;
  for (std::size_t n : {2u, 3u, 8u, 33u, 64u})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Matrix m = random_matrix(3000 + 100 * n + seed, n, n);
      const LowerTriangular l = random_lower(4000 + 100 * n + seed, n);
      worst = std::max(worst, relative_diff(precompute_P(m, l), slow_P(m, l)));
    }
  char buf[120];
  std::snprintf(buf, sizeof buf, "50 cases, worst relative diff %.3g (tol 1e-10)", worst);
  return {worst <= 1e-10, buf};
}

Outcome criterion4() {
  bool a = true, b = true, c = true;
  double worst_c = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LayerProblem same = random_problem(5000 + seed, 6, 16, 40, 0.0);
    for (bool act : {false, true}) {
      MethodSpec gptq = spec_for(false, false, 3, 8, 4), gptaq = spec_for(true, false, 3, 8, 4);
      gptq.act_order = gptaq.act_order = act;
      a &= run_layer(same, gptq).q == run_layer(same, gptaq).q;
    }

    const LayerProblem p = random_problem(5100 + seed, 6, 16, 40, 0.1);
    for (bool p1 : {false, true}) {
      const MethodSpec with = spec_for(p1, true, 3, 8, 4), without = spec_for(p1, false, 3, 8, 4);
      const Calibrated cal = calibrate(p, calib_options(with));
      EngineState s1(cal.problem.w, make_grid(cal.problem.w, cal.state, with));
      EngineState s2(cal.problem.w, make_grid(cal.problem.w, cal.state, without));
      prepare_column(s1, with);
      prepare_column(s2, without);
      b &= column_step(s1, cal.state, with) == column_step(s2, cal.state, without);
    }

    // Asymmetric targets move Q off W0 on purpose when Xtilde != X, so the
    // fine-grid limit is taken with coinciding flows.
    for (const auto& [p1, p2] : kMethods) {
      const LayerReport r = run_layer(same, spec_for(p1, p2, 16, 8, 4)).report;
      worst_c = std::max(worst_c, r.sym_err / r.signal);
    }
    const LayerReport g = run_layer(p, spec_for(false, false, 16, 8, 4)).report;
    worst_c = std::max(worst_c, g.sym_err / g.signal);
  }
  c = worst_c <= 1e-6;
  char buf[200];
  std::snprintf(buf, sizeof buf, "(a) GPTAQ==GPTQ when Xtilde=X: %s; (b) CAE term at q=0 exactly zero: %s; "
                "(c) 16-bit worst sym_err/signal %.3g (tol 1e-6, Xtilde = X)", a ? "yes" : "no", b ? "yes" : "no", worst_c);
  return {a && b && c, buf};
}

Outcome criterion5() {
  std::mt19937_64 rng(6006);
  double worst = -1e300;
  std::size_t columns = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t m = uniform(rng, 1, 8), n = uniform(rng, 2, 12), k = uniform(rng, 4, 64);
    const LayerProblem p = random_problem(rng(), m, n, k, 0.1);
    const std::size_t group = random_group(rng, n);
    for (bool p1 : {false, true}) {
      const MethodSpec cae = spec_for(p1, true, 3, group, 4), base = spec_for(p1, false, 3, group, 4);
      walk_columns(p, cae, [&](const Calibrated& c, const EngineState& before, std::size_t q, const Matrix& delta,
                               const QuantizedColumn& qc) {
        // GPTQ-only update from the same state, judged by the CAE objective.
        EngineState alt = before;
        const Matrix base_delta = column_step(alt, c.state, base);
        const auto step = oracle::step_problem(before.w0, before.w, qc.dequant, c.problem, q, p1, true,
                                               c.state.lambda);
        worst = std::max(worst, oracle::step_objective(step, delta) - oracle::step_objective(step, base_delta));
        ++columns;
      });
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu columns, worst (CAE - base) objective %.3g (slack 1e-10)", columns, worst);
  return {worst <= 1e-10, buf};
}

// Pinned seeds for the end-to-end sweep.
constexpr std::uint64_t kStackSeedBase = 23;
constexpr int kStackSeeds = 50;

Outcome criterion6() {
  const auto t0 = Clock::now();
  const std::size_t width = 16, k = 128, depth = 4;
  double mean[4] = {0, 0, 0, 0};
  int cae_wins = 0, cae_trials = 0;
  for (int s = 0; s < kStackSeeds; ++s) {
    NormalStream rng(kStackSeedBase + s);
    LayerStack stack;
    for (std::size_t l = 0; l < depth; ++l) {
      stack.weights.push_back(rng.matrix(width, width, 1.0 / std::sqrt(double(width))));
      stack.activations.push_back(l + 1 < depth ? Activation::kRelu : Activation::kIdentity);
    }
    const Matrix input = rng.matrix(width, k);
    const Matrix quant_input = input + rng.matrix(width, k, 0.05);
    double final_err[4];
    for (int i = 0; i < 4; ++i) {
      const MethodSpec spec = spec_for(kMethods[i].first, kMethods[i].second, 3, 8, 8);
      const StackResult r = quantize_stack(stack, input, spec, quant_input, {.with_baseline = false});
      final_err[i] = r.reports.back().asym_err;
      mean[i] += final_err[i] / kStackSeeds;
    }
    cae_wins += (final_err[2] <= final_err[0]) + (final_err[3] <= final_err[1]);
    cae_trials += 2;
  }
  const double secs = seconds_since(t0);
  const double win_rate = double(cae_wins) / cae_trials;
  const bool ok = mean[2] <= mean[0] && mean[3] <= mean[1] && mean[1] <= mean[0] && win_rate >= 0.6 && secs < 300;
  char buf[260];
  std::snprintf(buf, sizeof buf,
                "mean final asym_err gptq %.4g, gptaq %.4g, gptq+cae %.4g, gptaq+cae %.4g; CAE better on %.0f%% "
                "of seed/base pairs (need 60%%); %.1f s (limit 300 s)",
                mean[0], mean[1], mean[2], mean[3], 100 * win_rate, secs);
  return {ok, buf};
}

Outcome criterion7() {
  const std::size_t m = 1024, n = 1024, k = 2048;
  NormalStream rng(77);
  LayerProblem p;
  p.w = rng.matrix(m, n);
  p.x = rng.matrix(n, k);
  p.x_fp = p.x + rng.matrix(n, k, 0.05);
  auto best_time = [&](const MethodSpec& spec) {
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = Clock::now();
      (void)run_layer(p, spec, {.with_baseline = false});
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  MethodSpec base = spec_for(true, false, 4, 128, 128), cae = spec_for(true, true, 4, 128, 128);
  base.workers = cae.workers = 0;
  const double t_base = best_time(base), t_cae = best_time(cae);
  char buf[160];
  std::snprintf(buf, sizeof buf, "gptaq %.3f s, gptaq+cae %.3f s, ratio %.3f (limit 1.5), %u hardware threads",
                t_base, t_cae, t_cae / t_base, std::thread::hardware_concurrency());
  return {t_cae <= 1.5 * t_base, buf};
}

Outcome criterion8() {
  std::mt19937_64 rng(8008);
  bool identical = true;
  const std::size_t hw = std::max(2u, std::thread::hardware_concurrency());
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t m = uniform(rng, 2, 48), n = 8 * uniform(rng, 1, 8), k = uniform(rng, 16, 128);
    const LayerProblem p = random_problem(rng(), m, n, k, 0.1);
    const auto& [p1, p2] = kMethods[inst % 4];
    MethodSpec spec = spec_for(p1, p2, 3, 8, 16);
    spec.act_order = inst % 2;
    spec.workers = 1;
    const Matrix single = run_layer(p, spec).q;
    for (std::size_t w : {std::size_t{2}, std::size_t{3}, std::size_t{7}, hw}) {
      spec.workers = w;
      identical &= run_layer(p, spec).q == single;
    }
    // A row slice quantized alone matches the same rows of the full run.
    const std::size_t r0 = uniform(rng, 0, m - 1), rows = uniform(rng, 1, m - r0);
    LayerProblem slice = p;
    slice.w = p.w.block(r0, 0, rows, n);
    spec.workers = 1;
    identical &= run_layer(slice, spec).q == single.block(r0, 0, rows, n);
  }
  return {identical, identical ? "bit-identical Q for 1, 2, 3, 7 and " + std::to_string(hw) +
                                     " workers and for row slices on 20 instances"
                               : "Q differs across worker counts or row slices"};
}

}  // namespace

// Usage: acceptance [--expect-red N]...
// A criterion listed with --expect-red still prints its real verdict but does
// not change the exit status.
int main(int argc, char** argv) {
  std::vector<std::string> expect_red;
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--expect-red") expect_red.emplace_back(argv[i + 1]);
  const std::pair<const char*, Outcome (*)()> criteria[] = {
      {"1 oracle step equivalence", criterion1}, {"2 blocked vs naive", criterion2},
      {"3 P precompute vs row-wise definition", criterion3}, {"4 reduction identities", criterion4},
      {"5 per-step dominance", criterion5}, {"6 end-to-end statistical ordering", criterion6},
      {"7 overhead", criterion7}, {"8 determinism and row independence", criterion8},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known = std::find(expect_red.begin(), expect_red.end(), std::string(1, name[0])) != expect_red.end();
    std::printf("criterion %s: %s (%s)%s\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                known ? (o.pass ? " [listed as expected red, now passes]" : " [expected red]") : "");
    std::fflush(stdout);
    failures += !o.pass && !known;
  }
  return failures == 0 ? 0 : 1;
}
