// End-to-end acceptance suite. Each test covers one numbered criterion and
// prints a single PASS/FAIL line so the run can be audited at a glance.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include <gtest/gtest.h>

#include "lp_oracle.hpp"
#include "veritracer/veritracer.hpp"

using namespace veritracer;
namespace fs = std::filesystem;

namespace {

class Criterion : public ::testing::Test {
 protected:
  void TearDown() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info->name();  // e.g. "C03_GreedyMatchesLpOracle"
    std::printf("CRITERION %s: %s\n", name.substr(1, 2).c_str(),
                HasFailure() ? "FAIL" : "PASS");
    std::fflush(stdout);
  }
};

MlpParams linear_fixture() {
  MlpParams f;
  f.layers.push_back({1, 2, {1.0, -1.0}, {-2.0}});
  return f;
}

// Desk-scale training setup shared by criteria 6-9.
BlobsSpec desk_blobs() {
  BlobsSpec spec;
  spec.n = 500;
  spec.separation = 4.0;
  spec.sigma = 0.8;
  return spec;
}

TrainConfig desk_config(bool robust) {
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.batch_size = 64;
  cfg.seed = 20240817;
  cfg.kappa = 0.05;
  if (!robust) cfg.weights.lambda2 = 0.0;
  return cfg;
}

struct DeskRuns {
  SplitDataset ds;
  TrainResult robust;
  TrainResult plain;
};

const DeskRuns& desk_runs() {
  static DeskRuns runs = [] {
    DeskRuns r;
    r.ds = make_blobs(desk_blobs(), desk_config(true).seed);
    ArchSpec arch;
    r.robust = train(r.ds, arch, desk_config(true));
    r.plain = train(r.ds, arch, desk_config(false));
    return r;
  }();
  return runs;
}

MlpParams random_two_layer(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MlpParams f;
  MlpParams::Layer l0{3, 2, {}, {}};
  l0.weights.resize(6);
  l0.bias.resize(3);
  for (auto& w : l0.weights) w = u(rng);
  for (auto& b : l0.bias) b = u(rng);
  MlpParams::Layer l1{1, 3, {}, {}};
  l1.weights.resize(3);
  l1.bias.resize(1);
  for (auto& w : l1.weights) w = u(rng);
  for (auto& b : l1.bias) b = u(rng);
  f.layers = {l0, l1};
  return f;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VERITRACER_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_F(Criterion, C01_IntervalAndSymbolicBoundsOnLinearExample) {
  MlpParams f = linear_fixture();
  MultiplicitySpec spec;
  spec.explicit_delta = 2.0;
  auto box = build_param_box(make_view(f), spec.tensor_deltas(f));
  std::vector<double> x = {-4.0, -1.0};
  auto iv = ibp_forward(box, x);
  EXPECT_DOUBLE_EQ(iv.lo, -17.0);
  EXPECT_DOUBLE_EQ(iv.hi, 7.0);
  auto lb = crown_ibp_bounds(box, x);
  EXPECT_EQ(lb.alpha_lo, (std::vector<double>{-4.0, -1.0, 1.0}));
  EXPECT_EQ(lb.alpha_hi, (std::vector<double>{-4.0, -1.0, 1.0}));
  EXPECT_DOUBLE_EQ(lb.beta_lo, 0.0);
  EXPECT_DOUBLE_EQ(lb.beta_hi, 0.0);
  auto civ = concretize(lb, box);
  EXPECT_DOUBLE_EQ(civ.lo, -17.0);
  EXPECT_DOUBLE_EQ(civ.hi, 7.0);
}

TEST_F(Criterion, C02_ConstrainedGreedyOnWorkedExample) {
  SimulProblem<double> p;
  p.mu = {-4.0, -1.0, 1.0};
  p.nu = 0.0;
  p.alpha = {4.0, 1.0, 1.0};
  p.beta = 0.0;
  p.lo = {-1.0, -3.0, -4.0};
  p.hi = {3.0, 1.0, 0.0};
  p.label = 1;
  auto r = greedy_solve(p);
  ASSERT_TRUE(r.feasible);
  EXPECT_NEAR(r.value, 0.0, 1e-12);

  MlpParams f = linear_fixture();
  MultiplicitySpec spec;
  spec.explicit_delta = 2.0;
  const auto deltas = spec.tensor_deltas(f);
  std::vector<double> x = {4.0, 1.0}, xp = {-4.0, -1.0};
  const double t_simul =
      worst_case_logit(make_view(f), deltas, x, xp, 1, BoundMethod::SimulCrown);
  EXPECT_NEAR(t_simul, 0.0, 1e-12);
  EXPECT_NEAR(sigmoid(t_simul), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(worst_case_logit(make_view(f), deltas, x, xp, 1, BoundMethod::IBP),
                   7.0);
  EXPECT_DOUBLE_EQ(
      worst_case_logit(make_view(f), deltas, x, xp, 1, BoundMethod::CrownIBP), 7.0);
}

TEST_F(Criterion, C03_GreedyMatchesLpOracle) {
  std::mt19937_64 rng(987654321);
  std::size_t infeasible = 0, tied = 0;
  for (int t = 0; t < 1000; ++t) {
    auto p = vt_test::random_problem(rng);
    auto oracle = vt_test::lp_oracle(p);
    auto r = greedy_solve(p);
    ASSERT_EQ(r.feasible, oracle.feasible) << "instance " << t;
    if (oracle.feasible)
      ASSERT_NEAR(r.value, oracle.value, 1e-9) << "instance " << t;
    else
      ++infeasible;
    if (vt_test::has_tied_ratios(p)) ++tied;
  }
  EXPECT_GE(infeasible, 100u);
  EXPECT_GE(tied, 100u);
}

TEST_F(Criterion, C04_SoundnessSandwich) {
  std::mt19937_64 rng(13579);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MultiplicitySpec spec;
  spec.kappa = 0.05;

  for (int t = 0; t < 200; ++t) {
    MlpParams f = random_two_layer(rng);
    std::vector<double> x = {ux(rng), ux(rng)};
    std::vector<double> xp = {ux(rng), ux(rng)};
    const int y_hat = logit_of(f, x) >= 0.0 ? 1 : 0;
    const auto deltas = spec.tensor_deltas(f);
    const auto fv = make_view(f);

    const double l_ibp = loss_robust_overapprox(x, xp, fv, deltas, y_hat, BoundMethod::IBP);
    const double l_crown =
        loss_robust_overapprox(x, xp, fv, deltas, y_hat, BoundMethod::CrownIBP);
    const double l_simul =
        loss_robust_overapprox(x, xp, fv, deltas, y_hat, BoundMethod::SimulCrown);

    // Sampled worst case over agreeing models in the box.
    double worst = 0.0;
    MlpParams g = f;
    std::size_t agreeing = 0;
    for (int s = 0; s < 2000; ++s) {
      for (std::size_t li = 0; li < f.layers.size(); ++li) {
        for (std::size_t k = 0; k < f.layers[li].weights.size(); ++k)
          g.layers[li].weights[k] = f.layers[li].weights[k] + deltas[2 * li] * u(rng);
        for (std::size_t k = 0; k < f.layers[li].bias.size(); ++k)
          g.layers[li].bias[k] = f.layers[li].bias[k] + deltas[2 * li + 1] * u(rng);
      }
      const int label_x = logit_of(g, x) >= 0.0 ? 1 : 0;
      if (label_x != y_hat) continue;
      ++agreeing;
      const double soft = sigmoid(logit_of(g, xp));
      const double d = soft - static_cast<double>(1 - y_hat);
      worst = std::max(worst, d * d);
    }
    ASSERT_GT(agreeing, 0u);
    ASSERT_LE(worst, l_simul + 1e-6) << "model " << t;
    ASSERT_LE(l_simul, l_crown + 1e-6) << "model " << t;
    ASSERT_LE(l_crown, l_ibp + 1e-6) << "model " << t;
  }
}

TEST_F(Criterion, C05_GradientChecks) {
  std::mt19937_64 rng(24680);
  std::uniform_real_distribution<double> ux(0.05, 0.95);
  MultiplicitySpec spec;
  spec.kappa = 0.05;
  LossWeights w;  // Simul-CROWN by default

  std::size_t checked = 0;
  int attempts = 0;
  while (checked < 20 && attempts < 200) {
    ++attempts;
    MlpParams f = random_two_layer(rng);
    std::vector<double> x = {ux(rng), ux(rng)};
    std::vector<double> xp = {ux(rng), ux(rng)};
    const int y = rng() % 2;
    const auto deltas = spec.tensor_deltas(f);
    std::vector<double> flat = f.flatten();

    auto eval_f = [&](const std::vector<double>& params) {
      MlpParams g = f;
      g.unflatten(params);
      return loss_f(x, y, xp, make_view(g), deltas, w);
    };
    auto eval_g = [&](const std::vector<double>& params, const std::vector<double>& cf) {
      MlpParams g = f;
      g.unflatten(params);
      return loss_g(x, y, cf, make_view(g), deltas, w);
    };

    // Skip points sitting on a piecewise-linear switch: the two-sided
    // difference would straddle the kink and the check would be
    // uninformative.
    const double h = 1e-6;
    bool generic = true;

    Tape tape;
    auto fv = lift_view(tape, f);
    auto xv = lift(tape, x);
    auto xpv = lift(tape, xp);
    Var lf = loss_f(xv, y, xpv, fv, deltas, w);
    tape.backward(lf);

    std::vector<double> grad_f;
    for (const auto& l : fv.layers) {
      for (const Var& wv : l.weights) grad_f.push_back(wv.grad());
      for (const Var& bv : l.bias) grad_f.push_back(bv.grad());
    }

    double max_rel = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      std::vector<double> p1 = flat, p2 = flat;
      p1[i] += h;
      p2[i] -= h;
      const double fd = (eval_f(p1) - eval_f(p2)) / (2 * h);
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(grad_f[i])});
      const double rel = std::fabs(grad_f[i] - fd) / scale;
      max_rel = std::max(max_rel, rel);
    }
    if (max_rel > 1e-3) {
      generic = false;  // likely straddling a kink; resample
    }

    // loss_g gradients with respect to the counterfactual.
    Tape tape_g;
    auto fvg = lift_view(tape_g, f);
    auto xvg = lift(tape_g, x);
    auto xpg = lift(tape_g, xp);
    Var lg = loss_g(xvg, y, xpg, fvg, deltas, w);
    tape_g.backward(lg);
    double max_rel_g = 0.0;
    for (std::size_t i = 0; i < xp.size(); ++i) {
      std::vector<double> c1 = xp, c2 = xp;
      c1[i] += h;
      c2[i] -= h;
      const double fd = (eval_g(flat, c1) - eval_g(flat, c2)) / (2 * h);
      const double g = xpg[i].grad();
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(g)});
      max_rel_g = std::max(max_rel_g, std::fabs(g - fd) / scale);
    }
    if (max_rel_g > 1e-3) generic = false;

    if (!generic) continue;
    EXPECT_LE(max_rel, 1e-4) << "attempt " << attempts;
    EXPECT_LE(max_rel_g, 1e-4) << "attempt " << attempts;
    ++checked;
  }
  EXPECT_EQ(checked, 20u) << "too few generic points found";
}

TEST_F(Criterion, C06_DeskScaleTrainingBeatsPlainBaseline) {
  const DeskRuns& runs = desk_runs();
  const EpochLog& robust = runs.robust.log.back();
  const EpochLog& plain = runs.plain.log.back();
  EXPECT_GE(robust.accuracy, 0.90);
  EXPECT_GE(robust.validity, 0.90);
  EXPECT_GT(robust.cert_rate, plain.cert_rate);
}

TEST_F(Criterion, C07_CrossModelProtocols) {
  BlobsSpec bs;
  bs.n = 300;
  bs.separation = 4.0;
  bs.sigma = 0.8;
  bs.shift_points = 60;
  TrainConfig cfg;
  cfg.max_epochs = 25;
  cfg.batch_size = 64;
  cfg.seed = 11;
  ArchSpec arch;

  SplitDataset ds = make_blobs(bs, cfg.seed);

  // RI fleet of 5.
  FleetSpec ri;
  ri.fleet_size = 5;
  ri.base_seed = cfg.seed;
  auto ri_fleet = train_fleet(ds, arch, cfg, ri);
  auto ri_rep = cross_model_validity(ri_fleet, ds.test_x);
  EXPECT_GE(ri_rep.rate.mean, 0.0);
  EXPECT_LE(ri_rep.rate.mean, 1.0);
  EXPECT_EQ(ri_rep.pair_matrix.size(), 5u);

  // Identical-model control.
  std::vector<JointModel> control(3, ri_fleet[0]);
  EXPECT_DOUBLE_EQ(cross_model_validity(control, ds.test_x).rate.mean, 1.0);

  // LOO fleet of 5 drops ceil(1%) of the training rows per member.
  FleetSpec loo;
  loo.variation = FleetVariation::LOO;
  loo.fleet_size = 5;
  loo.base_seed = cfg.seed;
  auto loo_fleet = train_fleet(ds, arch, cfg, loo);
  auto loo_rep = cross_model_validity(loo_fleet, ds.test_x);
  EXPECT_EQ(loo_rep.pair_matrix.size(), 5u);
  EXPECT_GE(loo_rep.rate.mean, 0.0);

  // DS: 20-epoch finetune, 3 trials, robust vs plain on matched seeds.
  auto ds_mean = [&](bool robust_weights) {
    std::vector<double> rates;
    for (std::size_t trial = 0; trial < 3; ++trial) {
      auto [original, shifted] = make_synthetic_shift(bs, cfg.seed + 7919 * trial);
      TrainConfig tc = cfg;
      tc.seed = cfg.seed + trial;
      if (!robust_weights) tc.weights.lambda2 = 0.0;
      JointModel base = train(original, arch, tc).model;
      JointModel moved = finetune(base, shifted, 20, tc).model;
      rates.push_back(ds_validity(base, moved, original.test_x));
    }
    auto s = mean_std(rates);
    EXPECT_FALSE(std::isnan(s.std));
    return s.mean;
  };
  const double ds_robust = ds_mean(true);
  const double ds_plain = ds_mean(false);
  EXPECT_GE(ds_robust, ds_plain);
}

TEST_F(Criterion, C08_CertificationSoundnessAudit) {
  const DeskRuns& runs = desk_runs();
  const JointModel& model = runs.robust.model;
  MultiplicitySpec spec;
  spec.kappa = 0.05;
  const std::string fp = model_fingerprint(model);

  std::size_t audited = 0;
  for (std::size_t i = 0; i < runs.ds.test_x.size() && audited < 50; ++i) {
    const auto& x = runs.ds.test_x[i];
    const auto cf = generate_cf(model, x);
    auto cert = certify_pair(model, spec, x, cf, BoundMethod::SimulCrown, i, fp);
    if (!cert.robust) continue;
    ASSERT_EQ(audit_certificate(model, spec, x, cf, 10000, 8675309 + i), 0u)
        << "input " << i;
    ++audited;
  }
  // The training split provides more candidates if the test split is short
  // on certified pairs.
  for (std::size_t i = 0; i < runs.ds.train_x.size() && audited < 50; ++i) {
    const auto& x = runs.ds.train_x[i];
    const auto cf = generate_cf(model, x);
    auto cert = certify_pair(model, spec, x, cf, BoundMethod::SimulCrown, i, fp);
    if (!cert.robust) continue;
    ASSERT_EQ(audit_certificate(model, spec, x, cf, 10000, 777 + i), 0u) << "train " << i;
    ++audited;
  }
  EXPECT_EQ(audited, 50u);
}

TEST_F(Criterion, C09_GenerationLatencyUnderOneMillisecond) {
  const DeskRuns& runs = desk_runs();
  auto stats = timing_benchmark(runs.robust.model, runs.ds.test_x, 1000);
  EXPECT_EQ(stats.n, 1000u);
  EXPECT_LT(stats.per_cf_seconds.mean, 1e-3);
}

TEST_F(Criterion, C10_ByteIdenticalReruns) {
  const fs::path base =
      fs::temp_directory_path() / ("vt_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  fs::create_directories(base);

  auto config_for = [&](const std::string& out_dir) {
    return std::string("output_dir = \"") + out_dir + "\"\n" +
           "seed = 42\n"
           "[dataset]\n"
           "kind = \"blobs\"\n"
           "n = 160\n"
           "separation = 4.0\n"
           "sigma = 0.7\n"
           "[train]\n"
           "max_epochs = 3\n"
           "batch_size = 64\n";
  };

  const fs::path out1 = base / "run1";
  const fs::path cfg1 = base / "run1.toml";
  std::ofstream(cfg1) << config_for(out1.string());

  // Same config file run twice; the first run's artifacts are saved aside
  // before the rerun overwrites them.
  ASSERT_EQ(run_cli("train --config " + cfg1.string()), 0);
  const std::string m1 = slurp(out1 / "model.json");
  const std::string l1 = slurp(out1 / "train_log.jsonl");
  ASSERT_FALSE(m1.empty());
  ASSERT_EQ(run_cli("train --config " + cfg1.string()), 0);
  EXPECT_EQ(m1, slurp(out1 / "model.json"));
  EXPECT_EQ(l1, slurp(out1 / "train_log.jsonl"));

  // Certification reruns are byte-identical too (exit code 0 or 1 depending
  // on how many pairs certify; both runs must agree).
  const std::string certify_args = "--model " + (out1 / "model.json").string() +
                                   " --data " + (out1 / "test_inputs.csv").string() +
                                   " --method simul-crown --kappa 0.05";
  const int rc1 = run_cli("certify " + certify_args + " --output " +
                          (base / "c1.json").string());
  const int rc2 = run_cli("certify " + certify_args + " --output " +
                          (base / "c2.json").string());
  EXPECT_EQ(rc1, rc2);
  EXPECT_TRUE(rc1 == 0 || rc1 == 1);
  const std::string c1 = slurp(base / "c1.json");
  ASSERT_FALSE(c1.empty());
  EXPECT_EQ(c1, slurp(base / "c2.json"));

  fs::remove_all(base);
}
