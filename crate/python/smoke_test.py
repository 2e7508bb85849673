#!/usr/bin/env python3
"""Smoke test for the varpo_py extension module.

Builds the cdylib if needed, stages it under the import name, and checks a
handful of known values against the Rust implementation.
"""
import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def locate_or_build_cdylib() -> Path:
    so = ROOT / "target" / "release" / "libvarpo_py.so"
    if not so.exists():
        print("building varpo-py (release)...")
        subprocess.run(
            ["cargo", "build", "-p", "varpo-py", "--release"], cwd=ROOT, check=True
        )
    if not so.exists():
        sys.exit(f"cdylib not found at {so}")
    return so


def main() -> None:
    so = locate_or_build_cdylib()
    stage = Path(tempfile.mkdtemp(prefix="varpo_py_"))
    shutil.copy2(so, stage / "varpo_py.so")
    sys.path.insert(0, str(stage))
    import varpo_py as vp

    checks = 0

    def ok(name: str, cond: bool) -> None:
        nonlocal checks
        checks += 1
        if not cond:
            sys.exit(f"FAIL: {name}")
        print(f"ok: {name}")

    # weighted norms
    ok("weighted_norm", abs(vp.weighted_norm([1.0, 0.0, 0.0], [4.0, 1.0, 0.25]) - 2.0) < 1e-12)
    ok("lambda_min", vp.lambda_min([2.25, 0.16, 0.09]) == 0.09)

    # closed-form solvers on the three-arm example
    pi0 = [1 / 3] * 3
    r_hat = [3.2, 2.2, 1.35]
    sol = vp.solve_vanilla(pi0, r_hat, 0.01)
    expected = [0.41116825739089813, 0.38684484362290916, 0.3661699419201185]
    ok("solve_vanilla", all(abs(a - b) < 1e-12 for a, b in zip(sol.policy, expected)))
    ok("constraint_on_boundary", abs(sol.constraint_value - 0.01) < 1e-11)

    sigma2 = [2.25, 0.16, 0.09]
    eps_t = vp.scale_epsilon(sigma2, 0.01)
    ok("scale_epsilon", abs(eps_t - 9e-4) < 1e-18)
    sol2 = vp.solve_variance_aware(pi0, r_hat, sigma2, eps_t)
    expected2 = [0.33908383416360666, 0.3889289956572653, 0.39398314677762275]
    ok("solve_variance_aware", all(abs(a - b) < 1e-12 for a, b in zip(sol2.policy, expected2)))

    # analytic risks and their ordering
    r_star = [1.0, 1.8, 1.65]
    rv = vp.analytic_risk_vanilla(r_star, sigma2)
    ra = vp.analytic_risk_variance_aware(r_star, sigma2)
    ok("risk_ordering", ra <= rv)
    ok("reference_return", abs(vp.return_of(pi0, r_star) - 1.4833333333333334) < 1e-12)

    # Monte Carlo risk agrees with the analytic value at identity covariance
    report = vp.monte_carlo_risk([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], pi0, 0.01, 50_000, 7)
    se = math.sqrt(report.analytic_vanilla * (1 - report.analytic_vanilla) / 50_000)
    ok("mc_agreement", abs(report.mc_vanilla - report.analytic_vanilla) <= 3 * se)

    # determinism of the sampling surface
    a = vp.sample_noisy_reward(r_star, sigma2, 42)
    b = vp.sample_noisy_reward(r_star, sigma2, 42)
    ok("sampling_determinism", a == b)

    # interval oracle formulas
    ok("interval_variance", abs(vp.interval_variance(1.0, 100.0) - 816.75) < 1e-12)
    ok("interval_true_reward", vp.interval_true_reward(40.0, 60.0) == 50.0)

    # distribution functions and tests
    ok("normal_cdf", abs(vp.normal_cdf(-1.7320508) - 0.0416323) < 1e-6)
    ok("chi2_tail", abs(vp.chi2_tail(20.7239, 9.0) - 0.013934393464508735) < 1e-10)
    f = vp.f_test_variance_ratio(0.076, 0.012, 80, 80, 0.05)
    ok("f_test", abs(f.statistic - 6.333333333333333) < 1e-12 and f.reject_null)
    t = vp.welch_t_test(0.31, 0.076, 80, 0.34, 0.012, 80, 0.05)
    ok("welch", abs(t.statistic - 0.9045340337332917) < 1e-12 and not t.reject_null)
    z = vp.two_proportion_z_one_sided(0.05, 0.29, 80, 0.05)
    ok("two_proportion", z.reject_null and z.p_value < 1e-4)

    # exponential tilt
    tilt = vp.exp_tilt_policy([0.5, 0.5], [math.log(3.0), 0.0], [1.0, 1.0], 1.0)
    ok("exp_tilt", abs(tilt[0] - 0.75) < 1e-12)
    ok("projection", vp.project_to_simplex([1.5, -0.5]) == [1.0, 0.0])

    # tabular population on a small scenario
    scenario = json.dumps(
        {
            "num_prompts": 1,
            "num_responses": 3,
            "pairs": [
                {"pair_id": 0, "a": 40.0, "b": 60.0},
                {"pair_id": 1, "a": 46.0, "b": 50.0},
                {"pair_id": 2, "a": 3.0, "b": 99.0},
            ],
        }
    )
    returns = vp.population_eval_returns(scenario, "variance_aware", 4, 11, 128)
    ok("population", len(returns) == 4 and all(1.0 <= r <= 100.0 for r in returns))
    again = vp.population_eval_returns(scenario, "variance_aware", 4, 11, 128)
    ok("population_determinism", returns == again)
    logits = vp.train_tabular_policy(scenario, "vanilla", 5)
    ok("train_policy_shape", len(logits) == 1 and len(logits[0]) == 3)

    print(f"smoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
