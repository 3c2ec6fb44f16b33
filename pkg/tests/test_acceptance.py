"""Acceptance gate: one test per criterion, each printing a PASS line with
its headline numbers (run with ``pytest tests/test_acceptance.py -v -s``).

Statistical criteria run on frozen seeds that were calibrated once before
freezing (see scripts/calibrate_mc.py); all thresholds are pinned here.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

import odmlab as m
from odmlab.experiment import ExperimentConfig, run_mc_consistency
from odmlab.fit import FitOptions

import oracles

MC_SEED = 20250801

# random extreme instances legitimately hit the documented latent clamp
pytestmark = pytest.mark.filterwarnings("ignore::odmlab.families.ClampWarning")


def report(line):
    print(f"\n[acceptance] {line}")


def test_criterion_1_likelihood_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(1001)
    worst = 0.0
    for _ in range(500):
        spec, th = oracles.random_instance(rng, max_order=3)
        n = int(rng.integers(5, 201))
        series = oracles.random_series(spec, rng, n)
        z = oracles.random_window(spec, rng)
        total, normalized = oracles.brute_force_loglik(spec, th, z, series)
        val = m.loglik(spec, th, z, series, keep_path=False)
        worst = max(worst, abs(val.total - total), abs(val.normalized - normalized))
        assert abs(val.total - total) <= 1e-12
        assert abs(val.normalized - normalized) <= 1e-12
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(f"criterion 1 PASS: 500 instances, max |diff| {worst:.2e}, {elapsed:.1f}s (< 10s)")


def test_criterion_2_gradient_correctness():
    t0 = time.time()
    rng = np.random.default_rng(2002)
    worst = 0.0
    for _ in range(100):
        spec, th = oracles.random_instance(rng, stable=True)
        n = int(rng.integers(40, 201))
        sim = m.simulate_series(
            spec, th, m.SimConfig(n=n, burn_in=100, seed=int(rng.integers(1 << 30)))
        )
        z = m.default_initial_window(spec, sim.series)
        g = m.grad_loglik(spec, th, z, sim.series)
        fd = m.finite_diff_grad(spec, th, z, sim.series)
        # floor 1e-4: central differences at step 1e-6 carry ~3e-10 absolute
        # noise, so a 1e-5 relative comparison needs |fd| well above that
        rel = float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-4)))
        worst = max(worst, rel)
        assert rel < 1e-5
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(f"criterion 2 PASS: 100 instances, worst rel err {worst:.2e}, {elapsed:.1f}s (< 30s)")


def test_criterion_3_embedding_identity():
    t0 = time.time()
    rng = np.random.default_rng(3003)
    for _ in range(1000):
        spec, th = oracles.random_instance(rng, max_order=4)
        k = int(rng.integers(0, 65))
        series = oracles.random_series(spec, rng, max(k, 1))
        z0 = oracles.random_window(spec, rng)
        obs = (
            list(zip(series.y, series.covariates))[:k]
            if spec.family == m.PARX
            else list(series.y)[:k]
        )
        z = z0
        for y in obs:
            z = m.embed_step(spec, th, z, y)
        assert m.project_latent(spec, z) == m.iterate_latent(spec, th, z0, obs)
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(f"criterion 3 PASS: 1000 fold-vs-iterate identities exact, {elapsed:.1f}s (< 5s)")


def test_criterion_4_condition_checker_soundness():
    t0 = time.time()
    rng = np.random.default_rng(4004)
    checked = 0
    while checked < 1000:
        k = int(rng.integers(1, 5))
        c = rng.uniform(-1.5, 1.5, k)
        if oracles.near_unit_circle_root(c, band=1e-6):
            continue
        assert m.in_unit_disk_stable(c) == oracles.winding_stable(c), c
        checked += 1

    spec = m.ModelSpec(family=m.LOGLIN, order=m.ModelOrder(1, 1))
    grid = np.linspace(-1.5, 1.5, 101)
    compared = 0
    for a in grid:
        for b in grid:
            if abs(abs(a) - 1.0) < 1e-6 or abs(abs(a + b) - 1.0) < 1e-6:
                continue
            verdict = m.check_loglin(spec, spec.params(0.0, [a], [b])).verdict
            expected = "Pass" if (abs(a) < 1.0 and abs(a + b) < 1.0) else "Fail"
            assert verdict == expected, (a, b)
            compared += 1
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(
        f"criterion 4 PASS: 1000 winding-oracle agreements, {compared} grid verdicts, "
        f"{elapsed:.1f}s (< 60s)"
    )


def test_criterion_5_nbin_stationary_mean():
    t0 = time.time()
    spec = m.ModelSpec(family=m.NBIN, order=m.ModelOrder(1, 1))
    th = spec.params(1.0, [0.3], [0.2], r=2.0)
    mu_x, mu_y = m.nbin_stationary_mean(spec, th)
    assert mu_x == pytest.approx(10.0 / 3.0, abs=1e-9)
    assert mu_y == pytest.approx(20.0 / 3.0, abs=1e-9)
    est = m.stationary_moment_estimate(spec, th, n=10**6, seed=505, batches=100)
    assert abs(est.mean_x - mu_x) < 3.0 * est.se_x
    assert abs(est.mean_y - mu_y) < 3.0 * est.se_y
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(
        f"criterion 5 PASS: mean_x {est.mean_x:.4f} vs {mu_x:.4f} (se {est.se_x:.4f}), "
        f"mean_y {est.mean_y:.4f} vs {mu_y:.4f} (se {est.se_y:.4f}), {elapsed:.1f}s (< 60s)"
    )


def test_criterion_6_geometric_forgetting():
    t0 = time.time()
    spec = m.ModelSpec(family=m.LOGLIN, order=m.ModelOrder(1, 1))
    th = spec.params(0.1, [0.5], [0.3])
    # wide start separation keeps the gap above float resolution through k = 60
    z1 = m.LatentWindow(x=(1e5,), u=())
    z2 = m.LatentWindow(x=(0.0,), u=())
    rng = np.random.default_rng(606)
    gaps = []
    for y in rng.poisson(2.0, 60):
        z1 = m.embed_step(spec, th, z1, int(y))
        z2 = m.embed_step(spec, th, z2, int(y))
        gaps.append(abs(m.project_latent(spec, z1) - m.project_latent(spec, z2)))
    slope = float(np.polyfit(np.arange(1, 61), np.log(gaps), 1)[0])
    assert abs(slope - math.log(0.5)) <= 0.01
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(f"criterion 6 PASS: decay slope {slope:.6f} vs ln(0.5) {math.log(0.5):.6f}, {elapsed:.1f}s")


def _mc_shrinkage(spec, theta_star):
    config = ExperimentConfig(
        spec=spec,
        theta_star=theta_star,
        ns=(500, 2000),
        replicates=50,
        seed=MC_SEED,
        fit_opts=FitOptions(starts=4),
    )
    rep = run_mc_consistency(config)
    assert rep.failure_fraction == 0.0
    rmse = {
        (c["n"], c["coord"]): c["rmse"] for c in rep.cells
    }
    for name in rep.coord_names:
        assert rmse[(2000, name)] < rmse[(500, name)], (spec.family, name, rmse)
    med = {}
    for n in (500, 2000):
        errs = np.array(rep.errors_per_replicate(n))
        med[n] = float(np.median(np.max(np.abs(errs), axis=1)))
    assert med[2000] <= 0.75 * med[500], (spec.family, med)
    return rmse, med


def test_criterion_7_monte_carlo_consistency():
    t0 = time.time()
    loglin = m.ModelSpec(family=m.LOGLIN, order=m.ModelOrder(1, 1))
    rmse1, med1 = _mc_shrinkage(loglin, loglin.params(0.1, [0.5], [0.3]))
    nbin = m.ModelSpec(family=m.NBIN, order=m.ModelOrder(1, 1))
    rmse2, med2 = _mc_shrinkage(nbin, nbin.params(1.0, [0.3], [0.2], r=2.0))
    elapsed = time.time() - t0
    assert elapsed < 900.0
    report(
        "criterion 7 PASS: RMSE shrinks per coordinate; median inf-error factors "
        f"loglin {med1[2000] / med1[500]:.3f}, nbin {med2[2000] / med2[500]:.3f} (<= 0.75), "
        f"{elapsed:.0f}s (< 900s)"
    )


def test_criterion_8_identifiability_gate():
    t0 = time.time()
    first = m.check_identifiable([0.3, 0.1], [1.0, -0.5])
    scaled = m.check_identifiable([0.3, 0.1], [3.0, -1.5])
    assert first.verdict == "Fail"
    assert scaled.verdict == "Fail"
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report(f"criterion 8 PASS: common-root instance Fails, scale-invariant, {elapsed:.2f}s")


def test_criterion_9_cli_determinism(tmp_path):
    t0 = time.time()
    base = [sys.executable, "-m", "odmlab.cli"]

    def run_twice(args, files):
        outs = []
        for tag in ("x", "y"):
            d = tmp_path / f"{args[0]}_{tag}"
            d.mkdir(exist_ok=True)
            proc = subprocess.run(base + args, capture_output=True, cwd=str(d))
            assert proc.returncode in (0, 3), proc.stderr.decode()
            payload = [proc.stdout]
            for f in files:
                payload.append(open(d / f, "rb").read())
            outs.append(payload)
        assert outs[0] == outs[1], args[0]

    sim_args = [
        "simulate", "--family", "loglin", "--omega", "0.1", "--a", "0.5", "--b", "0.3",
        "--n", "60", "--seed", "11", "--out", "series.csv",
    ]
    run_twice(sim_args, ["series.csv"])

    data = str(tmp_path / "data.csv")
    subprocess.run(
        base + sim_args[:-1] + [data], capture_output=True, check=True
    )

    run_twice(["check", "--family", "loglin", "--omega", "0.1", "--a", "0.5", "--b", "0.3"], [])
    run_twice(
        ["fit", "--family", "loglin", "--data", data, "--starts", "2", "--seed", "1",
         "--out", "fit.json"],
        ["fit.json"],
    )
    run_twice(
        ["loglik", "--family", "loglin", "--data", data, "--omega", "0.1",
         "--a", "0.5", "--b", "0.3"],
        [],
    )
    theta_file = tmp_path / "theta.json"
    theta_file.write_text(json.dumps({
        "family": "loglin", "order": {"p": 1, "q": 1},
        "theta_hat": {"omega": 0.1, "a1": 0.5, "b1": 0.3},
    }))
    run_twice(
        ["forecast", "--family", "loglin", "--data", data, "--theta-file", str(theta_file)],
        [],
    )
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "family": "loglin",
        "theta_star": {"omega": 0.1, "a": [0.5], "b": [0.3]},
        "n": [30, 60],
        "replicates": 2,
        "seed": 5,
        "fit": {"starts": 2, "guard_override": True, "max_evals": 300},
    }))
    for tag in ("m1", "m2"):
        d = tmp_path / tag
        proc = subprocess.run(
            base + ["mc-consistency", "--config", str(cfg), "--out-dir", str(d)],
            capture_output=True,
        )
        assert proc.returncode == 0, proc.stderr.decode()
    for name in ("consistency.json", "consistency.tsv"):
        assert (tmp_path / "m1" / name).read_bytes() == (tmp_path / "m2" / name).read_bytes()

    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(f"criterion 9 PASS: all six seeded subcommands byte-reproducible, {elapsed:.1f}s (< 60s)")
