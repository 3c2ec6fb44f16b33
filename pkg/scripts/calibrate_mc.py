"""One-off calibration run for the Monte Carlo consistency gate.

Runs the exact configuration the acceptance suite uses and prints the
per-coordinate RMSE table plus the median max-error shrink factors, so the
master seed can be frozen with known margins.
"""

import sys
import time

import numpy as np

from odmlab.experiment import ExperimentConfig, run_mc_consistency
from odmlab.fit import FitOptions
from odmlab.model import ModelOrder, ModelSpec


def summarize(report, label):
    print(f"== {label}")
    for n in report.ns:
        errs = np.array(report.errors_per_replicate(n))
        med_inf = float(np.median(np.max(np.abs(errs), axis=1)))
        print(f"  n={n}: replicates ok={errs.shape[0]}, median inf-err={med_inf:.4f}")
        for j, name in enumerate(report.coord_names):
            cell = next(c for c in report.cells if c["n"] == n and c["coord"] == name)
            print(f"    {name}: bias={cell['bias']:+.4f} rmse={cell['rmse']:.4f}")
    n0, n1 = report.ns[0], report.ns[-1]
    e0 = np.array(report.errors_per_replicate(n0))
    e1 = np.array(report.errors_per_replicate(n1))
    m0 = float(np.median(np.max(np.abs(e0), axis=1)))
    m1 = float(np.median(np.max(np.abs(e1), axis=1)))
    print(f"  shrink factor median inf-err: {m1 / m0:.3f} (need <= 0.75)")
    for j, name in enumerate(report.coord_names):
        r0 = next(c for c in report.cells if c["n"] == n0 and c["coord"] == name)["rmse"]
        r1 = next(c for c in report.cells if c["n"] == n1 and c["coord"] == name)["rmse"]
        flag = "OK " if r1 < r0 else "BAD"
        print(f"  {flag} rmse ratio {name}: {r1 / r0:.3f}")


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 20250801
    fit_opts = FitOptions(starts=4)
    t0 = time.time()
    loglin = ModelSpec(family="loglin", order=ModelOrder(1, 1))
    rep1 = run_mc_consistency(
        ExperimentConfig(
            spec=loglin,
            theta_star=loglin.params(0.1, [0.5], [0.3]),
            ns=(500, 2000),
            replicates=50,
            seed=seed,
            fit_opts=fit_opts,
        )
    )
    summarize(rep1, f"loglin seed={seed} ({time.time() - t0:.0f}s)")
    t1 = time.time()
    nbin = ModelSpec(family="nbin", order=ModelOrder(1, 1))
    rep2 = run_mc_consistency(
        ExperimentConfig(
            spec=nbin,
            theta_star=nbin.params(1.0, [0.3], [0.2], r=2.0),
            ns=(500, 2000),
            replicates=50,
            seed=seed,
            fit_opts=fit_opts,
        )
    )
    summarize(rep2, f"nbin seed={seed} ({time.time() - t1:.0f}s)")
    print(f"total {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
