"""Quick invariant suite behind the ``selftest`` CLI subcommand.

A fast subset of the property checks from the test suite, written to run in
seconds with no pytest dependency: one PASS/FAIL line per check, process
exit code 0 only if everything held.
"""

from __future__ import annotations

import numpy as np

from . import harness, pressure, schemes, turbulence
from .levelset import heaviside, material_fields, FluidPair
from .stepper import SimConfig


def _check(name, fn, lines):
    try:
        fn()
        lines.append((name, True, ""))
    except AssertionError as exc:
        lines.append((name, False, str(exc)))
    except Exception as exc:  # noqa: BLE001 - report, do not crash the suite
        lines.append((name, False, f"{type(exc).__name__}: {exc}"))


def _weno_optimal_weights():
    w = schemes.weno_weights((0.0, 0.0, 0.0))
    assert np.allclose(w, (0.1, 0.3, 0.6), atol=1e-15), w


def _weno_constant_reconstruction():
    rng = np.random.default_rng(7)
    for _ in range(200):
        c = float(rng.uniform(-10, 10))
        sten = schemes.Stencil5((c,) * 5)
        w = schemes.weno_weights(schemes.weno_smoothness(sten))
        val = schemes.weno_combine(w, sten)
        assert abs(val - c) <= 1e-13 * max(1.0, abs(c)), (c, val)


def _weno_convexity():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(2000, 5))
    for row in data:
        w = schemes.weno_weights(schemes.weno_smoothness(
            schemes.Stencil5(tuple(row))))
        assert all(0.0 <= x <= 1.0 for x in w), w
        assert abs(sum(w) - 1.0) <= 1e-14, sum(w)


def _wale_properties():
    assert turbulence.wale_viscosity(np.zeros((3, 3)), 0.1) == 0.0
    shear = np.zeros((3, 3))
    shear[0, 1] = 3.7
    assert turbulence.wale_viscosity(shear, 0.1) == 0.0
    rng = np.random.default_rng(3)
    for _ in range(500):
        g = rng.normal(size=(3, 3))
        assert turbulence.wale_viscosity(g, 0.05) >= 0.0


def _heaviside_points():
    eps = 0.015
    assert heaviside(0.0, eps) == 0.5
    assert heaviside(eps, eps) == 1.0
    assert heaviside(-eps, eps) == 0.0
    rho, _ = material_fields(0.0, FluidPair(), eps)
    assert abs(rho - 500.625) < 1e-12, rho


def _restriction_prolongation():
    fine = np.arange(1.0, 9.0).reshape(2, 2, 2, order="F")
    coarse = pressure.restrict_field(fine)
    assert coarse.shape == (1, 1, 1)
    assert abs(coarse[0, 0, 0] - 4.5) < 1e-14


def _projection_small():
    cfg = SimConfig(case="tgv", grid=(8, 8, 8), steps=1, window=1,
                    enable_sgs=False)
    result = harness.run_benchmark(cfg)
    assert result.final_divergence <= 1e-6, result.final_divergence


CHECKS = [
    ("weno optimal weights on zero smoothness", _weno_optimal_weights),
    ("weno reproduces constants", _weno_constant_reconstruction),
    ("weno weights convex", _weno_convexity),
    ("wale zero shear / non-negative", _wale_properties),
    ("heaviside and material mapping", _heaviside_points),
    ("restriction / prolongation", _restriction_prolongation),
    ("one projected step is divergence free", _projection_small),
]


def run_selftest(out=print) -> bool:
    lines = []
    for name, fn in CHECKS:
        _check(name, fn, lines)
    ok = True
    for name, passed, detail in lines:
        status = "PASS" if passed else "FAIL"
        msg = f"[selftest] {status}  {name}"
        if detail and not passed:
            msg += f"  ({detail})"
        out(msg)
        ok = ok and passed
    return ok
