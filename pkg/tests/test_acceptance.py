"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a single ``[acceptance] C<k> PASS`` line (visible with
``pytest -s``); the strong-scaling criterion states an eight-core host as
its premise and is skipped with an explicit reason on smaller machines,
with its report-schema assertions kept in an unconditional companion test.
"""

import math
import os
import time

import numpy as np
import pytest

from lesbench import cases as cases_mod
from lesbench import schemes
from lesbench.exchange import NullTransport
from lesbench.harness import run_benchmark, scaling_table, speedup
from lesbench.levelset import (FluidPair, LsmWorkspace, ReinitConfig,
                               heaviside, material_fields, reinitialize)
from lesbench.mesh import build_decomposition
from lesbench.stepper import SimConfig
from lesbench.turbulence import wale_viscosity


def _announce(num, detail):
    print(f"\n[acceptance] C{num} PASS  {detail}")


def _divergence_diag(stepper, state, plan, sub, transport):
    return stepper.post_step_divergence(state.fields)


@pytest.fixture(scope="module")
def cavity32():
    cfg = SimConfig(case="cavity", grid=(32, 32, 32), steps=50, window=40)
    t0 = time.perf_counter()
    result = run_benchmark(cfg, diagnostics=_divergence_diag)
    return result, time.perf_counter() - t0


class TestC1DivergenceFreeProjection:
    def test_every_step_divergence_free(self, cavity32):
        result, elapsed = cavity32
        divs = result.diagnostics
        assert len(divs) == 50
        worst = max(divs)
        assert worst <= 1.0e-6
        assert elapsed < 60.0
        _announce(1, f"cavity 32^3, 50 steps: max|div u| = {worst:.2e} "
                     f"<= 1e-6 every step ({elapsed:.1f}s)")


class TestC2SchemeOrders:
    RESOLUTIONS = (32, 64, 128)

    def _orders(self, evaluate):
        errors = []
        for n in self.RESOLUTIONS:
            dx = 2 * math.pi / n
            worst = 0.0
            for i in range(n):
                worst = max(worst, abs(evaluate(i, dx) - math.cos(i * dx)))
            errors.append(worst)
        return [math.log2(errors[k] / errors[k + 1]) for k in range(2)]

    def test_cd4_fourth_order(self):
        def ev(i, dx):
            sten = schemes.Stencil5(
                tuple(math.sin((i + k) * dx) for k in range(-2, 3)), dx)
            return schemes.cd4_derivative(sten)
        orders = self._orders(ev)
        assert all(abs(o - 4.0) <= 0.3 for o in orders)
        _announce(2, f"CD4 orders {[round(o, 2) for o in orders]} within "
                     "4.0 +- 0.3")

    def test_weno5_order(self):
        def ev(i, dx):
            samples = [math.sin((i + k) * dx) for k in range(-3, 4)]
            return schemes.weno5_derivative(samples, 1.0, dx)
        orders = self._orders(ev)
        assert all(o >= 4.5 for o in orders)
        _announce(2, f"WENO5 orders {[round(o, 2) for o in orders]} >= 4.5")

    def test_diffusive_fourth_order(self):
        errors = []
        for n in self.RESOLUTIONS:
            dx = 2 * math.pi / n
            worst = 0.0
            for i in range(n):
                f = [math.sin((i + k) * dx) for k in range(-2, 3)]
                d2 = (-f[4] + 16 * f[3] - 30 * f[2] + 16 * f[1] - f[0]) \
                    / (12 * dx * dx)
                worst = max(worst, abs(d2 + math.sin(i * dx)))
            errors.append(worst)
        orders = [math.log2(errors[k] / errors[k + 1]) for k in range(2)]
        assert all(abs(o - 4.0) <= 0.3 for o in orders)
        _announce(2, f"diffusive stencil orders {[round(o, 2) for o in orders]}"
                     " within 4.0 +- 0.3")


class TestC3WenoAlgebra:
    def test_optimal_weights_exact(self):
        w = schemes.weno_weights((0.0, 0.0, 0.0))
        assert w == (0.1, 0.3, 0.6)

    def test_constant_reconstruction(self, rng):
        worst = 0.0
        for c in rng.uniform(-10.0, 10.0, size=500):
            sten = schemes.Stencil5((c,) * 5)
            w = schemes.weno_weights(schemes.weno_smoothness(sten))
            val = schemes.weno_combine(w, sten)
            worst = max(worst, abs(val - c) / max(1.0, abs(c)))
        assert worst <= 1.0e-14

    def test_convexity_on_1e5_random_stencils(self, rng):
        vals = rng.normal(scale=3.0, size=(100_000, 5))
        fm2, fm1, f0, fp1, fp2 = (vals[:, k] for k in range(5))
        k13 = 13.0 / 12.0
        b1 = k13 * (fm2 - 2 * fm1 + f0) ** 2 \
            + 0.25 * (fm2 - 4 * fm1 + 3 * f0) ** 2
        b2 = k13 * (f0 - 2 * fp1 + fp2) ** 2 \
            + 0.25 * (3 * f0 - 4 * fp1 + fp2) ** 2
        b3 = k13 * (fm1 - 2 * f0 + fp1) ** 2 + 0.25 * (fm1 - fp1) ** 2
        a1 = 0.1 / (b1 + 1e-6) ** 2
        a2 = 0.3 / (b2 + 1e-6) ** 2
        a3 = 0.6 / (b3 + 1e-6) ** 2
        total = a1 + a2 + a3
        sums = a1 / total + a2 / total + a3 / total
        assert np.max(np.abs(sums - 1.0)) <= 1.0e-14
        assert (a1 / total >= 0).all() and (a3 / total <= 1).all()
        _announce(3, "optimal weights exact, constants to 1e-14, "
                     "convex on 1e5 random stencils")


class TestC4Reinitialization:
    GRID = (64, 16, 16)

    def _env(self, slope):
        import sys
        sys.path.insert(0, os.path.dirname(__file__))
        from test_levelset import phi_env
        spacing = (1.0 / 64,) * 3
        return phi_env(self.GRID, spacing, x0=0.5, slope=slope)

    @pytest.mark.parametrize("slope", [1.0, 2.0])
    def test_converges_within_budget(self, slope):
        plan, sub, fields, refresh = self._env(slope)
        ws = LsmWorkspace(fields.shape)
        cfg = ReinitConfig(cfl=0.5, max_iterations=15, residual_tol=5.0e-3)
        steps, res = reinitialize(fields, plan.grid.spacing, cfg, ws,
                                  refresh, NullTransport())
        assert steps <= 15
        assert res <= 5.0e-3
        if slope == 2.0:
            _announce(4, f"planar and stretched-planar reinit on 64x16x16: "
                         f"residual {res:.1e} <= 5e-3 in <= 15 iterations")


class TestC5HeavisideMaterials:
    def test_exact_points(self):
        eps = 0.015
        assert heaviside(0.0, eps) == 0.5
        assert heaviside(eps, eps) == 1.0
        assert heaviside(-eps, eps) == 0.0
        rho, _ = material_fields(0.0, FluidPair(), eps)
        assert rho == pytest.approx(500.625, abs=1e-12)
        _announce(5, "H(0)=0.5, H(+-eps) exact, rho(phi=0)=500.625")


class TestC6TaylorGreen:
    @pytest.mark.parametrize("n", [32, 64])
    def test_initial_energy(self, n):
        case = cases_mod.make_case(SimConfig(case="tgv", grid=(n, n, n)))
        plan = build_decomposition(case.grid, (1, 1, 1), case.ghost_width,
                                   case.boundary_kinds)
        sub = plan.subdomains[0]
        state = cases_mod.init_state(case, plan, sub)
        ke = cases_mod.kinetic_energy(state.fields, sub, NullTransport(),
                                      plan.grid.cell_count)
        assert abs(ke - 0.125) <= 1.0e-12

    @pytest.mark.slow
    def test_energy_monotone_decay_64(self):
        def ke(stepper, state, plan, sub, transport):
            return cases_mod.kinetic_energy(state.fields, sub, transport,
                                            plan.grid.cell_count)
        cfg = SimConfig(case="tgv", grid=(64, 64, 64), steps=50, window=40)
        result = run_benchmark(cfg, diagnostics=ke)
        energies = [0.125] + result.diagnostics
        drops = [a - b for a, b in zip(energies, energies[1:])]
        assert all(d > 0.0 for d in drops)
        _announce(6, f"TGV initial KE exact at 32^3/64^3; KE strictly "
                     f"decreasing over 50 steps at 64^3 "
                     f"(final {energies[-1]:.6f})")


@pytest.mark.slow
class TestC7SolitaryWave:
    def test_crest_speed(self):
        spec = cases_mod.WaveSpec()

        def crest(stepper, state, plan, sub, transport):
            return (state.t,
                    cases_mod.wave_crest_position(state.fields, plan, sub,
                                                  transport))

        cfg = SimConfig(case="wave", steps=2000, window=40)
        t0 = time.perf_counter()
        result = run_benchmark(cfg, diagnostics=crest)
        elapsed = time.perf_counter() - t0
        samples = np.array(result.diagnostics)
        ts, xs = samples[:, 0], samples[:, 1]
        np.savetxt("/tmp/wave_crest_samples.csv",
                   samples, delimiter=",", header="t,crest_x")
        # fit over the free-propagation window: the Boussinesq inflow pulse
        # (width ~1/(k c) in time) keeps feeding the hump until ~1.5 s, and
        # while it grows the apparent maximum lags the true crest
        sel = ts >= 1.4
        slope, intercept = np.polyfit(ts[sel], xs[sel], 1)
        c = spec.celerity
        rel = abs(slope - c) / c
        assert rel <= 0.05, (slope, c)
        # the wave is visible in phi: the crest leaves the generation zone
        # and keeps travelling through the fit window
        assert xs[-1] > 2.0
        assert xs[-1] - xs[sel][0] > 0.5
        _announce(7, f"crest speed {slope:.3f} m/s vs c={c:.3f} "
                     f"({100 * rel:.1f}% <= 5%), run {elapsed / 60:.0f} min")


class TestC8DecompositionInvariance:
    def test_bit_identical_1_vs_8_workers(self):
        base = dict(case="cavity", grid=(32, 32, 32), steps=10, window=8)
        single = run_benchmark(SimConfig(**base, topology=(1, 1, 1)),
                               collect_fields=True)
        split = run_benchmark(SimConfig(**base, topology=(2, 2, 2)),
                              collect_fields=True)
        for name in ("u", "v", "w", "p"):
            np.testing.assert_array_equal(single.fields[name],
                                          split.fields[name], err_msg=name)
        _announce(8, "cavity 32^3, 10 steps: u, v, w, p bit-identical on "
                     "1 vs 2x2x2 workers")


class TestC9StrongScaling:
    @pytest.mark.slow
    @pytest.mark.skipif(os.cpu_count() < 8,
                        reason="criterion premises an 8-core desk machine; "
                               f"this host has {os.cpu_count()} core(s)")
    def test_speedup_on_eight_cores(self):
        reports = []
        for topo in ((1, 1, 1), (2, 1, 1), (2, 2, 1), (2, 2, 2)):
            cfg = SimConfig(case="cavity", grid=(128, 128, 128), steps=50,
                            window=40, topology=topo)
            reports.append(run_benchmark(cfg).report)
        times = [r.averages()["T_TT"] for r in reports]
        assert all(b <= a for a, b in zip(times, times[1:]))
        s8 = speedup(times[0], times[-1])
        assert s8 >= 3.0
        rows = scaling_table(reports, baseline="serial")
        assert [r["n"] for r in rows] == [1, 2, 4, 8]
        _announce(9, f"cavity 128^3 scaling 1->8 workers: T_TT {times}, "
                     f"S_8 = {s8:.2f} >= 3")

    def test_report_schema_and_table(self):
        # the schema half of the criterion runs everywhere: per-phase
        # breakdown fractions and communication fraction are emitted and a
        # scaling table assembles from same-case reports
        reports = []
        for topo in ((1, 1, 1), (2, 2, 2)):
            cfg = SimConfig(case="cavity", grid=(32, 32, 32), steps=8,
                            window=5, topology=topo)
            reports.append(run_benchmark(cfg).report)
        for rep in reports:
            frac = rep.breakdown_fractions()
            assert set(frac) == {"T_LS", "T_CD", "T_P", "T_up"}
            assert 0.0 <= sum(frac.values()) <= 1.02
            assert 0.0 <= rep.comm_fraction() <= 1.0
        rows = scaling_table(reports, baseline="serial")
        assert rows[0]["n"] == 1 and rows[1]["n"] == 8
        assert rows[1]["S_n"] > 0.0
        _announce(9, "scaling report schema: breakdown + comm fractions, "
                     "table rows n/T_n/S_n/E emitted "
                     "(8-core speedup criterion gated on host cores)")


class TestC10WaleProperties:
    def test_degenerate_gradients(self):
        assert wale_viscosity(np.zeros((3, 3)), 0.1) == 0.0
        shear = np.zeros((3, 3))
        shear[0, 1] = 7.3
        assert wale_viscosity(shear, 0.1) == 0.0

    def test_1e5_random_gradients_non_negative(self, rng):
        g = rng.normal(size=(100_000, 3, 3))
        # vectorised WALE mirror of the scalar formula
        sbar = 0.5 * (g + np.transpose(g, (0, 2, 1)))
        g2 = np.einsum("nik,nkj->nij", g, g)
        tr = np.trace(g2, axis1=1, axis2=2)
        sd = 0.5 * (g2 + np.transpose(g2, (0, 2, 1)))
        sd[:, range(3), range(3)] -= tr[:, None] / 3.0
        sdsd = np.sum(sd * sd, axis=(1, 2))
        ss = np.sum(sbar * sbar, axis=(1, 2))
        denom = ss ** 2.5 + sdsd ** 1.25
        nut = np.where(denom < 1e-30, 0.0,
                       (0.46 * 0.1) ** 2 * sdsd ** 1.5
                       / np.where(denom < 1e-30, 1.0, denom))
        assert (nut >= 0.0).all()
        # cross-check a sample against the reference implementation
        for k in range(0, 100_000, 9973):
            assert nut[k] == pytest.approx(wale_viscosity(g[k], 0.1),
                                           rel=1e-12, abs=1e-300)
        _announce(10, "WALE: zero for quiescent/pure shear, non-negative "
                      "on 1e5 random gradients")


class TestC11RunProtocol:
    def test_fifty_steps_window_forty(self, cavity32):
        result, _ = cavity32
        rep = result.report
        assert rep.steps == 50 and len(rep.records) == 50
        window = rep._window_records()
        assert len(window) == 40
        avg = rep.averages()
        manual = sum(r.t_total for r in rep.records[-40:]) / 40.0
        assert avg["T_TT"] == pytest.approx(manual)
        parts = avg["T_LS"] + avg["T_CD"] + avg["T_P"] + avg["T_up"]
        assert parts <= 1.02 * avg["T_TT"]
        _announce(11, f"50 steps, averages over last 40; phase sum "
                      f"{parts:.4f}s <= 1.02 x T_TT {avg['T_TT']:.4f}s")
