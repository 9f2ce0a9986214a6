import numpy as np
import pytest

from rvopt.alm_solver import (AlmConfig, SolveStatus, _alm_loop, load_trace,
                              save_trace, solve)
from rvopt.instances import GeneratorConfig, generate, warm_start
from rvopt.smoothing import SmoothingConfig
from rvopt.transcription import Transcription


class _BoundToy:
    """min x^2 s.t. x >= 1: optimum x*=1, multiplier mu*=2."""

    n_eq, n_ineq = 0, 1

    def residuals(self, x):
        return float(x[0] ** 2), np.zeros(0), np.array([1.0 - x[0]])

    def value_and_grad(self, x, lam, mu, rho):
        g = np.array([1.0 - x[0]])
        q = np.maximum(0.0, mu + rho * g)
        val = x[0] ** 2 + (q @ q - mu @ mu) / (2.0 * rho)
        return float(val), 2.0 * x - q

    def exact_violation(self, x):
        return float(max(0.0, 1.0 - x[0]))


class _EqualityToy:
    """min x^2 + y^2 s.t. x + y = 1: optimum (0.5, 0.5), multiplier -1."""

    n_eq, n_ineq = 1, 0

    def residuals(self, x):
        return float(x @ x), np.array([x.sum() - 1.0]), np.zeros(0)

    def value_and_grad(self, x, lam, mu, rho):
        h = np.array([x.sum() - 1.0])
        val = x @ x + lam @ h + 0.5 * rho * (h @ h)
        return float(val), 2.0 * x + (lam[0] + rho * h[0])

    def exact_violation(self, x):
        return float(abs(x.sum() - 1.0))


class TestAlmLoop:
    def test_inequality_toy_kkt(self):
        raw = _alm_loop(_BoundToy(), np.array([0.0]), AlmConfig(max_outer=20),
                        target=1e-10)
        assert raw.status is SolveStatus.CONVERGED
        assert raw.x[0] == pytest.approx(1.0, abs=1e-6)
        assert raw.mu[0] == pytest.approx(2.0, abs=1e-4)

    def test_equality_toy_kkt(self):
        raw = _alm_loop(_EqualityToy(), np.zeros(2), AlmConfig(max_outer=20),
                        target=1e-10)
        assert raw.status is SolveStatus.CONVERGED
        np.testing.assert_allclose(raw.x, [0.5, 0.5], atol=1e-7)
        assert raw.lam[0] == pytest.approx(-1.0, abs=1e-5)

    def test_inequality_multipliers_stay_nonnegative(self):
        raw = _alm_loop(_BoundToy(), np.array([5.0]), AlmConfig(max_outer=20),
                        target=1e-10)
        assert np.all(raw.mu >= 0.0)

    def test_trace_times_strictly_increase(self):
        raw = _alm_loop(_BoundToy(), np.array([0.0]), AlmConfig(max_outer=20),
                        target=1e-10)
        times = [p.wall_s for p in raw.trace]
        assert all(b > a for a, b in zip(times, times[1:]))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            AlmConfig(rho0=0.0)
        with pytest.raises(ValueError):
            AlmConfig(gamma=1.0)
        with pytest.raises(ValueError):
            AlmConfig(theta=1.0)
        with pytest.raises(ValueError):
            AlmConfig(inner_tol_start=1e-9, inner_tol_end=1e-2)

    def test_inner_tol_schedule_nonincreasing(self):
        cfg = AlmConfig()
        tols = [cfg.inner_tol(k) for k in range(1, cfg.max_outer + 1)]
        assert tols[0] == pytest.approx(1e-2)
        assert tols[-1] == pytest.approx(1e-8)
        assert all(b <= a for a, b in zip(tols, tols[1:]))


class TestSolve:
    def test_rejects_bad_layout(self):
        inst = generate(GeneratorConfig(seed=1, m_tasks=0))
        with pytest.raises(ValueError):
            solve(inst, SmoothingConfig(), AlmConfig(), np.zeros(3))

    def test_non_finite_start_reports_inner_failure(self):
        inst = generate(GeneratorConfig(seed=1, m_tasks=0))
        x0 = warm_start(inst)
        x0.x[0] = np.nan
        report = solve(inst, SmoothingConfig(), AlmConfig(), x0)
        assert report.status is SolveStatus.INNER_FAILURE

    def test_zero_task_fixture_solve(self):
        inst = generate(GeneratorConfig(seed=3, m_tasks=0))
        report = solve(inst, SmoothingConfig(), AlmConfig(), warm_start(inst))
        assert report.status is SolveStatus.CONVERGED
        assert report.breakdown.total <= 1e-6 + 1e-7
        # objective bounded below by the shortest possible ground tour
        assert report.objective > 0.1

    def test_feasibility_certificate(self):
        inst = generate(GeneratorConfig(seed=2, m_tasks=1))
        tr = Transcription(inst)
        report = solve(inst, SmoothingConfig(), AlmConfig(), warm_start(inst))
        if report.status is SolveStatus.CONVERGED:
            assert tr.violation_report(report.x_final.x).total <= 1e-6 + 1e-7
        # the report's breakdown is exactly the transcription metric
        assert report.breakdown.total == pytest.approx(
            tr.violation_report(report.x_final.x).total, abs=1e-15)

    def test_deterministic_traces(self):
        inst = generate(GeneratorConfig(seed=4, m_tasks=1))
        x0 = warm_start(inst)
        r1 = solve(inst, SmoothingConfig(), AlmConfig(), x0)
        r2 = solve(inst, SmoothingConfig(), AlmConfig(), x0)
        assert r1.status == r2.status
        assert np.array_equal(r1.x_final.x, r2.x_final.x)
        assert len(r1.trace) == len(r2.trace)
        for p1, p2 in zip(r1.trace, r2.trace):
            assert p1.objective == p2.objective
            assert p1.violation == p2.violation
            assert p1.rho == p2.rho
            assert p1.inner_iters == p2.inner_iters

    def test_violation_trend_mostly_nonincreasing(self):
        inst = generate(GeneratorConfig(seed=5, m_tasks=2))
        report = solve(inst, SmoothingConfig(), AlmConfig(), warm_start(inst))
        # skip the initial point: the first outer dives toward the objective
        viols = [p.violation for p in report.trace[1:]]
        assert viols[-1] <= viols[0] + 1e-12
        drops = sum(1 for a, b in zip(viols, viols[1:]) if b <= a * (1 + 1e-9))
        assert drops >= 0.8 * (len(viols) - 1)


class TestTraceFile:
    def test_round_trip(self, tmp_path):
        raw = _alm_loop(_BoundToy(), np.array([0.0]), AlmConfig(max_outer=20),
                        target=1e-10)
        path = tmp_path / "trace.csv"
        save_trace(path, raw.trace)
        loaded = load_trace(path)
        assert len(loaded) == len(raw.trace)
        for a, b in zip(raw.trace, loaded):
            assert a.wall_s == b.wall_s
            assert a.objective == b.objective
            assert a.violation == b.violation
            assert a.rho == b.rho
            assert (a.outer, a.inner_iters) == (b.outer, b.inner_iters)

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            load_trace(path)
