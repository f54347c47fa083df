import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccilab.flow import estimate_singular_time
from riccilab.functionals import divergence_integrals, doubling_bound_check, dyadic_decompose, sup_norms
from riccilab.geometry import round_sphere
from riccilab.metric_spaces import distortion_ledger
from riccilab.verification import (
    GAP_ENTRIES,
    GapEntry,
    GapReport,
    evolution_residual,
    gap_report,
    laplacian,
    moser_check,
    moser_series,
    residual_at,
    soliton_gallery,
)


class TestLaplacian:
    def test_first_eigenfunction(self):
        p = round_sphere(3, 1.0, 200)
        f = np.cos(np.pi * p.grid)
        np.testing.assert_allclose(laplacian(p, f), -3 * f, atol=1e-3)

    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_second_order(self, n):
        err = []
        for N in (50, 100, 200):
            p = round_sphere(n, 1.0, N)
            f = np.cos(np.pi * p.grid)
            err.append(np.max(np.abs(laplacian(p, f) + n * f)))
        assert math.log2(err[0] / err[1]) >= 1.9 and math.log2(err[1] / err[2]) >= 1.9

    def test_constants(self):
        p = round_sphere(4, 2.0, 100)
        np.testing.assert_allclose(laplacian(p, np.full(101, 3.0)), 0.0, atol=1e-12)


class TestResidual:
    def test_sphere(self, sphere_trace):
        series = evolution_residual(sphere_trace)
        assert series.worst() <= 1e-2
        assert series.reliable.all()
        assert np.all(series.l2 <= series.sup + 1e-15)

    def test_stride_order(self, sphere_trace):
        k = len(sphere_trace) // 2
        res = [residual_at(sphere_trace.subset([k - m, k, k + m]), 1)[0] for m in (4, 8, 16)]
        orders = np.log2(np.array(res[1:]) / np.array(res[:-1]))
        assert np.all(orders >= 1.9)

    def test_needs_neighbours(self, sphere_trace):
        with pytest.raises(ValueError):
            residual_at(sphere_trace, 0)
        with pytest.raises(ValueError):
            evolution_residual(sphere_trace.subset([0, 1]))

    def test_window(self, dumbbell_trace):
        series = evolution_residual(dumbbell_trace)
        assert series.worst(window=(0.25, 0.75)) <= series.worst()
        assert math.isnan(series.worst(window=(2.0, 3.0)))

    def test_fast_growth_is_unreliable(self, dumbbell_trace):
        k = len(dumbbell_trace) - 2
        m = min(k, 40)
        sub = dumbbell_trace.subset([k - m, k, k + 1])
        assert sub.Q[2] / sub.Q[0] >= 1.25
        assert residual_at(sub, 1)[2] is False


SPHERE_A0 = 2 * math.sqrt(3) / math.sqrt(math.sqrt(12) * 6)


class TestMoser:
    def test_sphere_value(self, sphere_trace):
        est = moser_series(sphere_trace)
        assert est
        for m in est:
            assert m.A0 == pytest.approx(SPHERE_A0, rel=1e-6)
        assert SPHERE_A0 == pytest.approx(0.7598, abs=1e-4)

    def test_refuses_window_before_start(self, sphere_trace):
        with pytest.raises(ValueError, match="before"):
            moser_check(sphere_trace, 0)

    def test_rescale_invariant(self, dumbbell_trace):
        tr = dumbbell_trace
        big = tr.rescaled(3.0)
        for k in range(len(tr) - 5, len(tr)):
            assert moser_check(big, k).A0 == pytest.approx(moser_check(tr, k).A0, rel=1e-9)


class TestGallery:
    def test_values(self):
        g = {e.name: e for e in soliton_gallery((3,))}
        s, c, f = g["sphere S^3"], g["cylinder S^2xR"], g["flat R^3"]
        assert s.sup_rm == pytest.approx(math.sqrt(12) / 4)
        assert s.sup_r == pytest.approx(1.5)
        assert s.gap == pytest.approx(math.sqrt(3) / 2)
        assert c.sup_rm == pytest.approx(1.0)
        assert c.gap == pytest.approx(1 / math.sqrt(2))
        assert f.gap == 0.0 and f.radius_sq is None

    @settings(max_examples=20, deadline=None)
    @given(st.integers(3, 12))
    def test_norm_relations(self, n):
        for e in soliton_gallery((n,)):
            assert e.sup_r**2 <= n * e.sup_ric**2 * (1 + 1e-12)
            assert e.gap == min(math.sqrt(e.sup_rm * e.sup_r), e.sup_ric)
            assert (e.gap > 0) == (e.sup_rm > 0)


@pytest.fixture(scope="module")
def sphere_report(sphere_trace):
    tr = sphere_trace
    fit = estimate_singular_time(tr)
    series = sup_norms(tr, fit.T_hat)
    dec = dyadic_decompose(tr)
    return gap_report(tr, series, dec, fit.residual, doubling_bound_check(tr, dec),
                      divergence_integrals(tr, fit.T_hat),
                      distortion_ledger(tr, tr.scenario.pairs, stride=200),
                      moser_series(tr), None, soliton_gallery())


class TestGapReport:
    def test_entries_in_order(self, sphere_report):
        assert [e.name for e in sphere_report.entries] == list(GAP_ENTRIES)
        for e in sphere_report.entries:
            assert e.statement == GAP_ENTRIES[e.name]

    def test_sphere_values(self, sphere_report):
        r = sphere_report
        assert r.T_hat == pytest.approx(0.25, rel=1e-6)
        assert r["rm_rate_floor"].value == pytest.approx(math.sqrt(3) / 2, rel=1e-4)
        assert r["rm_rate_floor"].verdict == "pass"
        assert r["ric_rate"].verdict == "pass"
        assert r["scalar_rate"].value == pytest.approx(1.5, rel=1e-4)
        assert r["scalar_rate"].verdict == "reported"
        assert r["moser_A0"].value == pytest.approx(SPHERE_A0, rel=1e-6)
        assert r["soliton_gap"].verdict == "pass"
        assert r["kappa"].value is None
        assert not r.hard_fail

    def test_json_round_trip(self, sphere_report):
        text = sphere_report.to_json()
        json.loads(text)
        assert GapReport.from_json(text) == sphere_report

    def test_without_T_hat(self, sphere_trace):
        r = gap_report(sphere_trace, sup_norms(sphere_trace), dyadic_decompose(sphere_trace))
        assert r.T_hat is None
        for name in ("rm_rate_floor", "ric_rate", "sqrt_OQ_rate", "scalar_rate"):
            assert r[name].value is None and r[name].verdict == "reported"
        assert r["doubling_gap"].value is not None

    def test_poor_fit_drops_rates(self, sphere_trace):
        r = gap_report(sphere_trace, sup_norms(sphere_trace, 0.25), dyadic_decompose(sphere_trace),
                       fit_residual=0.2)
        assert r.T_hat is None and r["rm_rate_floor"].value is None

    def test_failed_verdict_is_hard(self, sphere_report):
        bad = GapReport(sphere_report.T_hat, sphere_report.fit_residual, sphere_report.status,
                        tuple(GapEntry(e.name, e.statement, e.value, e.threshold,
                                       "fail" if e.name == "doubling_bound" else e.verdict, e.details)
                              for e in sphere_report.entries))
        assert bad.hard_fail

    def test_rejects_missing_entries(self, sphere_report):
        with pytest.raises(ValueError, match="every"):
            GapReport(None, None, "completed", sphere_report.entries[1:])

    def test_rejects_unknown_verdict(self):
        with pytest.raises(ValueError, match="verdict"):
            GapEntry("kappa", "", None, None, "maybe")
