import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from surfsim.analysis import (
    EffectiveModel,
    FitError,
    LifetimeParams,
    PowerLawFit,
    SaturationWarning,
    break_even,
    emit_outputs,
    fit_effective_alpha,
    fit_power_law,
    fit_report,
    fit_scale_factor,
    group_by_c,
    lifetime_grid,
    lifetime_ratio,
    p_from_times,
    predict_p_L,
)

A, XI, ALPHA = 6.5e5, 2.92, 0.872
PS = [1e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3]


def _series(a, xi, b=1.0, ps=PS):
    return [(p, a * (b * p) ** xi, 0.0) for p in ps]


@given(st.floats(1.0, 1e7), st.floats(1.0, 4.0))
def test_power_law_round_trip(a, xi):
    fit = fit_power_law(_series(a, xi))
    assert fit.A == pytest.approx(a, rel=1e-6) and fit.xi == pytest.approx(xi, rel=1e-8)
    assert fit.residual < 1e-18 and fit.n_points == 5


def test_identity_law():
    fit = fit_power_law([(p, p) for p in PS])
    assert fit.A == pytest.approx(1.0) and fit.xi == pytest.approx(1.0)


def test_fit_range_filters():
    pts = _series(A, XI) + [(0.05, 0.5, 0.01)]
    assert fit_power_law(pts).n_points == 5
    assert fit_power_law(pts, (1e-3, 1e-1)).xi < XI


def test_zero_points_warn_and_are_skipped():
    pts = [(5e-4, 0.0, 0.0)] + _series(A, XI) + [(1.2e-3, 0.0, 0.0)]
    with pytest.warns(UserWarning, match="p_L=0"):
        fit = fit_power_law(pts, (1e-4, 3e-3))
    assert fit.n_points == 5 and fit.xi == pytest.approx(XI)


def test_too_few_points():
    with pytest.raises(FitError):
        fit_power_law(_series(A, XI)[:2])
    with pytest.warns(UserWarning):
        with pytest.raises(FitError):
            fit_power_law([(1e-3, 0.0), (2e-3, 0.0), (3e-3, 1e-4)])


def test_weighted_fit():
    rng = np.random.default_rng(5)
    pts = [(p, pl * (1 + 0.01 * rng.standard_normal()), 0.01 * pl) for p, pl, _ in _series(A, XI)]
    fit = fit_power_law(pts, weighted=True)
    assert fit.xi == pytest.approx(XI, abs=0.1)
    with pytest.raises(FitError):
        fit_power_law(_series(A, XI), weighted=True)  # stderr zero everywhere


def test_binomial_noise_round_trip():
    # sampled counts around a known law; the fitted exponent stays within 3 sigma
    rng = np.random.default_rng(11)
    a, xi, n = 2000.0, 2.0, 200_000
    ps = np.geomspace(3e-3, 1e-2, 6)
    xis = []
    for _ in range(30):
        pts = []
        for p in ps:
            k = rng.binomial(n, a * p ** xi)
            pts.append((p, k / n, math.sqrt(k / n * (1 - k / n) / n)))
        xis.append(fit_power_law(pts, (3e-3, 1e-2)).xi)
    spread = np.std(xis)
    assert abs(np.mean(xis) - xi) < 3 * spread / math.sqrt(len(xis)) + 1e-3
    assert spread < 0.05


def test_fit_is_immutable():
    fit = fit_power_law(_series(A, XI))
    with pytest.raises(AttributeError):
        fit.xi = 3.0


@given(st.floats(0.5, 3.0))
def test_scale_factor(b):
    fit = PowerLawFit(A, XI, (1e-3, 3e-3), 0.0)
    assert fit_scale_factor(_series(A, XI, b), fit) == pytest.approx(b, rel=1e-9)


def _by_c(alpha_true, cs=(0.0, 0.25, 0.5, 0.75, 1.0)):
    return {c: _series(A, XI, 1 + alpha_true * c * c) for c in cs}


def test_alpha_recovered():
    fit = fit_power_law(_by_c(0.5)[0.0])
    model = fit_effective_alpha(_by_c(0.5), fit)
    assert model.alpha == pytest.approx(0.5, abs=1e-6)
    assert dict(model.B_values)[0.0] == pytest.approx(1.0)
    assert fit_effective_alpha(_by_c(0.0), fit).alpha == pytest.approx(0.0, abs=1e-9)


def test_alpha_needs_c0_and_three_values():
    fit = PowerLawFit(A, XI, (1e-3, 3e-3), 0.0)
    with pytest.raises(FitError):
        fit_effective_alpha(_by_c(0.5, (0.25, 0.5, 1.0)), fit)
    with pytest.raises(FitError):
        fit_effective_alpha(_by_c(0.5, (0.0, 1.0)), fit)


@given(st.floats(1e-5, 0.1), st.floats(0.0, 2.0))
def test_prediction_at_c0_is_the_fit(p, alpha):
    fit = PowerLawFit(A, XI, (1e-3, 3e-3), 0.0)
    assert predict_p_L(p, 0.0, alpha, fit) == pytest.approx(A * p ** XI, rel=1e-12)
    assert predict_p_L(p, 1.0, EffectiveModel(alpha), fit) >= predict_p_L(p, 0.0, alpha, fit)


def test_prediction_frozen():
    # mpmath at 40 digits: 6.5e5 * (1.872e-3)^2.92
    fit = PowerLawFit(A, XI, (1e-3, 3e-3), 0.0)
    assert predict_p_L(1e-3, 1.0, ALPHA, fit) == pytest.approx(0.007047683985435583, rel=1e-12)


def test_p_from_times():
    assert p_from_times(1e-3, 1.0) == pytest.approx(9.995001666250083e-4, rel=1e-13)
    assert p_from_times(1e-12, 1.0) == pytest.approx(1e-12, rel=1e-9)
    assert 98e-9 / 32.5e-6 == pytest.approx(0.0030154, rel=1e-4)
    with pytest.raises(ValueError):
        p_from_times(0.0, 1.0)


def test_lifetime_frozen():
    # mpmath at 40 digits with d=5 and 11 steps per round
    kw = dict(t_c=1.0, d=5, A=A, xi=XI, alpha=ALPHA)
    assert lifetime_ratio(LifetimeParams(t_g=1e-3, c=1.0, **kw)) == pytest.approx(7.815383331591152, rel=1e-10)
    assert lifetime_ratio(LifetimeParams(t_g=1e-3, c=0.0, **kw)) == pytest.approx(48.76220657287623, rel=1e-10)


@pytest.mark.parametrize("c,x", [
    (0.0, 0.007610119371322377), (0.25, 0.007016908117316108), (0.5, 0.005629669591317761),
    (0.75, 0.004136532154355892), (1.0, 0.0029222197294856205),
])
def test_break_even_frozen(c, x):
    assert break_even(c, A, XI, ALPHA, 5) == pytest.approx(x, rel=1e-9)


@given(st.floats(1e-5, 0.02), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_lifetime_decreases_with_c(x, c1, c2):
    lo, hi = sorted((c1, c2))
    kw = dict(t_g=x, t_c=1.0, d=5, A=A, xi=XI, alpha=ALPHA)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        assert lifetime_ratio(LifetimeParams(c=hi, **kw)) <= lifetime_ratio(LifetimeParams(c=lo, **kw))


def test_single_crossing():
    grid = lifetime_grid(np.geomspace(1e-5, 0.5, 400), np.linspace(0, 1, 9), A, XI, ALPHA, 5)
    for row in grid.ratio:
        above = row > 1
        assert above[0] and not above[-1]
        assert np.count_nonzero(above[1:] != above[:-1]) == 1


def test_saturation_warning():
    with pytest.warns(SaturationWarning):
        lifetime_ratio(LifetimeParams(t_g=0.2, t_c=1.0, d=5, c=1.0, A=A, xi=XI, alpha=ALPHA))


def test_lifetime_params_validation():
    with pytest.raises(ValueError):
        LifetimeParams(t_g=0.0, t_c=1.0, d=5, c=0.0, A=A, xi=XI, alpha=ALPHA)
    with pytest.raises(ValueError):
        LifetimeParams(t_g=1e-3, t_c=1.0, d=5, c=0.0, A=A, xi=XI, alpha=ALPHA, n_steps=0)


def test_no_break_even_in_bracket():
    with pytest.raises(ValueError):
        break_even(0.0, A, XI, ALPHA, 5, bracket=(1e-7, 1e-6))


def test_report_and_outputs(tmp_path):
    rows = []
    for c, pts in _by_c(0.8).items():
        for p, pl, _ in pts:
            rows.append(dict(d=3, p=p, c=c, rounds=3, shots=1000, p_L=pl, stderr=0.01 * pl,
                             wall_time_s=1.0, master_seed=0))
    by_c = group_by_c(rows)
    assert list(by_c) == [0.0, 0.25, 0.5, 0.75, 1.0]
    fit = fit_power_law(by_c[0.0])
    model = fit_effective_alpha(by_c, fit)
    report = fit_report(fit, model)
    assert report.startswith("A = ") and "\nxi = 2.92\n" in report and "alpha = 0.8" in report
    grid = lifetime_grid(np.geomspace(1e-4, 1e-2, 20), [0.0, 0.5, 1.0], A, XI, ALPHA, 5)
    files = emit_outputs(rows, fit, model, grid, tmp_path)
    names = {f.name for f in files}
    assert names == {"results.csv", "p_L_vs_p.png", "fit_report.txt", "B_vs_c.csv", "B_vs_c.png",
                     "lifetime.csv", "lifetime.png"}
    assert all((tmp_path / n).stat().st_size > 0 for n in names)
    assert (tmp_path / "p_L_vs_p.png").read_bytes()[:4] == b"\x89PNG"
    with pytest.raises(ValueError):
        emit_outputs([], None, None, None, tmp_path)
