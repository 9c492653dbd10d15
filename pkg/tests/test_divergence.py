import numpy as np
import pytest
from hypothesis import given, strategies as st

from dannkit.datasets import DataError, MoonsConfig, gen_moons
from dannkit.divergence import (DEFAULT_C_GRID, PadReport, build_U, compute_pad, empirical_h_divergence,
                                pad_from_error, pad_on_representation, split_U)
from dannkit.net import DannParams
from dannkit.tensor import Rng


def test_default_grid():
    assert len(DEFAULT_C_GRID) == 10
    assert DEFAULT_C_GRID[0] == pytest.approx(1e-5) and DEFAULT_C_GRID[-1] == pytest.approx(1.0)


def test_build_U():
    rng = np.random.default_rng(0)
    U = build_U(rng.normal(size=(3, 2)), rng.normal(size=(2, 2)))
    assert len(U) == 5 and U.data.y.tolist() == [1, 1, 1, 0, 0]
    with pytest.raises(DataError):
        build_U(rng.normal(size=(3, 2)), rng.normal(size=(2, 3)))
    with pytest.raises(DataError):
        build_U(np.zeros((0, 2)), rng.normal(size=(2, 2)))


def test_h_divergence_plugin():
    assert empirical_h_divergence(0, 0) == 2
    assert empirical_h_divergence(0.5, 0.5) == 0
    assert empirical_h_divergence(0.1, 0.3) == pytest.approx(1.2)
    with pytest.raises(ValueError):
        empirical_h_divergence(1.2, 0)


def test_h_divergence_upper_bound_1d():
    """A trained discriminator's plug-in value never beats the best threshold classifier."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        s, t = rng.normal(0, 1, 8), rng.normal(0.7, 1, 7)
        pts = np.sort(np.r_[s, t])
        cuts = np.r_[pts[0] - 1, (pts[:-1] + pts[1:]) / 2, pts[-1] + 1]
        best = -np.inf
        for thr in cuts:
            for sign in (1, -1):
                eta_s = (sign * (s - thr) > 0)
                eta_t = (sign * (t - thr) > 0)
                best = max(best, empirical_h_divergence(eta_s.mean(), 1 - eta_t.mean()))
        w = rng.normal()
        eta_s, eta_t = (w * s > 0), (w * t > 0)
        assert empirical_h_divergence(eta_s.mean(), 1 - eta_t.mean()) <= best + 1e-12


@pytest.mark.parametrize("eps,pad", [(0.0, 2.0), (0.05, 1.8), (0.25, 1.0), (0.5, 0.0), (0.6, -0.4)])
def test_pad_arithmetic(eps, pad):
    assert pad_from_error(eps) == pytest.approx(pad, abs=1e-15)


def test_pad_report_invariants_and_json():
    rep = PadReport(1, [(0.1, 0.3), (1.0, 0.2)], 0.2, pad_from_error(0.2))
    assert PadReport.from_json(rep.to_json()) == rep
    with pytest.raises(ValueError):
        PadReport(1, [(0.1, 0.3)], 0.2, pad_from_error(0.2))
    with pytest.raises(ValueError):
        PadReport(1, [(0.1, 0.3)], 0.3, 0.5)


def test_split_parity_and_degenerate():
    rng = np.random.default_rng(0)
    U = build_U(rng.normal(size=(4, 2)), rng.normal(size=(3, 2)))
    a, b = split_U(U, Rng(0))
    assert len(a) == 4 and len(b) == 3
    with pytest.raises(DataError):
        split_U(build_U(rng.normal(size=(1, 2)), rng.normal(size=(1, 2))), Rng(0))


def test_identical_samples_low_pad():
    X = np.random.default_rng(5).normal(size=(200, 3))
    rep = compute_pad(X, X.copy(), seed=1)
    assert rep.pad_value <= 0.25


def test_separated_clouds_high_pad():
    rng = np.random.default_rng(6)
    S = rng.normal(0, 0.3, (100, 2)) + [3, 0]
    T = rng.normal(0, 0.3, (100, 2)) - [3, 0]
    assert compute_pad(S, T, seed=2).pad_value >= 1.8


def test_pad_symmetric_under_swap():
    rng = np.random.default_rng(7)
    for k in range(5):
        S, T = rng.normal(0, 1, (60, 3)), rng.normal(0.4, 1, (50, 3))
        a, b = compute_pad(S, T, seed=k), compute_pad(T, S, seed=k)
        assert a.pad_value == b.pad_value and a.per_C_errors == b.per_C_errors


def test_pad_on_representation_smoke_and_swap():
    S, T, _ = gen_moons(MoonsConfig(n_per_moon=50))
    p = DannParams.random_init(2, 6, Rng(0))
    raw, rep = compute_pad(S, T, seed=0), pad_on_representation(p, S, T, seed=0, tag="random")
    assert np.isfinite(raw.pad_value) and np.isfinite(rep.pad_value) and rep.representation_tag == "random"
    assert pad_on_representation(p, T, S, seed=0).pad_value == pad_on_representation(p, S, T, seed=0).pad_value


def test_pad_parallel_matches_serial():
    rng = np.random.default_rng(8)
    S, T = rng.normal(0, 1, (40, 3)), rng.normal(0.5, 1, (40, 3))
    assert compute_pad(S, T, seed=4, jobs=4) == compute_pad(S, T, seed=4)


def test_pad_errors():
    with pytest.raises(ValueError):
        compute_pad(np.ones((3, 2)), np.zeros((3, 2)), C_grid=[])
    with pytest.raises(DataError):
        compute_pad(np.ones((1, 2)), np.zeros((3, 2)))


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_pad_is_decreasing_affine_in_error(a, b):
    pa, pb = pad_from_error(a), pad_from_error(b)
    assert -2.0 <= pa <= 2.0
    assert (pa - pb) == pytest.approx(-4.0 * (a - b), abs=1e-12)
