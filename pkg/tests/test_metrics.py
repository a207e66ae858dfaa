import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsmajam.channels import ScenarioConfig, channel_set_for
from rsmajam.metrics import (COMMON, PrecoderSet, PrecoderSlice, fmt, interference_matrix,
                             interference_power, jamming_power, mmse_equalizer_and_error,
                             mse_with_equalizer, mutual_information_from_error, rate_report,
                             rates_from_information, saa_rate_estimates, stream_sinr,
                             wmse_and_optimal_weights)

from conftest import crandn, random_psd


def random_slice(rng, K=2, L=1, Nt=4, scale=1.0):
    return PrecoderSlice(scale * crandn(rng, Nt), scale * crandn(rng, K, Nt), scale * crandn(rng, L, Nt))


def sinr_by_enumeration(h, pre, target, N0):
    """Per-stream loop, written independently of the vectorized code."""
    streams = [("c", pre.p_c)] + [(k, pre.p[k]) for k in range(len(pre.p))] + \
              [("j", f) for f in pre.f]
    gain = {}
    for i, (name, q) in enumerate(streams):
        gain[i] = abs(np.sum(np.conj(h) * q)) ** 2
    if target == COMMON:
        sig = gain[0]
        den = sum(gain[i] for i in range(1, len(streams)))
    else:
        sig = gain[1 + target]
        den = sum(gain[i] for i in range(1, len(streams)) if i != 1 + target)
    return sig / (N0 + den)


# ---------------------------------------------------------------- SINR / MMSE

def test_sinr_hand_example():
    h = np.array([1.0, 0.0])
    pre = PrecoderSlice(np.array([2.0, 0]), np.array([[1.0, 0], [0, 1.0]]), np.array([[0.5, 0]]))
    # common: 4 / (1 + 1 + 0 + 0.25);  user 0: 1 / (1 + 0 + 0.25);  user 1: 0 / (...)
    assert stream_sinr(h, pre, COMMON, 1.0) == pytest.approx(4 / 2.25)
    assert stream_sinr(h, pre, 0, 1.0) == pytest.approx(1 / 1.25)
    assert stream_sinr(h, pre, 1, 1.0) == 0.0


@given(st.integers(0, 2**31), st.sampled_from([COMMON, 0, 1]), st.floats(1e-3, 10.0))
def test_sinr_matches_enumeration(seed, target, N0):
    rng = np.random.default_rng(seed)
    h, pre = crandn(rng, 4), random_slice(rng)
    assert stream_sinr(h, pre, target, N0) == pytest.approx(sinr_by_enumeration(h, pre, target, N0), rel=1e-12)


@given(st.integers(0, 2**31), st.sampled_from([COMMON, 0, 1]))
def test_mmse_error_is_inverse_one_plus_sinr(seed, target):
    rng = np.random.default_rng(seed)
    h, pre = crandn(rng, 4), random_slice(rng)
    g, eps = mmse_equalizer_and_error(h, pre, target, 0.5)
    assert eps == pytest.approx(1 / (1 + stream_sinr(h, pre, target, 0.5)), rel=1e-12)
    # the equalizer attains eps and every perturbation does worse
    assert mse_with_equalizer(h, pre, target, 0.5, g) == pytest.approx(eps, abs=1e-12)
    for d in (1e-3, -1e-3, 1e-3j, -1e-3j):
        assert mse_with_equalizer(h, pre, target, 0.5, g + d) > eps


def test_mse_monte_carlo(rng):
    h, pre = crandn(rng, 4), random_slice(rng, scale=0.5)
    g, eps = mmse_equalizer_and_error(h, pre, 0, 1.0)
    n = 200_000
    Q = pre.stacked()
    x = crandn(rng, n, Q.shape[0])
    y = x @ (Q @ np.conj(h)) + crandn(rng, n)
    # private stream of user 0 after removing the common stream
    y -= x[:, 0] * np.vdot(h, pre.p_c)
    err = np.abs(g * y - x[:, 1]) ** 2
    assert abs(err.mean() - eps) <= 4 * err.std() / np.sqrt(n)


def test_n0_must_be_positive(rng):
    with pytest.raises(ValueError):
        stream_sinr(crandn(rng, 4), random_slice(rng), COMMON, 0.0)


# ---------------------------------------------------------------- I / WMSE identities

def test_mutual_information_values():
    assert mutual_information_from_error(1.0) == 0.0
    assert mutual_information_from_error(0.25) == pytest.approx(2.0)
    assert mutual_information_from_error(1e-20 + 1e-300) == pytest.approx(-np.log2(1e-15))
    with pytest.raises(ValueError):
        mutual_information_from_error(0.0)
    with pytest.raises(ValueError):
        mutual_information_from_error(1.5)


def test_wmse_values():
    xi, w = wmse_and_optimal_weights(0.5)
    assert w == pytest.approx(2.0) and xi == pytest.approx(0.0)
    xi1, _ = wmse_and_optimal_weights(0.5, weight=1.0)
    assert xi1 == pytest.approx(0.5)
    with pytest.raises(ValueError):
        wmse_and_optimal_weights(0.5, weight=0.0)


@given(st.floats(1e-9, 1.0), st.floats(1e-3, 1e3))
def test_wmse_weight_forms(eps, w):
    xi_opt, w_opt = wmse_and_optimal_weights(eps)
    xi_w, _ = wmse_and_optimal_weights(eps, weight=w)
    assert w_opt == pytest.approx(1 / eps)
    assert xi_w == pytest.approx(w * eps - np.log2(w), rel=1e-12, abs=1e-12)
    assert xi_opt == pytest.approx(1 - mutual_information_from_error(eps), abs=1e-12)
    # with a base-2 log the convex form bottoms out at 1/(eps ln 2), not at 1/eps
    xi_min, _ = wmse_and_optimal_weights(eps, weight=1 / (eps * np.log(2)))
    assert xi_min <= min(xi_w, xi_opt) + 1e-12


# ---------------------------------------------------------------- jamming / interference

def test_jamming_power_monte_carlo(rng):
    R = random_psd(rng, 4) / 4
    pre = random_slice(rng)
    lam = jamming_power(R, pre)
    C = np.linalg.cholesky(R + 1e-12 * np.eye(4))
    n = 100_000
    g = crandn(rng, n, 4) @ C.T
    p = np.sum(np.abs(np.conj(g) @ pre.stacked().T) ** 2, axis=1)
    assert abs(p.mean() - lam) <= 4 * p.std() / np.sqrt(n)


def test_jamming_power_dimension_error(rng):
    with pytest.raises(ValueError):
        jamming_power(np.eye(3), random_slice(rng))


def test_interference_power_monte_carlo(rng):
    Mh, s2, Nr = crandn(rng, 4, 2), 0.2, 2
    pre = random_slice(rng)
    Phi, psi = interference_power(Mh, s2, Nr, pre)
    n = 50_000
    Mtrue = np.sqrt(1 - s2) * Mh + np.sqrt(s2) * crandn(rng, n, 4, 2)
    Q = pre.stacked()
    y = np.einsum("nia,si->nsa", np.conj(Mtrue), Q)
    p = np.sum(np.abs(y) ** 2, axis=(1, 2))
    assert abs(p.mean() - psi) <= 4 * p.std() / np.sqrt(n)
    assert np.allclose(Phi, Phi.conj().T)


def test_interference_matrix_limits(rng):
    Mh = crandn(rng, 4, 2)
    assert np.allclose(interference_matrix(Mh, 0.0, 2), Mh @ Mh.conj().T)
    assert np.allclose(interference_matrix(Mh, 1.0, 2), 2 * np.eye(4))


# ---------------------------------------------------------------- SAA and rate reports

def test_saa_rates_perfect_csi_equal_closed_form(rng):
    h = crandn(rng, 2, 4)
    pre = random_slice(rng)
    Ic, Ip = saa_rate_estimates(h, 0.0, pre, 3, rng, N0=0.7)
    for k in range(2):
        assert Ic[k] == pytest.approx(np.log2(1 + stream_sinr(h[k], pre, COMMON, 0.7)), rel=1e-12)
        assert Ip[k] == pytest.approx(np.log2(1 + stream_sinr(h[k], pre, k, 0.7)), rel=1e-12)


def test_saa_rates_multicarrier_shape(rng):
    cfg = ScenarioConfig(N=8, Sp=[[1, 5]])
    cs = channel_set_for(cfg)
    pre = PrecoderSet.zeros(cfg.K, cfg.L, cfg.N, cfg.Nt)
    pre.p[:] = 0.3
    Ic, Ip = saa_rate_estimates(cs.h_hat, cs.sigma_ie2, pre, 8, rng, cfg.N0)
    assert Ic.shape == Ip.shape == (cfg.K, cfg.N)
    assert np.all(Ic == 0)


def test_rates_from_information_example():
    I_c = np.array([[2.0, 1.0], [1.5, 3.0]])
    I_p = np.array([[1.0, 1.0], [0.5, 0.5]])
    c_bar = np.array([[1.0, 0.0], [0.5, 1.0]])
    rep = rates_from_information(I_c, I_p, c_bar)
    assert rep.R_common == pytest.approx((1.5 + 1.0) / 2)
    assert np.allclose(rep.R_private, [1.0, 0.5])
    assert np.allclose(rep.R_user, [1.5, 1.25])
    assert rep.R_sum == pytest.approx(1.25 + 1.5)
    with pytest.raises(ValueError, match="subcarrier 2"):
        rates_from_information(I_c, I_p, c_bar + np.array([[0, 0.5], [0, 0]]))


def test_rate_report_reproducible_and_csv(tmp_path):
    cfg = ScenarioConfig(N=8, Sp=[[1, 5]], saa_samples=8)
    cs = channel_set_for(cfg)
    pre = PrecoderSet.zeros(cfg.K, cfg.L, cfg.N, cfg.Nt)
    pre.p[:, :, 0] = 1.0
    a, b = rate_report(cfg, cs, pre), rate_report(cfg, cs, pre)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.R_sum > 0


def test_precoder_set_power_and_scaling(rng):
    pre = PrecoderSet(crandn(rng, 3, 2), crandn(rng, 2, 3, 2), crandn(rng, 1, 3, 2), np.zeros((2, 3)))
    assert pre.stacked().shape == (3, 4, 2)
    assert pre.scaled(2.0).total_power() == pytest.approx(4 * pre.total_power())
    manual = sum(np.sum(np.abs(a) ** 2) for a in (pre.p_c, pre.p, pre.f))
    assert pre.total_power() == pytest.approx(manual)


def test_fmt_is_stable():
    assert fmt(0.1) == "0.1"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(np.float32(2.5)) == "2.5"
