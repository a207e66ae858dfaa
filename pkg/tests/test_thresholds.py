import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from rsmajam.channels import ScenarioConfig, channel_set_for
from rsmajam.metrics import PrecoderSlice, interference_matrix, jamming_power
from rsmajam.thresholds import (assemble_thresholds, closed_form_checks, feasibility_witness,
                                interference_threshold_psi, jamming_threshold, min_interference_sdp,
                                witness_precoders)

from conftest import crandn, random_psd


def jam_slice(f):
    Nt = len(f)
    return PrecoderSlice(np.zeros(Nt, complex), np.zeros((0, Nt), complex), f[None])


def test_jamming_threshold_values():
    R = np.diag([3.0, 1.0, 0.5, 0.0])
    assert jamming_threshold(0.5, 100, 2, 1, R) == pytest.approx(75.0)
    assert jamming_threshold(0.0, 100, 2, 1, R) == 0.0
    with pytest.raises(ValueError):
        jamming_threshold(1.2, 100, 2, 1, R)
    with pytest.raises(ValueError, match="semidefinite"):
        jamming_threshold(0.5, 100, 2, 1, np.diag([1.0, -1.0]))


@given(st.integers(0, 2**31), st.floats(0.0, 1.0))
def test_jamming_threshold_against_scipy_eigh(seed, rho):
    rng = np.random.default_rng(seed)
    R = random_psd(rng, 4)
    smax = scipy.linalg.eigh(R, eigvals_only=True)[-1]
    assert jamming_threshold(rho, 50, 3, 2, R) == pytest.approx(rho * 50 * smax / 6, rel=1e-10, abs=1e-12)


@given(st.integers(0, 2**31), st.sampled_from([0.45, 0.9]), st.floats(0.0, 1.0))
def test_witness_meets_threshold_and_budget(seed, rho, s2):
    rng = np.random.default_rng(seed)
    R = random_psd(rng, 4, rank=2)
    Phi = interference_matrix(crandn(rng, 4, 2), s2, 2)
    f = feasibility_witness(rho, 100, 2, 1, R, Phi, np.sqrt(s2), mu=0.0)
    J = jamming_threshold(rho, 100, 2, 1, R)
    assert jamming_power(R, jam_slice(f)) == pytest.approx(J, rel=1e-9, abs=1e-9)
    assert np.vdot(f, f).real <= 100 / 2 + 1e-9
    psi = interference_threshold_psi(rho, 100, 2, 1, R, Phi, 0.0, np.sqrt(s2))
    assert np.real(np.conj(f) @ Phi @ f) <= psi + 1e-9


@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_psi_bounded_by_largest_eigenvalue(seed, rho, s2):
    rng = np.random.default_rng(seed)
    R = random_psd(rng, 4)
    Phi = interference_matrix(crandn(rng, 4, 2), s2, 2)
    rep = closed_form_checks(R, Phi, rho=rho, Pt_bar=100, Np=4, L=1, mu=0.0)
    assert rep.psi_within_bound
    assert rep.psi >= 0


def test_psi_equality_when_principal_directions_align(rng):
    U = np.linalg.qr(crandn(rng, 4, 4))[0]
    R = U @ np.diag([4.0, 2.0, 1.0, 0.5]) @ U.conj().T
    Phi = U @ np.diag([3.0, 1.0, 0.2, 0.1]) @ U.conj().T
    rep = closed_form_checks(R, Phi, rho=1.0, Pt_bar=100, Np=8, L=1, sigma_pe2=0.1)
    assert rep.psi == pytest.approx(rep.bound, abs=1e-9)
    assert rep.bound == pytest.approx(100 * 3 / 8)


def test_null_space_branch_returns_mu(rng):
    # perfect PU CSIT with a two-antenna PU leaves a two-dimensional null space
    R = np.eye(4, dtype=complex)
    Phi = interference_matrix(crandn(rng, 4, 2), 0.0, 2)
    assert interference_threshold_psi(0.45, 100, 8, 1, R, Phi, 0.7, 0.0) == pytest.approx(0.7)
    f = feasibility_witness(0.45, 100, 8, 1, R, Phi, 0.0, mu=0.7)
    assert abs(np.real(np.conj(f) @ Phi @ f)) <= 1e-9
    assert jamming_power(R, jam_slice(f)) == pytest.approx(jamming_threshold(0.45, 100, 8, 1, R))
    # with any estimation error the aligned value is used instead
    assert interference_threshold_psi(0.45, 100, 8, 1, R, Phi, 0.7, 0.1) != pytest.approx(0.7)


def test_identity_covariance_closed_form_by_sdp():
    R = np.eye(4, dtype=complex)
    rng = np.random.default_rng(4)
    Mh = crandn(rng, 4, 2)
    Phi = interference_matrix(Mh, 0.25, 2)
    rep = closed_form_checks(R, M_hat=Mh, sigma_pe2=0.25, Nr=2, rho=0.45, Pt_bar=100, Np=8, L=1,
                             closed_form=True)
    assert rep.identity_value == pytest.approx(2.8125)
    sol = min_interference_sdp(R, Phi, 0.45 * 100 / 8, 100 / 8)
    assert sol.objective == pytest.approx(2.8125, abs=1e-5)


def test_identity_covariance_closed_form_preconditions():
    with pytest.raises(ValueError):
        closed_form_checks(2 * np.eye(4), np.eye(4), sigma_pe2=0.25, Nr=2, closed_form=True)
    with pytest.raises(ValueError):
        closed_form_checks(np.eye(4), np.eye(4), rho=1.0, sigma_pe2=0.25, Nr=2, closed_form=True)


# ---------------------------------------------------------------- assembled thresholds

def desk(**kw):
    base = dict(N=8, Sp=[[1, 5]], Pt_bar=100.0, seed=1)
    base.update(kw)
    return ScenarioConfig(**base)


def test_pilot_mode_thresholds():
    cfg = desk()
    cs = channel_set_for(cfg)
    th = assemble_thresholds(cfg, cs)
    assert np.flatnonzero(th.jam_mask[0]).tolist() == [0, 4]
    data = ~th.jam_mask[0]
    assert np.all(th.J_thr[0, data] == 0)
    assert np.allclose(th.I_thr[0, data], cfg.mu * cfg.L)
    for n in (0, 4):
        smax = scipy.linalg.eigh(cs.R[0, n], eigvals_only=True)[-1]
        assert th.J_thr[0, n] == pytest.approx(cfg.rho * cfg.Pt_bar * smax / 2)
        assert th.I_thr[0, n] == pytest.approx(th.psi[0, 0, n])


def test_barrage_spreads_over_all_subcarriers():
    cfg = desk(jamming="barrage")
    th = assemble_thresholds(cfg, channel_set_for(cfg))
    pilot = assemble_thresholds(desk(), channel_set_for(desk()))
    assert th.jam_mask.all()
    assert th.J_thr[0, 0] == pytest.approx(pilot.J_thr[0, 0] * 2 / 8)


def test_jamming_off_and_unconstrained():
    cfg = desk(jamming="off")
    th = assemble_thresholds(cfg, channel_set_for(cfg))
    assert not th.jam_mask.any() and np.all(th.J_thr == 0)
    assert np.allclose(th.I_thr, cfg.mu * cfg.L)
    cfg = desk(interference_constraints=False)
    th = assemble_thresholds(cfg, channel_set_for(cfg))
    assert np.all(np.isinf(th.I_thr))


def test_witness_precoders_are_feasible():
    cfg = desk()
    cs = channel_set_for(cfg)
    th = assemble_thresholds(cfg, cs)
    F = witness_precoders(cfg, cs, th)
    for n in (0, 4):
        f = F[0, n]
        assert jamming_power(cs.R[0, n], jam_slice(f)) == pytest.approx(th.J_thr[0, n], rel=1e-9)
        Phi = interference_matrix(cs.M_hat[0][n], cs.sigma_pe2, cfg.Nr[0])
        assert np.real(np.conj(f) @ Phi @ f) <= th.I_thr[0, n] + 1e-9
    assert np.all(F[0, ~th.jam_mask[0]] == 0)


def test_threshold_csv(tmp_path):
    cfg = desk()
    th = assemble_thresholds(cfg, channel_set_for(cfg))
    th.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "kind,index,n,threshold,branch"
    assert len(lines) == 1 + len(th.branch)
