"""Feasible jamming and interference thresholds for the precoder design.

The jamming threshold is a fraction rho of the largest jamming power an AU can
receive when the budget is split evenly over its pilot subcarriers.  The
interference threshold (psi) is the interference that the matching jamming
witness causes at a PU, relaxed to ``mu`` when the PU channel estimate is
perfect and a null-space direction can jam the AU on its own.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .conic import SdpProblem, hermitian_eig, sdp_solve
from .metrics import fmt, interference_matrix

RANK_TOL = 1e-9
REACH_SLACK = 1e-12


def _psd_eig(A, what):
    A = np.asarray(A, dtype=complex)
    w, V = hermitian_eig(A)
    if w[-1] < -1e-8 * max(1.0, abs(w[0])):
        raise ValueError(f"{what} is not positive semidefinite (min eigenvalue {w[-1]:.3g})")
    return w, V


def _numerical_rank(w):
    if w[0] <= 0:
        return 0
    return int(np.sum(w >= RANK_TOL * w[0]))


def jamming_threshold(rho, Pt_bar, Np_l, L, R):
    """rho * Pt_bar * sigma_max(R) / (Np_l * L)."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    w, _ = _psd_eig(R, "AU covariance")
    return float(rho * Pt_bar * max(w[0], 0.0) / (Np_l * L))


def _psi(rho, Pt_bar, Np_l, L, R, Phi, mu, sigma_pe):
    """psi value, the branch taken and (for the null-space branch) the index j."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    sR, U = _psd_eig(R, "AU covariance")
    lam, V = _psd_eig(Phi, "interference matrix")
    n_g = _numerical_rank(sR)
    n_m = _numerical_rank(lam)
    s_max = max(sR[0], 0.0)
    u_max = U[:, 0]
    # the rank cut only picks null-space candidates; the aligned value keeps
    # every eigenvalue so it equals the witness interference exactly
    overlap = np.abs(np.conj(V).T @ u_max) ** 2
    value = rho * Pt_bar / (Np_l * L) * float(np.sum(np.maximum(lam, 0.0) * overlap))
    if sigma_pe == 0 and s_max > 0:
        for j in range(n_m, len(lam)):
            vj = V[:, j]
            reach = float(np.sum(sR[:n_g] * np.abs(np.conj(U[:, :n_g]).T @ vj) ** 2)) / s_max
            if rho < reach - REACH_SLACK:
                return float(mu), "null-space", j
    return float(value), "aligned", None


def interference_threshold_psi(rho, Pt_bar, Np_l, L, R, Phi, mu, sigma_pe):
    """Interference threshold for one (AU, PU, subcarrier) triple.

    Parameters
    ----------
    rho, Pt_bar, Np_l, L : float
        Jamming strictness, power budget, pilot count of the AU, number of AUs.
    R : (Nt, Nt) array
        AU channel covariance.
    Phi : (Nt, Nt) array
        PU interference matrix.
    mu : float
        Value returned when a direction in the null space of Phi reaches the
        jamming target with less than the per-pilot budget.
    sigma_pe : float
        PU CSIT error level; the null-space test only runs when it is zero.
    """
    return _psi(rho, Pt_bar, Np_l, L, R, Phi, mu, sigma_pe)[0]


def feasibility_witness(rho, Pt_bar, Np_l, L, R, Phi=None, sigma_pe=None, mu=0.0):
    """Jamming precoder meeting the jamming threshold with equality.

    By default this is sqrt(rho Pt_bar / (Np_l L)) u_max.  When ``Phi`` and
    ``sigma_pe`` are given and psi takes the null-space branch, the witness is
    the selected null-space direction of Phi scaled to hit the threshold, so it
    causes no interference at all.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    sR, U = _psd_eig(R, "AU covariance")
    budget = rho * Pt_bar / (Np_l * L)
    f = np.sqrt(budget) * U[:, 0]
    if Phi is not None and sigma_pe is not None:
        _, branch, j = _psi(rho, Pt_bar, Np_l, L, R, Phi, mu, sigma_pe)
        if branch == "null-space":
            _, V = hermitian_eig(np.asarray(Phi, dtype=complex))
            vj = V[:, j]
            gain = float(np.real(np.conj(vj) @ R @ vj))
            f = np.sqrt(budget * max(sR[0], 0.0) / gain) * vj
    return f


@dataclass
class ClosedFormReport:
    bound: float                 # Pt_bar lambda_max(Phi) / (Np L)
    psi: float
    psi_within_bound: bool
    identity_value: float | None = None


def closed_form_checks(R, Phi=None, rho=0.45, Pt_bar=100.0, Np=8, L=1, *, M_hat=None,
                       sigma_pe2=None, Nr=None, mu=0.0, closed_form=False):
    """Closed-form reference values for one threshold computation.

    ``Phi`` may be passed directly or built from (M_hat, sigma_pe2, Nr).  With
    ``closed_form=True`` the minimum interference for an identity AU
    covariance, rho * sigma_pe2 * Nr * Pt_bar / (Np L), is included; that
    requires R = I, Nt > Nr and rho < 1.
    """
    R = np.asarray(R, dtype=complex)
    if Phi is None:
        if M_hat is None or sigma_pe2 is None or Nr is None:
            raise ValueError("need Phi or (M_hat, sigma_pe2, Nr)")
        Phi = interference_matrix(M_hat, sigma_pe2, Nr)
    lam, _ = _psd_eig(Phi, "interference matrix")
    bound = float(Pt_bar * lam[0] / (Np * L))
    sigma_pe = 0.0 if sigma_pe2 is None else float(np.sqrt(sigma_pe2))
    psi = interference_threshold_psi(rho, Pt_bar, Np, L, R, Phi, mu, sigma_pe)
    report = ClosedFormReport(bound, psi, psi <= bound + 1e-12)
    if closed_form:
        Nt = R.shape[0]
        if sigma_pe2 is None or Nr is None:
            raise ValueError("the identity-covariance value needs sigma_pe2 and Nr")
        if not np.allclose(R, np.eye(Nt), atol=1e-12) or not Nt > Nr or not rho < 1:
            raise ValueError("identity-covariance value requires R = I, Nt > Nr and rho < 1")
        report.identity_value = float(rho * sigma_pe2 * Nr * Pt_bar / (Np * L))
    return report


def min_interference_sdp(R, Phi, J_thr, power_cap, tol=1e-9):
    """Relaxed minimum interference of a single jamming precoder.

    minimize tr(S Phi)  s.t.  tr(S R) >= J_thr, tr(S) <= power_cap, S PSD.
    Returns the :class:`~rsmajam.conic.SdpSolution`.
    """
    R = np.asarray(R, dtype=complex)
    Nt = R.shape[0]
    prob = SdpProblem(np.asarray(Phi, dtype=complex),
                      [(R, ">=", float(J_thr)), (np.eye(Nt, dtype=complex), "<=", float(power_cap))])
    return sdp_solve(prob, tol=tol, max_iter=200)


@dataclass
class ThresholdSet:
    J_thr: np.ndarray          # (L, N); zero where AU l is not jammed
    I_thr: np.ndarray          # (M, N); inf when interference is unconstrained
    rho: float
    mu: float
    jam_mask: np.ndarray       # (L, N) subcarriers carrying a jamming constraint
    psi: np.ndarray = None     # (L, M, N) per-AU contributions
    branch: list = field(default_factory=list)   # rows (kind, index, n, value, branch)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "index", "n", "threshold", "branch"])
            for row in self.branch:
                w.writerow([row[0], row[1] + 1, row[2] + 1, fmt(row[3]), row[4]])


def assemble_thresholds(cfg, cs) -> ThresholdSet:
    """Jamming and interference thresholds on every subcarrier.

    Pilot subcarriers of AU l get J_thr from the AU covariance and contribute
    psi to each PU's threshold; every AU not jamming a subcarrier contributes
    ``mu`` there instead, so a pure data subcarrier is capped at mu * L.
    """
    L, M, N = cfg.L, cfg.M, cfg.N
    J = np.zeros((L, N))
    psi = np.full((L, M, N), float(cfg.mu))
    mask = np.zeros((L, N), dtype=bool)
    rows = []
    jamming_on = cfg.jamming != "off"
    for l in range(L):
        if not jamming_on:
            continue
        mask[l] = cfg.pilot_mask(l)
        Np = int(mask[l].sum())
        for n in np.flatnonzero(mask[l]):
            J[l, n] = jamming_threshold(cfg.rho, cfg.Pt_bar, Np, L, cs.R[l, n])
            rows.append(("J", l, n, J[l, n], "max-eigen"))
            for m in range(M):
                Phi = interference_matrix(cs.M_hat[m][n], cs.sigma_pe2, cfg.Nr[m])
                val, branch, _ = _psi(cfg.rho, cfg.Pt_bar, Np, L, cs.R[l, n], Phi, cfg.mu,
                                      float(np.sqrt(cs.sigma_pe2)))
                psi[l, m, n] = val
                rows.append(("psi", l * M + m, n, val, branch))
    I = psi.sum(axis=0)
    if not cfg.interference_constraints:
        I = np.full((M, N), np.inf)
    for m in range(M):
        for n in range(N):
            rows.append(("I", m, n, I[m, n], "sum" if mask[:, n].any() else "data"))
    return ThresholdSet(J, I, float(cfg.rho), float(cfg.mu), mask, psi, rows)


def witness_precoders(cfg, cs, th: ThresholdSet):
    """Jamming precoders (L, N, Nt) that meet every jamming threshold with equality."""
    F = np.zeros((cfg.L, cfg.N, cfg.Nt), dtype=complex)
    for l in range(cfg.L):
        Np = int(th.jam_mask[l].sum())
        for n in np.flatnonzero(th.jam_mask[l]):
            Phi = interference_matrix(cs.M_hat[0][n], cs.sigma_pe2, cfg.Nr[0]) if cfg.M == 1 else None
            F[l, n] = feasibility_witness(cfg.rho, cfg.Pt_bar, Np, cfg.L, cs.R[l, n], Phi,
                                          float(np.sqrt(cs.sigma_pe2)) if Phi is not None else None,
                                          cfg.mu)
    return F
