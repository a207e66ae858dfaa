"""Per-subcarrier link metrics: SINRs, MMSE errors, WMSEs, jamming and interference
power, SAA rate estimates and rate reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channels import conditional_samples, substream

EPS_FLOOR = 1e-15
COMMON = "common"


def fmt(x):
    """Fixed float formatting used by every CSV writer (byte-stable output)."""
    return f"{float(x):.12g}"


class PrecoderSlice(NamedTuple):
    """Precoders of one subcarrier: p_c (Nt,), p (K, Nt), f (L, Nt)."""

    p_c: np.ndarray
    p: np.ndarray
    f: np.ndarray

    def stacked(self):
        return np.vstack([self.p_c[None], self.p, self.f])


@dataclass
class PrecoderSet:
    """Common, private and jamming precoders for every subcarrier plus common-rate shares."""

    p_c: np.ndarray      # (N, Nt)
    p: np.ndarray        # (K, N, Nt)
    f: np.ndarray        # (L, N, Nt)
    c_bar: np.ndarray    # (K, N)

    @classmethod
    def zeros(cls, K, L, N, Nt):
        return cls(np.zeros((N, Nt), complex), np.zeros((K, N, Nt), complex),
                   np.zeros((L, N, Nt), complex), np.zeros((K, N)))

    @property
    def dims(self):
        K, N, Nt = self.p.shape
        return K, self.f.shape[0], N, Nt

    def at(self, n) -> PrecoderSlice:
        return PrecoderSlice(self.p_c[n], self.p[:, n], self.f[:, n])

    def stacked(self):
        """(N, 1+K+L, Nt) array of [p_c, p_1..p_K, f_1..f_L] per subcarrier."""
        return np.concatenate([self.p_c[:, None], np.swapaxes(self.p, 0, 1), np.swapaxes(self.f, 0, 1)], axis=1)

    def power_per_subcarrier(self):
        return np.sum(np.abs(self.stacked()) ** 2, axis=(1, 2))

    def total_power(self):
        return float(self.power_per_subcarrier().sum())

    def copy(self):
        return PrecoderSet(self.p_c.copy(), self.p.copy(), self.f.copy(), self.c_bar.copy())

    def scaled(self, c):
        return PrecoderSet(c * self.p_c, c * self.p, c * self.f, self.c_bar.copy())


# ---------------------------------------------------------------------------
# SINR / MMSE / WMSE
# ---------------------------------------------------------------------------

def received_powers(h, Q):
    """|h^H q|^2 for every stream.

    ``h`` has shape (..., N, Nt) and ``Q`` shape (N, S, Nt) (see
    :meth:`PrecoderSet.stacked`); the result has shape (..., N, S).
    """
    return np.abs(np.einsum("...ni,nsi->...ns", np.conj(h), Q)) ** 2


def split_powers(pw, K):
    """Signal and interference-plus-jamming terms from ``received_powers`` output.

    Returns (common signal, common interference, private signal (..., K),
    private interference (..., K)), none of which include noise.
    """
    pc = pw[..., 0]
    pp = pw[..., 1:K + 1]
    jam = pw[..., K + 1:].sum(axis=-1)
    priv_total = pp.sum(axis=-1)
    return pc, priv_total + jam, pp, (priv_total + jam)[..., None] - pp


def _check_n0(N0):
    if N0 <= 0:
        raise ValueError("N0 must be positive")


def _slice_terms(h, pre: PrecoderSlice, target):
    h = np.asarray(h)
    K = pre.p.shape[0]
    pw = np.abs(pre.stacked() @ np.conj(h)) ** 2
    sc, ic, sp, ip = split_powers(pw, K)
    if target == COMMON:
        return sc, ic, pre.p_c
    k = int(target)
    return sp[k], ip[k], pre.p[k]


def stream_sinr(h, pre: PrecoderSlice, target, N0):
    """SINR of the common stream (``target='common'``) or private stream ``k`` at channel ``h``.

    The common-stream denominator holds the private and jamming powers only;
    the private-stream denominator omits the user's own private stream and,
    after SIC, the common stream.
    """
    _check_n0(N0)
    s, i, _ = _slice_terms(h, pre, target)
    return float(s / (N0 + i))


def mmse_equalizer_and_error(h, pre: PrecoderSlice, target, N0):
    """MMSE receive coefficient and the resulting MSE for one stream.

    Returns
    -------
    g_opt : complex
        p^H h / (|h^H p|^2 + Z + J + N0)
    eps_opt : float
        (Z + J + N0) / (|h^H p|^2 + Z + J + N0) = 1 / (1 + SINR)
    """
    _check_n0(N0)
    s, i, p = _slice_terms(h, pre, target)
    den = s + i + N0
    g = np.vdot(p, np.asarray(h)) / den
    return complex(g), float((i + N0) / den)


def mse_with_equalizer(h, pre: PrecoderSlice, target, N0, g):
    """E|g y - x|^2 for an arbitrary receive coefficient ``g``.

    y is the common-stream observation (all streams) or the post-SIC private
    observation (common stream removed).
    """
    _check_n0(N0)
    h = np.asarray(h)
    pw = np.abs(pre.stacked() @ np.conj(h)) ** 2
    if target == COMMON:
        total, p = pw.sum(), pre.p_c
    else:
        total, p = pw[1:].sum(), pre.p[int(target)]
    return float(abs(g) ** 2 * (total + N0) - 2 * np.real(g * np.vdot(h, p)) + 1)


def mutual_information_from_error(eps):
    """-log2(eps) in bits; ``eps`` is floored at 1e-15."""
    e = np.asarray(eps, dtype=float)
    if np.any(e <= 0) or np.any(e > 1 + 1e-12):
        raise ValueError("MMSE must lie in (0, 1]")
    out = -np.log2(np.maximum(e, EPS_FLOOR))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def wmse_and_optimal_weights(eps, weight=None):
    """Augmented WMSE xi = w eps - log2(w) and the optimal weight 1/eps.

    With ``weight=None`` the optimal weight is used, giving xi = 1 - I.
    """
    e = np.asarray(eps, dtype=float)
    if np.any(e <= 0) or np.any(e > 1 + 1e-12):
        raise ValueError("MSE must lie in (0, 1]")
    w_opt = 1.0 / np.maximum(e, EPS_FLOOR)
    w = w_opt if weight is None else np.asarray(weight, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    xi = w * e - np.log2(w)
    if xi.ndim == 0:
        return float(xi), float(w_opt)
    return xi, w_opt


# ---------------------------------------------------------------------------
# jamming / interference
# ---------------------------------------------------------------------------

def jamming_power(R, pre: PrecoderSlice):
    """Average power of the whole transmit signal at an AU with channel covariance R."""
    R = np.asarray(R)
    Q = pre.stacked()
    if R.shape != (Q.shape[1], Q.shape[1]):
        raise ValueError("covariance and precoder dimensions differ")
    return float(max(0.0, np.real(np.einsum("si,ij,sj->", Q.conj(), R, Q))))


def interference_matrix(M_hat, sigma_pe2, Nr):
    """Phi = (1 - sigma_pe^2) M_hat M_hat^H + sigma_pe^2 Nr I."""
    M_hat = np.asarray(M_hat)
    Nt = M_hat.shape[-2]
    Phi = (1.0 - sigma_pe2) * (M_hat @ np.conj(np.swapaxes(M_hat, -1, -2))) + sigma_pe2 * Nr * np.eye(Nt)
    return 0.5 * (Phi + np.conj(np.swapaxes(Phi, -1, -2)))


def interference_power(M_hat, sigma_pe2, Nr, pre: PrecoderSlice):
    """Conditional mean interference power at a PU given its channel estimate.

    Returns (Phi, Psi_bar).
    """
    Phi = interference_matrix(M_hat, sigma_pe2, Nr)
    Q = pre.stacked()
    psi = float(max(0.0, np.real(np.einsum("si,ij,sj->", Q.conj(), Phi, Q))))
    return Phi, psi


def quadratic_totals(A, Q):
    """sum_s q_s^H A_n q_s per subcarrier for A (N, Nt, Nt) and Q (N, S, Nt)."""
    return np.real(np.einsum("nsi,nij,nsj->n", Q.conj(), A, Q))


# ---------------------------------------------------------------------------
# SAA estimates and rate reports
# ---------------------------------------------------------------------------

def saa_mutual_information(samples, Q, N0):
    """Mean common and private mutual information over channel samples.

    Parameters
    ----------
    samples : ndarray, shape (S, K, N, Nt)
    Q : ndarray, shape (N, 1+K+L, Nt)

    Returns
    -------
    I_common : (K, N) ndarray
    I_private : (K, N) ndarray
    """
    _check_n0(N0)
    S, K = samples.shape[:2]
    pw = received_powers(samples, Q)                          # (S, K, N, 1+K+L)
    sc, ic, sp, ip = split_powers(pw, K)
    eps_c = (ic + N0) / (sc + ic + N0)                        # (S, K, N)
    idx = np.arange(K)
    sp_own = sp[:, idx, :, idx]                               # (K, S, N)
    ip_own = ip[:, idx, :, idx]
    eps_p = (ip_own + N0) / (sp_own + ip_own + N0)
    I_c = -np.log2(np.maximum(eps_c, EPS_FLOOR)).mean(axis=0)
    I_p = -np.log2(np.maximum(eps_p, EPS_FLOOR)).mean(axis=1)
    return np.maximum(I_c, 0.0), np.maximum(I_p, 0.0)


def saa_rate_estimates(h_hat, sigma2, pre, sample_count, rng, N0=1.0):
    """SAA estimates of the common and private mutual information per user.

    ``h_hat`` is (K, Nt) with ``pre`` a :class:`PrecoderSlice`, or (K, N, Nt)
    with ``pre`` a :class:`PrecoderSet`.  Returns (I_bar_common, I_bar_private)
    with shape (K,) or (K, N).
    """
    h_hat = np.asarray(h_hat)
    single = h_hat.ndim == 2
    if single:
        h_hat = h_hat[:, None]
        Q = pre.stacked()[None]
    else:
        Q = pre.stacked()
    samples = conditional_samples(h_hat, sigma2, sample_count, rng)
    I_c, I_p = saa_mutual_information(samples, Q, N0)
    if single:
        return I_c[:, 0], I_p[:, 0]
    return I_c, I_p


@dataclass
class RateReport:
    R_private: np.ndarray     # (K,)
    R_common: float
    R_user: np.ndarray        # (K,)
    R_sum: float
    I_common_min: np.ndarray  # (N,)
    I_private: np.ndarray     # (K, N)
    I_common: np.ndarray      # (K, N)

    @property
    def per_subcarrier(self):
        return {n: (float(self.I_common_min[n]), self.I_private[:, n].copy()) for n in range(len(self.I_common_min))}

    def write_csv(self, path):
        K, N = self.I_private.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "I_common_min"] + [f"I_private_{k + 1}" for k in range(K)])
            for n in range(N):
                w.writerow([n + 1, fmt(self.I_common_min[n])] + [fmt(v) for v in self.I_private[:, n]])
            w.writerow(["summary", fmt(self.R_common)] + [fmt(v) for v in self.R_private] + [fmt(self.R_sum)])


def rates_from_information(I_c, I_p, c_bar):
    """Assemble a :class:`RateReport` from per-user, per-subcarrier SAA information."""
    K, N = I_p.shape
    I_min = I_c.min(axis=0)
    bad = np.flatnonzero(c_bar.sum(axis=0) > I_min + 1e-6)
    if bad.size:
        n = int(bad[0])
        raise ValueError(
            f"common-rate shares exceed the decodable common rate on subcarrier {n + 1}: "
            f"{c_bar[:, n].sum():.6g} > {I_min[n]:.6g}"
        )
    R_c = float(I_min.sum() / N)
    R_p = I_p.sum(axis=1) / N
    R_u = (c_bar + I_p).sum(axis=1) / N
    return RateReport(R_p, R_c, R_u, R_c + float(R_p.sum()), I_min, I_p, I_c)


def draw_saa_samples(cs, count, rng):
    """Fixed conditional SU channel samples (count, K, N, Nt) around the estimates."""
    return conditional_samples(cs.h_hat, cs.sigma_ie2, count, rng)


def rate_report(cfg, cs, pre: PrecoderSet, samples=None, rng=None, realization=0) -> RateReport:
    """Rates of a precoder set under the SAA approximation.

    ``samples`` defaults to ``cfg.saa_samples`` draws from the scenario's SAA
    stream for ``realization``, i.e. the same samples the optimizer uses.
    """
    if samples is None:
        if rng is None:
            rng = substream(cfg.seed, "saa", realization)
        samples = draw_saa_samples(cs, cfg.saa_samples, rng)
    I_c, I_p = saa_mutual_information(samples, pre.stacked(), cfg.N0)
    return rates_from_information(I_c, I_p, pre.c_bar)
