"""Uncoded QPSK bit-error-rate Monte Carlo for the AU and PU links.

Both victims run their own single-antenna link over a flat channel h with
equal power on all N subcarriers,

    y_n = sqrt(Es/N) h x_n + z_n + eta_n,

where eta_n is whatever the secondary transmitter's precoded streams leave at
the victim.  The AU estimates h from its pilot subcarriers with an error level
set by the mean pilot SINR; the PU knows h exactly.  Detection is a zero-forcing
division by the (estimated) channel followed by QPSK hard decisions.

Every mode at a given Es draws the same channels, noise, data bits and stream
symbols (common random numbers), so curves differ only through eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from ..channels import channel_set_for, substream
from ..metrics import PrecoderSet
from ..solver import solve_scheme
from ..thresholds import assemble_thresholds

VICTIMS = {"AU": 0, "PU": 1}


def qpsk_awgn_ber(snr):
    """Gray-coded QPSK bit-error probability at symbol SNR ``snr`` over AWGN."""
    snr = np.asarray(snr, dtype=float)
    return 0.5 * erfc(np.sqrt(snr / 2.0))


def qpsk_rayleigh_ber(snr):
    """Same, averaged over unit-variance Rayleigh fading."""
    snr = np.asarray(snr, dtype=float)
    return 0.5 * (1.0 - np.sqrt(snr / (2.0 + snr)))


@dataclass
class BerSpec:
    Es_grid: tuple                  # total symbol energy per grid point, ascending
    bits_per_point: int = 100_000
    victim: str = "AU"
    channel: str = "rayleigh"       # flat link channel: "rayleigh" (CN(0,1)) or "awgn" (h = 1)
    perfect_csi: bool = False       # AU only: skip the pilot-based estimation error
    exponent: float = 0.6           # sigma_AU = (mean pilot SINR)^-exponent
    seed: int = 0

    def __post_init__(self):
        self.Es_grid = tuple(float(e) for e in self.Es_grid)
        if not self.Es_grid or any(e <= 0 for e in self.Es_grid):
            raise ValueError("Es grid must hold positive energies")
        if any(b < a for a, b in zip(self.Es_grid, self.Es_grid[1:])):
            raise ValueError("Es grid must be sorted ascending")
        if self.bits_per_point < 1:
            raise ValueError("bits_per_point must be positive")
        if self.victim not in VICTIMS:
            raise ValueError(f"victim must be one of {tuple(VICTIMS)}")
        if self.channel not in ("rayleigh", "awgn"):
            raise ValueError("channel must be 'rayleigh' or 'awgn'")


@dataclass
class BerCurve:
    Es: np.ndarray
    ber: np.ndarray
    errors: np.ndarray
    bits: np.ndarray
    stderr: np.ndarray           # binomial
    stderr_block: np.ndarray     # from per-realization error counts (bits of one realization share h)


def stream_gains(pre: PrecoderSet | None, chan, N, n_streams=None):
    """Coefficients chan_n^H q for every stream q on every subcarrier, shape (N, S).

    ``pre=None`` means the secondary transmitter is silent.
    """
    if pre is None:
        return np.zeros((N, n_streams or 1), dtype=complex)
    Q = pre.stacked()                                  # (N, S, Nt)
    return np.einsum("ni,nsi->ns", np.conj(chan), Q)


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _run(spec: BerSpec, gains, N0, pilots):
    N, S = gains.shape
    n_real = math.ceil(spec.bits_per_point / (2 * N))
    J = np.sum(np.abs(gains) ** 2, axis=1)             # realized focused power per subcarrier
    Es_out, ber, err, nb, se, seb = [], [], [], [], [], []
    for ei, Es in enumerate(spec.Es_grid):
        rng = substream(spec.seed, "noise", VICTIMS[spec.victim], ei)
        # fixed draw order for common random numbers across modes
        h = _cn(rng, n_real) if spec.channel == "rayleigh" else np.ones(n_real, complex)
        e = _cn(rng, n_real)
        bits = rng.integers(0, 2, size=(n_real, N, 2))
        z = _cn(rng, (n_real, N), N0)
        s = _cn(rng, (n_real, N, S))
        x = ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2.0)
        eta = np.einsum("rns,ns->rn", s, gains)
        y = np.sqrt(Es / N) * h[:, None] * x + z + eta
        if spec.victim == "AU" and not spec.perfect_csi:
            sinr = np.abs(h[:, None]) ** 2 * (Es / N) / (N0 + J[pilots][None])
            sigma = np.minimum(1.0, sinr.mean(axis=1) ** (-spec.exponent))
            h_est = np.sqrt(1.0 - sigma ** 2) * h + sigma * e
        else:
            h_est = h
        x_hat = y / h_est[:, None]
        dec = np.stack([x_hat.real < 0, x_hat.imag < 0], axis=-1)
        per_real = np.sum(dec != bits.astype(bool), axis=(1, 2))
        total = 2 * N * n_real
        p = per_real.sum() / total
        Es_out.append(Es)
        ber.append(p)
        err.append(int(per_real.sum()))
        nb.append(total)
        se.append(math.sqrt(max(p * (1 - p), 0.0) / total))
        seb.append(float(np.std(per_real / (2 * N), ddof=1) / math.sqrt(n_real)) if n_real > 1 else np.inf)
    return BerCurve(np.asarray(Es_out), np.asarray(ber), np.asarray(err), np.asarray(nb),
                    np.asarray(se), np.asarray(seb))


def ber_au(spec: BerSpec, precoders: PrecoderSet | None, g, cfg, pilots=None, n_streams=None):
    """AU bit-error rate per Es.

    Parameters
    ----------
    precoders : PrecoderSet or None
        Secondary precoders; None models no secondary transmission.
    g : (N, Nt) array
        True AU channel per subcarrier.
    cfg : ScenarioConfig
        Supplies N, N0 and the AU pilot set (``cfg.Sp[0]`` unless ``pilots`` is
        given as 0-based indices).
    n_streams : int, optional
        Stream count to use when ``precoders`` is None, keeping the random draws
        aligned with the jammed runs.
    """
    if spec.victim != "AU":
        raise ValueError("spec.victim must be 'AU'")
    if pilots is None:
        pilots = np.asarray(cfg.Sp[0], dtype=int) - 1
    S = n_streams or (1 + cfg.K + cfg.L)
    gains = stream_gains(precoders, np.asarray(g), cfg.N, S)
    return _run(spec, gains, cfg.N0, np.asarray(pilots))


def ber_pu(spec: BerSpec, precoders: PrecoderSet | None, m, cfg, n_streams=None):
    """PU bit-error rate per Es with perfect receiver CSI.

    ``m`` is the (N, Nt) true channel from the secondary transmitter to the PU
    receive antenna in use.
    """
    if spec.victim != "PU":
        raise ValueError("spec.victim must be 'PU'")
    S = n_streams or (1 + cfg.K + cfg.L)
    gains = stream_gains(precoders, np.asarray(m), cfg.N, S)
    return _run(spec, gains, cfg.N0, np.arange(cfg.N))


def ber_rows(curve: BerCurve, label):
    return [{"label": label, "Es": float(curve.Es[i]), "ber": float(curve.ber[i]),
             "errors": int(curve.errors[i]), "bits": int(curve.bits[i]),
             "stderr": float(curve.stderr[i]), "stderr_block": float(curve.stderr_block[i])}
            for i in range(len(curve.Es))]


def _solve_rsma(cfg, realization):
    cs = channel_set_for(cfg, realization)
    th = assemble_thresholds(cfg, cs)
    pre, rep, trace, _ = solve_scheme(cfg, cs, th, "RSMA", realization=realization)
    return cs, pre, rep


def au_ber_experiment(cfg, spec: BerSpec, modes=("pilot", "barrage", "off"), realization=0):
    """AU BER curves for each jamming mode on one channel realization.

    Pilot and barrage modes use RSMA precoders solved under that mode; "off"
    means the secondary transmitter does not reach the AU at all.
    Returns {mode: BerCurve} and {mode: RateReport or None}.
    """
    curves, rates = {}, {}
    S = 1 + cfg.K + cfg.L
    for mode in modes:
        c = cfg.replace(jamming=mode)
        if mode == "off":
            cs, pre, rep = channel_set_for(c, realization), None, None
        else:
            cs, pre, rep = _solve_rsma(c, realization)
        curves[mode] = ber_au(spec, pre, cs.g[0], c, n_streams=S)
        rates[mode] = rep
    return curves, rates


def pu_ber_experiment(cfg, spec: BerSpec, realization=0, antenna=0):
    """PU BER curves without secondary interference, and with RSMA precoders
    solved with and without interference constraints.

    Returns {"none" | "constrained" | "unconstrained": BerCurve} and the rate reports.
    """
    S = 1 + cfg.K + cfg.L
    cs = channel_set_for(cfg, realization)
    m = cs.M_true[0][:, :, antenna]
    curves = {"none": ber_pu(spec, None, m, cfg, n_streams=S)}
    rates = {"none": None}
    for label, flag in (("constrained", True), ("unconstrained", False)):
        c = cfg.replace(interference_constraints=flag)
        _, pre, rep = _solve_rsma(c, realization)
        curves[label] = ber_pu(spec, pre, m, c, n_streams=S)
        rates[label] = rep
    return curves, rates
