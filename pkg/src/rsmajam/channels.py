"""Scenario configuration, tapped-delay-line channel generation and CSIT error models."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMES = ("RSMA", "SDMA", "NOMA")
JAMMING_MODES = ("pilot", "barrage", "off")

# named random sub-streams; every draw in the package goes through one of these
STREAMS = {"channels": 0, "saa": 1, "noise": 2, "randomization": 3}


def substream(seed, name, *extra):
    """Independent generator for ``name`` derived from the master ``seed``.

    ``extra`` integers (realization index, sweep point, ...) select further
    independent children, so any single draw can be replayed in isolation.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name], *map(int, extra)))
    return np.random.default_rng(ss)


@dataclass
class ScenarioConfig:
    """Static parameters of one scenario.

    Subcarrier indices in ``Sp`` are 1-based, as in configuration files.
    ``N0`` defaults to 1/N and ``mu`` to Pt_bar/(25 N) when left as ``None``.
    """

    Nt: int = 4
    K: int = 2
    L: int = 1
    M: int = 1
    Nr: list = field(default_factory=lambda: [2])
    N: int = 32
    Sp: list = field(default_factory=lambda: [list(range(1, 33, 4))])
    Pt_bar: float = 100.0
    N0: float | None = None
    alpha_i: float = 0.6
    alpha_p: float = 0.6
    rho: float = 0.45
    mu: float | None = None
    Rth: float = 0.0
    scheme: str = "RSMA"
    delay_spread: float = 1200e-9
    subcarrier_spacing: float = 60e3
    seed: int = 0
    # simulation controls
    saa_samples: int = 32
    au_cov_samples: int = 16
    jamming: str = "pilot"
    interference_constraints: bool = True
    zeta: float = 10.0
    eps_abs: float = 1e-3
    eps_rel: float = 1e-3
    max_inner: int = 500
    max_outer: int = 100
    randomizations: int = 16

    def __post_init__(self):
        if self.N0 is None:
            self.N0 = 1.0 / self.N
        if self.mu is None:
            self.mu = self.Pt_bar / (25.0 * self.N)
        self.Nr = [int(x) for x in self.Nr]
        self.Sp = [sorted(int(n) for n in s) for s in self.Sp]
        self.validate()

    def validate(self):
        for name in ("Nt", "K", "N"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        # L = 0 or M = 0 drops the AUs or PUs entirely
        for name in ("L", "M"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be a nonnegative integer")
        if len(self.Nr) != self.M or any(r < 1 for r in self.Nr):
            raise ValueError("Nr must list one positive receive-antenna count per PU")
        if len(self.Sp) != self.L:
            raise ValueError("Sp must list one pilot set per AU")
        for s in self.Sp:
            if any(n < 1 or n > self.N for n in s):
                raise ValueError(f"pilot indices must lie in 1..{self.N}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        for name in ("alpha_i", "alpha_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.Pt_bar < 0 or self.mu < 0 or self.Rth < 0:
            raise ValueError("powers and the QoS floor must be nonnegative")
        if self.N0 <= 0:
            raise ValueError("N0 must be positive")
        if self.delay_spread <= 0 or self.subcarrier_spacing <= 0:
            raise ValueError("delay_spread and subcarrier_spacing must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.jamming not in JAMMING_MODES:
            raise ValueError(f"jamming must be one of {JAMMING_MODES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.saa_samples < 1 or self.au_cov_samples < 1:
            raise ValueError("sample counts must be positive")

    @property
    def snr(self):
        return self.Pt_bar / (self.N0 * self.N)

    def pilot_mask(self, l):
        """Boolean mask over subcarriers (0-based) of the subcarriers AU ``l`` jams.

        Barrage jamming spreads over every subcarrier.
        """
        mask = np.zeros(self.N, dtype=bool)
        if self.jamming == "barrage":
            mask[:] = True
        else:
            mask[np.asarray(self.Sp[l], dtype=int) - 1] = True
        return mask

    def num_pilots(self, l):
        return int(self.pilot_mask(l).sum())

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


def load_config(path_or_dict) -> ScenarioConfig:
    """Build a config from a JSON file path or an already parsed mapping."""
    if isinstance(path_or_dict, dict):
        data = dict(path_or_dict)
    else:
        data = json.loads(Path(path_or_dict).read_text())
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config fields: {unknown}")
    return ScenarioConfig(**data)


def csit_error_variance(snr, alpha):
    """sigma^2 = min(1, SNR^-alpha)."""
    if snr <= 0:
        return 1.0
    return float(min(1.0, snr ** (-alpha)))


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization.  Arrays are indexed [user, subcarrier, ...]."""

    h: np.ndarray            # (K, N, Nt) true SU channels
    h_hat: np.ndarray        # (K, N, Nt) SU estimates
    sigma_ie2: float
    M_true: tuple            # M entries of (N, Nt, Nr_m)
    M_hat: tuple
    sigma_pe2: float
    g: np.ndarray            # (L, N, Nt) true AU channels
    R: np.ndarray            # (L, N, Nt, Nt) AU covariances

    def check(self):
        Rh = np.swapaxes(self.R.conj(), -1, -2)
        if np.max(np.abs(self.R - Rh), initial=0.0) > 1e-12:
            raise ValueError("AU covariance is not Hermitian")
        if self.R.size and np.linalg.eigvalsh(self.R).min() < -1e-10:
            raise ValueError("AU covariance is not PSD")
        return self


def tdl_taps(cfg: ScenarioConfig):
    """Exponential power-delay profile normalized to unit total power."""
    bandwidth = cfg.N * cfg.subcarrier_spacing
    n_taps = max(1, math.ceil(6.0 * cfg.delay_spread * bandwidth - 1e-12))
    if n_taps > cfg.N:
        raise ValueError(
            f"delay spread {cfg.delay_spread:g}s at bandwidth {bandwidth:g}Hz needs {n_taps} taps, "
            f"more than N={cfg.N} subcarriers"
        )
    delays = np.arange(n_taps) / bandwidth
    pdp = np.exp(-delays / cfg.delay_spread)
    return pdp / pdp.sum()


def tdl_frequency_response(pdp, N, shape, rng):
    """Per-subcarrier responses of i.i.d. Rayleigh taps.

    Returns an array of shape ``shape + (N,)`` with E|H[n]|^2 = sum(pdp).
    """
    T = len(pdp)
    taps = (rng.standard_normal(shape + (T,)) + 1j * rng.standard_normal(shape + (T,))) * np.sqrt(pdp / 2)
    F = np.exp(-2j * np.pi * np.outer(np.arange(T), np.arange(N)) / N)
    return taps @ F


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def compose_true_channel(h_hat, sigma2, rng):
    """sqrt(1 - sigma2) h_hat + sqrt(sigma2) e with e ~ CN(0, I); works entrywise on arrays."""
    if not 0.0 <= sigma2 <= 1.0:
        raise ValueError("sigma2 must lie in [0, 1]")
    h_hat = np.asarray(h_hat)
    e = _cn(rng, h_hat.shape)
    return np.sqrt(1.0 - sigma2) * h_hat + np.sqrt(sigma2) * e


def conditional_samples(h_hat, sigma2, count, rng):
    """``count`` i.i.d. draws of the true channel given its estimate, stacked on axis 0."""
    if count < 1:
        raise ValueError("count must be positive")
    h_hat = np.asarray(h_hat)
    e = _cn(rng, (count,) + h_hat.shape)
    return np.sqrt(1.0 - sigma2) * h_hat[None] + np.sqrt(sigma2) * e


def estimate_covariance(samples):
    """Sample second-moment matrix (1/S) sum g g^H."""
    G = np.asarray(samples)
    if G.ndim != 2 or G.shape[0] == 0:
        raise ValueError("need at least one sample vector")
    R = G.T @ G.conj() / G.shape[0]
    return 0.5 * (R + R.conj().T)


def generate_channel_set(cfg: ScenarioConfig, rng) -> ChannelSet:
    """Draw SU, PU and AU channels for one realization."""
    pdp = tdl_taps(cfg)
    N, Nt = cfg.N, cfg.Nt
    s_ie = csit_error_variance(cfg.snr, cfg.alpha_i)
    s_pe = csit_error_variance(cfg.snr, cfg.alpha_p)

    h_hat = np.moveaxis(tdl_frequency_response(pdp, N, (cfg.K, Nt), rng), -1, 1)
    h = compose_true_channel(h_hat, s_ie, rng)

    M_hat, M_true = [], []
    for m in range(cfg.M):
        Mh = np.moveaxis(tdl_frequency_response(pdp, N, (Nt, cfg.Nr[m]), rng), -1, 0)
        M_hat.append(Mh)
        M_true.append(compose_true_channel(Mh, s_pe, rng))

    # the AU covariance averages outer products over independent draws of its channel;
    # the first draw is the realized channel
    G = tdl_frequency_response(pdp, N, (cfg.L, cfg.au_cov_samples, Nt), rng)   # (L, S, Nt, N)
    G = np.moveaxis(G, -1, 2)                                                  # (L, S, N, Nt)
    g = G[:, 0].copy()
    R = np.einsum("lsni,lsnj->lnij", G, G.conj()) / cfg.au_cov_samples
    R = 0.5 * (R + np.swapaxes(R.conj(), -1, -2))
    return ChannelSet(h, h_hat, s_ie, tuple(M_true), tuple(M_hat), s_pe, g, R).check()


def channel_set_for(cfg: ScenarioConfig, realization=0) -> ChannelSet:
    return generate_channel_set(cfg, substream(cfg.seed, "channels", realization))


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

_CHANNEL_KEYS = ("Nt", "K", "L", "M", "Nr", "N", "Pt_bar", "N0", "alpha_i", "alpha_p",
                 "delay_spread", "subcarrier_spacing", "au_cov_samples", "seed")


def cache_key(cfg: ScenarioConfig, realization=0):
    blob = json.dumps([[k, getattr(cfg, k)] for k in _CHANNEL_KEYS] + [realization], sort_keys=True)
    return f"ch_{cfg.seed}_{realization}_{hashlib.sha256(blob.encode()).hexdigest()[:12]}"


def save_channel_set(cs: ChannelSet, path):
    arrays = {"h": cs.h, "h_hat": cs.h_hat, "g": cs.g, "R": cs.R,
              "sigma_ie2": cs.sigma_ie2, "sigma_pe2": cs.sigma_pe2}
    for m, (Mt, Mh) in enumerate(zip(cs.M_true, cs.M_hat)):
        arrays[f"M_true_{m}"] = Mt
        arrays[f"M_hat_{m}"] = Mh
    np.savez(path, **arrays)


def load_channel_set(path) -> ChannelSet:
    with np.load(path) as z:
        n_pu = sum(1 for k in z.files if k.startswith("M_hat_"))
        return ChannelSet(
            z["h"], z["h_hat"], float(z["sigma_ie2"]),
            tuple(z[f"M_true_{m}"] for m in range(n_pu)),
            tuple(z[f"M_hat_{m}"] for m in range(n_pu)),
            float(z["sigma_pe2"]), z["g"], z["R"],
        )


def cached_channel_set(cfg: ScenarioConfig, cache_dir, realization=0) -> ChannelSet:
    """Load a realization from ``cache_dir`` or generate and store it."""
    path = Path(cache_dir) / (cache_key(cfg, realization) + ".npz")
    if path.exists():
        return load_channel_set(path)
    cs = channel_set_for(cfg, realization)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_channel_set(cs, path)
    return cs
