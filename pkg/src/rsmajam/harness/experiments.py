"""Sum-rate sweeps over SNR, rho, QoS floor and CSIT quality."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..channels import SCHEMES, JAMMING_MODES, ScenarioConfig, channel_set_for
from ..solver import DomainInfeasible, SolverConfig, audit_solution, solve_scheme
from ..thresholds import assemble_thresholds

log = logging.getLogger(__name__)

SWEEPS = ("snr", "rho", "qos", "csit_alpha", "none")

# QoS floor per SNR (dB): 0.25 at 5 dB, 0.5 from 10 to 20 dB, 1.0 from 25 dB
QOS_PRESET = ((5.0, 0.25), (10.0, 0.5), (25.0, 1.0))

# baselines run first so their solutions can seed RSMA
SCHEME_ORDER = ("SDMA", "NOMA", "RSMA")


def qos_floor(snr_db):
    """QoS floor of the named preset at ``snr_db``; 0 below the first entry."""
    rth = 0.0
    for lo, val in QOS_PRESET:
        if snr_db >= lo - 1e-9:
            rth = val
    return rth


def desk_scenario(seed=0, **changes):
    """Small scenario used by the tests and demos.

    Nt=4, K=2, L=1, M=1, N=8 subcarriers, pilots {1, 5}, 16 SAA samples, with
    ADMM capped at 10 inner and 10 outer iterations (zeta=3) so a solve takes
    seconds on one core.
    """
    base = dict(Nt=4, K=2, L=1, M=1, Nr=[2], N=8, Sp=[[1, 5]], Pt_bar=100.0, saa_samples=16,
                zeta=3.0, max_inner=10, max_outer=10, seed=seed)
    base.update(changes)
    return ScenarioConfig(**base)


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig
    sweep: str = "none"
    grid: list = field(default_factory=lambda: [None])
    realizations: int = 1
    schemes: tuple = SCHEMES
    jamming_mode: str | None = None            # None keeps scenario.jamming
    interference_constraints: bool | None = None
    output_dir: str = "out"

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}")
        self.grid = list(self.grid) if self.sweep != "none" else [None]
        if not self.grid:
            raise ValueError("sweep grid is empty")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        self.schemes = tuple(self.schemes)
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValueError(f"schemes must be a nonempty subset of {SCHEMES}")
        if self.jamming_mode is not None and self.jamming_mode not in JAMMING_MODES:
            raise ValueError(f"jamming_mode must be one of {JAMMING_MODES}")

    def base_scenario(self):
        changes = {}
        if self.jamming_mode is not None:
            changes["jamming"] = self.jamming_mode
        if self.interference_constraints is not None:
            changes["interference_constraints"] = bool(self.interference_constraints)
        return self.scenario.replace(**changes) if changes else self.scenario

    def to_dict(self):
        return {"scenario": self.base_scenario().to_dict(), "sweep": self.sweep,
                "grid": self.grid, "realizations": self.realizations,
                "schemes": list(self.schemes), "output_dir": str(self.output_dir)}


def power_for_snr(cfg: ScenarioConfig, snr_db):
    return float(10.0 ** (snr_db / 10.0) * cfg.N0 * cfg.N)


def scenario_at(cfg: ScenarioConfig, sweep, value):
    """Scenario for one grid point.

    SNR and QoS sweeps move the power budget with N0 fixed; mu keeps its ratio
    to the budget.  The QoS sweep also sets the floor from the preset.
    """
    if sweep == "none":
        return cfg
    if sweep in ("snr", "qos"):
        Pt = power_for_snr(cfg, value)
        mu = cfg.mu * Pt / cfg.Pt_bar if cfg.Pt_bar > 0 else Pt / (25.0 * cfg.N)
        changes = dict(Pt_bar=Pt, mu=mu)
        if sweep == "qos":
            changes["Rth"] = qos_floor(value)
        return cfg.replace(**changes)
    if sweep == "rho":
        return cfg.replace(rho=float(value))
    if sweep == "csit_alpha":
        return cfg.replace(alpha_i=float(value), alpha_p=float(value))
    raise ValueError(sweep)


def solve_schemes(cfg, cs, th, schemes=SCHEMES, realization=0, scfg=None):
    """Solve each requested scheme on one realization.

    RSMA is seeded with the SDMA and NOMA solutions, which are feasible RSMA
    points, so its sum-rate is never below theirs.  Returns
    {scheme: dict(pre, rep, trace, info, audit)}; a scheme whose domain turns
    out infeasible gets an entry with ``error`` set instead.
    """
    out = {}
    for scheme in [s for s in SCHEME_ORDER if s in schemes]:
        warm = [out[s]["pre"] for s in ("SDMA", "NOMA") if s in out and "pre" in out[s]] if scheme == "RSMA" else []
        t0 = time.perf_counter()
        try:
            pre, rep, trace, info = solve_scheme(cfg, cs, th, scheme, scfg, warm_starts=warm,
                                                 realization=realization)
        except DomainInfeasible as exc:
            log.warning("%s realization %d: %s", scheme, realization, exc)
            out[scheme] = {"error": str(exc)}
            continue
        audit = audit_solution(cfg, cs, th, pre, rep)
        log.info("%s realization %d: sum-rate %.4f in %.1f s (audit %s)", scheme, realization,
                 rep.R_sum, time.perf_counter() - t0, "ok" if audit["ok"] else "FAILED")
        out[scheme] = dict(pre=pre, rep=rep, trace=trace, info=info, audit=audit)
    return out


RESULT_COLUMNS = ["sweep", "value", "realization", "scheme", "R_sum", "R_common", "R_user",
                  "feasible", "jamming_ok", "interference_ok", "power_ok", "qos_ok",
                  "max_inner_hit", "max_outer_hit", "error"]
SUMMARY_COLUMNS = ["sweep", "value", "scheme", "mean_R_sum", "std_R_sum", "solved", "all_ok"]


@dataclass
class SweepResult:
    rows: list
    summary: list
    solutions: dict = field(default_factory=dict)   # (value, realization, scheme) -> PrecoderSet

    def mean_rate(self, value, scheme):
        for row in self.summary:
            if row["value"] == value and row["scheme"] == scheme:
                return row["mean_R_sum"]
        raise KeyError((value, scheme))


def run_sweep(spec: ExperimentSpec, keep_solutions=False) -> SweepResult:
    """Solve every grid point x realization x scheme and aggregate the sum-rates."""
    base = spec.base_scenario()
    scfg_base = None
    rows, sols = [], {}
    for gi, value in enumerate(spec.grid):
        cfg = scenario_at(base, spec.sweep, value)
        scfg_base = SolverConfig.from_scenario(cfg)
        for r in range(spec.realizations):
            cs = channel_set_for(cfg, r)
            th = assemble_thresholds(cfg, cs)
            res = solve_schemes(cfg, cs, th, spec.schemes, realization=r, scfg=scfg_base)
            for scheme in [s for s in SCHEME_ORDER if s in spec.schemes]:
                row = {"sweep": spec.sweep, "value": value, "realization": r, "scheme": scheme}
                item = res[scheme]
                if "error" in item:
                    row.update(R_sum=np.nan, R_common=np.nan, R_user=[], feasible=False,
                               jamming_ok=False, interference_ok=False, power_ok=False,
                               qos_ok=False, max_inner_hit=False, max_outer_hit=False,
                               error=item["error"])
                else:
                    rep, tr, au = item["rep"], item["trace"], item["audit"]
                    row.update(R_sum=rep.R_sum, R_common=rep.R_common, R_user=list(rep.R_user),
                               feasible=tr.feasible, jamming_ok=au["jamming_ok"],
                               interference_ok=au["interference_ok"], power_ok=au["power_ok"],
                               qos_ok=au["qos_ok"], max_inner_hit=tr.max_inner_hit,
                               max_outer_hit=tr.max_outer_hit, error="")
                    if keep_solutions:
                        sols[(value, r, scheme)] = item
                rows.append(row)
    return SweepResult(rows, summarize(rows), sols)


def summarize(rows):
    out = []
    keys = []
    for row in rows:
        k = (row["sweep"], row["value"], row["scheme"])
        if k not in keys:
            keys.append(k)
    for sweep, value, scheme in keys:
        sel = [r for r in rows if r["value"] == value and r["scheme"] == scheme]
        good = [r["R_sum"] for r in sel if not r["error"]]
        rates = np.asarray(good, dtype=float)
        out.append({
            "sweep": sweep, "value": value, "scheme": scheme,
            "mean_R_sum": float(rates.mean()) if rates.size else np.nan,
            "std_R_sum": float(rates.std()) if rates.size else np.nan,
            "solved": len(good),
            "all_ok": all(r["feasible"] and r["jamming_ok"] and r["interference_ok"]
                          and r["power_ok"] and r["qos_ok"] for r in sel),
        })
    return out
