"""AO-ADMM precoder optimization.

Outer loop: refresh MMSE receive coefficients and optimal weights at the
current point, which turns the rate objective into convex quadratic WMSE
models.  Inner loop: scaled ADMM between a proximal WMSE step (closed form) and
a projection onto the constraint domain (semidefinite relaxation over all
subcarriers, candidate extraction and feasibility repair).

Per subcarrier the stacked variable is

    z_n = [X_1..X_K, p_c, p_1..p_K, f_1..f_L]

with X the negated common-rate shares (real), stored as one complex vector of
length K + Nt(1+K+L); its real coordinate count is 2(K + Nt(1+K+L)).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .channels import substream
from .conic import BlockSdpProblem, INFEASIBLE, hermitian_eig, prox_quadratic_solve, sdp_solve
from .metrics import (
    EPS_FLOOR, PrecoderSet, fmt, interference_matrix, interference_power, jamming_power,
    rates_from_information, received_powers, saa_mutual_information, split_powers,
)
from .thresholds import witness_precoders

FEAS_TOL = 1e-9        # relative constraint tolerance for domain membership
BISECT_STEPS = 40
SDP_MARGIN = 1e-7      # relative inward shift of the bounds handed to the relaxation


class DomainInfeasible(RuntimeError):
    """The projection domain is empty; the message names the constraint family."""


@dataclass
class SolverConfig:
    zeta: float = 10.0
    eps_r: float = 1e-3
    eps_a: float = 1e-3
    max_outer: int = 100
    max_inner: int = 500
    saa_samples: int = 32
    scheme: str = "RSMA"
    randomization_count: int = 16
    sdp_tol: float = 1e-8
    sdp_max_iter: int = 100
    verbose: bool = False

    def __post_init__(self):
        if self.zeta <= 0 or self.eps_r <= 0 or self.eps_a <= 0:
            raise ValueError("zeta and tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1 or self.saa_samples < 1:
            raise ValueError("iteration limits and sample count must be positive")

    @classmethod
    def from_scenario(cls, cfg, **overrides):
        base = dict(zeta=cfg.zeta, eps_r=cfg.eps_rel, eps_a=cfg.eps_abs, max_outer=cfg.max_outer,
                    max_inner=cfg.max_inner, saa_samples=cfg.saa_samples, scheme=cfg.scheme,
                    randomization_count=cfg.randomizations)
        base.update(overrides)
        return cls(**base)


# ---------------------------------------------------------------------------
# variable layout
# ---------------------------------------------------------------------------

class Layout:
    """Index bookkeeping for the stacked per-subcarrier variable."""

    def __init__(self, K, L, Nt, scheme="RSMA", designated=None, jamming=True):
        self.K, self.L, self.Nt = K, L, Nt
        self.n_streams = 1 + K + L
        self.nx = Nt * self.n_streams
        self.nv = K + self.nx
        self.d = self.nv + 1
        self.t = self.nv
        free = np.ones(self.nv, dtype=bool)
        if scheme == "SDMA":
            free[:K] = False
            free[self.stream(0)] = False
        elif scheme == "NOMA":
            # the designated user's message rides only on the common stream
            free[:K] = False
            free[designated] = True
            free[self.stream(1 + designated)] = False
        if not jamming:
            for l in range(L):
                free[self.stream(1 + K + l)] = False
        self.free = free
        self.idx = np.concatenate([np.flatnonzero(free), [self.t]])
        self.uses_common = scheme != "SDMA"

    def stream(self, s):
        """Slice of stream ``s`` (0 common, 1..K private, K+1.. jamming) in the stacked vector."""
        start = self.K + s * self.Nt
        return slice(start, start + self.Nt)

    def x_of(self, u):
        return u[..., self.K:]

    def to_precoders(self, u):
        N = u.shape[0]
        Q = u[:, self.K:].reshape(N, self.n_streams, self.Nt)
        K = self.K
        c_bar = np.maximum(0.0, -np.real(u[:, :K])).T.copy()
        return PrecoderSet(Q[:, 0].copy(), np.swapaxes(Q[:, 1:K + 1], 0, 1).copy(),
                           np.swapaxes(Q[:, K + 1:], 0, 1).copy(), c_bar)

    def from_precoders(self, pre: PrecoderSet):
        N = pre.p_c.shape[0]
        u = np.zeros((N, self.nv), dtype=complex)
        u[:, :self.K] = -pre.c_bar.T
        u[:, self.K:] = pre.stacked().reshape(N, -1)
        u[:, ~self.free] = 0.0
        return u


# ---------------------------------------------------------------------------
# problem context
# ---------------------------------------------------------------------------

@dataclass
class Weights:
    omega_c: np.ndarray    # (S, K, N)
    g_c: np.ndarray
    omega_p: np.ndarray
    g_p: np.ndarray


@dataclass
class QuadModels:
    """SAA-averaged WMSE models  x^H A x - 2 Re(beta^H p) + const  per (k, n)."""

    A_c: np.ndarray        # (K, N, Nt, Nt) applies to every stream
    beta_c: np.ndarray     # (K, N, Nt) on the common precoder
    const_c: np.ndarray    # (K, N)
    A_p: np.ndarray        # applies to private and jamming streams
    beta_p: np.ndarray     # on the user's own private precoder
    const_p: np.ndarray


@dataclass
class ProblemContext:
    cfg: object
    cs: object
    th: object
    scfg: SolverConfig
    layout: Layout
    samples: np.ndarray            # (S, K, N, Nt)
    Phi: np.ndarray                # (M, N, Nt, Nt)
    designated: int | None = None
    weights: Weights | None = None
    models: QuadModels | None = None
    domain: BlockSdpProblem | None = None
    sdp_domain: BlockSdpProblem | None = None
    families: list = field(default_factory=list)
    rng: np.random.Generator | None = None
    sdp_calls: int = 0


def build_problem(cfg, cs, th, scfg: SolverConfig | None = None, samples=None, designated=None,
                  realization=0) -> ProblemContext:
    """Collect everything the iterations need: SAA samples, PU matrices and the scheme layout.

    For NOMA, ``designated`` is the user whose whole message is carried by the
    common stream (default: the user with the smaller mean channel-estimate norm).
    """
    scfg = scfg or SolverConfig.from_scenario(cfg)
    scheme = scfg.scheme
    if scheme == "NOMA":
        if cfg.K != 2:
            raise ValueError("NOMA is only supported for K = 2")
        if designated is None:
            designated = weaker_user(cs)
    if samples is None:
        samples = cs.h_hat[None] if cs.sigma_ie2 == 0 else None
        if samples is None:
            from .metrics import draw_saa_samples
            samples = draw_saa_samples(cs, scfg.saa_samples, substream(cfg.seed, "saa", realization))
    Phi = np.stack([interference_matrix(cs.M_hat[m], cs.sigma_pe2, cfg.Nr[m]) for m in range(cfg.M)]) \
        if cfg.M else np.zeros((0, cfg.N, cfg.Nt, cfg.Nt), complex)
    layout = Layout(cfg.K, cfg.L, cfg.Nt, scheme, designated, jamming=cfg.jamming != "off")
    return ProblemContext(cfg, cs, th, scfg, layout, samples, Phi, designated,
                          rng=substream(cfg.seed, "randomization", realization))


def weaker_user(cs):
    norms = np.linalg.norm(cs.h_hat, axis=-1).mean(axis=1)
    return int(np.argmin(norms))


# ---------------------------------------------------------------------------
# weights, filters and WMSE models
# ---------------------------------------------------------------------------

def update_weights_and_filters(ctx: ProblemContext, u):
    """MMSE receive coefficients and optimal weights for every SAA sample, user and subcarrier."""
    lay = ctx.layout
    N0 = ctx.cfg.N0
    H = ctx.samples                                                  # (S, K, N, Nt)
    Q = u[:, lay.K:].reshape(u.shape[0], lay.n_streams, lay.Nt)
    proj = np.einsum("skni,nqi->sknq", np.conj(H), Q)               # h^H q
    pw = np.abs(proj) ** 2
    sc, ic, sp, ip = split_powers(pw, lay.K)
    K = lay.K
    idx = np.arange(K)
    den_c = sc + ic + N0
    g_c = np.conj(proj[..., 0]) / den_c
    eps_c = (ic + N0) / den_c
    own = proj[:, idx, :, 1 + idx]                                   # (K, S, N)
    own = np.moveaxis(own, 0, 1)
    sp_own = np.moveaxis(sp[:, idx, :, idx], 0, 1)
    ip_own = np.moveaxis(ip[:, idx, :, idx], 0, 1)
    den_p = sp_own + ip_own + N0
    g_p = np.conj(own) / den_p
    eps_p = (ip_own + N0) / den_p
    w = Weights(1.0 / np.maximum(eps_c, EPS_FLOOR), g_c, 1.0 / np.maximum(eps_p, EPS_FLOOR), g_p)
    ctx.weights = w
    ctx.models = _quad_models(ctx, w)
    return w


def _quad_models(ctx, w: Weights):
    H = ctx.samples
    N0 = ctx.cfg.N0

    def model(omega, g):
        a = omega * np.abs(g) ** 2                                    # (S, K, N)
        A = np.einsum("skn,skni,sknj->knij", a, H, np.conj(H)) / H.shape[0]
        beta = np.einsum("skn,skni->kni", omega * np.conj(g), H) / H.shape[0]
        const = np.mean(omega * (np.abs(g) ** 2 * N0 + 1.0) - np.log2(omega), axis=0)
        return A, beta, const

    A_c, b_c, c_c = model(w.omega_c, w.g_c)
    A_p, b_p, c_p = model(w.omega_p, w.g_p)
    return QuadModels(A_c, b_c, c_c, A_p, b_p, c_p)


def wmse_values(ctx, u):
    """(xi_common (K, N), xi_private (K, N)) of the current models at ``u``."""
    lay, mdl = ctx.layout, ctx.models
    N = u.shape[0]
    Q = u[:, lay.K:].reshape(N, lay.n_streams, lay.Nt)
    quad_all_c = np.real(np.einsum("nqi,knij,nqj->kn", np.conj(Q), mdl.A_c, Q))
    xi_c = quad_all_c - 2 * np.real(np.einsum("kni,ni->kn", np.conj(mdl.beta_c), Q[:, 0])) + mdl.const_c
    quad_p = np.real(np.einsum("nqi,knij,nqj->kn", np.conj(Q[:, 1:]), mdl.A_p, Q[:, 1:]))
    own = np.swapaxes(Q[:, 1:lay.K + 1], 0, 1)                       # (K, N, Nt)
    xi_p = quad_p - 2 * np.real(np.einsum("kni,kni->kn", np.conj(mdl.beta_p), own)) + mdl.const_p
    return xi_c, xi_p


# ---------------------------------------------------------------------------
# lifted constraint data
# ---------------------------------------------------------------------------

def _lift_quadratic(lay, blocks, linear=None, const=0.0, x_coef=None):
    """d x d matrix of  sum_s q_s^H B_s q_s - 2Re(beta^H q_lin) + const + sum_k c_k Re X_k."""
    A = np.zeros((lay.d, lay.d), dtype=complex)
    for s, B in blocks:
        sl = lay.stream(s)
        A[sl, sl] += B
    if linear is not None:
        s, beta = linear
        sl = lay.stream(s)
        A[sl, lay.t] -= beta
        A[lay.t, sl] -= np.conj(beta)
    A[lay.t, lay.t] += const
    if x_coef is not None:
        for k, c in x_coef:
            A[k, lay.t] += 0.5 * c
            A[lay.t, k] += 0.5 * c
    return A


def build_domain(ctx: ProblemContext, initial=False):
    """Constraint data of the projection domain at the current WMSE models.

    Local constraints per subcarrier, in order: common-rate coupling per user
    (1 + sum X >= xi_c), X_k <= 0 per user, jamming per AU, interference per
    PU, homogenization t = 1.  Coupling constraints: total power, QoS per user.
    With ``initial=True`` only power, jamming and interference are active.
    """
    cfg, lay, th = ctx.cfg, ctx.layout, ctx.th
    K, L, M, N = cfg.K, cfg.L, cfg.M, cfg.N
    ml = 2 * K + L + M + 1
    d = lay.d
    all_streams = range(lay.n_streams)
    Al = np.zeros((N, ml, d, d), dtype=complex)
    bl = np.zeros((N, ml))
    sl = np.zeros((N, ml), dtype=int)
    act = np.zeros((N, ml), dtype=bool)
    Ac = np.zeros((1 + K, N, d, d), dtype=complex)
    free_x = [k for k in range(K) if lay.free[k]]
    mdl = ctx.models
    families = (["common-rate"] * K + ["share-sign"] * K + ["jamming"] * L + ["interference"] * M
                + ["homogenization"])
    for n in range(N):
        i = 0
        for k in range(K):
            if not initial and lay.uses_common:
                Al[n, i] = _lift_quadratic(lay, [(s, mdl.A_c[k, n]) for s in all_streams],
                                           (0, mdl.beta_c[k, n]), mdl.const_c[k, n],
                                           [(j, -1.0) for j in free_x])
                bl[n, i], sl[n, i], act[n, i] = 1.0, 1, True
            i += 1
        for k in range(K):
            if not initial and lay.free[k]:
                Al[n, i] = _lift_quadratic(lay, [], x_coef=[(k, 1.0)])
                bl[n, i], sl[n, i], act[n, i] = 0.0, 1, True
            i += 1
        for l in range(L):
            if th.jam_mask[l, n] and th.J_thr[l, n] > 0:
                Al[n, i] = _lift_quadratic(lay, [(s, ctx.cs.R[l, n]) for s in all_streams])
                bl[n, i], sl[n, i], act[n, i] = th.J_thr[l, n], -1, True
            i += 1
        for m in range(M):
            if np.isfinite(th.I_thr[m, n]):
                Al[n, i] = _lift_quadratic(lay, [(s, ctx.Phi[m, n]) for s in all_streams])
                bl[n, i], sl[n, i], act[n, i] = th.I_thr[m, n], 1, True
            i += 1
        Al[n, i, lay.t, lay.t] = 1.0
        bl[n, i], sl[n, i], act[n, i] = 1.0, 0, True
        Ac[0, n] = _lift_quadratic(lay, [(s, np.eye(lay.Nt)) for s in all_streams])
        for k in range(K):
            if not initial:
                Ac[1 + k, n] = _lift_quadratic(lay, [(s, mdl.A_p[k, n]) for s in range(1, lay.n_streams)],
                                               (1 + k, mdl.beta_p[k, n]), mdl.const_p[k, n],
                                               [(k, 1.0)] if lay.free[k] else None)
    bc = np.concatenate([[cfg.Pt_bar], np.full(K, N * (1.0 - cfg.Rth))])
    sc = np.ones(1 + K, dtype=int)
    if initial:
        Ac, bc, sc = Ac[:1], bc[:1], sc[:1]
    ix = lay.idx
    Al = Al[:, :, ix][:, :, :, ix]
    Ac = Ac[:, :, ix][:, :, :, ix]
    obj = np.zeros((N, len(ix), len(ix)), dtype=complex)
    ctx.domain = BlockSdpProblem(obj, Al, bl, sl, act, Ac, bc, sc)
    # the relaxation is solved with bounds pulled inward so extracted points are strictly feasible
    ctx.sdp_domain = BlockSdpProblem(obj.copy(), Al, bl - sl * SDP_MARGIN * (1 + np.abs(bl)), sl, act,
                                     Ac, bc - sc * SDP_MARGIN * (1 + np.abs(bc)), sc)
    ctx.families = families
    ctx.coupling_families = ["power"] + ["qos"] * K
    return ctx.domain


def _lift(lay, u):
    """Reduced homogeneous vectors [u_free, 1] with shape (..., N, d_red)."""
    z = np.concatenate([u[..., lay.free], np.ones(u.shape[:-1] + (1,), dtype=complex)], axis=-1)
    return z


def _unlift(lay, z):
    u = np.zeros(z.shape[:-1] + (lay.nv,), dtype=complex)
    u[..., lay.free] = z[..., :-1]
    u[..., :lay.K] = np.real(u[..., :lay.K])
    return u


def _constraint_values(dom: BlockSdpProblem, z):
    """Local values (..., N, ml) and coupling values (..., mc) of tr(A zz^H)."""
    N, ml, d, _ = dom.local_A.shape
    zc = np.conj(z)
    Az = (dom.local_A.reshape(N, ml * d, d) @ z[..., None]).reshape(z.shape[:-1] + (ml, d))
    loc = np.real(np.sum(Az * zc[..., None, :], axis=-1))
    mc = dom.coupling_A.shape[0]
    if mc == 0:
        return loc, np.zeros(z.shape[:-2] + (0,))
    Cz = (np.swapaxes(dom.coupling_A, 0, 1).reshape(N, mc * d, d) @ z[..., None]).reshape(z.shape[:-1] + (mc, d))
    cpl = np.real(np.sum(Cz * zc[..., None, :], axis=-1)).sum(axis=-2)
    return loc, cpl


def _excess(vals, b, sense, active):
    e = np.where(sense > 0, vals - b, np.where(sense < 0, b - vals, np.abs(vals - b)))
    e = np.where(active, e / (1.0 + np.abs(b)), 0.0)
    return np.maximum(e, 0.0)


def local_violation(dom, z):
    loc, _ = _constraint_values(dom, z)
    return _excess(loc, dom.local_b, dom.local_sense, dom.local_active).max(axis=-1)


def coupling_violation(dom, z):
    _, cpl = _constraint_values(dom, z)
    if cpl.shape[-1] == 0:
        return np.zeros(cpl.shape[:-1])
    return _excess(cpl, dom.coupling_b, dom.coupling_sense, True).max(axis=-1)


def in_domain(ctx, u, tol=FEAS_TOL):
    z = _lift(ctx.layout, u)
    return bool(local_violation(ctx.domain, z).max() <= tol and coupling_violation(ctx.domain, z) <= tol)


# ---------------------------------------------------------------------------
# ADMM steps
# ---------------------------------------------------------------------------

@dataclass
class AdmmState:
    v: np.ndarray
    u: np.ndarray
    w: np.ndarray
    zeta: float
    r: np.ndarray = None
    q: np.ndarray = None
    r_hist: list = field(default_factory=list)
    q_hist: list = field(default_factory=list)
    inner_iter: int = 0
    outer_iter: int = 0


def v_update(ctx: ProblemContext, state: AdmmState):
    """Proximal WMSE step, solved in closed form per subcarrier and stream."""
    lay, mdl, zeta = ctx.layout, ctx.models, state.zeta
    anchor = state.u - state.w
    N = anchor.shape[0]
    v = np.zeros_like(anchor)
    v[:, :lay.K] = np.real(anchor[:, :lay.K]) - 1.0 / zeta
    a = anchor[:, lay.K:].reshape(N, lay.n_streams, lay.Nt)
    H = 2.0 * mdl.A_p.sum(axis=0)                                     # (N, Nt, Nt)
    q = np.zeros_like(a)
    q[:, 1:lay.K + 1] = -2.0 * np.swapaxes(mdl.beta_p, 0, 1)
    x = a.copy()
    x[:, 1:] = prox_quadratic_solve(H[:, None], q[:, 1:], a[:, 1:], zeta)
    v[:, lay.K:] = x.reshape(N, -1)
    v[:, ~lay.free] = 0.0
    return v


def _objective_blocks(lay, a):
    """Blocks of ||z - a||^2 written as tr(C zz^H) in the reduced homogeneous space."""
    af = a[:, lay.free]
    N, n = af.shape
    C = np.zeros((N, n + 1, n + 1), dtype=complex)
    C[:, np.arange(n), np.arange(n)] = 1.0
    C[:, :n, n] = -af
    C[:, n, :n] = -np.conj(af)
    C[:, n, n] = np.sum(np.abs(af) ** 2, axis=1)
    return C


def _candidates(S, count, rng):
    """Homogeneous candidate vectors (C, N, d) from per-block SDR solutions."""
    N, d, _ = S.shape
    out = [S[:, :, -1] / np.maximum(np.real(S[:, -1, -1]), 1e-300)[:, None]]
    vals, vecs = np.linalg.eigh(0.5 * (S + np.conj(np.swapaxes(S, -1, -2))))
    lam = np.clip(vals, 0.0, None)
    top = np.sqrt(lam[:, -1])[:, None] * vecs[:, :, -1]
    out.append(top)
    if count:
        G = (rng.standard_normal((count, N, d)) + 1j * rng.standard_normal((count, N, d))) / np.sqrt(2)
        Lc = vecs * np.sqrt(lam)[:, None, :]
        out.extend(np.einsum("nij,cnj->cni", Lc, G))
    Z = np.stack(out)
    zt = Z[..., -1:]
    phase = np.where(np.abs(zt) > 1e-300, np.conj(zt) / np.maximum(np.abs(zt), 1e-300), 1.0)
    # the linear candidate keeps its scale; eigen/randomized ones are phase aligned
    Z[1:] = Z[1:] * phase[1:]
    Z[..., -1] = 1.0
    return Z


def _bisect_toward(dom, z_prev, z_cand, local=True):
    """Largest step along z_prev -> z_cand (per subcarrier or global) that stays feasible."""
    def viol(z):
        if local:
            return local_violation(dom, z)
        return np.maximum(local_violation(dom, z).max(axis=-1), coupling_violation(dom, z))

    ok = viol(z_cand) <= FEAS_TOL
    if np.all(ok):
        return z_cand
    shape = ok.shape
    lo = np.zeros(shape)
    hi = np.ones(shape)
    lo[ok] = 1.0
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        zm = z_prev + mid[..., None] * (z_cand - z_prev) if local else z_prev + mid[..., None, None] * (z_cand - z_prev)
        good = viol(zm) <= FEAS_TOL
        lo = np.where(good & ~ok, mid, lo)
        hi = np.where(~good & ~ok, mid, hi)
    step = lo[..., None] if local else lo[..., None, None]
    return z_prev + step * (z_cand - z_prev)


def u_update(ctx: ProblemContext, state: AdmmState, thresholds=None):
    """Projection of v + w onto the domain via semidefinite relaxation.

    Candidates per subcarrier are the first column of the SDR block (exact when
    the relaxation is tight), the scaled principal eigenvector and Gaussian
    randomizations.  Each is pulled back toward the previous feasible iterate
    until the local constraints hold; per subcarrier the feasible candidate
    nearest to v + w is kept, and a final global pull-back enforces the
    coupling constraints.
    """
    lay, dom = ctx.layout, ctx.domain
    a = state.v + state.w
    a[:, :lay.K] = np.real(a[:, :lay.K])
    if in_domain(ctx, a):
        return a
    sdp = ctx.sdp_domain
    sdp.objective = _objective_blocks(lay, a)
    sol = sdp_solve(sdp, tol=ctx.scfg.sdp_tol, max_iter=ctx.scfg.sdp_max_iter)
    ctx.sdp_calls += 1
    if sol.status == INFEASIBLE:
        # the inward margin can empty a domain whose boundary is tight (e.g. zero
        # common rate against X_k <= 0); retry on the exact bounds
        dom.objective = sdp.objective
        sol = sdp_solve(dom, tol=ctx.scfg.sdp_tol, max_iter=ctx.scfg.sdp_max_iter)
        ctx.sdp_calls += 1
    if sol.status == INFEASIBLE:
        if in_domain(ctx, state.u):
            # nonempty after all; stay at the last feasible iterate for this step
            return state.u.copy()
        raise DomainInfeasible(_infeasible_family(ctx, sol))
    z_prev = _lift(lay, state.u)
    Z = _candidates(sol.S, 0, ctx.rng)
    if local_violation(dom, Z[0]).max() <= FEAS_TOL and coupling_violation(dom, Z[0]) <= FEAS_TOL:
        # tight relaxation: the first column already is the projection
        return _unlift(lay, Z[0])
    Z = _candidates(sol.S, ctx.scfg.randomization_count, ctx.rng)       # (C, N, d)
    Zr = _bisect_toward(dom, z_prev[None], Z, local=True)
    af = _lift(lay, a)
    dist = np.sum(np.abs(Zr - af[None]) ** 2, axis=-1)                  # (C, N)
    viol = local_violation(dom, Zr)
    key = np.where(viol <= FEAS_TOL, dist, np.inf)
    best = np.argmin(key, axis=0)
    # fall back to the least violating candidate where none is feasible
    none_ok = ~np.isfinite(key.min(axis=0))
    best = np.where(none_ok, np.argmin(viol, axis=0), best)
    z = Zr[best, np.arange(Zr.shape[1])]
    if coupling_violation(dom, z) > FEAS_TOL:
        z = _bisect_toward(dom, z_prev, z, local=False)
    return _unlift(lay, z)


def _infeasible_family(ctx, sol):
    y = sol.y
    dom = ctx.domain
    N, ml = dom.local_b.shape
    yl = np.abs(y[:N * ml]).reshape(N, ml)
    yl[:, -1] = 0.0
    fam_score = {}
    for i, name in enumerate(ctx.families):
        fam_score[name] = fam_score.get(name, 0.0) + float(yl[:, i].sum())
    for c, name in enumerate(ctx.coupling_families[:len(y) - N * ml]):
        fam_score[name] = fam_score.get(name, 0.0) + abs(float(y[N * ml + c]))
    worst = max(fam_score, key=fam_score.get)
    return f"projection domain is empty; dominant constraint family: {worst}"


def dual_update_and_residuals(state: AdmmState, u_old=None):
    """w += v - u; r = v - u; q = u - u_old; per-subcarrier norms summed into the histories."""
    r = state.v - state.u
    q = state.u - (u_old if u_old is not None else state.u)
    state.w = state.w + r
    state.r, state.q = r, q
    state.r_hist.append(float(np.linalg.norm(r, axis=1).sum()))
    state.q_hist.append(float(np.linalg.norm(q, axis=1).sum()))
    return state


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class Trace:
    rows: list = field(default_factory=list)      # (outer, inner, sum_rate, r, q)
    outer_rates: list = field(default_factory=list)
    max_inner_hit: bool = False
    max_outer_hit: bool = False
    feasible: bool = True
    sdp_calls: int = 0
    seconds: float = 0.0
    note: str = ""

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["outer_iter", "inner_iter", "sum_rate", "primal_residual", "dual_residual"])
            for row in self.rows:
                w.writerow([row[0], row[1], fmt(row[2]), fmt(row[3]), fmt(row[4])])


def sum_rate_at(ctx, u):
    """SAA rate report at ``u`` with common shares -X."""
    pre = ctx.layout.to_precoders(u)
    I_c, I_p = saa_mutual_information(ctx.samples, pre.stacked(), ctx.cfg.N0)
    pre.c_bar = _fit_shares(pre.c_bar, I_c)
    return pre, rates_from_information(I_c, I_p, pre.c_bar)


def _fit_shares(c_bar, I_c):
    """Scale shares down where they exceed the decodable common rate by rounding error."""
    cap = I_c.min(axis=0)
    tot = c_bar.sum(axis=0)
    scale = np.where(tot > cap, cap / np.maximum(tot, 1e-300), 1.0)
    return c_bar * scale


def allocate_shares(I_c, I_p, Rth):
    """Common-rate shares (K, N) covering each user's QoS deficit, the rest split evenly."""
    K, N = I_p.shape
    cap = np.maximum(I_c.min(axis=0), 0.0)
    Rc = cap.sum() / N
    deficit = np.maximum(0.0, Rth - I_p.sum(axis=1) / N)
    if Rc <= 0:
        return np.zeros((K, N))
    frac = deficit / Rc
    spare = max(0.0, 1.0 - frac.sum())
    frac = frac + spare / K
    frac = frac / max(1.0, frac.sum())
    return frac[:, None] * cap[None]


def initial_point(ctx: ProblemContext):
    """Feasible starting point.

    Maximum-ratio private precoders (and a common precoder along the sum of the
    estimates) share the power left after the jamming witness, are projected
    onto the power/jamming/interference domain, and the common-rate shares are
    then set from the resulting common rates.
    """
    cfg, cs, lay = ctx.cfg, ctx.cs, ctx.layout
    N, K = cfg.N, cfg.K
    F = witness_precoders(cfg, cs, ctx.th) if cfg.jamming != "off" else np.zeros((cfg.L, N, cfg.Nt), complex)
    u_w = np.zeros((N, lay.nv), dtype=complex)
    for l in range(cfg.L):
        u_w[:, lay.stream(1 + K + l)] = F[l]
    u_w[:, ~lay.free] = 0.0
    spare = max(0.0, cfg.Pt_bar - float(np.sum(np.abs(u_w) ** 2)))
    comm = [s for s in range(1 + K) if lay.free[lay.stream(s)].all()]
    a0 = u_w.copy()
    if comm and spare > 0:
        per = spare / (N * len(comm))
        for s in comm:
            d = cs.h_hat.sum(axis=0) if s == 0 else cs.h_hat[s - 1]
            nrm = np.linalg.norm(d, axis=1, keepdims=True)
            a0[:, lay.stream(s)] = np.sqrt(per) * d / np.maximum(nrm, 1e-300)
    # weights at zero precoders keep the initial domain free of rate constraints
    update_weights_and_filters(ctx, np.zeros_like(a0))
    build_domain(ctx, initial=True)
    st = AdmmState(v=a0, u=u_w, w=np.zeros_like(a0), zeta=ctx.scfg.zeta)
    u0 = u_update(ctx, st)
    u0[:, :K] = 0.0
    pre = lay.to_precoders(u0)
    I_c, I_p = saa_mutual_information(ctx.samples, pre.stacked(), cfg.N0)
    if lay.uses_common:
        shares = allocate_shares(I_c, I_p, cfg.Rth)
        shares[~lay.free[:K]] = 0.0
        u0[:, :K] = -shares.T
    return u0


def _feasible_for_audit(ctx, u):
    """True constraint check (rates with optimal weights, powers) for a candidate output."""
    pre, rep = sum_rate_at(ctx, u)
    audit = audit_solution(ctx.cfg, ctx.cs, ctx.th, pre, rep)
    return audit["ok"], pre, rep


def ao_admm_solve(cfg, cs, th, scfg: SolverConfig | None = None, init=None, ctx=None, realization=0):
    """Run the AO-ADMM loop and return (PrecoderSet, RateReport, Trace).

    ``init`` optionally supplies a starting PrecoderSet (e.g. another scheme's
    solution embedded into this scheme).  The returned precoders are the best
    sum-rate iterate among those passing the constraint audit.
    """
    t0 = time.perf_counter()
    scfg = scfg or SolverConfig.from_scenario(cfg)
    ctx = ctx or build_problem(cfg, cs, th, scfg, realization=realization)
    lay = ctx.layout
    trace = Trace()
    if cfg.Pt_bar == 0:
        pre = PrecoderSet.zeros(cfg.K, cfg.L, cfg.N, cfg.Nt)
        u = lay.from_precoders(pre)
        pre, rep = sum_rate_at(ctx, u)
        trace.rows.append((0, 0, rep.R_sum, 0.0, 0.0))
        trace.outer_rates.append(rep.R_sum)
        return pre, rep, trace

    u = lay.from_precoders(init) if init is not None else initial_point(ctx)
    best = None
    ok, pre, rep = _feasible_for_audit(ctx, u)
    if ok:
        best = (rep.R_sum, pre, rep)
    sr_prev = rep.R_sum
    trace.outer_rates.append(sr_prev)
    trace.rows.append((0, 0, sr_prev, 0.0, 0.0))
    state = AdmmState(v=u.copy(), u=u.copy(), w=np.zeros_like(u), zeta=scfg.zeta)
    for outer in range(1, scfg.max_outer + 1):
        state.outer_iter = outer
        update_weights_and_filters(ctx, state.u)
        build_domain(ctx)
        state.w = np.zeros_like(state.u)
        for inner in range(1, scfg.max_inner + 1):
            state.inner_iter = inner
            u_old = state.u
            state.v = v_update(ctx, state)
            state.u = u_update(ctx, state)
            dual_update_and_residuals(state, u_old)
            if scfg.verbose:
                print(f"outer {outer} inner {inner} r {state.r_hist[-1]:.3e} q {state.q_hist[-1]:.3e}")
            if state.r_hist[-1] <= scfg.eps_a and state.q_hist[-1] <= scfg.eps_a:
                break
        else:
            trace.max_inner_hit = True
        ok, pre, rep = _feasible_for_audit(ctx, state.u)
        sr = rep.R_sum
        trace.rows.append((outer, state.inner_iter, sr, state.r_hist[-1], state.q_hist[-1]))
        trace.outer_rates.append(sr)
        if ok and (best is None or sr > best[0]):
            best = (sr, pre, rep)
        if abs(sr - sr_prev) <= scfg.eps_r:
            break
        sr_prev = sr
    else:
        trace.max_outer_hit = True
    trace.sdp_calls = ctx.sdp_calls
    trace.seconds = time.perf_counter() - t0
    if best is None:
        trace.feasible = False
        trace.note = "no iterate passed the constraint audit"
        return pre, rep, trace
    return best[1], best[2], trace


# ---------------------------------------------------------------------------
# audit and schemes
# ---------------------------------------------------------------------------

def audit_solution(cfg, cs, th, pre: PrecoderSet, rep, tol=1e-6):
    """Independent constraint check built from the metrics functions."""
    N = cfg.N
    jam_margin = np.inf
    intf_margin = np.inf
    for n in range(N):
        sl = pre.at(n)
        for l in range(cfg.L):
            if th.jam_mask[l, n]:
                jam_margin = min(jam_margin, jamming_power(cs.R[l, n], sl) - th.J_thr[l, n])
        for m in range(cfg.M):
            if np.isfinite(th.I_thr[m, n]):
                _, psi = interference_power(cs.M_hat[m][n], cs.sigma_pe2, cfg.Nr[m], sl)
                intf_margin = min(intf_margin, th.I_thr[m, n] - psi)
    power = pre.total_power()
    qos_margin = float(np.min(rep.R_user) - cfg.Rth) if cfg.Rth > 0 else np.inf
    out = {
        "jamming_ok": bool(jam_margin >= -tol),
        "interference_ok": bool(intf_margin >= -tol),
        "power_ok": bool(power <= cfg.Pt_bar + tol),
        "qos_ok": bool(qos_margin >= -tol),
        "jamming_margin": float(jam_margin),
        "interference_margin": float(intf_margin),
        "power": float(power),
        "qos_margin": float(qos_margin),
    }
    out["ok"] = out["jamming_ok"] and out["interference_ok"] and out["power_ok"] and out["qos_ok"]
    return out


def embed(pre: PrecoderSet, layout: Layout):
    """Restrict a precoder set to a scheme's free variables."""
    return layout.to_precoders(layout.from_precoders(pre))


def solve_scheme(cfg, cs, th, scheme=None, scfg=None, warm_starts=(), realization=0):
    """Solve one scheme; NOMA tries both decoding orders and keeps the better.

    ``warm_starts`` are extra initial PrecoderSets.  Each is embedded into the
    scheme and, when it already passes the audit with a higher sum-rate than
    the best run so far, used as the start of another run.  The result is never
    worse than any admissible warm start.
    Returns (PrecoderSet, RateReport, Trace, info dict).
    """
    scheme = scheme or cfg.scheme
    scfg = scfg or SolverConfig.from_scenario(cfg)
    scfg = SolverConfig(**{**scfg.__dict__, "scheme": scheme})
    designated = [weaker_user(cs), 1 - weaker_user(cs)] if scheme == "NOMA" else [None]
    best = None
    info = {"runs": []}
    for dsg in designated:
        starts = [None] + list(warm_starts)
        for i, ws in enumerate(starts):
            ctx = build_problem(cfg, cs, th, scfg, designated=dsg, realization=realization)
            init = None
            if ws is not None:
                init = embed(ws, ctx.layout)
                ok, _, rep0 = _feasible_for_audit(ctx, ctx.layout.from_precoders(init))
                if not ok or (best is not None and best[0] >= (True, rep0.R_sum)):
                    continue
            pre, rep, trace = ao_admm_solve(cfg, cs, th, scfg, init=init, ctx=ctx)
            info["runs"].append({"designated": dsg, "start": i, "sum_rate": rep.R_sum,
                                 "feasible": trace.feasible})
            key = (trace.feasible, rep.R_sum)
            if best is None or key > best[0]:
                best = (key, pre, rep, trace, dsg)
    info["designated"] = best[4]
    return best[1], best[2], best[3], info
