"""Small dense numerical kernels: Hermitian eigendecomposition, a primal-dual
path-following SDP solver, rank-one extraction and a proximal quadratic solve.

The SDP solver works natively with complex Hermitian data.  It accepts either a
single dense block (:class:`SdpProblem`) or a block-diagonal variable whose
constraints are mostly local to one block (:class:`BlockSdpProblem`); the second
form is what the ADMM projection step builds, one homogenized block per
subcarrier.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

SENSES = {"<=": 1, ">=": -1, "=": 0}

OPTIMAL = "optimal"
NEAR_OPTIMAL = 1e-7
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"


def _herm(A):
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def _phase_fix(v, tol=1e-8):
    """Rotate ``v`` so its first entry with modulus above ``tol`` is real positive."""
    idx = np.flatnonzero(np.abs(v) > tol)
    if idx.size == 0:
        return v
    z = v[idx[0]]
    return v * (np.conj(z) / abs(z))


def hermitian_eig(A, tol=1e-10):
    """Eigendecomposition of a Hermitian matrix, eigenvalues in descending order.

    Eigenvectors are made deterministic: within a (numerically) repeated
    eigenvalue the basis is built from the projections of the canonical vectors
    e_1, e_2, ... onto the eigenspace (Gram-Schmidt), so the leading vector is the
    unit vector of the eigenspace with the largest first nonzero entry.  Every
    vector has its first nonzero entry real and positive.

    Returns
    -------
    w : ndarray, shape (d,)
    V : ndarray, shape (d, d)
        Columns are orthonormal eigenvectors, ``A = V diag(w) V^H``.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("hermitian_eig expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.conj().T)) > tol * scale:
        raise ValueError("matrix is not Hermitian")
    w, V = np.linalg.eigh(_herm(A.astype(complex)))
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    d = len(w)
    gap_tol = tol * max(1.0, float(np.max(np.abs(w)))) if d else tol
    out = np.empty_like(V)
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and abs(w[stop] - w[start]) <= gap_tol:
            stop += 1
        W = V[:, start:stop]
        r = stop - start
        if r == 1:
            out[:, start] = _phase_fix(W[:, 0])
        else:
            chosen = []
            for j in range(d):
                cand = W @ np.conj(W[j, :])
                for c in chosen:
                    cand = cand - c * (np.conj(c) @ cand)
                nrm = np.linalg.norm(cand)
                if nrm > 1e-8:
                    chosen.append(_phase_fix(cand / nrm))
                if len(chosen) == r:
                    break
            out[:, start:stop] = np.column_stack(chosen)
        start = stop
    return w, out


def principal_eigenpair(A):
    """Largest eigenvalue and its canonical unit eigenvector."""
    w, V = hermitian_eig(A)
    return w[0], V[:, 0]


# ---------------------------------------------------------------------------
# SDP data
# ---------------------------------------------------------------------------

@dataclass
class SdpProblem:
    """minimize tr(C S) subject to tr(A_i S) (<=, >=, =) b_i and S PSD."""

    objective: np.ndarray
    constraints: Sequence[tuple] = field(default_factory=list)

    @property
    def dimension(self):
        return self.objective.shape[0]

    def validate(self):
        d = self.dimension
        C = np.asarray(self.objective)
        if C.shape != (d, d):
            raise ValueError("objective must be square")
        if np.max(np.abs(C - C.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(C), initial=0.0)):
            raise ValueError("objective is not Hermitian")
        for A, sense, _ in self.constraints:
            A = np.asarray(A)
            if A.shape != (d, d):
                raise ValueError(f"constraint matrix has shape {A.shape}, expected {(d, d)}")
            if sense not in SENSES:
                raise ValueError(f"unknown constraint sense {sense!r}")
            if np.max(np.abs(A - A.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(A), initial=0.0)):
                raise ValueError("constraint matrix is not Hermitian")

    def to_blocks(self):
        d = self.dimension
        m = len(self.constraints)
        Al = np.zeros((1, max(m, 1), d, d), dtype=complex)
        bl = np.zeros((1, max(m, 1)))
        sl = np.zeros((1, max(m, 1)), dtype=int)
        act = np.zeros((1, max(m, 1)), dtype=bool)
        for i, (A, sense, b) in enumerate(self.constraints):
            Al[0, i] = A
            bl[0, i] = b
            sl[0, i] = SENSES[sense]
            act[0, i] = True
        return BlockSdpProblem(
            objective=np.asarray(self.objective, dtype=complex)[None],
            local_A=Al, local_b=bl, local_sense=sl, local_active=act,
        )


@dataclass
class BlockSdpProblem:
    """Block-diagonal SDP with ``nb`` equal-size Hermitian blocks.

    ``local_*`` arrays hold up to ``ml`` constraints per block that only touch
    that block (padding rows are switched off by ``local_active``);
    ``coupling_*`` hold constraints that sum traces over all blocks.  Senses use
    +1 for <=, -1 for >=, 0 for =.
    """

    objective: np.ndarray                 # (nb, d, d)
    local_A: np.ndarray                   # (nb, ml, d, d)
    local_b: np.ndarray                   # (nb, ml)
    local_sense: np.ndarray               # (nb, ml)
    local_active: np.ndarray              # (nb, ml)
    coupling_A: np.ndarray = None         # (mc, nb, d, d)
    coupling_b: np.ndarray = None         # (mc,)
    coupling_sense: np.ndarray = None     # (mc,)

    def __post_init__(self):
        nb, d, _ = self.objective.shape
        if self.coupling_A is None:
            self.coupling_A = np.zeros((0, nb, d, d), dtype=complex)
            self.coupling_b = np.zeros(0)
            self.coupling_sense = np.zeros(0, dtype=int)
        if self.local_A.shape[:1] != (nb,) or self.local_A.shape[2:] != (d, d):
            raise ValueError("local constraint matrices have inconsistent dimensions")
        if self.coupling_A.shape[1:] != (nb, d, d):
            raise ValueError("coupling constraint matrices have inconsistent dimensions")

    @property
    def shape(self):
        return self.objective.shape


@dataclass
class SdpSolution:
    S: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    gap: float = np.nan
    objective: float = np.nan
    y: np.ndarray = None
    iterations: int = 0
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# primal-dual path following (HKM direction, Mehrotra predictor-corrector)
# ---------------------------------------------------------------------------

class _Ops:
    """Linear maps of a block problem, flattened to a global constraint vector."""

    def __init__(self, P: BlockSdpProblem):
        self.C = _herm(np.asarray(P.objective, dtype=complex))
        self.nb, self.d, _ = self.C.shape
        self.Al = _herm(np.asarray(P.local_A, dtype=complex))
        self.Ac = _herm(np.asarray(P.coupling_A, dtype=complex))
        self.ml = self.Al.shape[1]
        self.mc = self.Ac.shape[0]
        self.nl = self.nb * self.ml
        self.m = self.nl + self.mc
        act = np.concatenate([np.asarray(P.local_active, bool).ravel(), np.ones(self.mc, bool)])
        self.active = act
        self.b = np.concatenate([np.asarray(P.local_b, float).ravel(), np.asarray(P.coupling_b, float)])
        self.b[~act] = 0.0
        s = np.concatenate([np.asarray(P.local_sense, int).ravel(), np.asarray(P.coupling_sense, int)])
        s[~act] = 0
        self.s = s.astype(float)
        self.ineq = (s != 0)
        Af = np.concatenate([self.Al, np.swapaxes(self.Ac, 0, 1)], axis=1)
        self.Afull = Af                                   # (nb, ml+mc, d, d)
        self.Aflat = Af.reshape(self.nb, self.ml + self.mc, -1)
        self.li = np.arange(self.nl).reshape(self.nb, self.ml)

    def A(self, X):
        XT = np.swapaxes(X, -1, -2).reshape(self.nb, -1, 1)
        vals = np.real(self.Aflat @ XT)[..., 0]          # (nb, ml+mc)
        out = np.empty(self.m)
        out[:self.nl] = vals[:, :self.ml].ravel()
        out[self.nl:] = vals[:, self.ml:].sum(axis=0)
        return out

    def AT(self, y):
        yl = y[:self.nl].reshape(self.nb, self.ml)
        out = np.einsum("bi,bipq->bpq", yl, self.Al)
        if self.mc:
            out = out + np.einsum("c,cbpq->bpq", y[self.nl:], self.Ac)
        return out

    def schur(self, X, Zinv):
        T = X[:, None] @ self.Afull @ Zinv[:, None]
        Tt = np.swapaxes(T, -1, -2).reshape(self.nb, T.shape[1], -1)
        Mb = np.real(self.Aflat @ np.swapaxes(Tt, -1, -2))  # (nb, mt, mt)
        M = np.zeros((self.m, self.m))
        ml, li = self.ml, self.li
        M[li[:, :, None], li[:, None, :]] = Mb[:, :ml, :ml]
        if self.mc:
            cj = self.nl + np.arange(self.mc)
            M[li[:, :, None], cj[None, None, :]] = Mb[:, :ml, ml:]
            M[cj[None, :, None], li[:, None, :]] = Mb[:, ml:, :ml]
            M[self.nl:, self.nl:] = Mb[:, ml:, ml:].sum(axis=0)
        return M

    def inner(self, X, Z):
        return float(np.real(np.sum(X * np.conj(Z))))


def _max_step(X, dX):
    """Largest alpha with X + alpha dX PSD (inf if unbounded)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = np.linalg.inv(L)
    W = _herm(Li @ dX @ np.conj(np.swapaxes(Li, -1, -2)))
    lam = np.linalg.eigvalsh(W).min()
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _solve_spd(M, rhs):
    try:
        c = sla.cho_factor(M, check_finite=False)
        return lambda r: sla.cho_solve(c, r, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        lu = sla.lu_factor(M + 1e-14 * np.trace(M) / len(M) * np.eye(len(M)), check_finite=False)
        return lambda r: sla.lu_solve(lu, r, check_finite=False)


def _solve_block(P: BlockSdpProblem, tol=1e-9, max_iter=100, verbose=False, start=None):
    ops = _Ops(P)
    nb, d, m = ops.nb, ops.d, ops.m
    s, ineq, b = ops.s, ops.ineq, ops.b
    n_cone = nb * d + int(ineq.sum())

    normC = float(np.sqrt(np.sum(np.abs(ops.C) ** 2)))
    normb = float(np.linalg.norm(b))
    # a moderate identity start; infeasible-start steps take care of scaling
    xi = eta = max(1.0, np.sqrt(d))
    if start is not None:
        xi, eta = start
    eye = np.broadcast_to(np.eye(d, dtype=complex), (nb, d, d))
    X = xi * eye.copy()
    Z = eta * eye.copy()
    x = np.where(ineq, xi, 0.0)
    z = np.where(ineq, eta, 0.0)
    y = np.zeros(m)

    history = []
    status = MAX_ITERATIONS
    diverging = 0
    relp_prev = np.inf
    dobj_prev = -np.inf
    relp = reld = gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        AX = ops.A(X)
        rp = b - AX - s * x
        Rd = ops.C - ops.AT(y) - Z
        rd = np.where(ineq, -s * y - z, 0.0)
        pobj = ops.inner(ops.C, X)
        dobj = float(b @ y)
        mu = (ops.inner(X, Z) + float(x @ z)) / n_cone
        relp = float(np.linalg.norm(rp)) / (1 + normb)
        reld = float(np.sqrt(np.sum(np.abs(Rd) ** 2) + np.sum(rd ** 2))) / (1 + normC)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        history.append((it, gap, relp, reld))
        if verbose:
            print(f"  sdp it {it:3d} pobj {pobj: .6e} dobj {dobj: .6e} relp {relp:.1e} reld {reld:.1e} gap {gap:.1e}")
        if relp <= tol and reld <= tol and gap <= tol:
            status = OPTIMAL
            break

        # primal infeasibility: Farkas certificate or sustained divergence
        if dobj > 0 and relp > tol:
            yh = y / dobj
            cert = -ops.AT(yh)
            viol = max(0.0, -float(np.linalg.eigvalsh(_herm(cert)).min()))
            if np.any(ineq):
                viol = max(viol, float(np.max(np.where(ineq, s * yh, -np.inf))))
            if viol <= 1e-8:
                status = INFEASIBLE
                break
            if relp >= 0.9 * relp_prev and dobj > dobj_prev:
                diverging += 1
            else:
                diverging = 0
            if diverging >= 50:
                status = INFEASIBLE
                break
        relp_prev, dobj_prev = relp, dobj

        try:
            Zinv = _herm(np.linalg.inv(Z))
        except np.linalg.LinAlgError:
            # Z lost definiteness in floating point right at the optimum
            status = OPTIMAL if max(relp, reld, gap) <= NEAR_OPTIMAL else MAX_ITERATIONS
            break
        M = ops.schur(X, Zinv)
        xz = np.where(ineq, x / np.where(ineq, z, 1.0), 0.0)
        M[np.diag_indices(m)] += s * s * xz
        inactive = ~ops.active
        if np.any(inactive):
            M[inactive, :] = 0.0
            M[:, inactive] = 0.0
            M[inactive, inactive] = 1.0
        solve = _solve_spd(M, None)
        XRdZi = X @ Rd @ Zinv
        zsafe = np.where(ineq, z, 1.0)

        def direction(RcZi, rc_lp):
            rhs = rp - ops.A(RcZi - XRdZi) - np.where(ineq, s * (rc_lp - x * rd) / zsafe, 0.0)
            rhs[inactive] = 0.0
            dy = solve(rhs)
            dZ = Rd - ops.AT(dy)
            dz = np.where(ineq, rd - s * dy, 0.0)
            dX = _herm(RcZi - X @ dZ @ Zinv)
            dx = np.where(ineq, (rc_lp - x * dz) / zsafe, 0.0)
            return dX, dx, dy, dZ, dz

        # predictor
        dXa, dxa, dya, dZa, dza = direction(-X, np.where(ineq, -x * z, 0.0))
        ap = min(1.0, _max_step(X, dXa), _max_step_lp(x[ineq], dxa[ineq]))
        ad = min(1.0, _max_step(Z, dZa), _max_step_lp(z[ineq], dza[ineq]))
        mu_aff = (ops.inner(X + ap * dXa, Z + ad * dZa) + float((x + ap * dxa) @ (z + ad * dza))) / n_cone
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector
        RcZi = sigma * mu * Zinv - X - dXa @ dZa @ Zinv
        rc_lp = np.where(ineq, sigma * mu - x * z - dxa * dza, 0.0)
        dX, dx, dy, dZ, dz = direction(RcZi, rc_lp)
        ap = min(1.0, 0.98 * _max_step(X, dX), 0.98 * _max_step_lp(x[ineq], dx[ineq]))
        ad = min(1.0, 0.98 * _max_step(Z, dZ), 0.98 * _max_step_lp(z[ineq], dz[ineq]))
        X = _herm(X + ap * dX)
        x = x + ap * dx
        y = y + ad * dy
        Z = _herm(Z + ad * dZ)
        z = z + ad * dz

    return SdpSolution(
        S=X, status=status, primal_residual=relp, dual_residual=reld, gap=gap,
        objective=ops.inner(ops.C, X), y=y, iterations=it, history=history,
    )


def sdp_solve(problem, tol=1e-9, max_iter=100, verbose=False, log_path=None):
    """Solve a dense or block-diagonal SDP by primal-dual path following.

    Parameters
    ----------
    problem : SdpProblem or BlockSdpProblem
    tol : float
        Relative tolerance on primal residual, dual residual and duality gap.
    max_iter : int
    verbose : bool
        Print one line per iteration.
    log_path : path-like, optional
        Write the iterate history (iteration, gap, residuals) as CSV.

    Returns
    -------
    SdpSolution
        ``S`` is a (d, d) matrix for :class:`SdpProblem` and an (nb, d, d) stack
        for :class:`BlockSdpProblem`.
    """
    if isinstance(problem, SdpProblem):
        problem.validate()
        sol = _solve_block(problem.to_blocks(), tol=tol, max_iter=max_iter, verbose=verbose)
        sol.S = sol.S[0]
        if sol.y is not None:
            sol.y = sol.y[: len(problem.constraints)]
    elif isinstance(problem, BlockSdpProblem):
        sol = _solve_block(problem, tol=tol, max_iter=max_iter, verbose=verbose)
    else:
        raise TypeError("expected SdpProblem or BlockSdpProblem")
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "gap", "primal_residual", "dual_residual"])
            for row in sol.history:
                w.writerow([row[0]] + [f"{v:.6e}" for v in row[1:]])
    return sol


# ---------------------------------------------------------------------------
# rank-one extraction
# ---------------------------------------------------------------------------

class RankOne(NamedTuple):
    vector: np.ndarray
    violation: float
    objective: float
    quality: float      # lambda_max(S) / tr(S); 1 means S is rank one


def _violations(vals, senses, bounds):
    out = np.zeros_like(vals)
    for i, sense in enumerate(senses):
        if sense == "<=":
            out[..., i] = np.maximum(0.0, vals[..., i] - bounds[i])
        elif sense == ">=":
            out[..., i] = np.maximum(0.0, bounds[i] - vals[..., i])
        else:
            out[..., i] = np.abs(vals[..., i] - bounds[i])
    return out.sum(axis=-1)


def _best_scale(quad, senses, bounds):
    """Scale t = c^2 >= 0 minimising the total violation of c^2 * quad vs bounds."""
    if _violations(quad[None], senses, bounds)[0] <= 0:
        return 1.0
    cands = [0.0, 1.0]
    for a, bnd in zip(quad, bounds):
        if abs(a) > 1e-300 and bnd / a >= 0:
            cands.append(bnd / a)
    cands = np.array(cands)
    viol = _violations(cands[:, None] * quad[None], senses, bounds)
    best = viol.min()
    near = np.flatnonzero(viol <= best + 1e-12)
    return float(cands[near[np.argmin(np.abs(cands[near] - 1.0))]])


def rank_one_extract(S, problem: SdpProblem, randomization_count=0, rng=None):
    """Recover a vector f with f f^H approximating an SDP solution S.

    The candidate set is the scaled principal eigenvector plus
    ``randomization_count`` Gaussian draws x ~ CN(0, S).  Each candidate is
    rescaled (if it violates a constraint) to the scale minimising the summed
    violation; the candidate with the least violation wins, ties broken by the
    objective tr(C f f^H).
    """
    S = _herm(np.asarray(S, dtype=complex))
    w, V = hermitian_eig(S)
    lam = np.clip(w, 0.0, None)
    trace = float(lam.sum())
    quality = float(lam[0] / trace) if trace > 0 else 1.0
    senses = [c[1] for c in problem.constraints]
    bounds = np.array([c[2] for c in problem.constraints], dtype=float)
    As = [np.asarray(c[0]) for c in problem.constraints]
    C = np.asarray(problem.objective)

    cands = [np.sqrt(lam[0]) * V[:, 0]]
    if randomization_count > 0:
        rng = np.random.default_rng() if rng is None else rng
        d = S.shape[0]
        G = (rng.standard_normal((randomization_count, d)) + 1j * rng.standard_normal((randomization_count, d))) / np.sqrt(2)
        cands.extend((V * np.sqrt(lam)) @ g for g in G)

    best = None
    for f in cands:
        quad = np.array([np.real(np.conj(f) @ A @ f) for A in As])
        t = _best_scale(quad, senses, bounds) if As else 1.0
        f = np.sqrt(t) * f
        viol = float(_violations((t * quad)[None], senses, bounds)[0]) if As else 0.0
        obj = float(np.real(np.conj(f) @ C @ f))
        key = (round(viol, 12), obj)
        if best is None or key < best[0]:
            best = (key, f, viol, obj)
    return RankOne(best[1], best[2], best[3], quality)


# ---------------------------------------------------------------------------
# proximal quadratic step
# ---------------------------------------------------------------------------

def prox_quadratic_solve(H, q, a, zeta):
    """Minimiser of 0.5 x^H H x + Re(q^H x) + (zeta/2)||x - a||^2.

    ``H`` must be PSD; the solution solves (H + zeta I) x = zeta a - q.  Leading
    batch dimensions are supported.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    H = np.asarray(H)
    a = np.asarray(a)
    q = np.asarray(q)
    n = H.shape[-1]
    K = H + zeta * np.eye(n)
    rhs = zeta * a - q
    if K.ndim == 2:
        c = sla.cho_factor(_herm(K), check_finite=False)
        return sla.cho_solve(c, rhs, check_finite=False)
    return np.linalg.solve(K, rhs[..., None])[..., 0]
