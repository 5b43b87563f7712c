"""Latent social-tie inference and SUE selection.

Each observed user pair (i, j) carries a latent strength z_ij with a Gaussian
prior centred on ``w @ similarity``, and binary interactions whose log-odds are
``rho_f @ [aux_f, z_ij]``. The MAP point estimate is found by block-coordinate
ascent: ridge regression for ``w``, per-pair Newton steps for ``z`` and a
Newton step per interaction type for ``rho``, with a guarded over-relaxation
step after each sweep.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeVector:
    user: int
    attrs: np.ndarray


def similarity_vector(x_i, x_j) -> np.ndarray:
    """Per-attribute co-occurrence indicator with a trailing bias of 1."""
    a = np.asarray(getattr(x_i, "attrs", x_i))
    b = np.asarray(getattr(x_j, "attrs", x_j))
    if a.shape != b.shape:
        raise ValueError(f"attribute length mismatch: {a.shape} vs {b.shape}")
    both = ((a == 1) & (b == 1)).astype(float)
    return np.append(both, 1.0)


def interaction_probability(rho_f, u) -> float:
    """Logistic probability that an interaction occurs."""
    return float(expit(np.dot(rho_f, u)))


@dataclass
class PairSamples:
    """Observed pair set, vectorized.

    pairs: (D, 2) user indices; similarity: (D, K); interactions: (D, F) in
    {0, 1}; aux: (D, F, T) side information per interaction.
    """

    pairs: np.ndarray
    similarity: np.ndarray
    interactions: np.ndarray
    aux: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        self.similarity = np.asarray(self.similarity, dtype=float)
        self.interactions = np.asarray(self.interactions, dtype=float)
        self.aux = np.asarray(self.aux, dtype=float)
        D = self.pairs.shape[0]
        if self.similarity.shape[0] != D or self.interactions.shape[0] != D or self.aux.shape[0] != D:
            raise ValueError("inconsistent number of pair samples")
        if self.interactions.ndim != 2 or self.aux.ndim != 3 or self.aux.shape[1] != self.interactions.shape[1]:
            raise ValueError("interactions must be (D, F) and aux (D, F, T)")
        if not np.all((self.interactions == 0) | (self.interactions == 1)):
            raise ValueError("interactions must be binary")

    def __len__(self):
        return self.pairs.shape[0]

    @property
    def n_interactions(self) -> int:
        return self.interactions.shape[1]

    @property
    def aux_dim(self) -> int:
        return self.aux.shape[2]


@dataclass
class TieModelParams:
    w: np.ndarray
    rho: np.ndarray  # (F, T + 1); last column multiplies z
    upsilon: float = 1.0
    lambda_w: float = 0.5
    lambda_rho: float = 0.5

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.rho = np.atleast_2d(np.asarray(self.rho, dtype=float))
        if not self.upsilon > 0:
            raise ValueError("upsilon must be positive")
        if self.lambda_w < 0 or self.lambda_rho < 0:
            raise ValueError("regularizers must be nonnegative")

    def save(self, path) -> None:
        lines = [f"upsilon = {self.upsilon!r}", f"lambda_w = {self.lambda_w!r}",
                 f"lambda_rho = {self.lambda_rho!r}"]
        lines += [f"w.{k} = {v!r}" for k, v in enumerate(self.w.tolist())]
        for f, row in enumerate(self.rho.tolist()):
            lines += [f"rho.{f}.{t} = {v!r}" for t, v in enumerate(row)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TieModelParams":
        kv = {}
        for line in Path(path).read_text().splitlines():
            if line.strip():
                k, v = (s.strip() for s in line.split("=", 1))
                kv[k] = float(v)
        w = [kv[f"w.{k}"] for k in range(sum(k.startswith("w.") for k in kv))]
        rho_keys = [tuple(map(int, k.split(".")[1:])) for k in kv if k.startswith("rho.")]
        F = 1 + max(f for f, _ in rho_keys)
        T = 1 + max(t for _, t in rho_keys)
        rho = [[kv[f"rho.{f}.{t}"] for t in range(T)] for f in range(F)]
        return cls(np.array(w), np.array(rho), kv["upsilon"], kv["lambda_w"], kv["lambda_rho"])


@dataclass
class SocialTieMatrix:
    """Symmetric, zero-diagonal tie strengths. ``user_ids`` labels rows."""

    z: np.ndarray
    user_ids: Optional[list] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 2 or self.z.shape[0] != self.z.shape[1]:
            raise ValueError("tie matrix must be square")
        if self.user_ids is None:
            self.user_ids = list(range(self.z.shape[0]))

    def __len__(self):
        return self.z.shape[0]

    def subset(self, idx: Sequence[int]) -> "SocialTieMatrix":
        idx = list(idx)
        return SocialTieMatrix(self.z[np.ix_(idx, idx)], [self.user_ids[i] for i in idx])

    def to_csv(self, path) -> None:
        rows = [",".join(str(u) for u in self.user_ids)]
        rows += [",".join(repr(float(v)) for v in row) for row in self.z]
        Path(path).write_text("\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SocialTieMatrix":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"{path}: empty tie matrix file")
        ids = [int(t) if t.strip().lstrip("-").isdigit() else t.strip() for t in lines[0].split(",")]
        z = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]])
        if z.shape != (len(ids), len(ids)):
            raise ValueError(f"{path}: expected {len(ids)}x{len(ids)} values, got {z.shape}")
        return cls(z, ids)


# -- objective ---------------------------------------------------------------

def _augmented(data: PairSamples, z: np.ndarray) -> np.ndarray:
    D, F, _ = data.aux.shape
    zcol = np.broadcast_to(np.asarray(z, dtype=float)[:, None, None], (D, F, 1))
    return np.concatenate([data.aux, zcol], axis=2)


def _loglik_terms(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    # -(1-y)s - log(1+e^{-s}) == y*s - log(1+e^{s})
    return y * s - np.logaddexp(0.0, s)


def log_posterior(params: TieModelParams, z, data: PairSamples) -> float:
    """Regularized log joint of latent ties, interactions and parameters (up to a constant)."""
    z = np.asarray(z, dtype=float)
    resid = data.similarity @ params.w - z
    U = _augmented(data, z)
    s = np.einsum("dft,ft->df", U, params.rho)
    return float(-0.5 / params.upsilon * resid @ resid
                 + _loglik_terms(s, data.interactions).sum()
                 - 0.5 * params.lambda_w * params.w @ params.w
                 - 0.5 * params.lambda_rho * np.sum(params.rho * params.rho))


def log_posterior_grad(params: TieModelParams, z, data: PairSamples):
    """Analytic gradient, returned as (d/dw, d/dz, d/drho)."""
    z = np.asarray(z, dtype=float)
    mean = data.similarity @ params.w
    U = _augmented(data, z)
    r = data.interactions - expit(np.einsum("dft,ft->df", U, params.rho))
    gz = (mean - z) / params.upsilon + r @ params.rho[:, -1]
    gw = data.similarity.T @ (z - mean) / params.upsilon - params.lambda_w * params.w
    grho = np.einsum("df,dft->ft", r, U) - params.lambda_rho * params.rho
    return gw, gz, grho


# -- optimizer ---------------------------------------------------------------

@dataclass(frozen=True)
class TieHyper:
    upsilon: float = 1.0
    lambda_w: float = 0.5
    lambda_rho: float = 0.5
    tol_obj: float = 1e-8
    max_iters: int = 2000
    max_inner: int = 50
    max_halvings: int = 40

    @classmethod
    def load(cls, path) -> "TieHyper":
        kv = {}
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                k, v = (s.strip() for s in line.split("=", 1))
                if k not in cls.__dataclass_fields__:
                    raise ValueError(f"{path}: unknown hyperparameter {k!r}")
                kv[k] = int(v) if k.startswith("max_") else float(v)
        return cls(**kv)


@dataclass
class TieFit:
    params: TieModelParams
    ties: SocialTieMatrix
    z_pairs: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = True

    def __iter__(self):
        # allows ``params, ties = infer_ties(...)``
        return iter((self.params, self.ties))


def _ridge_w(data: PairSamples, z: np.ndarray, upsilon: float, lambda_w: float) -> np.ndarray:
    X = data.similarity
    A = X.T @ X + upsilon * lambda_w * np.eye(X.shape[1])
    return np.linalg.solve(A, X.T @ z)


def _z_newton(params: TieModelParams, z: np.ndarray, data: PairSamples, hyper: TieHyper) -> np.ndarray:
    mean = data.similarity @ params.w
    base = np.einsum("dft,ft->df", data.aux, params.rho[:, :-1])
    rz = params.rho[:, -1]
    y = data.interactions
    ups = params.upsilon

    def local_at(zv, sel):
        s = base[sel] + zv[:, None] * rz[None, :]
        return -0.5 / ups * (mean[sel] - zv) ** 2 + _loglik_terms(s, y[sel]).sum(axis=1)

    def local(zv):
        return local_at(zv, slice(None))

    f = local(z)
    for _ in range(hyper.max_inner):
        p = expit(base + z[:, None] * rz[None, :])
        g = (mean - z) / ups + (y - p) @ rz
        h = -1.0 / ups - (p * (1 - p)) @ (rz * rz)
        step = -g / h
        todo = np.abs(step) > 1e-12 * (1.0 + np.abs(z))
        moved = 0.0
        t = 1.0
        for _ in range(hyper.max_halvings):
            if not todo.any():
                break
            cand = z[todo] + t * step[todo]
            fc = local_at(cand, todo)
            ok = fc >= f[todo]
            idx = np.flatnonzero(todo)[ok]
            if idx.size:
                moved = max(moved, float(np.max(np.abs(cand[ok] - z[idx]))))
                z[idx] = cand[ok]
                f[idx] = fc[ok]
            todo[idx] = False
            t *= 0.5
        if moved <= 1e-10:
            break
    return z


def _rho_newton(params: TieModelParams, z: np.ndarray, data: PairSamples, hyper: TieHyper) -> np.ndarray:
    U = _augmented(data, z)
    rho = params.rho.copy()
    lam = params.lambda_rho
    for f in range(rho.shape[0]):
        Uf, yf = U[:, f, :], data.interactions[:, f]

        def obj(r):
            return _loglik_terms(Uf @ r, yf).sum() - 0.5 * lam * r @ r

        cur = obj(rho[f])
        for _ in range(hyper.max_inner):
            p = expit(Uf @ rho[f])
            g = Uf.T @ (yf - p) - lam * rho[f]
            H = -(Uf * (p * (1 - p))[:, None]).T @ Uf - lam * np.eye(Uf.shape[1])
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                step = g
            t = 1.0
            for _ in range(hyper.max_halvings):
                cand = rho[f] + t * step
                val = obj(cand)
                if val >= cur:
                    rho[f], cur = cand, val
                    break
                t *= 0.5
            else:
                break
            if np.max(np.abs(t * step)) < 1e-12:
                break
    return rho


def assemble_ties(pairs: np.ndarray, z_pairs: np.ndarray, n_users: int, user_ids=None) -> SocialTieMatrix:
    """Symmetrize directed estimates and min-max scale off-diagonal entries to [0, 1]."""
    raw = np.full((n_users, n_users), np.nan)
    raw[pairs[:, 0], pairs[:, 1]] = z_pairs
    both = np.stack([raw, raw.T])
    seen = ~np.isnan(both)
    counts = seen.sum(axis=0)
    sym = np.where(counts > 0, np.where(seen, both, 0.0).sum(axis=0) / np.maximum(counts, 1), np.nan)
    np.fill_diagonal(sym, np.nan)
    present = ~np.isnan(sym)
    out = np.zeros_like(sym)
    if present.any():
        lo, hi = sym[present].min(), sym[present].max()
        if hi > lo:
            out[present] = (sym[present] - lo) / (hi - lo)
    np.fill_diagonal(out, 0.0)
    return SocialTieMatrix(out, list(user_ids) if user_ids is not None else None)


def infer_ties(data: PairSamples, hyper: TieHyper = TieHyper(), seed=0, *,
               n_users: Optional[int] = None, user_ids=None,
               rho_init: Optional[np.ndarray] = None, fit_rho: bool = True) -> TieFit:
    """MAP estimate of the tie model by block-coordinate ascent.

    With ``fit_rho=False`` the interaction parameters stay at ``rho_init``.
    Non-convergence within ``hyper.max_iters`` is reported via ``converged``.
    """
    if len(data) == 0:
        raise ValueError("no pair samples")
    rng = np.random.default_rng(seed)
    F, T = data.n_interactions, data.aux_dim
    if rho_init is None:
        rho = np.zeros((F, T + 1))
        rho[:, -1] = 1.0
        rho += 0.01 * rng.standard_normal(rho.shape)
    else:
        rho = np.array(rho_init, dtype=float).reshape(F, T + 1)
    params = TieModelParams(np.zeros(data.similarity.shape[1]), rho,
                            hyper.upsilon, hyper.lambda_w, hyper.lambda_rho)
    z = np.zeros(len(data))
    obj = log_posterior(params, z, data)
    trace = [obj]
    converged = False
    accel = 1.0
    for it in range(hyper.max_iters):
        before = (params.w.copy(), z.copy(), params.rho.copy())
        params.w = _ridge_w(data, z, params.upsilon, params.lambda_w)
        z = _z_newton(params, z, data, hyper)
        if fit_rho:
            params.rho = _rho_newton(params, z, data, hyper)
        new = log_posterior(params, z, data)
        # Over-relaxed step along the sweep direction; kept only if it improves.
        trial = TieModelParams(params.w + accel * (params.w - before[0]),
                               params.rho + accel * (params.rho - before[2]),
                               params.upsilon, params.lambda_w, params.lambda_rho)
        z_trial = z + accel * (z - before[1])
        val = log_posterior(trial, z_trial, data)
        if val > new:
            params, z, new = trial, z_trial, val
            accel = min(2.0 * accel, 64.0)
        else:
            accel = max(0.5 * accel, 1.0)
        trace.append(new)
        if new - obj < hyper.tol_obj:
            converged = True
            break
        obj = new
    if not converged:
        log.warning("tie inference stopped after %d iterations without meeting tol_obj", hyper.max_iters)
    # (z, w, rho_z) -> -(z, w, rho_z) leaves the objective unchanged; keep rho_z >= 0.
    if params.rho[:, -1].mean() < 0:
        z, params.w = -z, -params.w
        params.rho[:, -1] = -params.rho[:, -1]
    if n_users is None:
        n_users = int(data.pairs.max()) + 1
    ties = assemble_ties(data.pairs, z, n_users, user_ids)
    return TieFit(params, ties, z, trace, converged)


def influence_scores(z) -> np.ndarray:
    """Weighted degree of each user, self-ties excluded."""
    Z = np.asarray(getattr(z, "z", z), dtype=float)
    return Z.sum(axis=1) - np.diag(Z)


def select_sues(z, count: int) -> tuple:
    """The ``count`` most influential users; equal scores go to the lower id."""
    scores = influence_scores(z)
    if count > len(scores) or count < 0:
        raise ValueError(f"cannot select {count} SUEs from {len(scores)} users")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(sorted(order[:count]))
