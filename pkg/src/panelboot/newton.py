"""Newton-Raphson maximizer on the block-arrow Hessian.

The Hessian of a fixed-effects panel log-likelihood couples the common
parameter to every stratum block but never couples strata to each other.
The Newton step is therefore computed from per-stratum solves plus one
small profile solve; nothing of size (dim_phi + n*dim_eta)^2 is ever
allocated, so cost is O(n) per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .contract import ModelContract
from .data import PanelDataset, assemble_z
from .errors import NumericalError, UsageError
from .params import ParameterPoint

__all__ = [
    "BlockScoreHessian",
    "FitOptions",
    "FitResult",
    "assemble",
    "newton_direction",
    "fit",
    "estimate",
]


@dataclass(frozen=True, eq=False)
class BlockScoreHessian:
    """Score and Hessian in block-arrow layout for one set of strata.

    ``strata`` records which original stratum index each block row refers
    to.  ``h_phiphi`` and every ``h_etaeta`` block are symmetrized on
    assembly; cross-stratum blocks are identically zero and never stored.
    """

    s_phi: np.ndarray  # (dphi,)
    s_eta: np.ndarray  # (k, deta)
    h_phiphi: np.ndarray  # (dphi, dphi)
    h_phieta: np.ndarray  # (k, dphi, deta)
    h_etaeta: np.ndarray  # (k, deta, deta)
    strata: tuple

    @property
    def dim_phi(self) -> int:
        return self.s_phi.shape[0]

    @property
    def dim_eta(self) -> int:
        return self.s_eta.shape[1]

    def score_sup_norm(self) -> float:
        sup = float(np.max(np.abs(self.s_phi)))
        if self.s_eta.size:
            sup = max(sup, float(np.max(np.abs(self.s_eta))))
        return sup

    def profile_information(self) -> np.ndarray:
        """h_phiphi - sum_i h_phieta_i h_etaeta_i^{-1} h_etaphi_i."""
        x = np.linalg.solve(self.h_etaeta, np.transpose(self.h_phieta, (0, 2, 1)))
        return self.h_phiphi - np.einsum("kpe,keq->pq", self.h_phieta, x)


@dataclass(frozen=True)
class FitOptions:
    """Solver options.

    ``tol_score`` of None resolves to 1e-8 times the retained observation
    count; the score is the natural scale-aware convergence quantity here
    because the partitioned step consumes it directly.
    """

    tol_score: Optional[float] = None
    max_iter: int = 100
    halving_limit: int = 30
    eta_cap: float = 15.0

    def __post_init__(self):
        if self.tol_score is not None and self.tol_score <= 0:
            raise UsageError("tol_score must be positive")
        if self.max_iter < 1 or self.halving_limit < 0 or self.eta_cap <= 0:
            raise UsageError("max_iter >= 1, halving_limit >= 0, eta_cap > 0 required")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a fit.

    ``theta.eta`` rows for dropped strata are NaN.  ``profile_info`` is the
    effective curvature in phi after concentrating out the effects,
    evaluated at the final point over retained strata.
    """

    theta: ParameterPoint
    converged: bool
    iterations: int
    score_sup: float
    dropped_strata: tuple
    retained: tuple
    profile_info: np.ndarray
    loglik: float
    trace: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "phi": [float(v) for v in self.theta.phi],
            "eta": [[float(v) for v in row] for row in self.theta.eta],
            "converged": self.converged,
            "iterations": self.iterations,
            "score_sup": float(self.score_sup),
            "dropped_strata": list(self.dropped_strata),
            "retained": list(self.retained),
            "profile_info": [[float(v) for v in row] for row in self.profile_info],
            "loglik": float(self.loglik),
        }


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _assemble_ll(model, data, phi, eta, strata):
    """Total log-likelihood and blocks over the given strata.

    Raises NumericalError naming (stratum, period) on a non-finite
    contribution; the caller treats that as a rejected step during
    damping.
    """
    k = len(strata)
    dphi, deta = model.dim_phi, model.dim_eta
    if model.panel_blocks is not None and dphi == 1 and deta == 1:
        ll_i, sp_i, se_i, hpp_i, hpe_i, hee_i = model.panel_blocks(phi, eta, data, strata)
        total = float(np.sum(ll_i))
        flat = np.concatenate((sp_i, se_i, hpp_i, hpe_i, hee_i))
        if np.isfinite(total) and bool(np.isfinite(flat).all()):
            blocks = BlockScoreHessian(
                s_phi=np.array([float(np.sum(sp_i))]),
                s_eta=np.asarray(se_i, dtype=float)[:, None],
                h_phiphi=np.array([[float(np.sum(hpp_i))]]),
                h_phieta=np.asarray(hpe_i, dtype=float)[:, None, None],
                h_etaeta=np.asarray(hee_i, dtype=float)[:, None, None],
                strata=tuple(strata),
            )
            return total, blocks
        # fall through to locate the offending observation

    total = 0.0
    s_phi = np.zeros(dphi)
    s_eta = np.zeros((k, deta))
    h_pp = np.zeros((dphi, dphi))
    h_pe = np.zeros((k, dphi, deta))
    h_ee = np.zeros((k, deta, deta))
    for row, i in enumerate(strata):
        eta_i = eta[i]
        for t in range(1, data.m + 1):
            z = assemble_z(data, i, t)
            term = model.loglik_point(phi, eta_i, z)
            sp, se = model.score_point(phi, eta_i, z)
            hpp, hpe, hee = model.hess_point(phi, eta_i, z)
            pieces = (term, sp, se, hpp, hpe, hee)
            if not all(np.all(np.isfinite(v)) for v in pieces):
                raise NumericalError(
                    f"non-finite log-likelihood or derivative at stratum {i}, period {t}"
                )
            total += term
            s_phi += sp
            s_eta[row] += se
            h_pp += hpp
            h_pe[row] += hpe
            h_ee[row] += hee
    blocks = BlockScoreHessian(
        s_phi=s_phi,
        s_eta=s_eta,
        h_phiphi=_symmetrize(h_pp),
        h_phieta=h_pe,
        h_etaeta=_symmetrize(h_ee),
        strata=tuple(strata),
    )
    return total, blocks


def assemble(
    model: ModelContract,
    data: PanelDataset,
    theta: ParameterPoint,
    strata: Optional[Sequence[int]] = None,
) -> BlockScoreHessian:
    """Exact analytic score/Hessian blocks summed over observations."""
    model.check_data(data)
    if theta.n != data.n:
        raise UsageError(f"theta has {theta.n} strata, dataset has {data.n}")
    idx = list(range(data.n)) if strata is None else list(strata)
    _, blocks = _assemble_ll(model, data, theta.phi, theta.eta, idx)
    return blocks


def newton_direction(b: BlockScoreHessian):
    """Newton increment (dphi, deta) from the partitioned inverse.

    dphi solves the profile system; each stratum's deta follows by one
    small back-substitution.  Raises on singular stratum blocks (flagging
    the strata) or a singular profile matrix.
    """
    if b.dim_phi == 1 and b.dim_eta == 1:
        hee = b.h_etaeta[:, 0, 0]
        hpe = b.h_phieta[:, 0, 0]
        se = b.s_eta[:, 0]
        scale = np.maximum(1.0, np.abs(hpe))
        bad = ~np.isfinite(hee) | (np.abs(hee) <= 1e-12 * scale)
        if np.any(bad):
            names = [b.strata[j] for j in np.nonzero(bad)[0]]
            raise NumericalError(f"singular fixed-effect block for strata {names}")
        inv_ee = 1.0 / hee
        profile = b.h_phiphi[0, 0] - float(np.sum(hpe * inv_ee * hpe))
        s_adj = b.s_phi[0] - float(np.sum(hpe * inv_ee * se))
        if profile == 0.0 or not np.isfinite(profile):
            raise NumericalError("singular profile matrix")
        dphi = np.array([-s_adj / profile])
        deta = (-(se + hpe * dphi[0]) * inv_ee)[:, None]
        return dphi, deta

    h_ep = np.transpose(b.h_phieta, (0, 2, 1))
    try:
        x = np.linalg.solve(b.h_etaeta, h_ep)  # (k, de, dp)
        y = np.linalg.solve(b.h_etaeta, b.s_eta[:, :, None])  # (k, de, 1)
    except np.linalg.LinAlgError:
        conds = [np.linalg.cond(blk) for blk in b.h_etaeta]
        names = [b.strata[j] for j, c in enumerate(conds) if not c < 1e12]
        raise NumericalError(f"singular fixed-effect block for strata {names}") from None
    profile = b.h_phiphi - np.einsum("kpe,keq->pq", b.h_phieta, x)
    s_adj = b.s_phi - np.einsum("kpe,ke->p", b.h_phieta, y[:, :, 0])
    try:
        dphi = -np.linalg.solve(profile, s_adj)
    except np.linalg.LinAlgError:
        raise NumericalError("singular profile matrix") from None
    rhs = b.s_eta + np.einsum("kep,p->ke", h_ep, dphi)
    deta = -np.linalg.solve(b.h_etaeta, rhs[:, :, None])[:, :, 0]
    return dphi, deta


def _point_ok(model, phi, eta, strata) -> bool:
    if model.point_admissible is None:
        return True
    return all(model.point_admissible(phi, eta[i]) for i in strata)


def fit(
    model: ModelContract,
    data: PanelDataset,
    theta0: ParameterPoint,
    opts: FitOptions = FitOptions(),
    trace: bool = False,
) -> FitResult:
    """Maximize the panel log-likelihood by damped block-arrow Newton.

    Inadmissible strata are dropped before iterating.  Full Newton steps
    are halved while they fail to improve the objective (or leave the
    parameter domain).  A stratum whose effect passes ``opts.eta_cap`` in
    absolute value is treated as divergent: it is dropped and the fit
    restarts on the remainder, at most n times.  Exceeding ``max_iter``
    returns a non-converged result rather than raising.
    """
    model.check_data(data)
    if theta0.n != data.n:
        raise UsageError(f"theta0 has {theta0.n} strata, dataset has {data.n}")
    if not (np.all(np.isfinite(theta0.phi)) and np.all(np.isfinite(theta0.eta))):
        raise UsageError("theta0 must be finite")

    mask = model.admissibility(data)
    dropped = np.nonzero(~mask)[0].tolist()
    retained = np.nonzero(mask)[0].tolist()

    for _restart in range(data.n + 1):
        if not retained:
            raise NumericalError("all strata dropped; nothing left to fit")

        phi = theta0.phi.copy()
        eta = theta0.eta.copy()
        tol = opts.tol_score if opts.tol_score is not None else 1e-8 * len(retained) * data.m
        iterates = []
        ll, blocks = _assemble_ll(model, data, phi, eta, retained)
        converged = False
        iterations = 0
        divergent: list[int] = []

        for iterations in range(1, opts.max_iter + 1):
            if trace:
                iterates.append(np.concatenate([phi, eta[retained].ravel()]))
            if blocks.score_sup_norm() <= tol:
                converged = True
                iterations -= 1
                break
            dphi, deta = newton_direction(blocks)
            lam = 1.0
            accepted = False
            for _h in range(opts.halving_limit + 1):
                cand_phi = phi + lam * dphi
                cand_eta = eta.copy()
                cand_eta[retained] += lam * deta
                if not _point_ok(model, cand_phi, cand_eta, retained):
                    lam *= 0.5
                    continue
                try:
                    cand_ll, cand_blocks = _assemble_ll(
                        model, data, cand_phi, cand_eta, retained
                    )
                except NumericalError:
                    lam *= 0.5
                    continue
                if cand_ll >= ll:
                    phi, eta, ll, blocks = cand_phi, cand_eta, cand_ll, cand_blocks
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                break  # damping exhausted; report non-convergence below

            over = np.max(np.abs(eta[retained]), axis=1) > opts.eta_cap
            if np.any(over):
                divergent = [retained[j] for j in np.nonzero(over)[0]]
                break

        if divergent:
            dropped.extend(divergent)
            retained = [i for i in retained if i not in set(divergent)]
            continue

        eta_full = np.full((data.n, model.dim_eta), np.nan)
        eta_full[retained] = eta[retained]
        return FitResult(
            theta=ParameterPoint(phi=phi, eta=eta_full),
            converged=converged,
            iterations=iterations,
            score_sup=blocks.score_sup_norm(),
            dropped_strata=tuple(sorted(dropped)),
            retained=tuple(retained),
            profile_info=blocks.profile_information(),
            loglik=ll,
            trace=tuple(iterates),
        )

    raise NumericalError("fit restarted more than n times; giving up")


def estimate(
    model: ModelContract,
    data: PanelDataset,
    opts: FitOptions = FitOptions(),
    theta0: Optional[ParameterPoint] = None,
) -> FitResult:
    """Maximize the likelihood by the best available route.

    Uses the model's closed-form maximizer when it provides one (score
    and curvature are still evaluated at the solution, so the result
    carries the same diagnostics as a Newton fit); otherwise runs the
    Newton solver from ``theta0``, defaulting to all-zero parameters.
    """
    model.check_data(data)
    if model.fast_fit is not None:
        mask = model.admissibility(data)
        dropped = np.nonzero(~mask)[0].tolist()
        retained = np.nonzero(mask)[0].tolist()
        if not retained:
            raise NumericalError("all strata dropped; nothing left to fit")
        sub = data if not dropped else data.subset(retained)
        phi, eta_sub = model.fast_fit(sub)
        phi = np.asarray(phi, dtype=float)
        eta = np.full((data.n, model.dim_eta), np.nan)
        eta[retained] = np.asarray(eta_sub, dtype=float).reshape(len(retained), model.dim_eta)
        ll, blocks = _assemble_ll(model, data, phi, eta, retained)
        return FitResult(
            theta=ParameterPoint(phi=phi, eta=eta),
            converged=True,
            iterations=0,
            score_sup=blocks.score_sup_norm(),
            dropped_strata=tuple(sorted(dropped)),
            retained=tuple(retained),
            profile_info=blocks.profile_information(),
            loglik=ll,
        )
    if theta0 is None:
        theta0 = ParameterPoint(
            phi=np.zeros(model.dim_phi), eta=np.zeros((data.n, model.dim_eta))
        )
    return fit(model, data, theta0, opts)
