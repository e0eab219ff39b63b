"""Estimators applied to coincidence counts.

Correlations and the three-setting singlet witness, the posterior
probability that the fidelity exceeds 1/2, maximum-likelihood tomography
over the nine Pauli settings, and Gaussian fits of fidelity decay curves.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special, stats

from hybridlink.event_sim import CountTable
from hybridlink.quantum_core import (
    PAULI,
    SETTINGS_9,
    SETTINGS_WITNESS,
    TwoQubitState,
    fidelity,
    outcome_projectors,
    singlet_ket,
)

LN2 = math.log(2.0)


class NonConvergenceError(RuntimeError):
    """Optimizer stopped without meeting its tolerance.

    ``best`` holds the best state found so far and ``diagnostics`` a dict
    with iteration counts and the optimizer message.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class DegenerateFitError(ValueError):
    pass


# -- correlations and witness ------------------------------------------------


def correlation_from_counts(row) -> tuple[float, float]:
    """Sign correlation and its binomial standard error from (n_pp, n_pm, n_mp, n_mm)."""
    n_pp, n_pm, n_mp, n_mm = (int(x) for x in row)
    total = n_pp + n_pm + n_mp + n_mm
    if total <= 0:
        raise ValueError("no coincidences for this setting")
    e = (n_pp + n_mm - n_pm - n_mp) / total
    return e, math.sqrt(max(1.0 - e * e, 0.0) / total)


@dataclass(frozen=True)
class WitnessResult:
    f_hat: float
    std_err: float
    confidence_gt_half: float
    correlations: dict = field(default_factory=dict)

    def to_json(self, **extra) -> str:
        d = {
            "f_hat": self.f_hat,
            "std_err": self.std_err,
            "confidence_gt_half": self.confidence_gt_half,
            "correlations": {k: {"e": e, "err": s} for k, (e, s) in self.correlations.items()},
        }
        d.update(extra)
        return json.dumps(d, indent=2)


def _witness_rows(counts: CountTable) -> list[np.ndarray]:
    rows = []
    for s in SETTINGS_WITNESS:
        if s not in counts:
            raise KeyError(f"witness needs setting {s.label}, which is missing")
        row = counts[s]
        if row.sum() == 0:
            raise ValueError(f"setting {s.label} has no coincidences")
        rows.append(row)
    return rows


def witness_fidelity(
    counts: CountTable,
    confidence: str | None = "quadrature",
    resamples: int = 10**6,
    seed: int = 0,
) -> WitnessResult:
    """Singlet fidelity F = (1 - E_XX - E_YY - E_ZZ) / 4 from three settings.

    The error adds the three binomial errors in quadrature. ``confidence``
    selects how P(F > 1/2) is evaluated (``"quadrature"``,
    ``"monte_carlo"``) or skips it (``None``, reported as NaN).
    """
    rows = _witness_rows(counts)
    corr = {s.label: correlation_from_counts(r) for s, r in zip(SETTINGS_WITNESS, rows)}
    f_hat = (1.0 - sum(e for e, _ in corr.values())) / 4.0
    err = math.sqrt(sum(s * s for _, s in corr.values())) / 4.0
    if confidence is None:
        conf = float("nan")
    else:
        conf = confidence_f_gt_half(counts, resamples=resamples, seed=seed, method=confidence)
    return WitnessResult(f_hat, err, conf, corr)


def gaussian_tail(f_hat: float, std_err: float) -> float:
    """P(F <= 1/2) if F were normal around ``f_hat`` with width ``std_err``."""
    if std_err == 0:
        return 0.0 if f_hat > 0.5 else 1.0
    return float(stats.norm.sf((f_hat - 0.5) / std_err))


# -- posterior P(F > 1/2) ------------------------------------------------------
#
# Each witness setting contributes a binomial likelihood for
# q = P(equal signs) = (1 + E) / 2; a flat prior on E makes the posterior
# Beta(n_same + 1, n_diff + 1). The joint posterior is truncated to
# correlation triples reachable by some state (all four Bell-state
# fidelities non-negative), which in q-space reads
#     |q1 - q2| <= q3 <= 1 - |q1 + q2 - 1|.
# F <= 1/2 is q1 + q2 + q3 >= 1.


def _beta_params(counts: CountTable) -> list[tuple[float, float]]:
    params = []
    for row in _witness_rows(counts):
        same = int(row[0] + row[3])
        diff = int(row[1] + row[2])
        params.append((same + 1.0, diff + 1.0))
    return params


def _physical(q1, q2, q3):
    return (q3 >= np.abs(q1 - q2)) & (q3 <= 1.0 - np.abs(q1 + q2 - 1.0))


def _tail_monte_carlo(params, resamples: int, seed: int) -> tuple[int, int]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    accepted = violated = 0
    chunk = min(resamples, 1 << 20)
    while accepted < resamples:
        q = [rng.beta(a, b, size=chunk) for a, b in params]
        ok = _physical(*q)
        keep = np.flatnonzero(ok)[: resamples - accepted]
        s = q[0][keep] + q[1][keep] + q[2][keep]
        violated += int(np.count_nonzero(s >= 1.0))
        accepted += keep.size
    return violated, accepted


def _beta_logpdf(x, a, b):
    with np.errstate(divide="ignore"):
        return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - special.betaln(a, b)


def _breakpoints(a, b):
    qs = special.betaincinv(a, b, np.array([1e-12, 1e-6, 0.01, 0.5, 0.99, 1 - 1e-6, 1 - 1e-12]))
    return [float(x) for x in qs if 0.0 < x < 1.0]


def _tail_quadrature(params) -> tuple[float, float]:
    """(violating mass, physical mass) of the truncated posterior by nested quadrature."""
    (a1, b1), (a2, b2), (a3, b3) = params
    pts1, pts2 = _breakpoints(a1, b1), _breakpoints(a2, b2)
    opts = dict(epsabs=0.0, epsrel=1e-9, limit=200)

    def sf3(x):
        return special.betaincc(a3, b3, min(max(x, 0.0), 1.0))

    def inner(q1, violating):
        def g(q2):
            lo = abs(q1 - q2)
            hi = 1.0 - abs(q1 + q2 - 1.0)
            if violating:
                lo = max(lo, 1.0 - q1 - q2)
            if hi <= lo:
                return 0.0
            # sf differences keep precision in the far tail
            return math.exp(_beta_logpdf(q2, a2, b2)) * (sf3(lo) - sf3(hi))

        pts = sorted({*pts2, q1, 1.0 - q1} - {0.0, 1.0})
        return integrate.quad(g, 0.0, 1.0, points=pts, **opts)[0]

    def outer(violating):
        def h(q1):
            return math.exp(_beta_logpdf(q1, a1, b1)) * inner(q1, violating)

        pts = sorted({*pts1, 0.5})
        return integrate.quad(h, 0.0, 1.0, points=pts, **opts)[0]

    # quad flags roundoff near the truncation kinks; the result is still
    # accurate to far better than the reported confidence digits
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return outer(True), outer(False)


def confidence_f_gt_half(
    counts: CountTable,
    resamples: int = 10**6,
    seed: int = 0,
    method: str = "monte_carlo",
) -> float:
    """Posterior probability that the singlet fidelity exceeds 1/2.

    ``method="monte_carlo"`` samples ``resamples`` physical posterior draws;
    when none violates F > 1/2 the rule-of-three bound 1 - 3/resamples is
    returned. ``method="quadrature"`` integrates the same posterior
    numerically and resolves tails far below 1/resamples.
    """
    params = _beta_params(counts)
    if method == "monte_carlo":
        if resamples < 10**4:
            raise ValueError("use at least 1e4 resamples")
        violated, n = _tail_monte_carlo(params, resamples, seed)
        if violated == 0:
            return 1.0 - 3.0 / n
        return 1.0 - violated / n
    if method == "quadrature":
        v, z = _tail_quadrature(params)
        return float(min(max(1.0 - v / z, 0.0), 1.0))
    raise ValueError("method must be 'monte_carlo' or 'quadrature'")


def posterior_tail(counts: CountTable) -> float:
    """P(F <= 1/2) by quadrature, without the cancellation of 1 - confidence."""
    v, z = _tail_quadrature(_beta_params(counts))
    return v / z


# -- maximum-likelihood tomography ----------------------------------------------

_TRIL = np.tril_indices(4, -1)


def params_to_t(x: np.ndarray) -> np.ndarray:
    """16 real parameters -> lower-triangular complex 4x4."""
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    return t


def t_to_params(t: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(np.diag(t)), t[_TRIL].real, t[_TRIL].imag])


def params_to_rho(x: np.ndarray) -> np.ndarray:
    t = params_to_t(x)
    a = t.conj().T @ t
    return a / np.trace(a).real


def rho_to_params(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dagger T = rho (rho must be positive definite)."""
    j = np.eye(4)[::-1]
    low = np.linalg.cholesky(j @ rho @ j)
    return t_to_params((j @ low @ j).conj().T)


def _design(counts: CountTable):
    proj = np.concatenate([outcome_projectors(s) for s in counts.settings])
    n = counts.counts.reshape(-1).astype(float)
    return proj, n


def log_likelihood(rho: np.ndarray, counts: CountTable) -> float:
    """Multinomial log-likelihood (without the combinatorial constant)."""
    proj, n = _design(counts)
    p = np.real(np.einsum("kij,ji->k", proj, rho))
    mask = n > 0
    return float(np.sum(n[mask] * np.log(np.clip(p[mask], 1e-300, None))))


def _neg_ll_and_grad(x, proj, n, n_total):
    t = params_to_t(x)
    a = t.conj().T @ t
    tr = np.trace(a).real
    p = np.clip(np.real(np.einsum("kij,ji->k", proj, a)) / tr, 1e-300, None)
    mask = n > 0
    ll = np.sum(n[mask] * np.log(p[mask]))
    w = np.zeros_like(n)
    w[mask] = n[mask] / p[mask]
    m = (np.einsum("k,kij->ij", w, proj) - n_total * np.eye(4)) / tr
    g = (m @ t.conj().T).T
    grad = np.empty(16)
    grad[:4] = 2 * np.real(np.diag(g))
    grad[4:10] = 2 * np.real(g[_TRIL])
    grad[10:16] = -2 * np.imag(g[_TRIL])
    return -ll / n_total, -grad / n_total


def linear_inversion(counts: CountTable) -> np.ndarray:
    """Pauli-expansion estimate from all available settings (may be unphysical)."""
    r = {("I", "I"): [1.0]}
    for s, row in zip(counts.settings, counts.counts):
        tot = row.sum()
        if tot == 0:
            continue
        n_pp, n_pm, n_mp, n_mm = row / tot
        r.setdefault((s.basis_a, s.basis_b), []).append(n_pp - n_pm - n_mp + n_mm)
        r.setdefault((s.basis_a, "I"), []).append(n_pp + n_pm - n_mp - n_mm)
        r.setdefault(("I", s.basis_b), []).append(n_pp - n_pm + n_mp - n_mm)
    rho = np.zeros((4, 4), dtype=complex)
    for (a, b), vals in r.items():
        rho += np.mean(vals) * np.kron(PAULI[a], PAULI[b])
    return rho / 4


def physical_projection(rho: np.ndarray) -> np.ndarray | None:
    """Clip negative eigenvalues and renormalize; None if nothing positive remains."""
    h = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 1e-12:
        return None
    return (v * (w / w.sum())) @ v.conj().T


def _initial_params(counts: CountTable, mix: float = 1e-2) -> np.ndarray:
    rho0 = physical_projection(linear_inversion(counts))
    if rho0 is None:
        rho0 = np.eye(4) / 4
    rho0 = (1 - mix) * rho0 + mix * np.eye(4) / 4
    return rho_to_params(rho0)


@dataclass
class TomographyResult:
    rho: TwoQubitState
    err_real: np.ndarray
    err_imag: np.ndarray
    log_likelihood: float
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        m = self.rho.matrix
        return {
            "rho_real": np.real(m).tolist(),
            "rho_imag": np.imag(m).tolist(),
            "err_real": np.asarray(self.err_real).tolist(),
            "err_imag": np.asarray(self.err_imag).tolist(),
            "log_likelihood": self.log_likelihood,
            "fidelity_singlet": fidelity_from_rho(self),
            "iterations": self.iterations,
        }

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TomographyResult":
        d = json.loads(text)
        m = np.array(d["rho_real"]) + 1j * np.array(d["rho_imag"])
        return cls(TwoQubitState(m), np.array(d["err_real"]), np.array(d["err_imag"]), d["log_likelihood"],
                   d.get("iterations", 0))


def _fit_rho(counts: CountTable, tol: float, max_iter: int):
    proj, n = _design(counts)
    n_total = n.sum()
    if n_total <= 0:
        raise ValueError("no coincidences to fit")
    x0 = _initial_params(counts)
    history = [-_neg_ll_and_grad(x0, proj, n, n_total)[0]]

    def callback(xk):
        history.append(-_neg_ll_and_grad(xk, proj, n, n_total)[0])

    res = optimize.minimize(
        _neg_ll_and_grad, x0, args=(proj, n, n_total), jac=True, method="L-BFGS-B",
        callback=callback,
        options=dict(maxiter=max_iter, ftol=tol * 1e-2, gtol=1e-10, maxcor=20),
    )
    rho = params_to_rho(res.x)
    rho = (rho + rho.conj().T) / 2
    last_gain = history[-1] - history[-2] if len(history) > 1 else 0.0
    diag = {"iterations": int(res.nit), "message": str(res.message), "last_gain": float(last_gain),
            "mean_log_likelihood": float(history[-1])}
    # L-BFGS-B reports a line-search stall at machine precision; that is
    # converged as far as the likelihood tolerance is concerned.
    if not (res.success or (res.status == 2 and abs(last_gain) < tol)):
        raise NonConvergenceError(f"tomography did not converge: {res.message}", best=rho, diagnostics=diag)
    return rho, -res.fun * n_total, int(res.nit), [h * n_total for h in history]


def mle_tomography(
    counts: CountTable,
    bootstrap: int = 1000,
    seed: int = 0,
    tol: float = 1e-10,
    max_iter: int = 5000,
    workers: int = 1,
) -> TomographyResult:
    """Maximum-likelihood density matrix from the nine-setting count table.

    rho = T^dagger T / tr(T^dagger T) with T lower triangular keeps the
    estimate positive and unit-trace. ``tol`` bounds the per-coincidence
    log-likelihood gain of the final iteration. Element errors come from a
    parametric bootstrap: ``bootstrap`` count tables are redrawn from the
    fitted state with the observed per-setting totals and refitted.
    """
    missing = [s.label for s in SETTINGS_9 if s not in counts]
    if missing:
        raise KeyError(f"tomography needs all nine settings; missing {missing}")
    counts = counts.restrict(SETTINGS_9)
    rho, ll, nit, history = _fit_rho(counts, tol, max_iter)

    err_re = np.zeros((4, 4))
    err_im = np.zeros((4, 4))
    if bootstrap > 0:
        probs = np.array([np.real(np.einsum("kij,ji->k", outcome_projectors(s), rho)) for s in SETTINGS_9])
        probs = np.clip(probs, 0, None)
        probs /= probs.sum(axis=1, keepdims=True)
        totals = counts.totals()
        children = np.random.SeedSequence(seed).spawn(bootstrap)

        def replicate(ss):
            rng = np.random.Generator(np.random.Philox(ss))
            c = np.array([rng.multinomial(t, p) for t, p in zip(totals, probs)])
            table = CountTable(SETTINGS_9, c, max(counts.total_shots, int(c.sum())))
            return _fit_rho(table, tol, max_iter)[0]

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                fits = list(ex.map(replicate, children))
        else:
            fits = [replicate(ss) for ss in children]
        fits = np.array(fits)
        err_re = np.real(fits).std(axis=0, ddof=1)
        err_im = np.imag(fits).std(axis=0, ddof=1)
    return TomographyResult(TwoQubitState(rho, ("photon", "photon")), err_re, err_im, ll, nit, history)


def fidelity_from_rho(result: TomographyResult) -> float:
    return fidelity(result.rho, singlet_ket())


def render_matrix(m: np.ndarray, title: str = "", fmt: str = "{:+.3f}") -> str:
    """Plain-text 4x4 table with logical basis labels."""
    labels = ("00", "01", "10", "11")
    lines = [title] if title else []
    lines.append("      " + "  ".join(f"{lab:>6}" for lab in labels))
    for lab, row in zip(labels, m):
        lines.append(f"{lab:>4}  " + "  ".join(f"{fmt.format(v):>6}" for v in row))
    return "\n".join(lines) + "\n"


# -- decay fits -----------------------------------------------------------------


def gaussian_decay_model(t, f0, half_time):
    return 0.5 + (f0 - 0.5) * np.exp(-LN2 * (np.asarray(t) / half_time) ** 2)


@dataclass(frozen=True)
class DecayFit:
    f0: float
    half_time: float
    half_time_err: float
    residual_norm: float
    f0_err: float = float("nan")
    points: tuple = ()

    def to_json(self, **extra) -> str:
        d = {
            "f0": self.f0,
            "f0_err": self.f0_err,
            "half_time": self.half_time,
            "half_time_err": self.half_time_err,
            "residual_norm": self.residual_norm,
            "points": [{"t": t, "f": f, "f_err": e} for t, f, e in self.points],
        }
        d.update(extra)
        return json.dumps(d, indent=2)


def _guess_half_time(t, f, f0):
    excess = (f - 0.5) / max(f0 - 0.5, 1e-9)
    order = np.argsort(t)
    t, excess = t[order], excess[order]
    below = np.flatnonzero(excess < 0.5)
    if below.size and below[0] > 0:
        i = below[0]
        return float(np.interp(0.5, [excess[i], excess[i - 1]], [t[i], t[i - 1]]))
    positive = t[t > 0]
    return float(positive.max() if excess[-1] >= 0.5 else positive.min()) if positive.size else 1.0


def fit_gaussian_decay(points, scale_errors: bool = True) -> DecayFit:
    """Weighted least-squares fit of F(t) = 1/2 + (f0 - 1/2) exp(-ln2 t^2 / t_half^2).

    ``points`` is a sequence of (t, f, f_err). The half-time error is the
    square root of the covariance from the local quadratic approximation of
    chi^2. With ``scale_errors`` the covariance is inflated by chi^2/dof
    whenever that ratio exceeds one.
    """
    pts = [(float(t), float(f), float(e)) for t, f, e in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points for a decay fit")
    t, f, e = (np.array(c) for c in zip(*pts))
    if np.any(e <= 0):
        raise DegenerateFitError("points with zero or negative error cannot be weighted")
    if np.all(f <= 0.5):
        raise DegenerateFitError("no excess fidelity above 1/2 to fit a decay to")
    f0_guess = float(np.clip(f[np.argmin(t)], 0.5 + 1e-3, 1.0))
    th_guess = _guess_half_time(t, f, f0_guess)
    try:
        popt, pcov = optimize.curve_fit(
            gaussian_decay_model, t, f, p0=(f0_guess, th_guess), sigma=e, absolute_sigma=True,
            bounds=([-np.inf, 0.0], [np.inf, np.inf]), xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=10000,
        )
    except RuntimeError as exc:
        raise NonConvergenceError(f"decay fit did not converge: {exc}") from exc
    resid = (f - gaussian_decay_model(t, *popt)) / e
    dof = max(len(pts) - 2, 1)
    chi2_red = float(resid @ resid) / dof
    if scale_errors and chi2_red > 1.0:
        pcov = pcov * chi2_red
    perr = np.sqrt(np.diag(pcov))
    return DecayFit(
        f0=float(popt[0]),
        half_time=float(popt[1]),
        half_time_err=float(perr[1]),
        residual_norm=math.sqrt(chi2_red),
        f0_err=float(perr[0]),
        points=tuple(pts),
    )


def decay_points(curve, axis: str = "max", smooth_zero_errors: bool = True) -> list:
    """(t, f_hat, f_err) per point of a simulated decay curve.

    ``axis`` picks the abscissa from (t_at, t_bec): ``"at"``, ``"bec"`` or
    ``"max"``. A setting whose counts are all (anti)correlated has zero
    binomial error; with ``smooth_zero_errors`` that error is replaced by
    the add-one (Laplace) estimate so the point keeps a finite weight.
    """
    pick = {"at": lambda t: t[0], "bec": lambda t: t[1], "max": max}[axis]
    out = []
    for times, table in curve:
        w = witness_fidelity(table, confidence=None)
        err = w.std_err
        if smooth_zero_errors:
            var = 0.0
            for s in SETTINGS_WITNESS:
                row = table[s]
                n = row.sum()
                e, s_err = correlation_from_counts(row)
                if s_err == 0.0:
                    q = (row[0] + row[3] + 1.0) / (n + 2.0)
                    s_err = math.sqrt(4 * q * (1 - q) / n)
                var += s_err**2
            err = math.sqrt(var) / 4
        out.append((pick(times), w.f_hat, err))
    return out
