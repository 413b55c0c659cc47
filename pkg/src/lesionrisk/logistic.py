"""L2-regularized logistic risk model fit by damped Newton iteration.

The objective, with C the inverse regularization strength and the intercept
unpenalized, is

    f(w, b) = (1/n) * sum_i log(1 + exp(-t_i * (x_i . w + b))) + ||w||^2 / (2 C n)

with t_i in {-1, +1}. This is strictly convex for C > 0, so full Newton steps
with an Armijo backtracking line search converge monotonically from the zero
start; the fit is deterministic given the data and C.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .encoding import EncoderSpec
from .metrics import log_loss
from .records import Dataset, LesionRecord, ValidationError

DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)

GRAD_TOL = 1e-6
MAX_NEWTON_ITER = 100

_P_LO = float(np.finfo(float).tiny)
_P_HI = float(np.nextafter(1.0, 0.0))


class ConvergenceError(RuntimeError):
    """Optimizer hit its iteration cap; carries the final gradient norm."""

    def __init__(self, grad_norm: float, iterations: int):
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def penalized_loss(weights: np.ndarray, intercept: float, X: np.ndarray,
                   y: np.ndarray, C: float) -> float:
    """Objective value at (weights, intercept)."""
    n = len(y)
    z = X @ weights + intercept
    t = 2.0 * y - 1.0
    nll = float(np.mean(np.logaddexp(0.0, -t * z)))
    return nll + float(weights @ weights) / (2.0 * C * n)


def penalized_grad(weights: np.ndarray, intercept: float, X: np.ndarray,
                   y: np.ndarray, C: float) -> tuple[np.ndarray, float]:
    """Analytic gradient (d/dw, d/db) of the objective."""
    n = len(y)
    p = sigmoid(X @ weights + intercept)
    resid = p - y
    grad_w = X.T @ resid / n + weights / (C * n)
    grad_b = float(np.mean(resid))
    return grad_w, grad_b


def fit_logistic_matrix(X: np.ndarray, y: np.ndarray, C: float, *,
                        tol: float = GRAD_TOL, max_iter: int = MAX_NEWTON_ITER,
                        ) -> tuple[np.ndarray, float, dict]:
    """Newton fit on an encoded matrix; returns (weights, intercept, info).

    info carries the accepted-iterate loss history and final gradient norm.
    """
    if C <= 0.0:
        raise ValidationError.single("C", f"C must be positive (got {C})")
    n, d = X.shape
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) != {0.0, 1.0}:
        raise ValidationError.single("labels", "training data must contain both classes")
    reg = 1.0 / (C * n)
    w = np.zeros(d)
    b = 0.0
    losses = [penalized_loss(w, b, X, y, C)]
    for it in range(max_iter):
        g_w, g_b = penalized_grad(w, b, X, y, C)
        g = np.concatenate([g_w, [g_b]])
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return w, b, {"iterations": it, "grad_norm": gnorm, "loss_history": losses}
        p = sigmoid(X @ w + b)
        s = p * (1.0 - p)
        Xs = X * s[:, None]
        H = np.empty((d + 1, d + 1))
        H[:d, :d] = X.T @ Xs / n
        H[:d, :d][np.diag_indices(d)] += reg
        H[:d, d] = Xs.sum(axis=0) / n
        H[d, :d] = H[:d, d]
        H[d, d] = float(s.mean())
        delta = _solve_spd(H, g)
        # Armijo backtracking keeps the objective non-increasing.
        f0 = losses[-1]
        slope = float(g @ delta)
        step = 1.0
        while True:
            w_new = w - step * delta[:d]
            b_new = b - step * delta[d]
            f_new = penalized_loss(w_new, b_new, X, y, C)
            if f_new <= f0 - 1e-4 * step * slope or step < 1e-12:
                break
            step *= 0.5
        w, b = w_new, b_new
        losses.append(f_new)
    g_w, g_b = penalized_grad(w, b, X, y, C)
    raise ConvergenceError(float(np.linalg.norm(np.concatenate([g_w, [g_b]]))), max_iter)


def _solve_spd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H x = g, with a Levenberg shift when H is numerically singular."""
    lam = 0.0
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + lam * np.eye(len(H)) if lam else H)
            x = np.linalg.solve(L.T, np.linalg.solve(L, g))
            if np.all(np.isfinite(x)):
                return x
        except np.linalg.LinAlgError:
            pass
        lam = max(lam * 10.0, 1e-10)
    return g  # last resort: gradient step


@dataclass(frozen=True, eq=False)
class RiskModel:
    """Fitted encoder plus logistic coefficients; maps a record to P(malignant)."""

    encoder: EncoderSpec
    weights: np.ndarray
    intercept: float
    C: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.encoder.columns),):
            raise ValidationError.single(
                "weights", f"weight length {w.shape} does not match encoder "
                           f"dimension {len(self.encoder.columns)}")
        object.__setattr__(self, "weights", w)

    def coefficient_table(self) -> dict[str, float]:
        return {c: float(w) for c, w in zip(self.encoder.columns, self.weights)}


def fit_logistic(train: Dataset, enc: EncoderSpec, C: float, *,
                 tol: float = GRAD_TOL, max_iter: int = MAX_NEWTON_ITER,
                 metadata: Optional[dict] = None) -> RiskModel:
    if len(train) == 0:
        raise ValidationError.single("train", "cannot fit on an empty dataset")
    X = enc.encode_dataset(train)
    y = train.labels()
    w, b, info = fit_logistic_matrix(X, y.astype(float), C, tol=tol, max_iter=max_iter)
    meta = dict(metadata or {})
    meta.setdefault("newton_iterations", info["iterations"])
    return RiskModel(encoder=enc, weights=w, intercept=float(b), C=float(C), metadata=meta)


def predict_logit(model: RiskModel, record: LesionRecord) -> float:
    return float(model.encoder.encode(record) @ model.weights + model.intercept)


def predict_proba(model: RiskModel, record: LesionRecord) -> float:
    """P(malignant | record), clipped into the open interval (0, 1)."""
    p = float(sigmoid(predict_logit(model, record)))
    return min(max(p, _P_LO), _P_HI)


def predict_proba_dataset(model: RiskModel, ds: Dataset | Sequence[LesionRecord]) -> np.ndarray:
    X = model.encoder.encode_dataset(ds)
    p = sigmoid(X @ model.weights + model.intercept)
    return np.clip(p, _P_LO, _P_HI)


@dataclass(frozen=True)
class GridSearchRow:
    C: float
    mean_log_loss: float      # nan when the cell was disqualified
    sd_log_loss: float
    converged: bool


@dataclass(frozen=True)
class GridSearchReport:
    rows: tuple[GridSearchRow, ...]
    chosen_C: float
    k: int
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "chosen_C": self.chosen_C,
            "k": self.k,
            "seed": self.seed,
            "rows": [{"C": r.C,
                      "mean_log_loss": None if np.isnan(r.mean_log_loss) else r.mean_log_loss,
                      "sd_log_loss": None if np.isnan(r.sd_log_loss) else r.sd_log_loss,
                      "converged": r.converged}
                     for r in self.rows],
        }


def cv_folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Contiguous blocks of a seeded permutation; shared by every grid search."""
    rng = np.random.default_rng(seed)
    return [np.sort(part) for part in np.array_split(rng.permutation(n), k)]


def grid_search(train: Dataset, enc: EncoderSpec,
                Cs: Sequence[float] = DEFAULT_C_GRID, k: int = 5,
                seed: int = 0) -> tuple[RiskModel, GridSearchReport]:
    """k-fold cross-validated search over C; refits the winner on full train.

    A C that fails to converge on any fold is disqualified but kept in the
    report. Ties on mean log-loss resolve to the earlier grid entry.
    """
    if len(Cs) == 0:
        raise ValidationError.single("Cs", "C grid must be nonempty")
    if k < 2:
        raise ValidationError.single("k", "cross-validation needs k >= 2")
    if len(train) < k:
        raise ValidationError.single("train", f"need at least {k} records for {k}-fold CV")
    X = enc.encode_dataset(train)
    y = train.labels().astype(float)
    folds = cv_folds(len(train), k, seed)
    all_idx = np.arange(len(train))

    rows: list[GridSearchRow] = []
    for C in Cs:
        losses = []
        converged = True
        for held in folds:
            tr = np.setdiff1d(all_idx, held, assume_unique=False)
            try:
                w, b, _ = fit_logistic_matrix(X[tr], y[tr], C)
            except ConvergenceError:
                converged = False
                break
            p = np.clip(sigmoid(X[held] @ w + b), _P_LO, _P_HI)
            losses.append(log_loss(p, y[held].astype(int)))
        if converged:
            arr = np.asarray(losses)
            rows.append(GridSearchRow(C=float(C), mean_log_loss=float(arr.mean()),
                                      sd_log_loss=float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                                      converged=True))
        else:
            rows.append(GridSearchRow(C=float(C), mean_log_loss=float("nan"),
                                      sd_log_loss=float("nan"), converged=False))

    viable = [r for r in rows if r.converged]
    if not viable:
        raise ConvergenceError(float("nan"), MAX_NEWTON_ITER)
    best = min(viable, key=lambda r: r.mean_log_loss)
    report = GridSearchReport(rows=tuple(rows), chosen_C=best.C, k=k, seed=seed)
    model = fit_logistic(train, enc, best.C,
                         metadata={"seed": seed, "cv_log_loss": best.mean_log_loss, "cv_k": k})
    return model, report
