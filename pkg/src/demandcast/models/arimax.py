"""AR(1) regression with exogenous inputs, fit by conditional least squares.

With order (1,0,0) there is no differencing and no moving-average recursion,
so conditional least squares is exactly ordinary least squares of y_t on
[1, y_{t-1}, x_t] for t >= 2.  The solver uses a QR-based least-squares
routine; tests check it against a direct normal-equations solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import MissingActualsError, SingularDesignError

logger = logging.getLogger(__name__)


class ForecastMode(str, Enum):
    RECURSIVE = "recursive"
    ONE_STEP = "one-step-with-actuals"


@dataclass(frozen=True)
class ArimaxConfig:
    exogenous_columns: tuple[str, ...] = ()
    order: tuple[int, int, int] = (1, 0, 0)
    allow_nonstandard_order: bool = False

    def __post_init__(self) -> None:
        if self.order != (1, 0, 0) and not self.allow_nonstandard_order:
            raise ValueError(
                "order is fixed at (1,0,0); set allow_nonstandard_order to override"
            )


@dataclass
class ArimaxModel:
    intercept: float
    phi: float
    beta: np.ndarray
    exog_names: list[str]
    sigma2: float
    last_train_value: float
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "kind": "arimax",
            "order": [1, 0, 0],
            "intercept": self.intercept,
            "phi": self.phi,
            "beta": {name: float(b) for name, b in zip(self.exog_names, self.beta)},
            "sigma2": self.sigma2,
            "last_train_value": self.last_train_value,
            "n_obs": self.n_obs,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ArimaxModel":
        names = list(doc["beta"])
        return cls(
            intercept=float(doc["intercept"]),
            phi=float(doc["phi"]),
            beta=np.array([doc["beta"][n] for n in names], dtype=np.float64),
            exog_names=names,
            sigma2=float(doc["sigma2"]),
            last_train_value=float(doc["last_train_value"]),
            n_obs=int(doc["n_obs"]),
        )


def fit_arimax(
    y: np.ndarray,
    X: np.ndarray | None = None,
    cfg: ArimaxConfig = ArimaxConfig(),
    exog_names: list[str] | None = None,
) -> ArimaxModel:
    """Fit y_t = c + phi*y_{t-1} + beta'x_t + e_t on rows t >= 2.

    Raises :class:`SingularDesignError` when the intercept-plus-exogenous
    block is rank-deficient (e.g. a constant exogenous column duplicating
    the intercept).  A rank deficiency caused only by the lagged-target
    column (a constant series) is solved in the minimum-norm sense instead,
    which reproduces the series exactly.
    """
    if cfg.order != (1, 0, 0):
        raise NotImplementedError("only order (1,0,0) is implemented")
    y = np.asarray(y, dtype=np.float64)
    k_exog = 0 if X is None else X.shape[1]
    if X is not None:
        X = np.asarray(X, dtype=np.float64)
        if len(X) != len(y):
            raise ValueError("exogenous matrix must be row-aligned with y")
    n_params = 2 + k_exog
    if len(y) < n_params + 2:
        raise ValueError(f"need at least {n_params + 2} observations, got {len(y)}")
    names = list(exog_names) if exog_names is not None else [
        f"x{j}" for j in range(k_exog)
    ]
    if len(names) != k_exog:
        raise ValueError("exog_names length must match exogenous columns")

    if k_exog:
        design = np.column_stack([np.ones(len(y) - 1), y[:-1], X[1:]])
    else:
        design = np.column_stack([np.ones(len(y) - 1), y[:-1]])
    target = y[1:]

    fixed_block = design[:, [0] + list(range(2, 2 + k_exog))]
    if np.linalg.matrix_rank(fixed_block) < 1 + k_exog:
        raise SingularDesignError(
            "intercept and exogenous columns are linearly dependent"
        )

    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    residuals = target - design @ coef
    dof = max(len(target) - n_params, 1)
    sigma2 = float(residuals @ residuals) / dof

    phi = float(coef[1])
    if abs(phi) >= 1.0:
        logger.warning("fitted AR coefficient %.4f is non-stationary", phi)
    return ArimaxModel(
        intercept=float(coef[0]),
        phi=phi,
        beta=coef[2:].copy(),
        exog_names=names,
        sigma2=sigma2,
        last_train_value=float(y[-1]),
        n_obs=len(y),
    )


def forecast_arimax(
    model: ArimaxModel,
    X_future: np.ndarray | None,
    horizon: int,
    mode: ForecastMode = ForecastMode.RECURSIVE,
    actuals_for_onestep: np.ndarray | None = None,
) -> np.ndarray:
    """Forecast ``horizon`` steps past the training window.

    RECURSIVE feeds each forecast back in as the next lag, seeded with the
    final training value.  ONE_STEP uses the actual previous observation as
    the lag at every step, which requires the realised test series.
    """
    if X_future is not None:
        X_future = np.asarray(X_future, dtype=np.float64)
        if len(X_future) < horizon:
            raise ValueError("X_future must provide one row per forecast step")
    elif len(model.beta):
        raise ValueError("model has exogenous coefficients but no X_future given")
    if mode is ForecastMode.ONE_STEP:
        if actuals_for_onestep is None:
            raise MissingActualsError("one-step mode requires the actual test series")
        actuals = np.asarray(actuals_for_onestep, dtype=np.float64)
        if len(actuals) < horizon:
            raise ValueError("actuals must cover the forecast horizon")

    out = np.empty(horizon, dtype=np.float64)
    prev = model.last_train_value
    for t in range(horizon):
        exog_term = float(X_future[t] @ model.beta) if len(model.beta) else 0.0
        out[t] = model.intercept + model.phi * prev + exog_term
        if mode is ForecastMode.ONE_STEP:
            prev = actuals[t]
        else:
            prev = out[t]
    return out


def in_sample_predictions(model: ArimaxModel, y: np.ndarray, X: np.ndarray | None) -> np.ndarray:
    """One-step fitted values on the training sample (rows t >= 2)."""
    y = np.asarray(y, dtype=np.float64)
    exog = np.zeros(len(y) - 1)
    if len(model.beta):
        exog = np.asarray(X, dtype=np.float64)[1:] @ model.beta
    return model.intercept + model.phi * y[:-1] + exog
