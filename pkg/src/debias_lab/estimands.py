"""Estimand specifications and their orthogonal-score ingredients.

Each supported functional chi(P) = E_P[m1(O, gamma(Z; P))] is described by:

* a grid layout (which axes play Z1, Z2, W),
* the regression nuisance gamma(.;P) solving E_P[rho(O, gamma(Z)) | Z] = 0,
* the Riesz weight alpha(.;P) = -nu_m / nu_rho representing the linear map
  h -> E_P[m1(O, h)] (all kinds here have nu_rho == -1, so nu_m == alpha),
* derivative weights nu_rho == -1 and upsilon_rho (zero for the affine
  kinds, 1 - 2*E[Y|Z] for the log-odds difference).

Kinds and their observation layouts:

  ate      O = (X, D, Y), X continuous, D and Y binary.
           gamma(x,d) = E[Y|x,d], alpha = d/pi - (1-d)/(1-pi).
  ecc_plm  O = (X, T, Y) with Z = X alone; the target is the expected
           conditional covariance E[Cov(T, Y | X)].  The debiased piece is
           the auxiliary functional E[Y g(X;P)] with gamma = P(T=1|x),
           alpha = E[Y|x]; the E[TY] part rides along as a sample mean.
  ds       O = (X, Y); gamma(x) = E[Y|x], alpha = (f2-f1)/f for two known
           reference densities on X.
  wad      O = (X, D, Y) with continuous D; m1 integrates -omega' against
           gamma(x,.); alpha = -omega'(d)/p(d|x).
  ape      like wad but m1(o,h) = h(x, tau(d)) - h(x, d) for a monotone
           cell bijection tau; alpha = p_tau(d|x)/p(d|x) - 1.
  lod      layout of ate; gamma is the conditional log-odds, rho is the
           logistic-weighted residual, upsilon_rho = 1 - 2*E[Y|Z].

Everything is evaluated by exact finite sums on the grid, so the defining
identities (first-order optimality, Riesz representation, mixed-bias
representation for affine scores) hold to machine precision and are asserted
as tests rather than taken on faith.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConstructionPreconditionError,
    DegenerateNuisanceError,
    DimensionMismatchError,
    PreconditionError,
)
from .grid import Axis, Density, GridSpace, binary, continuous

ATE = "ate"
ECC_PLM = "ecc_plm"
DS = "ds"
WAD = "wad"
APE = "ape"
LOD = "lod"
KINDS = (ATE, ECC_PLM, DS, WAD, APE, LOD)

AFFINE_KINDS = (ATE, ECC_PLM, DS, WAD, APE)


# -----------------------------------------------------------------------------
# kind-specific parameter bundles
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class DsParams:
    """Two known reference densities on the X grid (w.r.t. mu_X)."""

    f1: np.ndarray
    f2: np.ndarray


@dataclass(frozen=True)
class WadParams:
    """Weight density omega and its derivative on the treatment grid.

    omega must integrate to 1 under midpoint quadrature and vanish at the
    first and last treatment cell (within 1e-8) so the integration-by-parts
    form of the functional carries no boundary terms.
    """

    omega: np.ndarray
    omega_prime: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "omega_prime",
                           np.asarray(self.omega_prime, dtype=float))
        if omega.min() < 0:
            raise PreconditionError("omega must be nonnegative")
        if abs(np.sum(omega) / omega.size - 1.0) > 1e-10:
            raise PreconditionError("omega must integrate to 1 on its grid")
        if max(omega[0], omega[-1]) > 1e-8:
            raise PreconditionError(
                "omega must vanish at the boundary treatment cells (<= 1e-8)"
            )


@dataclass(frozen=True)
class ApeParams:
    """Counterfactual transformation as a monotone cell bijection.

    ``perm[i]`` is the image cell of treatment cell i; ``deriv[i]`` holds
    |tau'| on cell i.  On a uniform grid an exactly measure-consistent
    monotone bijection has |tau'| == 1 (identity or reversal), which is what
    the packaged specs use; other derivative tables are honored in the
    change-of-variables formula for alpha.
    """

    perm: np.ndarray
    deriv: np.ndarray
    lower: float = 1.0
    upper: float = 1.0

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        deriv = np.asarray(self.deriv, dtype=float)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "deriv", deriv)
        if sorted(perm.tolist()) != list(range(perm.size)):
            raise PreconditionError("tau must be a bijection of cell indices")
        steps = np.diff(perm)
        if perm.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise PreconditionError("tau must be strictly monotone")
        mags = np.abs(deriv)
        if np.any(mags < self.lower - 1e-12) or np.any(mags > self.upper + 1e-12):
            raise PreconditionError("|tau'| must respect its declared bounds")


@dataclass(frozen=True)
class EstimandSpec:
    kind: str
    params: object | None = None
    overlap: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown estimand kind {self.kind!r}")
        if not 0.0 < self.overlap < 0.5:
            raise PreconditionError("overlap constant must lie in (0, 1/2)")
        if self.kind == DS:
            if not isinstance(self.params, DsParams):
                raise PreconditionError("ds spec needs DsParams")
        elif self.kind == WAD:
            if not isinstance(self.params, WadParams):
                raise PreconditionError("wad spec needs WadParams")
        elif self.kind == APE:
            if not isinstance(self.params, ApeParams):
                raise PreconditionError("ape spec needs ApeParams")

    @property
    def affine(self) -> bool:
        return self.kind in AFFINE_KINDS

    def to_json(self) -> dict:
        params: dict = {}
        if self.kind == DS:
            params = {"f1": self.params.f1.tolist(), "f2": self.params.f2.tolist()}
        elif self.kind == WAD:
            params = {
                "omega": self.params.omega.tolist(),
                "omega_prime": self.params.omega_prime.tolist(),
            }
        elif self.kind == APE:
            params = {
                "perm": self.params.perm.tolist(),
                "deriv": self.params.deriv.tolist(),
                "lower": self.params.lower,
                "upper": self.params.upper,
            }
        return {"kind": self.kind, "params": params, "overlap": self.overlap}

    @staticmethod
    def from_json(doc: dict) -> "EstimandSpec":
        kind = doc["kind"]
        raw = doc.get("params") or {}
        overlap = doc.get("overlap", 0.05)
        if kind == DS:
            params: object | None = DsParams(
                np.asarray(raw["f1"], dtype=float), np.asarray(raw["f2"], dtype=float)
            )
        elif kind == WAD:
            params = WadParams(
                np.asarray(raw["omega"], dtype=float),
                np.asarray(raw["omega_prime"], dtype=float),
            )
        elif kind == APE:
            params = ApeParams(
                np.asarray(raw["perm"], dtype=np.int64),
                np.asarray(raw["deriv"], dtype=float),
                raw.get("lower", 1.0),
                raw.get("upper", 1.0),
            )
        else:
            params = None
        return EstimandSpec(kind, params, overlap)


@dataclass(frozen=True)
class NuisanceField:
    """Per-Z-atom values of one nuisance, with optional range bounds."""

    space: GridSpace
    values: np.ndarray
    role: str
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", self.space.check_values(self.values))
        if self.bounds is not None:
            lo, hi = self.bounds
            if self.values.min() < lo - 1e-12 or self.values.max() > hi + 1e-12:
                raise PreconditionError(
                    f"{self.role} field leaves its bounds [{lo}, {hi}]"
                )

    def to_json(self) -> dict:
        return {"space": self.space.to_json(),
                "values": self.values.ravel().tolist(), "role": self.role}


# -----------------------------------------------------------------------------
# grid layouts and joint-density factories
# -----------------------------------------------------------------------------

def make_space(kind: str, x_cells: int = 256, d_cells: int = 64) -> GridSpace:
    """The observation grid for a kind (defaults: 256 X cells, 64 D cells)."""
    if kind in (ATE, LOD):
        return GridSpace((continuous("z1", x_cells), binary("z2"), binary("w")))
    if kind == ECC_PLM:
        return GridSpace((continuous("z1", x_cells), binary("w"), binary("w")))
    if kind == DS:
        return GridSpace((continuous("z1", x_cells), binary("w")))
    if kind in (WAD, APE):
        return GridSpace(
            (continuous("z1", x_cells), continuous("z2", d_cells), binary("w"))
        )
    raise PreconditionError(f"unknown estimand kind {kind!r}")


def z_axes(kind: str) -> tuple[int, ...]:
    """Indices of the regression axes Z within the observation grid."""
    if kind in (ATE, LOD, WAD, APE):
        return (0, 1)
    return (0,)


def z_space(kind: str, space: GridSpace) -> GridSpace:
    return space.subgrid(z_axes(kind))


def _normalize(weights: np.ndarray, cell_weight: float) -> np.ndarray:
    total = float(np.sum(weights) * cell_weight)
    if total <= 0:
        raise PreconditionError("cannot normalize a nonpositive weight vector")
    return np.asarray(weights, dtype=float) / total


def ate_joint(space: GridSpace, m: np.ndarray, g: np.ndarray,
              p_x: np.ndarray | None = None) -> Density:
    """Joint density p(x,d,y) = p_X(x) m(x)^d (1-m)^{1-d} g(x,d)^y (1-g)^{1-y}.

    ``g`` has shape (n_x, 2) indexed by treatment level.  Also the LOD anchor
    factory (same factorization, binary outcome).
    """
    n_x = space.shape[0]
    m = np.asarray(m, dtype=float) * np.ones(n_x)
    g = np.asarray(g, dtype=float) * np.ones((n_x, 2))
    if p_x is None:
        p_x = np.ones(n_x)
    p_x = _normalize(np.asarray(p_x, dtype=float) * np.ones(n_x),
                     space.axes[0].cell_weight)
    vals = np.empty(space.shape)
    for d in (0, 1):
        pd = m if d == 1 else 1.0 - m
        vals[:, d, 0] = p_x * pd * (1.0 - g[:, d])
        vals[:, d, 1] = p_x * pd * g[:, d]
    return Density(space, vals)


def plm_joint(space: GridSpace, g: np.ndarray, q: np.ndarray, theta: float) -> Density:
    """Partially linear anchor: E[Y|T,X] = f(X) + theta*T with f = q - theta*g."""
    n_x = space.shape[0]
    g = np.asarray(g, dtype=float) * np.ones(n_x)
    q = np.asarray(q, dtype=float) * np.ones(n_x)
    f = q - theta * g
    vals = np.empty(space.shape)
    vals[:, 1, 1] = g * (f + theta)
    vals[:, 1, 0] = g * (1.0 - f - theta)
    vals[:, 0, 1] = (1.0 - g) * f
    vals[:, 0, 0] = (1.0 - g) * (1.0 - f)
    if vals.min() < 0:
        raise ConstructionPreconditionError(
            "PLM anchor parameters put a cell probability below zero"
        )
    return Density(space, vals)


def ds_joint(space: GridSpace, q: np.ndarray, p_x: np.ndarray | None = None) -> Density:
    n_x = space.shape[0]
    q = np.asarray(q, dtype=float) * np.ones(n_x)
    if p_x is None:
        p_x = np.ones(n_x)
    p_x = _normalize(np.asarray(p_x, dtype=float) * np.ones(n_x),
                     space.axes[0].cell_weight)
    vals = np.stack([p_x * (1.0 - q), p_x * q], axis=1)
    return Density(space, vals)


def dose_joint(space: GridSpace, f_d: np.ndarray, g: np.ndarray,
               p_x: np.ndarray | None = None) -> Density:
    """WAD/APE anchor p(x,d,y) = p_X(x) f(d|x) Bernoulli(g(x,d)) density.

    ``f_d`` is the conditional treatment density, shape (n_x, n_d) or (n_d,);
    it is renormalized per x so that the treatment slice integrates to one
    exactly under midpoint quadrature.
    """
    n_x, n_d = space.shape[0], space.shape[1]
    f_d = np.asarray(f_d, dtype=float) * np.ones((n_x, n_d))
    g = np.asarray(g, dtype=float) * np.ones((n_x, n_d))
    w_d = space.axes[1].cell_weight
    f_d = f_d / (f_d.sum(axis=1, keepdims=True) * w_d)
    if p_x is None:
        p_x = np.ones(n_x)
    p_x = _normalize(np.asarray(p_x, dtype=float) * np.ones(n_x),
                     space.axes[0].cell_weight)
    vals = np.empty(space.shape)
    vals[:, :, 1] = p_x[:, None] * f_d * g
    vals[:, :, 0] = p_x[:, None] * f_d * (1.0 - g)
    return Density(space, vals)


def wad_weight(space: GridSpace) -> WadParams:
    """Smooth compactly supported weight: a normalized u^k (1-u)^k profile.

    The exponent k is the smallest for which the normalized profile is below
    1e-9 at the boundary cells (k = 6 on the default 64-cell grid), so the
    boundary-vanishing contract holds on any treatment grid; normalization
    is discrete, making the grid integral of omega exactly 1.
    """
    u = space.coords(1)
    w_d = space.axes[1].cell_weight
    for k in range(6, 64, 1):
        raw = (u ** k) * ((1.0 - u) ** k)
        c = float(np.sum(raw) * w_d)
        if raw[0] / c <= 1e-9:
            raw_prime = k * (u ** (k - 1)) * ((1.0 - u) ** (k - 1)) * (1.0 - 2.0 * u)
            return WadParams(raw / c, raw_prime / c)
    raise PreconditionError("no boundary-vanishing weight profile found")


def ape_reversal(space: GridSpace) -> ApeParams:
    """tau(d) = 1 - d as a cell permutation; the exact monotone bijection."""
    n_d = space.shape[1]
    perm = np.arange(n_d - 1, -1, -1, dtype=np.int64)
    return ApeParams(perm, np.ones(n_d), 1.0, 1.0)


# -----------------------------------------------------------------------------
# conditional building blocks
# -----------------------------------------------------------------------------

def _check_space(spec: EstimandSpec, space: GridSpace) -> None:
    expected_roles = {
        ATE: ("z1", "z2", "w"),
        LOD: ("z1", "z2", "w"),
        ECC_PLM: ("z1", "w", "w"),
        DS: ("z1", "w"),
        WAD: ("z1", "z2", "w"),
        APE: ("z1", "z2", "w"),
    }[spec.kind]
    roles = tuple(ax.role for ax in space.axes)
    if roles != expected_roles:
        raise DimensionMismatchError(
            f"{spec.kind} expects axis roles {expected_roles}, found {roles}"
        )


def z_marginal(p: Density, spec: EstimandSpec) -> Density:
    from .grid import marginal

    return marginal(p, z_axes(spec.kind))


def _z_slice_mass(p: Density, spec: EstimandSpec) -> np.ndarray:
    """Integral of p over W for each Z atom (unnormalized Z density)."""
    kind = spec.kind
    if kind in (ATE, LOD, WAD, APE):
        return p.values.sum(axis=2)
    if kind == ECC_PLM:
        return p.values.sum(axis=(1, 2))
    return p.values.sum(axis=1)


def regression_target_mean(p: Density, spec: EstimandSpec) -> np.ndarray:
    """Conditional mean over Z of the regressed variable (Y, or T for ecc)."""
    kind = spec.kind
    denom = _z_slice_mass(p, spec)
    _require_positive(denom, "conditional slice has zero mass")
    if kind in (ATE, LOD, WAD, APE):
        return p.values[..., 1] / denom
    if kind == ECC_PLM:
        return p.values[:, 1, :].sum(axis=1) / denom
    return p.values[:, 1] / denom


def _require_positive(arr: np.ndarray, message: str, strict: float = 0.0) -> None:
    bad = np.flatnonzero(~(arr.ravel() > strict))
    if bad.size:
        raise DegenerateNuisanceError(message, atom=int(bad[0]))


def nuisances_of(p: Density, spec: EstimandSpec) -> tuple[NuisanceField, NuisanceField]:
    """gamma(.;P) and alpha(.;P) evaluated atom-wise from conditionals of p."""
    _check_space(spec, p.space)
    kind = spec.kind
    zs = z_space(kind, p.space)
    if kind == ATE:
        g = regression_target_mean(p, spec)
        pz = p.values.sum(axis=2)
        p_x = pz.sum(axis=1)
        _require_positive(p_x, "X slice has zero mass")
        pi = pz[:, 1] / p_x
        _require_positive(pi, "propensity hits 0")
        _require_positive(1.0 - pi, "propensity hits 1")
        alpha = np.stack([-1.0 / (1.0 - pi), 1.0 / pi], axis=1)
        return (NuisanceField(zs, g, "gamma"), NuisanceField(zs, alpha, "alpha"))
    if kind == LOD:
        g = regression_target_mean(p, spec)
        _require_positive(g, "outcome regression hits 0")
        _require_positive(1.0 - g, "outcome regression hits 1")
        gamma = np.log(g / (1.0 - g))
        pz = p.values.sum(axis=2)
        p_x = pz.sum(axis=1)
        _require_positive(p_x, "X slice has zero mass")
        pi = pz[:, 1] / p_x
        _require_positive(pi, "propensity hits 0")
        _require_positive(1.0 - pi, "propensity hits 1")
        alpha = np.stack([-1.0 / (1.0 - pi), 1.0 / pi], axis=1)
        return (NuisanceField(zs, gamma, "gamma"), NuisanceField(zs, alpha, "alpha"))
    if kind == ECC_PLM:
        p_x = p.values.sum(axis=(1, 2))
        _require_positive(p_x, "X slice has zero mass")
        g = p.values[:, 1, :].sum(axis=1) / p_x
        q = p.values[:, :, 1].sum(axis=1) / p_x
        return (NuisanceField(zs, g, "gamma"), NuisanceField(zs, q, "alpha"))
    if kind == DS:
        gamma = regression_target_mean(p, spec)
        f = p.values.sum(axis=1)
        _require_positive(f, "X marginal hits zero")
        alpha = (spec.params.f2 - spec.params.f1) / f
        return (NuisanceField(zs, gamma, "gamma"), NuisanceField(zs, alpha, "alpha"))
    if kind == WAD:
        gamma = regression_target_mean(p, spec)
        pz = p.values.sum(axis=2)
        w_d = p.space.axes[1].cell_weight
        p_x = pz.sum(axis=1) * w_d
        _require_positive(p_x, "X marginal hits zero")
        cond = pz / p_x[:, None]
        _require_positive(cond, "treatment density hits zero")
        alpha = -spec.params.omega_prime[None, :] / cond
        return (NuisanceField(zs, gamma, "gamma"), NuisanceField(zs, alpha, "alpha"))
    # APE
    gamma = regression_target_mean(p, spec)
    pz = p.values.sum(axis=2)
    _require_positive(pz, "treatment slice has zero mass")
    perm, deriv = spec.params.perm, spec.params.deriv
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    alpha = pz[:, inv] / (deriv[inv][None, :] * pz) - 1.0
    return (NuisanceField(zs, gamma, "gamma"), NuisanceField(zs, alpha, "alpha"))


def propensity(p: Density, spec: EstimandSpec) -> np.ndarray:
    """pi(x) = P(D=1 | X=x) for the binary-treatment kinds."""
    if spec.kind not in (ATE, LOD):
        raise PreconditionError("propensity defined for binary-treatment kinds only")
    pz = p.values.sum(axis=2)
    p_x = pz.sum(axis=1)
    _require_positive(p_x, "X slice has zero mass")
    return pz[:, 1] / p_x


# -----------------------------------------------------------------------------
# the linear functional m1 and the target chi
# -----------------------------------------------------------------------------

def m1_population(p: Density, spec: EstimandSpec, h: np.ndarray) -> float:
    """Exact E_P[m1(O, h)] for a test field h on the Z grid."""
    _check_space(spec, p.space)
    kind = spec.kind
    zs = z_space(kind, p.space)
    h = zs.check_values(np.asarray(h, dtype=float) * np.ones(zs.shape))
    w = p.space.atom_weight
    if kind in (ATE, LOD):
        p_x = p.values.sum(axis=(1, 2))
        return float(np.sum(p_x * (h[:, 1] - h[:, 0])) * w)
    if kind == ECC_PLM:
        y_mass = p.values[:, :, 1].sum(axis=1)
        return float(np.sum(y_mass * h) * w)
    if kind == DS:
        w_x = p.space.axes[0].cell_weight
        return float(np.sum(h * (spec.params.f2 - spec.params.f1)) * w_x)
    if kind == WAD:
        pz = p.values.sum(axis=2)
        w_d = p.space.axes[1].cell_weight
        p_x = pz.sum(axis=1) * w_d
        inner = -(h * spec.params.omega_prime[None, :]).sum(axis=1) * w_d
        w_x = p.space.axes[0].cell_weight
        return float(np.sum(p_x * inner) * w_x)
    # APE
    pz = p.values.sum(axis=2)
    perm = spec.params.perm
    return float(np.sum(pz * (h[:, perm] - h)) * w)


def m1_rows(spec: EstimandSpec, space: GridSpace, rows: np.ndarray,
            h: np.ndarray) -> np.ndarray:
    """Per-observation m1(O_i, h) for dataset rows (flat atom indices)."""
    _check_space(spec, space)
    kind = spec.kind
    zs = z_space(kind, space)
    h = zs.check_values(np.asarray(h, dtype=float) * np.ones(zs.shape))
    idx = np.stack(np.unravel_index(np.asarray(rows, dtype=np.int64), space.shape),
                   axis=1)
    if kind in (ATE, LOD):
        return h[idx[:, 0], 1] - h[idx[:, 0], 0]
    if kind == ECC_PLM:
        y = idx[:, 2].astype(float)
        return y * h[idx[:, 0]]
    if kind == DS:
        w_x = space.axes[0].cell_weight
        const = float(np.sum(h * (spec.params.f2 - spec.params.f1)) * w_x)
        return np.full(idx.shape[0], const)
    if kind == WAD:
        w_d = space.axes[1].cell_weight
        per_x = -(h * spec.params.omega_prime[None, :]).sum(axis=1) * w_d
        return per_x[idx[:, 0]]
    perm = spec.params.perm
    return h[idx[:, 0], perm[idx[:, 1]]] - h[idx[:, 0], idx[:, 1]]


def functional_value(p: Density, spec: EstimandSpec) -> float:
    """Exact chi(P) on the grid."""
    _check_space(spec, p.space)
    kind = spec.kind
    gamma, alpha = nuisances_of(p, spec)
    if kind == ECC_PLM:
        # expected conditional covariance, not the auxiliary linear piece
        g, q = gamma.values, alpha.values
        t = np.array([0.0, 1.0])[None, :, None]
        y = np.array([0.0, 1.0])[None, None, :]
        resid = (t - g[:, None, None]) * (y - q[:, None, None])
        return float(np.sum(p.values * resid) * p.space.atom_weight)
    return m1_population(p, spec, gamma.values)


def ecc_offset_population(p: Density, spec: EstimandSpec) -> float:
    """E_P[TY], the parametric part of the expected conditional covariance."""
    if spec.kind != ECC_PLM:
        raise PreconditionError("offset only defined for ecc_plm")
    return float(p.values[:, 1, 1].sum() * p.space.atom_weight)


def score_sign_offset(spec: EstimandSpec) -> int:
    """chi = offset + sign * (debiased linear functional); -1 for ecc_plm."""
    return -1 if spec.kind == ECC_PLM else 1


# -----------------------------------------------------------------------------
# the regression score rho and its derivative weights
# -----------------------------------------------------------------------------

def score_rho(spec: EstimandSpec, outcome: float | np.ndarray,
              gamma_val: float | np.ndarray) -> np.ndarray:
    """rho(o, gamma): residual for affine kinds, logistic-weighted for lod.

    ``outcome`` is the regressed variable of the kind: y for ate/ds/wad/ape
    and lod, t for ecc_plm.
    """
    outcome = np.asarray(outcome, dtype=float)
    gamma_val = np.asarray(gamma_val, dtype=float)
    if spec.kind == LOD:
        lam = 1.0 / (1.0 + np.exp(-gamma_val))
        return (outcome - lam) / (lam * (1.0 - lam))
    return outcome - gamma_val


def rho_rows(spec: EstimandSpec, space: GridSpace, rows: np.ndarray,
             gamma_field: np.ndarray) -> np.ndarray:
    """Per-observation rho(O_i, gamma(Z_i)) for dataset rows."""
    _check_space(spec, space)
    kind = spec.kind
    zs = z_space(kind, space)
    gamma_field = zs.check_values(np.asarray(gamma_field, dtype=float) * np.ones(zs.shape))
    idx = np.stack(np.unravel_index(np.asarray(rows, dtype=np.int64), space.shape),
                   axis=1)
    if kind in (ATE, LOD, WAD, APE):
        gvals = gamma_field[idx[:, 0], idx[:, 1]]
        outcome = idx[:, 2].astype(float)
    elif kind == ECC_PLM:
        gvals = gamma_field[idx[:, 0]]
        outcome = idx[:, 1].astype(float)
    else:
        gvals = gamma_field[idx[:, 0]]
        outcome = idx[:, 1].astype(float)
    return score_rho(spec, outcome, gvals)


def rho_bar(p: Density, spec: EstimandSpec, gamma_field: np.ndarray) -> np.ndarray:
    """E_P[rho(O, gamma_field(Z)) | Z = z], exactly, per Z atom."""
    kind = spec.kind
    zs = z_space(kind, p.space)
    gamma_field = zs.check_values(np.asarray(gamma_field, dtype=float) * np.ones(zs.shape))
    target = regression_target_mean(p, spec)
    if kind == LOD:
        lam = 1.0 / (1.0 + np.exp(-gamma_field))
        return (target - lam) / (lam * (1.0 - lam))
    return target - gamma_field


def nu_upsilon_rho(spec: EstimandSpec, p: Density) -> tuple[np.ndarray, np.ndarray]:
    """(nu_rho, upsilon_rho) fields on the Z grid.

    nu_rho is identically -1 for every supported kind; upsilon_rho vanishes
    for the affine kinds and equals 1 - 2*E[Y|Z] for lod.
    """
    zs = z_space(spec.kind, p.space)
    nu = -np.ones(zs.shape)
    if spec.kind == LOD:
        ups = 1.0 - 2.0 * regression_target_mean(p, spec)
    else:
        ups = np.zeros(zs.shape)
    return nu, ups


def riesz_identity_residual(p: Density, spec: EstimandSpec, h: np.ndarray) -> float:
    """E_P[m1(O,h)] - E_P[h * nu_m] with nu_m = -alpha*nu_rho; expected ~ 0."""
    _, alpha = nuisances_of(p, spec)
    nu_m = alpha.values  # nu_rho == -1 for every kind
    pz = z_marginal(p, spec)
    zs = pz.space
    h_arr = zs.check_values(np.asarray(h, dtype=float) * np.ones(zs.shape))
    riesz_side = float(np.sum(h_arr * nu_m * pz.values) * zs.atom_weight)
    return m1_population(p, spec, h_arr) - riesz_side


def mixed_bias_value(p: Density, spec: EstimandSpec) -> float:
    """E_P[rho_0(O) alpha(Z;P)] for affine kinds (the m2 representation).

    For ate/ds/wad/ape this equals chi(P); for ecc_plm it equals the
    auxiliary functional E[Y g(X;P)] = E[TY] - chi(P).
    """
    if not spec.affine:
        raise PreconditionError("mixed-bias representation needs an affine score")
    _, alpha = nuisances_of(p, spec)
    pz = z_marginal(p, spec)
    target = regression_target_mean(p, spec)  # rho_0 has E[rho_0|Z] = target
    return float(np.sum(target * alpha.values * pz.values) * pz.space.atom_weight)
