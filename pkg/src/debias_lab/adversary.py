"""Hard-instance constructions: invariant directions and local alternatives.

The lower-bound recipe needs, at an anchor density, perturbation directions
along which one nuisance is *exactly* unchanged while the target functional
bends at second order.  This module builds those directions for each
estimand, multiplies them by sign-flip bumps to generate exponentially many
indistinguishable alternatives, and provides the probes (finite-difference
second derivatives, closed-form curvature integrals, nuisance-invariance
checks, uncertainty-set membership) that certify every construction
numerically.

Families of alternatives come in three shapes:

* ``AteLocalFamily`` - the joint construction for the average treatment
  effect: the propensity moves by eps_m * Delta and the outcome regressions
  co-move so that the lambda-average of the joint densities is the anchor
  atom for atom, the nuisance shifts have exact L2 size, and the ATE of
  every member sits at -2 eps_m eps_g from the anchor.
* ``DirectionFamily`` - the generic two-step family anchor + t*Delta*first +
  s*Delta*second for a DirectionPair.
* ``PlmFamily`` - the partially-linear-model family indexed by (u, v); each
  member is again a PLM law with a tilted slope, the treatment propensity
  moves only with u and the outcome mean only with v.

Conventions: ``Delta`` always lives on the Z1 axis (axis 0) and broadcasts
over the remaining axes; direction pairs are ordered (invariant direction,
companion direction).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import estimands as est
from .errors import (
    ConstructionPreconditionError,
    InfeasibleRadiusError,
    NondegeneracyError,
    PairingError,
    PreconditionError,
    SizeLimitError,
    UncertaintyViolationError,
)
from .estimands import EstimandSpec, NuisanceField
from .grid import Density, GridSpace, SignedDensity, add_scaled, l2_nuisance_distance
from .partition import BumpField, BumpPartition, all_sign_vectors, bump


# -----------------------------------------------------------------------------
# direction pairs per estimand
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionPair:
    """An invariant direction and its companion, plus the curvature they buy.

    ``first`` leaves ``invariant_nuisance`` exactly unchanged along the whole
    feasible segment; ``mixed_reference`` is the closed-form value of the
    mixed second derivative chi''[first, second] on the grid.
    """

    kind: str
    invariant_nuisance: str
    first: SignedDensity
    second: SignedDensity
    mixed_reference: float


def _half_space_sign(space: GridSpace) -> np.ndarray:
    """phi(x) = +1 on the left half of the Z1 axis, -1 on the right."""
    n_x = space.shape[0]
    phi = np.ones(n_x)
    phi[n_x // 2:] = -1.0
    return phi


def _ate_directions(anchor: Density, variant: str) -> DirectionPair:
    space = anchor.space
    phi = _half_space_sign(space)
    p = anchor.values
    p1dot = p[:, 1, :].sum(axis=1)
    p0dot = p[:, 0, :].sum(axis=1)
    if p0dot.min() <= 0 or p1dot.min() <= 0:
        raise ConstructionPreconditionError("anchor needs positive treatment slices")

    g0 = np.zeros(space.shape)
    g0[:, 1, :] = phi[:, None] * p[:, 1, :]
    g0[:, 0, :] = -(phi * p1dot / p0dot)[:, None] * p[:, 0, :]
    g1 = np.zeros(space.shape)
    g1[:, 1, 1] = phi * p1dot
    g1[:, 1, 0] = -phi * p1dot

    p_x = p.sum(axis=(1, 2))
    w_x = space.axes[0].cell_weight
    mixed = -float(np.sum(phi * phi * p_x) * w_x)  # = -1 for any anchor

    if variant == "gamma":
        return DirectionPair("ate", "gamma", SignedDensity(space, g0),
                             SignedDensity(space, g1), mixed)
    # alpha variant: H0 leaves the (x, d) marginals untouched, H1 := G0
    return DirectionPair("ate", "alpha", SignedDensity(space, g1),
                         SignedDensity(space, g0), mixed)


def _wad_bump_phi(space: GridSpace, spec: EstimandSpec) -> np.ndarray:
    """Derivative of a cubic bump on a grid-aligned interval of constant
    omega' sign, made discretely mean-zero over the treatment axis."""
    op = spec.params.omega_prime
    n_d = space.shape[1]
    interior = np.arange(1, n_d - 1)
    signs = np.sign(op[interior])
    best = (0, 0)
    run_start = 0
    for i in range(1, interior.size + 1):
        if i == interior.size or signs[i] != signs[run_start] or signs[i] == 0:
            if signs[run_start] != 0 and i - run_start > best[1] - best[0]:
                best = (run_start, i)
            run_start = i
    lo, hi = interior[best[0]], interior[best[1] - 1] + 1
    if hi - lo < 4:
        raise ConstructionPreconditionError(
            "omega' has no usable constant-sign run on the treatment grid"
        )
    if (hi - lo) % 2:
        hi -= 1
    d = space.coords(1)
    a, length = d[lo] - space.axes[1].cell_weight / 2.0, None
    b_edge = d[hi - 1] + space.axes[1].cell_weight / 2.0
    length = b_edge - a
    v = (d - a) / length
    phi = np.zeros(n_d)
    inside = slice(lo, hi)
    vv = v[inside]
    phi[inside] = 420.0 * vv ** 2 * (1.0 - vv) ** 2 * (1.0 - 2.0 * vv) / length
    phi -= phi.mean()  # exact zero mass under the uniform treatment quadrature
    # unit sup-norm keeps the feasible radius of phi-built directions O(1)
    return phi / np.max(np.abs(phi))


def _wad_directions(anchor: Density, spec: EstimandSpec, variant: str) -> DirectionPair:
    space = anchor.space
    phi = _wad_bump_phi(space, spec)
    pz = anchor.values.sum(axis=2)
    if pz.min() <= 0:
        raise ConstructionPreconditionError("anchor needs positive (x, d) slices")
    cond = anchor.values / pz[:, :, None]

    g0 = phi[None, :, None] * cond
    g1 = np.zeros(space.shape)
    g1[:, :, 1] = phi[None, :] * pz
    g1[:, :, 0] = -phi[None, :] * pz

    w_x = space.axes[0].cell_weight
    w_d = space.axes[1].cell_weight
    p_x = pz.sum(axis=1) * w_d
    s_omega = -spec.params.omega_prime  # s(d) * omega(d)
    inner = (s_omega[None, :] * phi[None, :] ** 2 / pz).sum(axis=1) * w_d
    mixed = -float(np.sum(p_x * inner) * w_x)

    if variant == "gamma":
        return DirectionPair("wad", "gamma", SignedDensity(space, g0),
                             SignedDensity(space, g1), mixed)
    return DirectionPair("wad", "alpha", SignedDensity(space, g1),
                         SignedDensity(space, g0), mixed)


def _ds_zeta(anchor: Density, spec: EstimandSpec) -> np.ndarray:
    """zeta = 1_A - c 1_B on the first constant-sign run of f2 - f1."""
    diff = spec.params.f2 - spec.params.f1
    n_x = anchor.space.shape[0]
    f = anchor.values.sum(axis=1)
    for sign in (-1.0, 1.0):
        mask = sign * diff > 1e-12
        run = 0
        for i in range(n_x + 1):
            if i < n_x and mask[i]:
                run += 1
            else:
                if run >= 2:
                    start = i - run
                    half = run // 2
                    a = slice(start, start + half)
                    b = slice(start + half, start + run)
                    c = float(f[a].sum() / f[b].sum())
                    zeta = np.zeros(n_x)
                    zeta[a] = 1.0
                    zeta[b] = -c
                    return zeta
                run = 0
    raise ConstructionPreconditionError(
        "f2 - f1 has no constant-sign run of length >= 2"
    )


def _ds_directions(anchor: Density, spec: EstimandSpec, variant: str) -> DirectionPair:
    space = anchor.space
    zeta = _ds_zeta(anchor, spec)
    f = anchor.values.sum(axis=1)
    g0 = zeta[:, None] * anchor.values
    g1 = np.stack([zeta, -zeta], axis=1)  # (-1)^y * zeta

    w_x = space.axes[0].cell_weight
    diff = spec.params.f2 - spec.params.f1
    mixed = float(np.sum(zeta ** 2 * diff / f ** 2) * w_x)

    if variant == "gamma":
        return DirectionPair("ds", "gamma", SignedDensity(space, g0),
                             SignedDensity(space, g1), mixed)
    return DirectionPair("ds", "alpha", SignedDensity(space, g1),
                         SignedDensity(space, g0), mixed)


def _lod_directions(anchor: Density, spec: EstimandSpec, variant: str) -> DirectionPair:
    space = anchor.space
    eta = spec.overlap
    p = anchor.values
    p1dot = p[:, 1, :].sum(axis=1)
    p0dot = p[:, 0, :].sum(axis=1)
    if p.min() <= 0:
        raise ConstructionPreconditionError("LOD anchor must be strictly positive")
    g1x = p[:, 1, 1] / p1dot
    region = g1x > 0.5
    if not region.any():
        region = g1x < 0.5
    if not region.any():
        raise ConstructionPreconditionError(
            "LOD construction needs g(1, x) != 1/2 on positive mass"
        )
    b = region.astype(float)
    delta0 = eta / (8.0 * (1.0 - eta))
    delta1 = 1.0 / 8.0

    phi0 = np.zeros(space.shape)
    phi0[:, 1, :] = delta0 * p[:, 1, :]
    phi0[:, 0, :] = -delta0 * (p1dot / p0dot)[:, None] * p[:, 0, :]
    phi1 = np.zeros(space.shape)
    phi1[:, 1, 1] = delta1 * b * p[:, 1, 0]
    phi1[:, 1, 0] = -delta1 * b * p[:, 1, 0]

    p_x = p.sum(axis=(1, 2))
    w_x = space.axes[0].cell_weight
    mixed_g = -delta0 * delta1 * float(np.sum(b / g1x * p_x) * w_x)
    if variant == "gamma":
        return DirectionPair("lod", "gamma", SignedDensity(space, phi0),
                             SignedDensity(space, phi1), mixed_g)
    # alpha variant: H0 := the phi1 direction, companion H1 := the phi0 one
    return DirectionPair("lod", "alpha", SignedDensity(space, phi1),
                         SignedDensity(space, phi0), mixed_g)


def lod_curvature_reference(anchor: Density, spec: EstimandSpec) -> float:
    """Closed form of chi''[H0, H0] for the LOD construction:
    delta_1^2 * E_X[ b(X) (2 g(1,X) - 1) / g(1,X)^2 ]."""
    p = anchor.values
    p1dot = p[:, 1, :].sum(axis=1)
    g1x = p[:, 1, 1] / p1dot
    region = g1x > 0.5
    if not region.any():
        region = g1x < 0.5
    b = region.astype(float)
    delta1 = 1.0 / 8.0
    p_x = p.sum(axis=(1, 2))
    w_x = anchor.space.axes[0].cell_weight
    return delta1 ** 2 * float(np.sum(b * (2.0 * g1x - 1.0) / g1x ** 2 * p_x) * w_x)


def _plm_scale(anchor: Density) -> np.ndarray:
    g = anchor.values[:, 1, :].sum(axis=1) / anchor.values.sum(axis=(1, 2))
    return np.sqrt(g * (1.0 - g))


def _plm_directions(anchor: Density, variant: str) -> DirectionPair:
    """Linearized (u, v) directions of the PLM family at the origin."""
    space = anchor.space
    p = anchor.values
    p_x = p.sum(axis=(1, 2))
    g = p[:, 1, :].sum(axis=1) / p_x
    q = p[:, :, 1].sum(axis=1) / p_x
    theta = plm_slope(anchor)
    s = np.sqrt(g * (1.0 - g))
    phi = _half_space_sign(space)

    u_dir = np.zeros(space.shape)  # moves g, leaves q fixed
    u_dir[:, 1, 1] = (q + theta * (1.0 - 2.0 * g)) * s * phi
    u_dir[:, 1, 0] = (1.0 - q - theta * (1.0 - 2.0 * g)) * s * phi
    u_dir[:, 0, 1] = -(q + theta * (1.0 - 2.0 * g)) * s * phi
    u_dir[:, 0, 0] = (q - 1.0 + theta * (1.0 - 2.0 * g)) * s * phi

    v_dir = np.zeros(space.shape)  # moves q, leaves g fixed
    v_dir[:, 1, 1] = -g * s * phi
    v_dir[:, 1, 0] = g * s * phi
    v_dir[:, 0, 1] = -(1.0 - g) * s * phi
    v_dir[:, 0, 0] = (1.0 - g) * s * phi

    w_x = space.axes[0].cell_weight
    # curvature of the exposed target E[Cov(T,Y|X)] = E[TY] - E[Y g(X;P)];
    # the auxiliary functional's mixed derivative is the negative of this
    mixed = float(np.sum(g * (1.0 - g) * phi * phi * p_x) * w_x)
    if variant == "gamma":
        return DirectionPair("ecc_plm", "gamma", SignedDensity(space, v_dir),
                             SignedDensity(space, u_dir), mixed)
    return DirectionPair("ecc_plm", "alpha", SignedDensity(space, u_dir),
                         SignedDensity(space, v_dir), mixed)


def plm_slope(anchor: Density) -> float:
    """Recover the constant treatment slope of a PLM anchor."""
    p = anchor.values
    p_x = p.sum(axis=(1, 2))
    g = p[:, 1, :].sum(axis=1) / p_x
    y1 = p[:, 1, 1] / p[:, 1, :].sum(axis=1)
    y0 = p[:, 0, 1] / p[:, 0, :].sum(axis=1)
    slopes = y1 - y0
    if np.max(np.abs(slopes - slopes[0])) > 1e-10:
        raise ConstructionPreconditionError("anchor is not a constant-slope PLM law")
    return float(slopes[0])


def direction_pair(spec: EstimandSpec, anchor: Density,
                   variant: str = "gamma") -> DirectionPair:
    """The per-kind invariant/companion pair at the anchor.

    ``variant`` selects which nuisance the first direction freezes.  The APE
    kind has no packaged adversarial construction (estimation only).
    """
    if variant not in ("gamma", "alpha"):
        raise PreconditionError("variant must be 'gamma' or 'alpha'")
    kind = spec.kind
    if kind == est.ATE:
        return _ate_directions(anchor, variant)
    if kind == est.WAD:
        return _wad_directions(anchor, spec, variant)
    if kind == est.DS:
        return _ds_directions(anchor, spec, variant)
    if kind == est.LOD:
        return _lod_directions(anchor, spec, variant)
    if kind == est.ECC_PLM:
        return _plm_directions(anchor, variant)
    raise PreconditionError(f"no adversarial construction for kind {kind!r}")


# -----------------------------------------------------------------------------
# invariance checks and derivative probes
# -----------------------------------------------------------------------------

def verify_invariance(anchor: Density, direction: SignedDensity,
                      spec: EstimandSpec, which: str,
                      t_grid: Sequence[float] = (-0.05, -0.01, 0.01, 0.05)) -> float:
    """Max atom-wise deviation of the named nuisance along anchor + t*dir."""
    base_gamma, base_alpha = est.nuisances_of(anchor, spec)
    base = base_gamma.values if which == "gamma" else base_alpha.values
    worst = 0.0
    for t in t_grid:
        perturbed = add_scaled(anchor, float(t), direction)
        gam, alp = est.nuisances_of(perturbed, spec)
        vals = gam.values if which == "gamma" else alp.values
        worst = max(worst, float(np.max(np.abs(vals - base))))
    return worst


def bumped_direction(direction: SignedDensity, field: BumpField,
                     tol: float = 2e-6) -> SignedDensity:
    """Delta(lambda, z1) * direction, atom-wise; requires int Delta dG = 0."""
    space = direction.space
    delta = field.values
    if delta.size != space.shape[0]:
        raise PreconditionError("bump field does not match the Z1 axis")
    shape = [1] * len(space.shape)
    shape[0] = delta.size
    values = direction.values * delta.reshape(shape)
    mass = float(values.sum() * space.atom_weight)
    scale = 1.0 + float(np.abs(direction.values).sum() * space.atom_weight)
    if abs(mass) > tol * scale:
        raise PairingError(
            f"bump does not annihilate the direction: int Delta dG = {mass:.3e}"
        )
    # partition residual dust can exceed the SignedDensity mass contract;
    # remove it proportionally to |values| (relative change <= tol per atom)
    abs_mass = float(np.abs(values).sum() * space.atom_weight)
    if mass != 0.0 and abs_mass > 0.0:
        values = values - (mass / abs_mass) * np.abs(values)
    return SignedDensity(space, values)


def second_derivative_fd(anchor: Density, dir_a: SignedDensity,
                         dir_b: SignedDensity, spec: EstimandSpec,
                         step: float = 1e-3) -> float:
    """Central mixed finite difference of (s,t) -> chi(anchor + s a + t b)."""

    def chi_at(s: float, t: float) -> float:
        vals = anchor.values + s * dir_a.values + t * dir_b.values
        if vals.min() < -1e-12:
            raise InfeasibleRadiusError(max(abs(s), abs(t)), 0.0)
        try:
            return est.functional_value(Density(anchor.space, vals), spec)
        except PreconditionError as exc:
            raise PreconditionError(
                f"functional undefined at offset ({s:g},{t:g}); try a smaller step"
            ) from exc

    h = float(step)
    return (chi_at(h, h) - chi_at(h, -h) - chi_at(-h, h) + chi_at(-h, -h)) / (4 * h * h)


def nuisance_directional_derivative(anchor: Density, direction: SignedDensity,
                                    spec: EstimandSpec, which: str = "gamma",
                                    step: float = 1e-3,
                                    richardson: bool = True) -> np.ndarray:
    """Per-atom derivative of the nuisance along the direction, by central
    differences with one optional Richardson extrapolation level."""

    def central(h: float) -> np.ndarray:
        up_g, up_a = est.nuisances_of(add_scaled(anchor, h, direction), spec)
        dn_g, dn_a = est.nuisances_of(add_scaled(anchor, -h, direction), spec)
        up = up_g.values if which == "gamma" else up_a.values
        dn = dn_g.values if which == "gamma" else dn_a.values
        return (up - dn) / (2.0 * h)

    if not richardson:
        return central(step)
    coarse = central(step)
    fine = central(step / 2.0)
    return (4.0 * fine - coarse) / 3.0


def closed_form_chi2_H0(anchor: Density, h0: SignedDensity, spec: EstimandSpec,
                        step: float = 1e-4) -> float:
    """chi''[H0, H0] via the curvature integral
    -int alpha(z) upsilon_rho(z) (gamma'_P(z)[H0])^2 dP_Z; zero for affine."""
    _, ups = est.nu_upsilon_rho(spec, anchor)
    if not np.any(ups):
        return 0.0
    _, alpha = est.nuisances_of(anchor, spec)
    gprime = nuisance_directional_derivative(anchor, h0, spec, "gamma", step)
    pz = est.z_marginal(anchor, spec)
    return -float(np.sum(alpha.values * ups * gprime ** 2 * pz.values)
                  * pz.space.atom_weight)


# -----------------------------------------------------------------------------
# Gram-Schmidt invariant direction for ratio nuisances
# -----------------------------------------------------------------------------

def gram_schmidt_invariant_direction(anchor: Density, f0: np.ndarray,
                                     f1: np.ndarray, z_atom: int,
                                     seed: int = 0,
                                     nondegeneracy_floor: float = 1e-6,
                                     retries: int = 8) -> np.ndarray:
    """Conditional perturbation g0(.|z) orthogonal to {1, F0 - alpha_z F1}.

    A ratio nuisance alpha(z;P) = E_P[F0|Z=z]/E_P[F1|Z=z] is exactly invariant
    under slice perturbations orthogonal (in the conditional base measure) to
    the constant function and to F0 - alpha_z F1.  The returned array holds
    the conditional density of the perturbation per W atom at the given Z
    atom (to be embedded with :func:`slice_perturbation`).
    """
    space = anchor.space
    z_idx = [i for i, ax in enumerate(space.axes) if ax.role in ("z1", "z2")]
    w_idx = [i for i, ax in enumerate(space.axes) if ax.role == "w"]
    if not w_idx:
        raise PreconditionError("anchor space has no W axes")
    f0 = space.check_values(np.asarray(f0, dtype=float) * np.ones(space.shape))
    f1 = space.check_values(np.asarray(f1, dtype=float) * np.ones(space.shape))

    z_shape = tuple(space.shape[i] for i in z_idx)
    z_multi = np.unravel_index(int(z_atom), z_shape)
    slicer: list = [slice(None)] * len(space.axes)
    for ax, c in zip(z_idx, z_multi):
        slicer[ax] = int(c)
    sl = tuple(slicer)
    p_slice = anchor.values[sl].ravel()
    f0_w = f0[sl].ravel()
    f1_w = f1[sl].ravel()
    n_w = f0_w.size
    w_w = 1.0
    for i in w_idx:
        w_w *= space.axes[i].cell_weight

    denom = float(np.sum(f1_w * p_slice))
    if abs(denom) < 1e-14:
        raise ConstructionPreconditionError("E[F1 | z] vanishes at the atom")
    alpha_z = float(np.sum(f0_w * p_slice)) / denom
    f_tilde = f0_w - alpha_z * f1_w

    # conditional second-moment floor: min_{a,b} E_mu[(F0 - a F1 - b)^2 | z]
    design = np.stack([f1_w, np.ones(n_w)], axis=1) * np.sqrt(w_w)
    resp = f0_w * np.sqrt(w_w)
    _, res, _, _ = np.linalg.lstsq(design, resp, rcond=None)
    floor = float(res[0]) if res.size else float(
        np.sum((resp - design @ np.linalg.lstsq(design, resp, rcond=None)[0]) ** 2)
    )
    if floor <= nondegeneracy_floor:
        raise NondegeneracyError(
            f"F0 is (nearly) affine in F1 on the slice: residual {floor:.3e}"
        )

    c = float(np.sum(f_tilde) * w_w) / float(n_w * w_w)
    centered = f_tilde - c
    norm_sq = float(np.sum(centered ** 2) * w_w)
    for k in range(retries):
        rng = np.random.default_rng(seed + k)
        trial = rng.standard_normal(n_w)
        g0 = trial.copy()
        g0 -= float(np.sum(trial * centered) * w_w) / norm_sq * centered
        g0 -= float(np.sum(g0) * w_w) / (n_w * w_w)
        if np.max(np.abs(g0)) > 1e-10:
            return g0
    raise NondegeneracyError(
        "every seed field orthogonalized to zero: W space spans only {1, F}"
    )


def slice_perturbation(anchor: Density, z_atom: int, g0_w: np.ndarray) -> SignedDensity:
    """Embed a per-W conditional perturbation at one Z atom into O."""
    space = anchor.space
    z_idx = [i for i, ax in enumerate(space.axes) if ax.role in ("z1", "z2")]
    z_shape = tuple(space.shape[i] for i in z_idx)
    z_multi = np.unravel_index(int(z_atom), z_shape)
    slicer: list = [slice(None)] * len(space.axes)
    for ax, c in zip(z_idx, z_multi):
        slicer[ax] = int(c)
    values = np.zeros(space.shape)
    values[tuple(slicer)] = np.asarray(g0_w, dtype=float).reshape(
        values[tuple(slicer)].shape
    )
    return SignedDensity(space, values)


# -----------------------------------------------------------------------------
# alternative families
# -----------------------------------------------------------------------------

def uncertainty_membership(p: Density, anchor: Density, spec: EstimandSpec,
                           eps_gamma: float, eps_alpha: float
                           ) -> tuple[bool, tuple[float, float]]:
    """Check the nuisance-distance constraints defining the uncertainty set.

    Distances are L2 under the *candidate's* Z marginal, matching the set
    {P : ||gamma(.;anchor) - gamma(.;P)||_{P_Z,2} <= eps_gamma, same for
    alpha}.
    """
    gam_p, alp_p = est.nuisances_of(p, spec)
    gam_a, alp_a = est.nuisances_of(anchor, spec)
    pz = est.z_marginal(p, spec)
    d_gamma = l2_nuisance_distance(gam_p.values, gam_a.values, pz)
    d_alpha = l2_nuisance_distance(alp_p.values, alp_a.values, pz)
    member = d_gamma <= eps_gamma + 1e-12 and d_alpha <= eps_alpha + 1e-12
    return member, (d_gamma, d_alpha)


class AteLocalFamily:
    """The joint ATE alternatives indexed by sign vectors.

    Built from anchor fields (m_hat, g_hat) with uniform X marginal and a
    partition balancing the weights (1, 2 m_hat - 1):

        m_lam      = m_hat + eps_m Delta
        g_lam(0,.) = g_hat(0,.) + eps_g Delta (1 - m_hat + eps_m Delta)
        g_lam(1,.) = g_hat(1,.) + eps_g Delta (m_hat  - eps_m Delta)

    The lambda-average of the member densities is the anchor exactly; when
    the partition splits no cell, the propensity shift has L2 size exactly
    eps_m and the ATE separation is exactly -2 eps_m eps_g.
    """

    def __init__(self, space: GridSpace, m_hat: np.ndarray, g_hat: np.ndarray,
                 eps_m: float, eps_g: float, partition: BumpPartition):
        n_x = space.shape[0]
        self.space = space
        self.m_hat = np.asarray(m_hat, dtype=float) * np.ones(n_x)
        self.g_hat = np.asarray(g_hat, dtype=float) * np.ones((n_x, 2))
        c = float(min(self.m_hat.min(), 1.0 - self.m_hat.max(),
                      self.g_hat.min(), 1.0 - self.g_hat.max()))
        if eps_m < 0 or eps_g < 0 or eps_m > c or eps_g > c:
            raise UncertaintyViolationError(
                f"eps_m, eps_g must lie in [0, {c:g}] for this anchor"
            )
        self.eps_m = float(eps_m)
        self.eps_g = float(eps_g)
        self.partition = partition
        self.anchor = est.ate_joint(space, self.m_hat, self.g_hat)

    @property
    def m_pairs(self) -> int:
        return self.partition.n_pairs

    def member(self, lam: Sequence[int]) -> Density:
        delta = bump(self.partition, lam).values
        m_lam = self.m_hat + self.eps_m * delta
        g_lam = np.empty_like(self.g_hat)
        g_lam[:, 0] = self.g_hat[:, 0] + self.eps_g * delta * (
            1.0 - self.m_hat + self.eps_m * delta
        )
        g_lam[:, 1] = self.g_hat[:, 1] + self.eps_g * delta * (
            self.m_hat - self.eps_m * delta
        )
        return est.ate_joint(self.space, m_lam, g_lam)

    def members(self) -> list[tuple[np.ndarray, Density]]:
        lams = all_sign_vectors(self.m_pairs)
        return [(lam, self.member(lam)) for lam in lams]

    def nuisance_shift_norms(self, lam: Sequence[int]) -> tuple[float, float]:
        """(||m_lam - m_hat||_{P_X,2}, max_d ||g_lam(d,.) - g_hat(d,.)||)."""
        delta = bump(self.partition, lam).values
        p_x_density = Density(
            self.space.subgrid([0]),
            np.ones(self.space.shape[0]),
        )
        m_shift = l2_nuisance_distance(self.m_hat + self.eps_m * delta,
                                       self.m_hat, p_x_density)
        member = self.member(lam)
        gam, _ = est.nuisances_of(member, EstimandSpec(est.ATE))
        gam0, _ = est.nuisances_of(self.anchor, EstimandSpec(est.ATE))
        g_shift = max(
            l2_nuisance_distance(gam.values[:, d], gam0.values[:, d], p_x_density)
            for d in (0, 1)
        )
        return m_shift, g_shift


def ate_alternative(space: GridSpace, m_hat: np.ndarray, g_hat: np.ndarray,
                    eps_m: float, eps_g: float, partition: BumpPartition,
                    lam: Sequence[int]) -> Density:
    """One local alternative of the ATE construction (see AteLocalFamily)."""
    return AteLocalFamily(space, m_hat, g_hat, eps_m, eps_g, partition).member(lam)


class DirectionFamily:
    """Generic two-step family anchor + t*Delta*first + s*Delta*second."""

    def __init__(self, anchor: Density, spec: EstimandSpec, pair: DirectionPair,
                 t_first: float, s_second: float, partition: BumpPartition):
        self.anchor = anchor
        self.spec = spec
        self.pair = pair
        self.t_first = float(t_first)
        self.s_second = float(s_second)
        self.partition = partition

    @property
    def m_pairs(self) -> int:
        return self.partition.n_pairs

    def member(self, lam: Sequence[int]) -> Density:
        field = bump(self.partition, lam)
        first = bumped_direction(self.pair.first, field)
        second = bumped_direction(self.pair.second, field)
        vals = (self.anchor.values + self.t_first * first.values
                + self.s_second * second.values)
        if vals.min() < -1e-12:
            raise InfeasibleRadiusError(max(self.t_first, self.s_second), 0.0)
        return Density(self.anchor.space, vals)

    def members(self) -> list[tuple[np.ndarray, Density]]:
        lams = all_sign_vectors(self.m_pairs)
        return [(lam, self.member(lam)) for lam in lams]


class PlmFamily:
    """The (u, v) partially-linear family over sign vectors.

    Members tilt the slope to theta^{u,v} = (theta + u v) / (1 - u^2) and
    remain exact PLM laws; the treatment propensity moves only with u (by
    u * s(x) * Delta) and the outcome mean only with v.  Requires a
    partition with whole-cell blocks so that Delta^2 == 1 atom-wise.
    """

    def __init__(self, anchor: Density, u: float, v: float,
                 partition: BumpPartition):
        if np.any((partition.membership > 1e-12)
                  & (partition.membership < 1 - 1e-12)):
            raise ConstructionPreconditionError(
                "the PLM family needs a whole-cell partition (Delta^2 == 1)"
            )
        if abs(u) >= 1.0:
            raise UncertaintyViolationError("|u| must be < 1")
        self.anchor = anchor
        self.u = float(u)
        self.v = float(v)
        self.partition = partition
        self.theta_hat = plm_slope(anchor)
        p = anchor.values
        p_x = p.sum(axis=(1, 2))
        self.g_hat = p[:, 1, :].sum(axis=1) / p_x
        self.q_hat = p[:, :, 1].sum(axis=1) / p_x
        self.s = np.sqrt(self.g_hat * (1.0 - self.g_hat))

    @property
    def m_pairs(self) -> int:
        return self.partition.n_pairs

    @property
    def theta_uv(self) -> float:
        return (self.theta_hat + self.u * self.v) / (1.0 - self.u ** 2)

    def member(self, lam: Sequence[int]) -> Density:
        delta = bump(self.partition, lam).values
        u, v, th = self.u, self.v, self.theta_uv
        g, q, s = self.g_hat, self.q_hat, self.s
        p = self.anchor.values
        bump_core = s * delta
        vals = np.empty_like(p)
        vals[:, 1, 1] = p[:, 1, 1] + (u * q - v * g + th * u * (1 - 2 * g)) * bump_core
        vals[:, 1, 0] = p[:, 1, 0] + (u * (1 - q) + v * g - th * u * (1 - 2 * g)) * bump_core
        vals[:, 0, 1] = p[:, 0, 1] - (u * q + v * (1 - g) + th * u * (1 - 2 * g)) * bump_core
        vals[:, 0, 0] = p[:, 0, 0] + (u * (q - 1) + v * (1 - g) + th * u * (1 - 2 * g)) * bump_core
        if vals.min() < -1e-12:
            raise UncertaintyViolationError("(u, v) too large for this anchor")
        return Density(self.anchor.space, vals)

    def members(self) -> list[tuple[np.ndarray, Density]]:
        lams = all_sign_vectors(self.m_pairs)
        return [(lam, self.member(lam)) for lam in lams]


def plm_auxiliary_value(p: Density) -> float:
    """The auxiliary PLM functional E_P[Y g(X;P)] = E_muX[g q] (uniform X)."""
    vals = p.values
    p_x = vals.sum(axis=(1, 2))
    g = vals[:, 1, :].sum(axis=1) / p_x
    q = vals[:, :, 1].sum(axis=1) / p_x
    w_x = p.space.axes[0].cell_weight
    return float(np.sum(g * q * p_x) * w_x)


def plm_cross_derivative_fd(family_at: Callable[[float, float], Density],
                            step: float = 1e-3) -> float:
    """Mixed FD of (u,v) -> E[Y g(X)] along a PLM family constructor."""
    h = float(step)
    vals = {}
    for su in (1, -1):
        for sv in (1, -1):
            vals[(su, sv)] = plm_auxiliary_value(family_at(su * h, sv * h))
    return (vals[(1, 1)] - vals[(1, -1)] - vals[(-1, 1)] + vals[(-1, -1)]) / (4 * h * h)


def mixture_density(family, approximate: bool = False, n_samples: int = 4096,
                    seed: int = 0) -> Density:
    """Uniform lambda-average of the family members' densities.

    Enumerates all 2^M sign vectors for M <= 16; larger M requires the
    approximate flag (a seeded lambda sample), which no exact test uses.
    """
    m = family.m_pairs
    if m > 16 and not approximate:
        raise SizeLimitError("mixture over 2^M requires M <= 16; pass approximate=True")
    if m <= 16 and not approximate:
        lams = all_sign_vectors(m)
    else:
        rng = np.random.default_rng(seed)
        lams = 2.0 * rng.integers(0, 2, size=(n_samples, m)) - 1.0
    acc = np.zeros(family.anchor.space.shape)
    for lam in lams:
        acc += family.member(lam).values
    return Density(family.anchor.space, acc / len(lams))


# -----------------------------------------------------------------------------
# weight lists for the generic two-step construction
# -----------------------------------------------------------------------------

def _reduce_to_z1(space: GridSpace, values: np.ndarray) -> np.ndarray:
    """w(z1) = int values dmu(other axes | z1)."""
    other = tuple(range(1, len(space.shape)))
    w_other = 1.0
    for a in other:
        w_other *= space.axes[a].cell_weight
    return values.sum(axis=other) * w_other


def m1_atom_values(spec: EstimandSpec, space: GridSpace, h: np.ndarray) -> np.ndarray:
    """m1(o, h) evaluated at every atom of the observation grid."""
    kind = spec.kind
    zs = est.z_space(kind, space)
    h = zs.check_values(np.asarray(h, dtype=float) * np.ones(zs.shape))
    out = np.zeros(space.shape)
    if kind in (est.ATE, est.LOD):
        out += (h[:, 1] - h[:, 0])[:, None, None]
    elif kind == est.ECC_PLM:
        y = np.array([0.0, 1.0])
        out += y[None, None, :] * h[:, None, None]
    elif kind == est.DS:
        w_x = space.axes[0].cell_weight
        out += float(np.sum(h * (spec.params.f2 - spec.params.f1)) * w_x)
    elif kind == est.WAD:
        w_d = space.axes[1].cell_weight
        per_x = -(h * spec.params.omega_prime[None, :]).sum(axis=1) * w_d
        out += per_x[:, None, None]
    else:  # APE
        perm = spec.params.perm
        out += (h[:, perm] - h)[:, :, None]
    return out


def case1_weights(anchor: Density, spec: EstimandSpec,
                  pair: DirectionPair) -> list[np.ndarray]:
    """Z1-reduced weight list whose balance cancels the first-order terms of
    the two-step expansion: {1, nu_m gamma'[G1] p + m1(o,gamma) g1,
    m1(o,gamma) g0, g0, g1}."""
    space = anchor.space
    gamma, alpha = est.nuisances_of(anchor, spec)
    nu_m = alpha.values  # nu_rho == -1
    gprime = nuisance_directional_derivative(anchor, pair.second, spec, "gamma")
    m1_at_gamma = m1_atom_values(spec, space, gamma.values)

    zs = est.z_space(spec.kind, space)
    core = zs.check_values(nu_m * gprime)
    if spec.kind in (est.ATE, est.LOD, est.WAD, est.APE):
        core_full = core[:, :, None] * np.ones(space.shape)
    else:
        core_full = core.reshape(core.shape + (1,) * (len(space.shape) - 1)) \
            * np.ones(space.shape)
    psi_mixed = core_full * anchor.values + m1_at_gamma * pair.second.values
    weights = [
        np.ones(space.shape[0]),
        _reduce_to_z1(space, psi_mixed),
        _reduce_to_z1(space, m1_at_gamma * pair.first.values),
        _reduce_to_z1(space, pair.first.values),
        _reduce_to_z1(space, pair.second.values),
    ]
    return weights
