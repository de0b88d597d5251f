import numpy as np
import pytest

from debias_lab import adversary as adv, bounds, estimands as est
from debias_lab.errors import PreconditionError, SeparationError, SizeLimitError
from debias_lab.estimands import EstimandSpec
from debias_lab.grid import Density, hellinger_sq
from debias_lab.partition import iterated_partition
from debias_lab.presets import preset


def small_ate_family(x_cells=12, m_pairs=4, eps_m=0.1, eps_g=0.1, m_hat=None,
                     g_hat=None):
    pre = preset(est.ATE, x_cells=x_cells)
    m_hat = pre.extras["m_hat"] if m_hat is None else m_hat
    g_hat = pre.extras["g_hat"] if g_hat is None else g_hat
    axis = pre.anchor.space.axes[0]
    part = iterated_partition([np.ones(x_cells), 2 * m_hat - 1.0], m_pairs, axis)
    anchor = est.ate_joint(pre.anchor.space, m_hat, g_hat)
    fam = adv.AteLocalFamily(pre.anchor.space, m_hat, g_hat, eps_m, eps_g, part)
    return pre.spec, anchor, fam, part


def test_instance_size_caps():
    spec, anchor, fam, _ = small_ate_family()
    with pytest.raises(PreconditionError):
        bounds.TestingInstance(anchor, fam, spec, n=5)
    with pytest.raises(SizeLimitError):
        bounds.TestingInstance(anchor, fam, spec, n=4)  # 48^4 > 1e6


def test_h2_at_n1_matches_mixture_hellinger():
    spec, anchor, fam, _ = small_ate_family()
    inst = bounds.TestingInstance(anchor, fam, spec, n=1)
    h2 = bounds.product_mixture_hellinger(inst)
    mix = adv.mixture_density(fam)
    assert abs(h2 - hellinger_sq(anchor, mix)) <= 1e-12


def test_h2_zero_for_null_family():
    spec, anchor, fam, _ = small_ate_family(eps_m=0.0, eps_g=0.0)
    for n in (1, 2, 3):
        inst = bounds.TestingInstance(anchor, fam, spec, n=n)
        assert bounds.product_mixture_hellinger(inst) <= 1e-28


def test_h2_non_increasing_in_m_random_anchors():
    rng = np.random.default_rng(12)
    for trial in range(10):
        m_hat = np.full(12, rng.uniform(0.4, 0.6))
        g_hat = np.stack([np.full(12, rng.uniform(0.3, 0.45)),
                          np.full(12, rng.uniform(0.55, 0.7))], axis=1)
        h2s = []
        for m_pairs in (2, 4, 8):
            spec, anchor, fam, _ = small_ate_family(
                m_pairs=m_pairs, m_hat=m_hat, g_hat=g_hat)
            inst = bounds.TestingInstance(anchor, fam, spec, n=2)
            h2s.append(bounds.product_mixture_hellinger(inst))
        assert h2s[0] >= h2s[1] >= h2s[2]


def test_optimal_error_dominates_fano_floor():
    rng = np.random.default_rng(3)
    for trial in range(20):
        eps = float(rng.uniform(0.02, 0.12))
        m_pairs = int(rng.choice([2, 4]))
        n = int(rng.choice([1, 2, 3]))
        spec, anchor, fam, _ = small_ate_family(
            m_pairs=m_pairs, eps_m=eps, eps_g=eps)
        inst = bounds.TestingInstance(anchor, fam, spec, n=n)
        h2 = bounds.product_mixture_hellinger(inst)
        assert bounds.optimal_test_error(inst) >= bounds.fano_risk(h2)


def test_fano_risk_values():
    assert bounds.fano_risk(0.0) == 0.5
    assert bounds.fano_risk(1.0) == pytest.approx((1 - np.sqrt(3) / 2) / 2)
    assert bounds.fano_risk(1.0) == pytest.approx(0.066987, abs=1e-6)
    assert bounds.fano_risk(2.0 - 1e-12) <= 1e-6
    with pytest.raises(PreconditionError):
        bounds.fano_risk(2.0)
    with pytest.raises(PreconditionError):
        bounds.fano_risk(-0.1)


def test_bayes_error_degenerate_cases():
    spec, anchor, fam, _ = small_ate_family(eps_m=0.0, eps_g=0.0)
    inst = bounds.TestingInstance(anchor, fam, spec, n=2)
    assert bounds.optimal_test_error(inst) == pytest.approx(0.5)


def test_theorem21_b_zero_at_null_family():
    spec, anchor, fam, part = small_ate_family(eps_m=0.0, eps_g=0.0)
    b, bound = bounds.theorem21_b(bounds.TestingInstance(anchor, fam, spec, n=2),
                                  part)
    assert b <= 1e-30 and bound <= 1e-30


def test_theorem21_b_ceiling_and_scaling():
    m_hat = np.full(12, 0.5)
    g_hat = np.full((12, 2), 0.5)
    bs = []
    for eps in (0.05, 0.1, 0.2):
        spec, anchor, fam, part = small_ate_family(
            eps_m=eps, eps_g=eps, m_hat=m_hat, g_hat=g_hat)
        inst = bounds.TestingInstance(anchor, fam, spec, n=2)
        b, _ = bounds.theorem21_b(inst, part)
        bs.append(b)
        assert b <= 1.0 / 0.25 ** 2  # the c^-2 ceiling at overlap 0.25
    slope = np.polyfit(np.log([0.05, 0.1, 0.2]), np.log(bs), 1)[0]
    assert abs(slope - 2.0) <= 0.1


def test_chunk_restriction_depends_on_lambda_j_only():
    spec, anchor, fam, part = small_ate_family(x_cells=16, m_pairs=2,
                                               m_hat=np.full(16, 0.5),
                                               g_hat=np.full((16, 2), 0.5))
    w = anchor.space.atom_weight
    n1 = anchor.space.shape[0]
    rest = anchor.space.n_atoms // n1
    anchor_flat = anchor.values.ravel()
    for j in range(part.n_pairs):
        chunk = (part.membership[2 * j] + part.membership[2 * j + 1])
        vals = {}
        for lam_j in (1.0, -1.0):
            for others in (1.0, -1.0):
                lam = np.full(part.n_pairs, others)
                lam[j] = lam_j
                q = fam.member(lam).values.ravel()
                integrand = (q - anchor_flat) ** 2 / anchor_flat
                integrand = integrand.reshape(n1, rest)
                mass = float(np.sum(integrand * chunk[:, None]) * w)
                vals.setdefault(lam_j, []).append(mass)
        for lam_j, masses in vals.items():
            assert abs(masses[0] - masses[1]) <= 1e-12


def test_fit_hellinger_constant_reports():
    instances = []
    for m_pairs in (2, 4):
        spec, anchor, fam, part = small_ate_family(m_pairs=m_pairs)
        instances.append((bounds.TestingInstance(anchor, fam, spec, n=2), part))
    c_fit = bounds.fit_hellinger_constant(instances)
    assert c_fit > 0.0


# -----------------------------------------------------------------------------
# the minimax demonstration
# -----------------------------------------------------------------------------

def test_minimax_oracle_has_zero_risk():
    # fractional splits on the 12-cell grid shrink the separation below
    # 2 eps_m eps_g, so ask only for a comfortably smaller s
    spec, anchor, fam, _ = small_ate_family(m_pairs=2)
    inst = bounds.TestingInstance(anchor, fam, spec, n=1)
    worst, _ = bounds.minimax_demo(inst, bounds.oracle_estimator(spec),
                                   s=0.3 * 0.1 * 0.1, n_draw=10,
                                   replications=4)
    assert worst == 0.0


def test_minimax_constant_estimator_hits_separation():
    m_hat = np.full(12, 0.5)
    g_hat = np.full((12, 2), 0.5)
    spec, anchor, fam, _ = small_ate_family(m_pairs=2, eps_m=0.1, eps_g=0.2,
                                            m_hat=m_hat, g_hat=g_hat)
    inst = bounds.TestingInstance(anchor, fam, spec, n=1)
    worst, per = bounds.minimax_demo(inst, bounds.constant_anchor_estimator(
        spec, anchor), s=0.1 * 0.2, n_draw=10, replications=4)
    assert abs(worst - 2 * 0.1 * 0.2) <= 1e-10
    assert per["anchor"] == 0.0


def test_minimax_separation_check_fires():
    spec, anchor, fam, _ = small_ate_family(m_pairs=2, eps_m=0.1, eps_g=0.1)
    inst = bounds.TestingInstance(anchor, fam, spec, n=1)
    with pytest.raises(SeparationError):
        bounds.minimax_demo(inst, bounds.oracle_estimator(spec), s=0.5,
                            n_draw=10, replications=2)
