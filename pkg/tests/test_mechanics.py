import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqgap import mechanics, tensor
from eqgap.exceptions import InvalidPoisson, NonPositiveJacobian
from eqgap.mechanics import Kinematics, MaterialParams

from conftest import central_diff, random_deformation_gradient, random_rotation

MATERIALS = [MaterialParams(0.5, 0.0), mechanics.lame_from_youngs(1.0, 0.3), MaterialParams(1.3, 2.1)]


def test_lame_conversion():
    p = mechanics.lame_from_youngs(1.0, 0.0)
    assert (p.mu, p.lam) == (0.5, 0.0)
    p = mechanics.lame_from_youngs(1.0, 0.3)
    assert p.mu == pytest.approx(1.0 / 2.6, rel=1e-15)
    assert p.lam == pytest.approx(0.3 / (1.3 * 0.4), rel=1e-15)
    assert round(p.mu, 4) == 0.3846 and round(p.lam, 4) == 0.5769
    assert mechanics.DEFAULT_MATERIAL == MaterialParams(0.5, 0.0)


@pytest.mark.parametrize("nu", [0.5, 0.7, -0.1])
def test_invalid_poisson(nu):
    with pytest.raises(InvalidPoisson):
        mechanics.lame_from_youngs(1.0, nu)


def test_invalid_material():
    with pytest.raises(ValueError):
        MaterialParams(0.0, 1.0)
    with pytest.raises(ValueError):
        MaterialParams(1.0, -1.0)


@pytest.mark.parametrize("d", [2, 3])
def test_strain_energy_zero_for_rotations(rng, d):
    for _ in range(10):
        R = random_rotation(rng, d)
        for p in MATERIALS:
            assert abs(mechanics.strain_energy(R, p)) < 1e-12


@pytest.mark.parametrize("d", [2, 3])
def test_strain_energy_non_negative(rng, d):
    F = np.stack([random_deformation_gradient(rng, d, scale=0.5) for _ in range(200)])
    for p in MATERIALS:
        assert np.all(mechanics.strain_energy(F, p) >= -1e-14)


@pytest.mark.parametrize("d", [2, 3])
def test_pk1_is_energy_gradient(rng, d):
    for p in MATERIALS:
        for _ in range(20):
            F = random_deformation_gradient(rng, d)
            fd = central_diff(lambda f: mechanics.strain_energy(f, p), F, h=1e-5)
            P = mechanics.pk1_stress(F, p)
            assert np.max(np.abs(P - fd)) <= 1e-6 * max(1.0, np.max(np.abs(P)))


@pytest.mark.parametrize("d", [2, 3])
def test_pk1_tangent_matches_fd(rng, d):
    for p in MATERIALS:
        F = random_deformation_gradient(rng, d)
        fd = central_diff(lambda f: mechanics.pk1_stress(f, p), F, h=1e-6)
        np.testing.assert_allclose(mechanics.pk1_tangent(F, p), fd, rtol=1e-6, atol=1e-7)


def test_stress_free_reference():
    for p in MATERIALS:
        np.testing.assert_allclose(mechanics.pk1_stress(np.eye(2), p), 0.0, atol=1e-15)


def test_non_positive_jacobian_raises():
    F = np.array([[[1.0, 0.0], [0.0, 1.0]], [[-1.0, 0.0], [0.0, 1.0]]])
    with pytest.raises(NonPositiveJacobian) as exc:
        mechanics.pk1_stress(F, MATERIALS[1])
    assert list(exc.value.where) == [1]
    k = Kinematics(F - np.eye(2), np.zeros((2, 2, 2, 2)))
    with pytest.raises(NonPositiveJacobian):
        mechanics.equilibrium_gap(k, MATERIALS[0])
    with pytest.raises(NonPositiveJacobian):
        mechanics.gap_sensitivities(k, MATERIALS[0])


# -- equilibrium gap ------------------------------------------------------------


def _smooth_field(d, rng):
    """Analytic displacement with closed-form gradient and Hessian."""
    a = 0.08 * rng.standard_normal((d, d))
    w = rng.uniform(1.0, 2.5, size=(d, d))
    ph = rng.uniform(0, np.pi, size=(d, d))

    def u(x):
        return np.array([sum(a[i, j] * np.sin(w[i, j] * x[j] + ph[i, j]) for j in range(d)) for i in range(d)])

    def grads(x):
        G = np.zeros((d, d))
        H = np.zeros((d, d, d))
        for i in range(d):
            for j in range(d):
                G[i, j] = a[i, j] * w[i, j] * np.cos(w[i, j] * x[j] + ph[i, j])
                H[i, j, j] = -a[i, j] * w[i, j] ** 2 * np.sin(w[i, j] * x[j] + ph[i, j])
        return G, H

    return u, grads


@pytest.mark.parametrize("d", [2, 3])
def test_gap_equals_fd_divergence_of_stress(rng, d):
    """Closed-form div P against central differences of P(F(x)) in space."""
    u, grads = _smooth_field(d, rng)
    for p in MATERIALS:
        for _ in range(5):
            x = rng.uniform(-1, 1, size=d)
            G, H = grads(x)
            gap = mechanics.equilibrium_gap(Kinematics(G, H), p)
            h = 1e-5
            div = np.zeros(d)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                Pp = mechanics.pk1_stress(np.eye(d) + grads(x + e)[0], p)
                Pm = mechanics.pk1_stress(np.eye(d) + grads(x - e)[0], p)
                div += (Pp[:, j] - Pm[:, j]) / (2 * h)
            np.testing.assert_allclose(gap, div, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("d", [2, 3])
def test_divergence_terms_match_fd(rng, d):
    _, grads = _smooth_field(d, rng)
    x = rng.uniform(-1, 1, size=d)
    G, H = grads(x)
    k = Kinematics(G, H)
    F = k.F
    h = 1e-6

    def fd(fun):
        out = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            out.append((fun(x + e) - fun(x - e)) / (2 * h))
        return np.stack(out, axis=-1)

    np.testing.assert_allclose(mechanics.grad_J(F, k), fd(lambda y: np.linalg.det(np.eye(d) + grads(y)[0])), rtol=1e-7, atol=1e-9)
    finvT = fd(lambda y: np.linalg.inv(np.eye(d) + grads(y)[0]).T)  # (d, d, d): [i, J, j]
    np.testing.assert_allclose(mechanics.div_FinvT(F, k), np.einsum("ijj->i", finvT), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(mechanics.div_F(k), np.einsum("ijj->i", H))


@pytest.mark.parametrize("d", [2, 3])
def test_affine_fields_have_zero_gap(rng, d):
    G = np.stack([random_deformation_gradient(rng, d, scale=0.4) - np.eye(d) for _ in range(20)])
    k = Kinematics(G, np.zeros((20, d, d, d)))
    for p in MATERIALS:
        assert np.max(np.abs(mechanics.equilibrium_gap(k, p))) <= 1e-14
        dG, dH = mechanics.gap_sensitivities(k, p)
        assert np.max(np.abs(dG)) <= 1e-14 and np.max(np.abs(dH)) <= 1e-14


def _random_kinematics(rng, n, d, scale=0.5):
    G = np.stack([random_deformation_gradient(rng, d) - np.eye(d) for _ in range(n)])
    H = scale * rng.standard_normal((n, d, d, d))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    return Kinematics(G, H)


@pytest.mark.parametrize("d", [2, 3])
def test_frame_invariance(rng, d):
    k = _random_kinematics(rng, 20, d)
    for p in MATERIALS:
        base = mechanics.gap_penalty(k, p)
        for r in range(20):
            R = random_rotation(rng, d)
            # u -> R (x + u) - x
            G = np.einsum("ia,naj->nij", R, k.F) - np.eye(d)
            H = np.einsum("ia,najk->nijk", R, k.H)
            rot = mechanics.gap_penalty(Kinematics(G, H), p)
            np.testing.assert_allclose(rot, base, rtol=1e-10)


def test_penalty_is_squared_gap_norm(rng):
    k = _random_kinematics(rng, 10, 3)
    gap = mechanics.equilibrium_gap(k, MATERIALS[2])
    np.testing.assert_allclose(mechanics.gap_penalty(k, MATERIALS[2]), np.sum(gap**2, axis=1), rtol=1e-14)


@pytest.mark.parametrize("d", [2, 3])
def test_gap_sensitivities_match_fd(rng, d):
    pairs = mechanics.unique_hessian_index(d)
    for p in MATERIALS:
        k = _random_kinematics(rng, 1, d)
        dG, dH, pen = mechanics.gap_sensitivities(k, p, return_penalty=True)
        np.testing.assert_allclose(pen, mechanics.gap_penalty(k, p), rtol=1e-13)
        fdG = central_diff(lambda g: mechanics.gap_penalty(Kinematics(g, k.H), p), k.G, h=1e-6)
        np.testing.assert_allclose(dG, fdG[0], rtol=1e-5, atol=1e-8)
        h = 1e-6
        for i in range(d):
            for j, l in pairs:
                Hp, Hm = k.H.copy(), k.H.copy()
                for a, b in {(j, l), (l, j)}:
                    Hp[0, i, a, b] += h
                    Hm[0, i, a, b] -= h
                fd = (mechanics.gap_penalty(Kinematics(k.G, Hp), p) - mechanics.gap_penalty(Kinematics(k.G, Hm), p)) / (2 * h)
                factor = 1.0 if j == l else 2.0
                assert factor * dH[0, i, j, l] == pytest.approx(fd[0], rel=1e-5, abs=1e-8)
                assert dH[0, i, j, l] == dH[0, i, l, j]


def test_seed_count_matches_input_count():
    for d, n in ((2, 4 + 6), (3, 9 + 18)):
        assert d * d + d * len(mechanics.unique_hessian_index(d)) == n


@given(st.floats(0.1, 10.0))
def test_penalty_homogeneous_in_material(c):
    rng = np.random.default_rng(7)
    k = _random_kinematics(rng, 5, 2)
    p = MATERIALS[2]
    dG, dH, pen = mechanics.gap_sensitivities(k, p, return_penalty=True)
    dGc, dHc, penc = mechanics.gap_sensitivities(k, p.scaled(c), return_penalty=True)
    np.testing.assert_allclose(penc, c * c * pen, rtol=1e-12)
    np.testing.assert_allclose(dGc, c * c * dG, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(dHc, c * c * dH, rtol=1e-10, atol=1e-14)


def test_batched_and_single_agree(rng):
    k = _random_kinematics(rng, 6, 2)
    p = MATERIALS[1]
    batched = mechanics.equilibrium_gap(k, p)
    for n in range(6):
        single = mechanics.equilibrium_gap(Kinematics(k.G[n], k.H[n]), p)
        np.testing.assert_allclose(single, batched[n], rtol=1e-14)
