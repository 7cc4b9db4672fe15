import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from aimreg.analysis import immersion_residual
from aimreg.exceptions import DomainError
from aimreg.model import (
    EXAMPLE_BOX,
    ParamBox,
    SystemDims,
    build_example,
    canonical_AC,
    clamp_injection,
    clamp_injection_slope,
    example_immersion,
    example_plant,
    example_theta,
    printed_example_immersion,
)
from aimreg.numerics import simulate


def symbolic_example():
    """Symbolic tau, phi, Omega, theta of the corrected example, derived independently."""
    om, sg, mu = sp.symbols("omega sigma mu", positive=True)
    w1, w2, z1, z2, x, y = sp.symbols("w1 w2 z1 z2 x y", real=True)
    integral = sp.integrate(mu * (x ** 2 / mu ** 2 - 1), (x, 0, mu * z1)) / mu
    tau1 = mu * z1
    tau2 = mu * z2 + integral
    tau = sp.Matrix([tau1, tau2, om ** 2 * tau1 - mu * w1, om ** 2 * tau2 - mu * w2])
    field = sp.Matrix([w2, -om ** 2 * w1, z2, -sg * z1 - (z1 ** 2 - 1) * z2 - w1])
    lie = tau.jacobian([w1, w2, z1, z2]) * field
    Om = sp.Matrix([[-y ** 3, 0, 0, 0, 0], [0, -y, 0, 0, 0], [0, 0, y, -y ** 3, 0], [0, 0, 0, 0, -y]])
    theta = sp.Matrix([1 / (3 * mu ** 2), sg + om ** 2, om ** 2, om ** 2 / (3 * mu ** 2), om ** 2 * sg])
    A = sp.Matrix(4, 4, lambda i, j: 1 if j == i + 1 else 0)
    phi = sp.Matrix([y, 0, 0, 0])
    rhs = (A * tau + phi + Om * theta).subs(y, tau1)
    return (om, sg, mu, w1, w2, z1, z2), tau, lie, rhs


class TestCanonical:
    def test_d2(self):
        A, C = canonical_AC(2)
        assert np.array_equal(A, [[0, 1], [0, 0]]) and np.array_equal(C, [[1, 0]])

    def test_d1(self):
        A, C = canonical_AC(1)
        assert np.array_equal(A, [[0]]) and np.array_equal(C, [[1]])

    @pytest.mark.parametrize("d", [1, 2, 3, 4, 6])
    def test_observability_rows(self, d):
        A, C = canonical_AC(d)
        for k in range(d):
            assert np.array_equal((C @ np.linalg.matrix_power(A, k))[0], np.eye(d)[k])

    def test_bad_d(self):
        with pytest.raises(DomainError):
            canonical_AC(0)


class TestTypes:
    def test_dims_positive(self):
        with pytest.raises(DomainError):
            SystemDims(n=2, p=0, s=2, d=4, q=5)

    def test_box_checks(self):
        with pytest.raises(DomainError):
            ParamBox(np.array([1.0]), np.array([0.0]))
        with pytest.raises(DomainError):
            ParamBox(np.array([0.0]), np.array([np.inf]))

    def test_box_corners_and_grid(self):
        assert EXAMPLE_BOX.corners().shape == (8, 3)
        assert EXAMPLE_BOX.grid(9).shape == (729, 3)
        assert EXAMPLE_BOX.contains(EXAMPLE_BOX.center)


class TestCorrectedExample:
    def test_symbolic_immersion_identity(self):
        _, _, lie, rhs = symbolic_example()
        assert sp.simplify(lie - rhs) == sp.zeros(4, 1)

    def test_closed_form_tau_matches_symbolic(self, rng):
        syms, tau_sym, _, _ = symbolic_example()
        fn = sp.lambdify(syms, tau_sym, "numpy")
        im = example_immersion()
        for _ in range(20):
            rho = EXAMPLE_BOX.lower + rng.random(3) * (EXAMPLE_BOX.upper - EXAMPLE_BOX.lower)
            w, z = rng.normal(size=2), rng.normal(size=2)
            ref = np.asarray(fn(*rho, *w, *z), dtype=float).ravel()
            assert np.allclose(im.tau(rho, w, z), ref, rtol=1e-13, atol=1e-13)

    def test_theta_value(self):
        assert np.allclose(example_theta([1.0, 0.0, 1.0]), [1 / 3, 1, 1, 1 / 3, 0])

    def test_tau_values(self):
        im = example_immersion()
        assert np.allclose(im.tau([1, 1, 1], [0, 0], [1, 0]), [1, -2 / 3, 1, -2 / 3])
        assert np.array_equal(im.tau([2, 1, 1.5], [0, 0], [0, 0]), np.zeros(4))

    def test_mu_zero(self):
        with pytest.raises(DomainError):
            example_theta([1.0, 1.0, 0.0])
        with pytest.raises(DomainError):
            build_example(2.0, 1.0, 0.0, box=ParamBox(np.array([0, 0, -1.0]), np.array([3, 3, 3.0])))

    def test_outside_box(self):
        with pytest.raises(DomainError):
            build_example(5.0, 1.0, 1.5)

    def test_random_points_residual(self, rng):
        plant, im, rho = build_example(2.0, 1.0, 1.5)
        for _ in range(50):
            pt = np.concatenate([rho, rng.normal(size=2), rng.normal(scale=1.5, size=2)])
            r_dyn, r_out = immersion_residual(pt, im, plant)
            assert np.max(np.abs(r_dyn)) <= 1e-5 * max(1.0, np.max(np.abs(im.tau(rho, pt[3:5], pt[5:]))))
            assert abs(r_out) <= 1e-10

    def test_c_matches_steady_state_input(self):
        plant, im, rho = build_example(2.0, 1.0, 1.5)
        assert plant.c(rho, [0.3, 0.1], [0.7, -0.2]) == pytest.approx(im.c(rho, [0.3, 0.1], [0.7, -0.2]))

    def test_theta_continuous_on_box(self):
        # neighbour differences shrink in proportion to the grid spacing
        def max_step(n):
            thetas = np.array([example_theta(r) for r in EXAMPLE_BOX.grid(n)]).reshape(n, n, n, 5)
            return max(np.max(np.abs(np.diff(thetas, axis=a))) for a in range(3))
        coarse, fine = max_step(9), max_step(17)
        assert np.isfinite(coarse)
        assert 1.6 <= coarse / fine <= 2.5

    def test_reparametrize_keeps_product(self, rng):
        im = example_immersion()
        T = rng.normal(size=(5, 5)) + 3 * np.eye(5)
        im2 = im.reparametrize(T)
        rho = EXAMPLE_BOX.center
        for y in rng.normal(size=5):
            assert np.allclose(im2.omega(y) @ im2.theta(rho), im.omega(y) @ im.theta(rho))

    def test_rho_frozen_without_couplings(self):
        plant = example_plant()
        rho = np.array([2.0, 1.0, 1.5])

        def field(t, x):
            drho, dw = plant.exo_field(x[:3], x[3:], np.zeros(2), 0.3)
            return np.concatenate([drho, dw])
        traj = simulate(field, np.concatenate([rho, [1.0, 0.0]]), 0.0, 10.0, 1e-2)
        assert np.array_equal(traj.states[:, :3], np.tile(rho, (len(traj), 1)))


class TestPrintedExample:
    """Formulas as typeset: they reproduce the stated values but are not an immersion."""

    def test_theta_value(self):
        im = printed_example_immersion()
        assert np.allclose(im.theta([1.0, 0.0, 1.0]), [1, 0, -1, -1])

    def test_tau_value(self):
        im = printed_example_immersion()
        assert np.allclose(im.tau([1, 0, 1], [0, 0], [1, 0]), [1, -2 / 3, -1, 2 / 3])

    def test_identity_fails(self, rng):
        plant = example_plant()
        im = printed_example_immersion()
        rho = np.array([2.0, 1.0, 1.5])
        worst = 0.0
        for _ in range(20):
            pt = np.concatenate([rho, rng.normal(size=2), rng.normal(size=2)])
            worst = max(worst, np.max(np.abs(immersion_residual(pt, im, plant)[0])))
        assert worst > 1.0


class TestClamp:
    def test_interior_identity(self):
        assert clamp_injection(0.0, 2.0, 0.5) == 0.0
        assert clamp_injection(1.0, 2.0, 0.5) == 1.0

    def test_saturation(self):
        Y, bw = 2.0, 0.5
        y = 10 * (Y + bw)
        val = clamp_injection(y, Y, bw)
        assert Y <= val <= Y + bw
        assert val == Y + bw / 2
        assert abs(clamp_injection_slope(y, Y, bw)) <= 1e-8
        assert clamp_injection(-y, Y, bw) == -val

    def test_bad_args(self):
        with pytest.raises(DomainError):
            clamp_injection(1.0, 0.0, 1.0)

    @given(st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=200)
    def test_monotone_lipschitz(self, a, b):
        Y, bw = 3.0, 0.3
        ca, cb = clamp_injection(a, Y, bw), clamp_injection(b, Y, bw)
        if a <= b:
            assert ca <= cb
        assert abs(ca - cb) <= abs(a - b) + 1e-12

    def test_c1_at_breakpoints(self):
        Y, bw, eps = 2.0, 0.5, 1e-7
        for y0 in (Y, Y + bw):
            left = (clamp_injection(y0, Y, bw) - clamp_injection(y0 - eps, Y, bw)) / eps
            right = (clamp_injection(y0 + eps, Y, bw) - clamp_injection(y0, Y, bw)) / eps
            assert abs(left - right) < 1e-5

    def test_clamped_maps_globally_lipschitz(self, rng):
        im = example_immersion(4.0, 0.4)
        ys = rng.uniform(-100, 100, size=(500, 2))
        L_phi = max(np.linalg.norm(im.phi_c(a) - im.phi_c(b)) / abs(a - b) for a, b in ys)
        L_om = max(np.linalg.norm(im.omega_c(a) - im.omega_c(b)) / abs(a - b) for a, b in ys)
        assert L_phi <= 1.0 + 1e-12
        assert L_om <= 3 * 4.2 ** 2 * np.sqrt(2) + 1
