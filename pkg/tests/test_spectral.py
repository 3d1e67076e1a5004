import math

import numpy as np
import pytest

from ksfield.model import ParticleEnsemble
from ksfield.spectral import (
    GreenParams,
    SpectralField,
    axis_phases,
    field_to_grid,
    gradient_at_points,
    green_gradient,
    green_kernel,
    green_multiplier,
    grid_coords,
    hermitianize,
    init_field,
    load_field,
    mode_indices,
    omega_axis,
    omega_norm2,
    save_field,
    shifted_grid_values,
    stability_bound,
    update_field,
    zero_field,
)

from conftest import make_config, random_hermitian_coeffs


# ---------------------------------------------------------------------------
# Green's function closed forms.


def test_green_kernel_values():
    gp = GreenParams(beta=1.0)
    assert green_kernel((1.0, 0, 0), gp) == pytest.approx(-math.exp(-1.0) / (4 * math.pi), rel=1e-12)
    assert green_kernel((1.0, 0, 0), GreenParams(beta=200.0)) == pytest.approx(0.0, abs=1e-80)
    # beta = 0 reduces to the free-space Laplace kernel
    assert green_kernel((0, 0, 0.5), GreenParams(beta=0.0)) == pytest.approx(-1.0 / (2 * math.pi), rel=1e-12)


def test_green_kernel_singularity():
    with pytest.raises(ValueError):
        green_kernel((0.0, 0.0, 0.0), GreenParams(beta=1.0))


def test_green_gradient_values():
    g = green_gradient((1.0, 0, 0), GreenParams(beta=0.0))
    assert g == pytest.approx([1.0 / (4 * math.pi), 0.0, 0.0], rel=1e-12)
    g1 = green_gradient((1.0, 0, 0), GreenParams(beta=1.0))
    assert g1[0] == pytest.approx(2.0 * math.exp(-1.0) / (4 * math.pi), rel=1e-12)
    assert g1[1] == g1[2] == 0.0


def test_green_gradient_radial_direction():
    rng = np.random.default_rng(3)
    gp = GreenParams(beta=0.7)
    for _ in range(20):
        x = rng.normal(size=3)
        g = green_gradient(x, gp)
        # parallel to x with positive scalar factor
        assert np.dot(g, x) > 0
        assert np.linalg.norm(np.cross(g, x)) < 1e-12 * np.linalg.norm(g) * np.linalg.norm(x)


def test_green_gradient_singularity():
    with pytest.raises(ValueError):
        green_gradient(np.zeros(3), GreenParams(beta=1.0))


def test_green_multiplier_values():
    gp = GreenParams(beta=math.sqrt(1.01))  # lambda = 0.1, eps = dt
    assert green_multiplier((0, 0, 0), gp, 8.0) == pytest.approx(1.0 / 1.01, rel=1e-12)
    assert green_multiplier((1, 0, 0), GreenParams(beta=0.0), 2 * math.pi) == pytest.approx(1.0, rel=1e-12)
    assert green_multiplier((400, 400, 400), gp, 8.0) < 1e-4


# ---------------------------------------------------------------------------
# Transforms and layout.


def test_round_trip_identity():
    rng = np.random.default_rng(0)
    H = 8
    coeffs = random_hermitian_coeffs(H, rng)
    f = SpectralField(coeffs, 8.0, 0)
    grid = field_to_grid(f)
    back = np.fft.fftn(grid) / H**3
    assert np.abs(back - coeffs).max() < 1e-12 * np.abs(coeffs).max()


def test_dc_mode_constant_field():
    cfg = make_config(H=8, init_c=__import__("ksfield").ModesField(modes=(((0, 0, 0), 2.0),)))
    f = init_field(cfg)
    grid = field_to_grid(f)
    assert np.allclose(grid, 2.0, atol=1e-13)


def test_cosine_pair_reconstruction():
    cfg = make_config(H=8, init_c=__import__("ksfield").ModesField(
        modes=(((1, 0, 0), 1.0), ((-1, 0, 0), 1.0))))
    f = init_field(cfg)
    grid = field_to_grid(f)
    x = grid_coords(8, 8.0)
    expected = 2.0 * np.cos(2 * np.pi * x / 8.0)
    assert np.allclose(grid, expected[:, None, None], atol=1e-12)


def test_init_field_zero_and_mirror_fill():
    cfg = make_config(H=8)
    assert np.all(init_field(cfg).coeffs == 0)
    cfg2 = make_config(H=8, init_c=__import__("ksfield").ModesField(modes=(((1, 2, 0), 0.5 + 0.25j),)))
    f = init_field(cfg2)
    assert f.coeffs[1, 2, 0] == 0.5 + 0.25j
    assert f.coeffs[-1, -2, 0] == 0.5 - 0.25j
    assert f.hermitian_defect() < 1e-14


def test_init_field_rejects_complex_nyquist():
    cfg = make_config(H=8)
    bad = cfg.with_overrides(init_c=__import__("ksfield").ModesField(modes=(((4, 0, 0), 1j),)))
    with pytest.raises(ValueError, match="real"):
        init_field(bad)


def test_hermitianize_is_projection():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 6, 6)) + 1j * rng.normal(size=(6, 6, 6))
    h = hermitianize(a)
    assert np.abs(hermitianize(h) - h).max() < 1e-14
    g = np.fft.ifftn(h)
    assert np.abs(g.imag).max() < 1e-14


# ---------------------------------------------------------------------------
# Field update.


def _ensemble(positions, weight, step=1):
    return ParticleEnsemble(np.atleast_2d(np.asarray(positions, float)), weight, step)


def test_update_field_zero_mass_pure_decay():
    cfg = make_config(H=6)
    rng = np.random.default_rng(2)
    prev = SpectralField(random_hermitian_coeffs(6, rng), cfg.domain_len, 0)
    ens = _ensemble(rng.uniform(-4, 4, (5, 3)), weight=0.0)
    new = update_field(prev, ens, cfg)
    Z = (cfg.dt / cfg.eps) * (omega_norm2(6, cfg.domain_len) + cfg.lam**2)
    assert np.allclose(new.coeffs, prev.coeffs / (1 + Z), rtol=1e-13)


def test_update_field_single_particle_dc():
    # eps = dt = 1e-4, lambda = 0.1, M0 = 20, L = 8, one particle at the
    # origin: Z_0 = 0.01, alpha_0 = (20 / L^3) / 1.01 (mean-density deposit)
    cfg = make_config(H=6, P=1, R=1, eps=1e-4, dt=1e-4, lam=0.1, M0=20.0, L=8.0)
    prev = zero_field(6, cfg.domain_len)
    ens = _ensemble([[0.0, 0.0, 0.0]], weight=20.0)
    new = update_field(prev, ens, cfg)
    assert new.coeffs[0, 0, 0].real == pytest.approx(20.0 / 8.0**3 / 1.01, rel=1e-13)
    assert abs(new.coeffs[0, 0, 0].imag) < 1e-13


def test_update_field_dc_steady_state_is_mean_density():
    # iterating the update with a frozen cloud sends alpha_0 to M0/(lambda^2 L^3)
    cfg = make_config(H=6, P=40, R=5, M0=20.0, L=8.0, dt=5e-4, T=5e-3)
    rng = np.random.default_rng(0)
    pos = rng.uniform(-1, 1, (40, 3))
    f = zero_field(6, cfg.domain_len)
    for n in range(1, 4000):
        f = update_field(f, _ensemble(pos, cfg.weight, step=n), cfg)
    assert f.coeffs[0, 0, 0].real == pytest.approx(
        cfg.total_mass / (cfg.lam**2 * cfg.domain_len**3), rel=1e-6
    )


def test_update_field_dense_oracle():
    # independent direct-sum oracle over all modes and particles at H=4, P=10
    H, L = 4, 8.0
    cfg = make_config(H=H, P=10, R=5)
    rng = np.random.default_rng(11)
    prev = SpectralField(random_hermitian_coeffs(H, rng), L, 0)
    pos = rng.uniform(-L / 2, L / 2, (10, 3))
    ens = _ensemble(pos, weight=cfg.total_mass / 10)
    new = update_field(prev, ens, cfg)

    w = omega_axis(H, L)
    dep = np.zeros((H, H, H), np.complex128)
    for a in range(H):
        for b in range(H):
            for c in range(H):
                s = 0.0j
                for p in range(10):
                    s += np.exp(-1j * (w[a] * pos[p, 0] + w[b] * pos[p, 1] + w[c] * pos[p, 2]))
                dep[a, b, c] = s * cfg.total_mass / 10 / L**3
    herm = np.empty_like(dep)
    for a in range(H):
        for b in range(H):
            for c in range(H):
                herm[a, b, c] = 0.5 * (dep[a, b, c] + np.conj(dep[(-a) % H, (-b) % H, (-c) % H]))
    oracle = np.empty_like(dep)
    for a in range(H):
        for b in range(H):
            for c in range(H):
                w2 = w[a] ** 2 + w[b] ** 2 + w[c] ** 2
                Z = (cfg.dt / cfg.eps) * (w2 + cfg.lam**2)
                oracle[a, b, c] = (prev.coeffs[a, b, c] + (cfg.dt / cfg.eps) * herm[a, b, c]) / (1 + Z)
    assert np.abs(new.coeffs - oracle).max() < 1e-12 * np.abs(oracle).max()


def test_update_equivalent_to_two_stage_form():
    # decay multiplier eps/(dt(|w|^2+beta^2)) then deposit/(|w|^2+beta^2)
    cfg = make_config(H=6, P=20, R=5)
    rng = np.random.default_rng(4)
    prev = SpectralField(random_hermitian_coeffs(6, rng), cfg.domain_len, 0)
    pos = rng.uniform(-4, 4, (20, 3))
    ens = _ensemble(pos, weight=cfg.weight)
    new = update_field(prev, ens, cfg)

    from ksfield.spectral import deposit

    w2 = omega_norm2(6, cfg.domain_len)
    beta2 = cfg.lam**2 + cfg.eps / cfg.dt
    stage1 = prev.coeffs * cfg.eps / (cfg.dt * (w2 + beta2))
    rho_hat = deposit(pos, cfg.weight, 6, cfg.domain_len)
    two_stage = stage1 + rho_hat / (w2 + beta2)
    assert np.abs(new.coeffs - two_stage).max() <= 1e-13 * np.abs(new.coeffs).max()


def test_update_field_requires_eps():
    cfg = make_config(H=6, lam=0.5).with_overrides(eps=0.0)
    prev = zero_field(6, cfg.domain_len)
    with pytest.raises(ValueError, match="eps"):
        update_field(prev, _ensemble([[0, 0, 0]], 1.0), cfg)


def test_update_field_staggering_checked():
    cfg = make_config(H=6)
    prev = zero_field(6, cfg.domain_len)
    with pytest.raises(ValueError, match="staggering"):
        update_field(prev, _ensemble([[0, 0, 0]], 1.0, step=2), cfg)


def test_deposit_linearity():
    from ksfield.spectral import deposit

    rng = np.random.default_rng(9)
    H, L = 6, 8.0
    pa = rng.uniform(-4, 4, (7, 3))
    pb = rng.uniform(-4, 4, (13, 3))
    wa, wb = 0.7, 1.9
    together = deposit(pa, wa, H, L) + deposit(pb, wb, H, L)
    # the union deposit is the weighted sum of the individual deposits
    union = deposit(np.vstack([pa, pb]), 1.0, H, L)  # unit weights
    manual = wa * deposit(pa, 1.0, H, L) + wb * deposit(pb, 1.0, H, L)
    assert np.abs(together - manual).max() < 1e-12 * np.abs(manual).max()
    assert np.abs(deposit(pa, wa, H, L) - wa * deposit(pa, 1.0, H, L)).max() < 1e-13


def test_realness_and_symmetry_preserved_over_steps():
    cfg = make_config(H=8, P=50, R=10)
    rng = np.random.default_rng(5)
    f = zero_field(8, cfg.domain_len)
    for n in range(1, 6):
        pos = rng.uniform(-6, 6, (50, 3))  # includes out-of-box positions
        f = update_field(f, _ensemble(pos, cfg.weight, step=n), cfg)
        assert f.hermitian_defect() < 1e-12 * max(np.abs(f.coeffs).max(), 1.0)
        grid = field_to_grid(f)  # raises if not real to 1e-10 relative
        assert grid.shape == (8, 8, 8)


def test_stability_bound_holds_many_steps():
    cfg = make_config(H=6, P=30, R=5, M0=500.0, dt=5e-4, T=5e-3)
    rng = np.random.default_rng(6)
    f0 = SpectralField(random_hermitian_coeffs(6, rng, scale=3.0), cfg.domain_len, 0)
    bound = stability_bound(f0, cfg.total_mass, cfg.lam)
    f = f0
    for n in range(1, 60):
        pos = rng.uniform(-4, 4, (30, 3))
        f = update_field(f, _ensemble(pos, cfg.weight, step=n), cfg)
        assert (np.abs(f.coeffs) <= bound * (1 + 1e-12) + 1e-300).all()


# ---------------------------------------------------------------------------
# Grid evaluation and shifts.


def test_shifted_grid_values_zero_shift():
    rng = np.random.default_rng(7)
    f = SpectralField(random_hermitian_coeffs(8, rng), 8.0, 0)
    assert np.allclose(shifted_grid_values(f, (0, 0, 0)), field_to_grid(f), atol=1e-12)


def test_shifted_grid_values_dc_invariant():
    cfg = make_config(H=8, init_c=__import__("ksfield").ModesField(modes=(((0, 0, 0), 3.0),)))
    f = init_field(cfg)
    assert np.allclose(shifted_grid_values(f, (0.3, -0.2, 0.11)), 3.0, atol=1e-12)


def test_shifted_grid_values_quarter_period():
    L = 8.0
    cfg = make_config(H=8, init_c=__import__("ksfield").ModesField(
        modes=(((1, 0, 0), 1.0), ((-1, 0, 0), 1.0))))
    f = init_field(cfg)
    xbar = (L / 4, 0.0, 0.0)
    got = shifted_grid_values(f, xbar)
    x = grid_coords(8, L)
    expected = 2.0 * np.cos(2 * np.pi * (x - L / 4) / L)
    assert np.allclose(got, expected[:, None, None], atol=1e-12)


def test_gradient_constant_field_zero():
    cfg = make_config(H=8, init_c=__import__("ksfield").ModesField(modes=(((0, 0, 0), 5.0),)))
    f = init_field(cfg)
    g = gradient_at_points(f, np.random.default_rng(0).uniform(-4, 4, (10, 3)))
    assert np.abs(g).max() < 1e-12


def test_gradient_cosine_analytic():
    L = 8.0
    cfg = make_config(H=8, init_c=__import__("ksfield").ModesField(
        modes=(((1, 0, 0), 1.0), ((-1, 0, 0), 1.0))))
    f = init_field(cfg)
    pts = np.random.default_rng(1).uniform(-4, 4, (20, 3))
    g = gradient_at_points(f, pts)
    expected = np.zeros_like(g)
    expected[:, 0] = -(4 * np.pi / L) * np.sin(2 * np.pi * pts[:, 0] / L)
    assert np.abs(g - expected).max() < 1e-12


def test_gradient_matches_finite_differences():
    # centered differences of grid values converge at second order
    rng = np.random.default_rng(8)
    L = 8.0
    errs = {}
    for H in (16, 32):
        coeffs = np.zeros((H, H, H), np.complex128)
        # a smooth low-mode field, same physical field at both resolutions
        for j, amp in [((1, 0, 0), 0.8), ((0, 2, 1), 0.3 + 0.1j), ((1, 1, 1), 0.2 - 0.05j)]:
            coeffs[j] = amp
            coeffs[tuple(-i % H for i in j)] = np.conj(amp)
        f = SpectralField(coeffs, L, 0)
        grid = field_to_grid(f)
        h = L / H
        x = grid_coords(H, L)
        i = H // 3
        pts = np.array([[x[i], x[5 % H], x[2]]])
        fd = (grid[(i + 1) % H, 5 % H, 2] - grid[(i - 1) % H, 5 % H, 2]) / (2 * h)
        g = gradient_at_points(f, pts)[0, 0]
        errs[H] = abs(fd - g)
    ratio = errs[16] / errs[32]
    assert 2.5 < ratio < 6.0


# ---------------------------------------------------------------------------
# Serialization.


def test_field_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    f = SpectralField(random_hermitian_coeffs(6, rng), 8.0, 17)
    path = tmp_path / "f.bin"
    save_field(f, path)
    g = load_field(path)
    assert g.step_index == 17
    assert g.domain_len == 8.0
    assert np.array_equal(g.coeffs, f.coeffs)
    # header is (H int64, L float64, step int64) little-endian, then
    # H^3 complex128 in ascending signed index order
    raw = path.read_bytes()
    assert len(raw) == 24 + 16 * 6**3
    import struct

    H, L, step = struct.unpack_from("<qdq", raw)
    assert (H, L, step) == (6, 8.0, 17)


def test_field_load_rejects_truncation(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 10)
    with pytest.raises(ValueError, match="truncated"):
        load_field(path)
