import pytest

from ksfield.config import SimulationConfig, UniformBall, validate_config


def make_config(H=8, P=200, R=20, dt=1e-4, T=None, M0=20.0, L=8.0, eps=1e-4,
                lam=0.1, mu=1.0, chi=1.0, seed=7, radius=1.0, init_rho=None,
                init_c=None, trials=1):
    kw = dict(
        mu=mu, chi=chi, eps=eps, lam=lam, domain_len=L, modes_per_dim=H,
        particles=P, batch_size=R, dt=dt, t_final=T if T is not None else 10 * dt,
        total_mass=M0, seed=seed, trials=trials,
    )
    kw["init_rho"] = init_rho if init_rho is not None else UniformBall(radius=radius)
    if init_c is not None:
        kw["init_c"] = init_c
    return validate_config(SimulationConfig(**kw))


@pytest.fixture
def cfg_small():
    return make_config()


def random_hermitian_coeffs(H, rng, scale=1.0):
    from ksfield.spectral import hermitianize

    a = rng.normal(size=(H, H, H)) + 1j * rng.normal(size=(H, H, H))
    return hermitianize(scale * a)
