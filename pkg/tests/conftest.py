import warnings

import numpy as np
import pytest

import chemgp as cg
from chemgp.simstudy import design_space, simulate_dataset


@pytest.fixture(autouse=True)
def _quiet_missing_class_warning():
    # Simulated datasets occasionally miss a class; the Dataset warning is
    # intended for interactive use, not for test noise.
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="classes .* have no observations")
        yield


def random_space(m: int, kappa: int, seed: int) -> cg.ChemicalSpace:
    """m distinct random nonzero fingerprints of length kappa."""
    rng = np.random.default_rng(seed)
    packs = rng.choice((1 << kappa) - 1, size=m, replace=False) + 1
    return cg.build_space([cg.Fingerprint(int(c), kappa) for c in np.sort(packs)])


def small_dataset(seed: int = 0, link: str = "logit", kernel: str = "gaussian",
                  kappa: int = 4, n_per: int = 6, sigma2: float = 0.6):
    """A small simulated dataset plus its generating design."""
    design = cg.SimDesign(
        kappa=kappa, m="all", n_per_compound=n_per, link_name=link,
        kernel_family=kernel, sigma2=sigma2, phi=0.5, seed=seed,
    )
    space = design_space(design, np.random.default_rng(seed))
    data, u = simulate_dataset(design, np.random.default_rng(seed + 1), space)
    return design, data, u


@pytest.fixture(scope="session")
def probit_model():
    """A fitted probit/gaussian model shared by prediction tests."""
    _, data, _ = small_dataset(seed=5, link="probit")
    return cg.fit_mle(data, "gaussian", "probit", seed=0)


@pytest.fixture(scope="session")
def logit_model():
    """A fitted logit/gaussian model shared across tests."""
    _, data, _ = small_dataset(seed=3, link="logit")
    return cg.fit_mle(data, "gaussian", "logit", seed=0)
