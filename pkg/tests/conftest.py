import math

import pytest

from cavityqc.machine import AtomLevels, CavityConfig, LaserConfig, MachineConfig, load_preset


@pytest.fixture(scope="session")
def rydberg():
    return load_preset("rydberg")


@pytest.fixture(scope="session")
def rydberg3():
    return load_preset("rydberg", n_atoms=3)


def toy_machine(n=1, n_ph=1, omega_c=1.0, Omega_c=0.2, omega_l=0.5, E0=0.1, **kw):
    """Small-frequency machine for integrator oracles (all rates O(1))."""
    atom = AtomLevels(
        omega_ge0_0=kw.pop("omega_ge0", 0.3),
        omega_e0e1_0=kw.pop("omega_e0e1", 0.4),
        alpha_ge0=kw.pop("alpha_ge0", 0.1),
        alpha_e0e1=kw.pop("alpha_e0e1", 0.2),
    )
    return MachineConfig(
        atoms=(atom,) * n,
        cavity=CavityConfig(omega_c, Omega_c, Omega_c, n_ph),
        laser=LaserConfig(omega_l, E0),
        t_coh_atom=kw.pop("t_coh", math.inf),
        t_coh_cavity=math.inf,
        name="toy",
    )


@pytest.fixture
def toy():
    return toy_machine
