import numpy as np
import pytest

from zrphydro import BondLaw, generate_field, label_clusters, threshold_field


@pytest.fixture(scope="session")
def bernoulli_field_32():
    """One supercritical 32x32 torus environment shared across tests."""
    law = BondLaw("bernoulli", p=0.7, c=1.0)
    field = generate_field(law, (32, 32), "periodic", seed=901)
    labeling = label_clusters(threshold_field(field, 0.0), "periodic")
    return field, labeling


@pytest.fixture(scope="session")
def full_field_16():
    """Homogeneous (all bonds open, weight 1) 16x16 torus."""
    law = BondLaw("bernoulli", p=1.0, c=1.0)
    field = generate_field(law, (16, 16), "periodic", seed=0)
    labeling = label_clusters(threshold_field(field, 0.0), "periodic")
    return field, labeling


def make_hand_field(dims, bonds, boundary="free"):
    """Field with exactly the given {(site, axis): weight} bonds open."""
    law = BondLaw("bernoulli", p=1.0, c=1.0)
    field = generate_field(law, dims, boundary, seed=0)
    field.values[:] = 0.0
    for (coords, axis), w in bonds.items():
        field.values[(axis,) + tuple(coords)] = w
    return field
