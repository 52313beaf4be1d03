import numpy as np
import pytest

from vpreval.model import ExperimentManifest


@pytest.fixture
def full_manifest() -> ExperimentManifest:
    """A fully declared, internally consistent manifest."""
    return ExperimentManifest(
        a1_sensors="vision_only",
        a2_knowledge="offline",
        a3_exploration="closed_world",
        a4_extra_knowledge=("constant_velocity",),
        b1_viewpoint_change="small",
        b2_place_set="discrete",
        b3_dof="constrained",
        c1_intended_output="similarities",
        d1_scale=(6, 6),
        d2_runtime_budget="unbounded",
        d3_storage_budget="unbounded",
        e1_environment="synthetic",
        e2_platform="simulated",
        f1_condition_model="discrete:2",
        f3_in_sequence_change=False,
        f4_condition_knowledge=True,
        g1_sequences=True,
        g2_velocity="constant",
        g3_loops=False,
        g4_stops=False,
        db_hash=0x1234ABCD5678EF90,
        q_hash=0x0FEDCBA987654321,
        gt_mode="indices",
        gt_index_max=0,
        preprocessing_chain=("standardize",),
        protocol="all_matchings",
        seed=7,
    )


def random_descriptors(seed: int, n: int, d: int) -> np.ndarray:
    return np.random.RandomState(seed).randn(n, d)
