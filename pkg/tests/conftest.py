import numpy as np
import pytest

from coopcbm.calibration import fit_isotonic, pooled_pairs
from coopcbm.data import (
    ConceptSpace,
    SyntheticTaskConfig,
    generate_synthetic,
    make_cost_model,
)
from coopcbm.model import ConceptToLabelModel, TrainConfig, train_cy
from coopcbm.policies import PolicyConfig, fit_score_norm, greedy_fit

SMALL_CFG = SyntheticTaskConfig(
    m=6,
    label_count=3,
    prototype_flip_rate=0.15,
    probe_sharpness=1.5,
    probe_noise=0.8,
    miscalibration_exponent=2.0,
    n_train=300,
    n_val=150,
    n_test=200,
    seed=11,
)


@pytest.fixture(scope="session")
def small_data():
    return generate_synthetic(SMALL_CFG)


@pytest.fixture(scope="session")
def small_train(small_data):
    return small_data[0]


@pytest.fixture(scope="session")
def small_val(small_data):
    return small_data[1]


@pytest.fixture(scope="session")
def small_test(small_data):
    return small_data[2]


@pytest.fixture(scope="session")
def small_model(small_train):
    return train_cy(small_train, TrainConfig(epochs=60, seed=0))


@pytest.fixture(scope="session")
def small_cal(small_train):
    return fit_isotonic(pooled_pairs(small_train))


@pytest.fixture(scope="session")
def unit_costs(small_train):
    return make_cost_model("unit", small_train.space)


@pytest.fixture(scope="session")
def small_greedy(small_val, small_model, small_cal):
    return greedy_fit(small_val, small_model, calibration=small_cal)


@pytest.fixture(scope="session")
def small_coop_cfg(small_val, small_model, small_cal):
    cpu_norm, cis_norm = fit_score_norm(small_val, small_model, small_cal)
    return PolicyConfig(alpha=1.0, beta=1.0, gamma=0.0, cpu_norm=cpu_norm, cis_norm=cis_norm)


def tiny_space(m=2, arities=(2, 2), k=2) -> ConceptSpace:
    return ConceptSpace(
        concept_names=tuple(f"c{i + 1}" for i in range(m)),
        arities=tuple(arities),
        label_names=tuple(f"y{j + 1}" for j in range(k)),
    )


def linear_model(space: ConceptSpace, w: np.ndarray, b=None) -> ConceptToLabelModel:
    b = np.zeros(space.label_count) if b is None else np.asarray(b, dtype=float)
    return ConceptToLabelModel(
        space=space, architecture="linear", w_out=np.asarray(w, dtype=float), b_out=b
    )


def random_linear_model(space: ConceptSpace, rng, scale=1.5) -> ConceptToLabelModel:
    w = rng.normal(0.0, scale, size=(space.label_count, space.feature_dim))
    b = rng.normal(0.0, 0.5, size=space.label_count)
    return linear_model(space, w, b)


def random_instance(space: ConceptSpace, rng, ident="x"):
    from coopcbm.data import Instance

    probs = []
    for a in space.arities:
        p = rng.dirichlet(np.ones(a))
        probs.append(tuple(float(v) for v in p))
    return Instance(
        id=ident,
        concept_probs=tuple(probs),
        concept_true=tuple(int(rng.integers(1, a + 1)) for a in space.arities),
        label=int(rng.integers(1, space.label_count + 1)),
    )
