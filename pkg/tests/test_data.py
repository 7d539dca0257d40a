import json

import numpy as np
import pytest

from coopcbm.data import (
    ConceptSpace,
    CostModel,
    Dataset,
    Instance,
    SyntheticTaskConfig,
    generate_synthetic,
    load_cost_model,
    load_dataset,
    load_space,
    make_cost_model,
    save_cost_model,
    save_dataset,
    save_space,
)
from coopcbm.errors import (
    ConfigError,
    FractionError,
    MissingDifficultyError,
    ParseError,
    SchemaError,
)

from conftest import tiny_space


# --- ConceptSpace -----------------------------------------------------------

def test_space_basics():
    s = tiny_space(m=3, arities=(2, 3, 4), k=5)
    assert s.m == 3
    assert s.label_count == 5
    assert s.feature_dim == 9
    assert s.block_offsets() == [0, 2, 5]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(concept_names=(), arities=(), label_names=("a", "b")),
        dict(concept_names=("c1",), arities=(2,), label_names=("a",)),
        dict(concept_names=("c1",), arities=(1,), label_names=("a", "b")),
        dict(concept_names=("c1", "c1"), arities=(2, 2), label_names=("a", "b")),
        dict(concept_names=("c1", "c2"), arities=(2,), label_names=("a", "b")),
        dict(concept_names=("c1",), arities=(2,), label_names=("a", "a")),
    ],
)
def test_space_rejects_bad_schemas(kwargs):
    with pytest.raises(SchemaError):
        ConceptSpace(**kwargs)


def test_space_round_trip(tmp_path):
    s = tiny_space(m=3, arities=(2, 3, 2), k=4)
    save_space(s, tmp_path / "space.json")
    assert load_space(tmp_path / "space.json") == s


def test_space_bad_json(tmp_path):
    (tmp_path / "space.json").write_text("{nope")
    with pytest.raises(ParseError):
        load_space(tmp_path / "space.json")


# --- Instance / Dataset -----------------------------------------------------

def _inst(probs, true, label, ident="i0"):
    return Instance(id=ident, concept_probs=probs, concept_true=true, label=label)


def test_instance_validation():
    space = tiny_space()
    good = _inst(((0.3, 0.7), (0.5, 0.5)), (1, 2), 1)
    good.validate(space)
    with pytest.raises(SchemaError):
        _inst(((0.3, 0.7),), (1,), 1).validate(space)
    with pytest.raises(SchemaError):
        _inst(((0.3, 0.8), (0.5, 0.5)), (1, 2), 1).validate(space)
    with pytest.raises(SchemaError):
        _inst(((-0.1, 1.1), (0.5, 0.5)), (1, 2), 1).validate(space)
    with pytest.raises(SchemaError):
        _inst(((0.3, 0.7), (0.5, 0.5)), (1, 3), 1).validate(space)
    with pytest.raises(SchemaError):
        _inst(((0.3, 0.7), (0.5, 0.5)), (1, 2), 3).validate(space)


def test_dataset_round_trip(tmp_path):
    space = tiny_space()
    insts = tuple(
        _inst(((0.3, 0.7), (0.25, 0.75)), (1, 2), 1 + j % 2, ident=f"i{j}")
        for j in range(3)
    )
    ds = Dataset(space, insts, "train")
    save_dataset(ds, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl", space, "train")
    assert back == ds


def test_dataset_rejects_bad_row_sum(tmp_path):
    space = tiny_space()
    row = {"id": "i0", "concept_probs": [[0.7, 0.7], [0.5, 0.5]],
           "concept_true": [1, 2], "label": 1}
    (tmp_path / "d.jsonl").write_text(json.dumps(row) + "\n")
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "d.jsonl", space, "train")


def test_dataset_renormalizes_small_drift(tmp_path):
    space = tiny_space()
    row = {"id": "i0", "concept_probs": [[0.5000004, 0.4999996], [0.5, 0.5]],
           "concept_true": [1, 2], "label": 1}
    (tmp_path / "d.jsonl").write_text(json.dumps(row) + "\n")
    ds = load_dataset(tmp_path / "d.jsonl", space, "train")
    assert abs(sum(ds.instances[0].concept_probs[0]) - 1.0) <= 1e-12


def test_dataset_bad_json_line_number(tmp_path):
    space = tiny_space()
    good = json.dumps({"id": "i0", "concept_probs": [[0.5, 0.5], [0.5, 0.5]],
                       "concept_true": [1, 1], "label": 1})
    (tmp_path / "d.jsonl").write_text(good + "\n{broken\n")
    with pytest.raises(ParseError) as e:
        load_dataset(tmp_path / "d.jsonl", space, "train")
    assert e.value.line == 2


def test_subsample():
    space = tiny_space()
    insts = tuple(
        _inst(((0.3, 0.7), (0.25, 0.75)), (1, 2), 1, ident=f"i{j}") for j in range(50)
    )
    ds = Dataset(space, insts, "val")
    sub = ds.subsample(0.2, seed=3)
    assert len(sub) == 10
    assert set(i.id for i in sub.instances) <= set(i.id for i in ds.instances)
    assert sub.instances == ds.subsample(0.2, seed=3).instances
    with pytest.raises(FractionError):
        ds.subsample(0.0, seed=0)
    with pytest.raises(FractionError):
        ds.subsample(1.5, seed=0)


# --- cost models ------------------------------------------------------------

def test_unit_costs():
    space = tiny_space(m=5, arities=(2,) * 5)
    cm = make_cost_model("unit", space)
    assert cm.costs == (1.0,) * 5
    assert cm.kind == "unit"


def test_systematic_costs(tmp_path):
    space = tiny_space(m=5, arities=(2,) * 5)
    table = {"c1": "very easy", "c2": "moderately difficult", "c3": "very difficult",
             "c4": "very easy", "c5": "very difficult"}
    (tmp_path / "diff.json").write_text(json.dumps(table))
    cm = make_cost_model("systematic", space, cost_file=tmp_path / "diff.json")
    # raw (1,3,10,1,10) sums to 25, scaled to total 100
    assert np.allclose(cm.costs, (4.0, 12.0, 40.0, 4.0, 40.0), atol=1e-12)
    assert abs(sum(cm.costs) - 100.0) <= 1e-9


def test_systematic_costs_missing_concept(tmp_path):
    space = tiny_space(m=2)
    (tmp_path / "diff.json").write_text(json.dumps({"c1": "very easy"}))
    with pytest.raises(MissingDifficultyError):
        make_cost_model("systematic", space, cost_file=tmp_path / "diff.json")
    (tmp_path / "diff.json").write_text(
        json.dumps({"c1": "very easy", "c2": "impossible"})
    )
    with pytest.raises(MissingDifficultyError):
        make_cost_model("systematic", space, cost_file=tmp_path / "diff.json")


def test_random_costs_bounds_and_total():
    space = tiny_space(m=20, arities=(2,) * 20)
    for seed in range(20):
        cm = make_cost_model("random", space, seed=seed)
        assert abs(sum(cm.costs) - 100.0) <= 1e-9
        # raw draws in [1,7]: each scaled cost in [100/(7*20), 100*7/20]
        assert all(100.0 / 140.0 - 1e-9 <= q <= 35.0 + 1e-9 for q in cm.costs)
    assert (
        make_cost_model("random", space, seed=3).costs
        == make_cost_model("random", space, seed=3).costs
    )


def test_cost_model_validation():
    with pytest.raises(ConfigError):
        CostModel(costs=(1.0,), kind="weird")
    with pytest.raises(SchemaError):
        CostModel(costs=(1.0, -1.0), kind="unit")
    with pytest.raises(SchemaError):
        CostModel(costs=(30.0, 30.0), kind="random")


def test_cost_model_round_trip(tmp_path):
    space = tiny_space(m=4, arities=(2,) * 4)
    cm = make_cost_model("random", space, seed=9)
    save_cost_model(cm, space, tmp_path / "costs.json")
    back = load_cost_model(tmp_path / "costs.json", space)
    assert back.kind == "random"
    assert np.allclose(back.costs, cm.costs, atol=1e-6)


# --- synthetic generator ----------------------------------------------------

def test_generator_deterministic():
    cfg = SyntheticTaskConfig(m=4, label_count=3, n_train=30, n_val=10, n_test=10, seed=5)
    a = generate_synthetic(cfg)
    b = generate_synthetic(cfg)
    assert a == b


def test_generator_split_sizes_and_validity():
    cfg = SyntheticTaskConfig(m=4, label_count=3, n_train=30, n_val=10, n_test=20, seed=5)
    train, val, test = generate_synthetic(cfg)
    assert (len(train), len(val), len(test)) == (30, 10, 20)
    assert {train.split, val.split, test.split} == {"train", "val", "test"}


def test_generator_noiseless_limit():
    cfg = SyntheticTaskConfig(
        m=8, label_count=4, prototype_flip_rate=0.0, probe_sharpness=10.0,
        probe_noise=0.0, miscalibration_exponent=1.0,
        n_train=200, n_val=50, n_test=50, seed=2,
    )
    train, _, _ = generate_synthetic(cfg)
    # argmax of every concept probe equals the true category
    for inst in train.instances:
        for dist, v in zip(inst.concept_probs, inst.concept_true):
            assert int(np.argmax(dist)) + 1 == v
    # with no flips every instance sits exactly on its class prototype, so a
    # classifier reading off the tuple->label map is perfect when prototypes
    # are distinct
    by_label = {}
    for inst in train.instances:
        by_label.setdefault(inst.label, set()).add(inst.concept_true)
    assert all(len(tuples) == 1 for tuples in by_label.values())
    prototypes = {next(iter(t)): lab for lab, t in by_label.items()}
    if len(prototypes) == len(by_label):  # distinct prototypes
        assert all(
            prototypes[inst.concept_true] == inst.label for inst in train.instances
        )


def test_generator_flip_rate_concentration():
    cfg = SyntheticTaskConfig(
        m=10, label_count=4, prototype_flip_rate=0.25,
        n_train=2000, n_val=1, n_test=1, seed=13,
    )
    train, _, _ = generate_synthetic(cfg)
    true0 = train.true_concepts_array()
    labels0 = train.labels_array()
    # recover each class prototype by per-concept majority vote
    protos = np.zeros((4, 10), dtype=int)
    for k in range(4):
        rows = true0[labels0 == k]
        protos[k] = (rows.mean(axis=0) > 0.5).astype(int)
    flips = (true0 != protos[labels0]).mean()
    assert abs(flips - 0.25) <= 0.03


def test_generator_miscalibration_distorts_binary():
    base = dict(m=3, label_count=2, probe_noise=0.5, n_train=50, n_val=1, n_test=1, seed=4)
    plain, _, _ = generate_synthetic(
        SyntheticTaskConfig(miscalibration_exponent=1.0, **base)
    )
    warped, _, _ = generate_synthetic(
        SyntheticTaskConfig(miscalibration_exponent=2.0, **base)
    )
    for a, b in zip(plain.instances, warped.instances):
        for da, db in zip(a.concept_probs, b.concept_probs):
            p = da[0]
            expect = p**2 / (p**2 + (1 - p) ** 2)
            assert abs(db[0] - expect) <= 1e-12


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(m=0, label_count=2),
        dict(m=2, label_count=1),
        dict(m=2, label_count=2, prototype_flip_rate=0.5),
        dict(m=2, label_count=2, probe_sharpness=0.0),
        dict(m=2, label_count=2, probe_noise=-1.0),
        dict(m=2, label_count=2, miscalibration_exponent=0.0),
        dict(m=2, label_count=2, n_train=0),
        dict(m=2, label_count=2, arities=(2,)),
    ],
)
def test_generator_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SyntheticTaskConfig(**kwargs)
