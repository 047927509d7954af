import math
from pathlib import Path

import numpy as np
import pytest

import ncevo

DATA_DIR = Path(__file__).resolve().parents[2] / "data"


def blobs(per_class=50, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(2 * per_class) % 2
    x = rng.normal(size=(2 * per_class, 2))
    x[:, 0] = np.where(labels == 1, np.abs(x[:, 0]) + 1.0, -np.abs(x[:, 0]) - 1.0)
    return x, labels.astype(np.int32)


def test_descriptor_round_trip():
    d = ncevo.random_descriptor(max_depth=4, max_width=6, seed=3)
    assert 1 <= d.depth <= 4
    assert ncevo.Descriptor.from_text(d.to_text()) == d
    assert ncevo.validate(d, 4, 6) == []
    mutated, op = ncevo.mutate(d, seed=1, max_depth=4, max_width=6)
    assert op in {"layer_change", "add_layer", "del_layer", "activ_change", "weight_change"}
    assert ncevo.validate(mutated, 4, 6) == []


def test_forward_and_training():
    x, y = blobs()
    net = ncevo.build_network(ncevo.Descriptor([4], "tanh"), 2, seed=1)
    p = ncevo.predict_proba(net, x)
    assert p.shape == (100,)
    assert np.all((p > 0) & (p < 1))
    trained = ncevo.train(net, x, y, learning_rate=0.1, seed=2)
    pred = (ncevo.predict_proba(trained, x) >= 0.5).astype(np.int32)
    assert ncevo.balanced_accuracy(pred, y) >= 0.95
    values, widths = ncevo.trace(trained, x)
    assert values.shape == (100, 4) and widths == [4]


def test_coverage_metrics():
    values = np.array([[0.3, -0.1, 0.0, -2.0], [-0.4, 0.0, 0.9, 0.0]])
    assert ncevo.nc(values, [2, 2], 0.0) == 0.5
    lower, upper = ncevo.profile_bounds(values)
    assert ncevo.nbc(values, [2, 2], lower, upper) == 0.0
    assert ncevo.snac(values, [2, 2], lower, upper) == 0.0
    assert ncevo.kmn(values, [2, 2], lower, upper, 1) == 1.0
    assert ncevo.tknc(values, [2, 2], 2) == 1.0


def test_scores():
    assert ncevo.balanced_accuracy(np.ones(4, dtype=np.int32), np.array([0, 1, 0, 1])) == 0.5
    assert ncevo.cert(np.array([0.5, 0.5])) == 0.5
    assert math.isclose(ncevo.blend(0.8, 0.5, 0.7), 0.54, rel_tol=1e-15)
    with pytest.raises(ncevo.DataError):
        ncevo.cert(np.array([]))


def test_evolve_budget():
    result = ncevo.evolve(lambda d, seed: 1.0 / d.neuron_count, population=6, generations=3, seed=2)
    assert result["evaluations"] == 24
    assert len(result["best_fitness"]) == 3
    assert result["best_fitness"] == sorted(result["best_fitness"])


@pytest.mark.skipif(not (DATA_DIR / "breast_w").exists(), reason="bundled breast_w missing")
def test_breast_w_fitness_and_experiment(tmp_path):
    path = ncevo.find_dataset("breast_w", [DATA_DIR])
    data = ncevo.load_pmlb(path)
    assert data.features.shape == (683, 9)
    split = ncevo.make_split(data, 0.4, 1, 2)
    value = ncevo.evaluate_fitness("NC", ncevo.Descriptor([4]), split, seed=3)
    assert 0.0 <= value["f"] <= 1.0 and not value["failed"]
    assert split.test_reads == 0

    config = f"""
[experiment]
datasets = breast_w
q = 0.4
strategies = TKNC
repetitions = 1
data_dirs = {DATA_DIR}
[ga]
population = 3
generations = 1
[train]
epochs = 5
"""
    outcome = ncevo.run_experiment(config, output=tmp_path / "out")
    assert outcome["failed_cells"] == 0
    rows = ncevo.summarize(tmp_path / "out")
    assert len(rows) == 1 and rows[0]["strategy"] == "TKNC"
    with pytest.raises(ncevo.ConfigError):
        ncevo.run_experiment("[experiment]\ndatasets = x\nbogus = 1\n")
