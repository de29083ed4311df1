"""Smoke test for the graphpmu extension module.

Build and install first, e.g. `pip install ./crates/python`, then run
`python python/smoke_test.py`.
"""

import math
import tempfile
from pathlib import Path

import graphpmu

TINY = """
train_per_class = 4
eval_per_class = 2
test_per_class = 3
window = 24
aed.epochs = 2
aed.windows_per_epoch = 48
aed.eval_windows = 32
graph.epochs = 2
graph.batch = 8
graph.hidden1 = 8
graph.hidden2 = 4
graph.disc_hidden = 4
gmm_restarts = 2
"""


def main():
    feeder = graphpmu.Topology.ieee34()
    assert feeder.sensors == ["806", "824", "836", "846"], feeder.sensors
    adj = feeder.adjacency()
    assert len(adj) == len(feeder.buses) == 34
    assert all(adj[i][j] == adj[j][i] for i in range(34) for j in range(34))
    assert len(feeder.sensor_subgraph()) == 4

    config = graphpmu.RunConfig(TINY)
    assert config.get("window") == "24"
    data = graphpmu.Dataset.generate(feeder, seed=1, train_per_class=4, eval_per_class=2, test_per_class=3, window=24)
    assert len(data) == 81
    assert sorted(set(data.classes)) == list(range(1, 10))
    first = data.event_ids[0]
    window = data.event_window(first, "806", order=1, normalized=True)
    assert len(window) == 24 and len(window[0]) == 9

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "dataset.gpmu"
        data.write(path)
        assert graphpmu.Dataset.read(path).event_ids == data.event_ids

        aed, curve = graphpmu.Autoencoder.train(config, data, order=1, seed=3)
        assert aed.order == 1 and len(curve) == 2
        embedding = aed.encode(window)
        assert len(embedding) == 32 and all(math.isfinite(x) for x in embedding)
        assert len(aed.decode(embedding)) == 24
        model = Path(tmp) / "aed.model"
        aed.save(model)
        assert graphpmu.Autoencoder.load(model).encode(window) == embedding

    assert graphpmu.ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert abs(graphpmu.js_mi_loss([0.0], [0.0]) + math.log(2)) < 1e-12
    blobs = [[-5.0 + 0.01 * i, 0.0] for i in range(10)] + [[5.0 + 0.01 * i, 1.0] for i in range(10)]
    truth = [0] * 10 + [1] * 10
    assert graphpmu.ari(truth, graphpmu.gmm_cluster(blobs, 2, seed=1)) == 1.0
    labels, inertia = graphpmu.kmeans(blobs, 2, seed=1)
    assert graphpmu.ari(truth, labels) == 1.0 and inertia > 0
    assert len(graphpmu.pca(blobs, 2)[0]) == 2

    rows, medians = graphpmu.ablate(config, ["aed", "graphpmu"], seeds=[1, 2], data_seed=1)
    assert len(rows) == 4
    assert [m[0] for m in medians] == ["aed", "graphpmu"]
    assert all(-1.0 <= ari <= 1.0 for _, _, ari in rows)
    print("graphpmu smoke test passed:", ", ".join(f"{v} median ARI {m:.3f}" for v, m in medians))


if __name__ == "__main__":
    main()
