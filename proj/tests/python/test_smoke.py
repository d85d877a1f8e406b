import json

import numpy as np
import pytest

import spikecal


def test_clipfloor_and_threshold():
    assert spikecal.clipfloor(0.65, 4, 1.0, 1) == pytest.approx(0.5)
    v, obj = spikecal.optimize_threshold([0.2, 0.8, 1.6], 4, 1)
    assert v == pytest.approx(1.6)
    assert obj == pytest.approx(0.04 / 3)


def test_entropy_and_kl():
    assert spikecal.entropy([0.0, 1.0]) == 0.0
    assert spikecal.entropy([0.1] * 10) == pytest.approx(-np.log(10))
    assert spikecal.kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841, abs=1e-6)


def test_pareto_worked_example():
    t = spikecal.SensitivityTable([1, 2], [[1.0, 0.2], [0.5, 0.1]], [[1, 2], [1, 3]])
    a = spikecal.pareto_phi_search(t, 4.0)
    assert a.choice == [1, 0]
    assert a.S_sum == pytest.approx(0.7)
    assert spikecal.brute_force_search(t, 4.0, "phi").choice == a.choice
    with pytest.raises(spikecal._core.Error):
        spikecal.pareto_phi_search(t, 1.0)


def test_train_convert_simulate():
    x, y = spikecal.synth_blobs(3, 4, 40, 0.5, 1)
    assert x.shape == (120, 4)
    net = spikecal.train(x, y, [16], 3, epochs=10, seed=2)
    ann = spikecal.forward(net, x).argmax(axis=1)
    assert (ann == np.array(y)).mean() > 0.9
    snn = spikecal.convert(net, x[:64], T=8, phi=[2])
    assert snn.configs[0].phi == 2
    logits, spikes = spikecal.simulate(snn, x, 64)
    assert logits.shape == (120, 3)
    assert sum(spikes) > 0
    assert (logits.argmax(axis=1) == ann).mean() > 0.9
    again = spikecal.ConvertedSNN.from_json(snn.to_json())
    assert again.to_json() == snn.to_json()


def test_run_task(tmp_path):
    cfg = "data.classes = 3\ndata.dim = 4\ndata.train_per_class = 20\ntrain.hidden = 8\ntrain.epochs = 2\n"
    code, text = spikecal.run_task("train", cfg, [f"out_dir={tmp_path}"])
    assert code == 0
    report = json.loads(text)
    assert report["status"] == "ok"
    assert (tmp_path / "model.json").exists()
    code, text = spikecal.run_task("simulate", cfg, [f"out_dir={tmp_path}"])
    assert code == 3
    assert json.loads(text)["status"] == "failed"
