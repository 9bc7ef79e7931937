import json

import numpy as np
import pytest

import lutkan


def test_compile_and_infer_matches_reference():
    model = lutkan.synth_model([6, 4, 1], seed=3)
    x, y = lutkan.synth_dataset(model, 500, seed=4)
    assert x.shape == (500, 6)
    ref = lutkan.forward_reference(model, x)
    compiled = lutkan.compile(model, lut_size=64)
    p, stats = lutkan.forward_lut(compiled, x)
    assert p.shape == (500,)
    assert np.all((p > 0) & (p < 1))
    assert np.max(np.abs(p - ref)) < 5e-2
    assert stats["oob_events"] == 0
    assert stats["total_inputs"] == 3000
    agree = np.mean((p >= 0.5) == (ref >= 0.5))
    assert agree >= 0.98


def test_labels_come_from_the_float_model():
    model = lutkan.synth_model([4, 3, 1], seed=1)
    x, y = lutkan.synth_dataset(model, 200)
    ref = lutkan.forward_reference(model, x)
    assert np.array_equal(y, (ref >= model.threshold).astype(y.dtype))


def test_serialization_round_trip(tmp_path):
    model = lutkan.synth_model([3, 2, 1], seed=5)
    compiled = lutkan.compile(model, lut_size=16, quant="asym_uint8", boundary="closed", oob="clip_x")
    blob = compiled.to_bytes()
    assert blob[:4] == b"KLUT"
    back = lutkan.from_bytes(blob)
    assert back.lut_size == 16
    assert back.quant == "asym_uint8"
    assert back.to_bytes() == blob
    assert compiled.memory()["total"] == len(blob)

    path = tmp_path / "m.json"
    model.save(str(path))
    assert lutkan.load_model(str(path)) == model
    assert json.loads(model.to_json())["format_version"] == 1


def test_memory_doubles_with_table_size():
    model = lutkan.synth_model([5, 3, 1], seed=2)
    sizes = [lutkan.compile(model, lut_size=L).memory()["tables"] for L in (4, 8, 16)]
    assert sizes[1] == 2 * sizes[0]
    assert sizes[2] == 2 * sizes[1]


def test_metrics():
    assert lutkan.roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert lutkan.roc_auc([0, 1, 0, 1], [0.4] * 4) == 0.5
    report = json.loads(lutkan.evaluate([1, 0, 1, 0], [0.9, 0.2, 0.4, 0.6]))
    assert report["confusion"] == {"tp": 1, "fp": 1, "tn": 1, "fn": 1}


def test_errors_raise_lutkan_error():
    model = lutkan.synth_model([3, 1], seed=1)
    with pytest.raises(lutkan.LutkanError, match="range"):
        lutkan.compile(model, lut_size=1)
    with pytest.raises(lutkan.LutkanError, match="input-shape"):
        lutkan.forward_reference(model, np.zeros((2, 4)))
    with pytest.raises(lutkan.LutkanError, match="malformed-model"):
        lutkan.model_from_json("{}")
    with pytest.raises(lutkan.LutkanError):
        lutkan.from_bytes(b"KLUT")
