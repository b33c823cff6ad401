import numpy as np
import pytest

from timediscount import checkpoint
from timediscount.model import KINDS, ModelConfig, build_model


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("task", ["autoreg", "classify"])
def test_round_trip_is_bit_exact(kind, task):
    cfg = ModelConfig(kind=kind, task=task, D=2, K=4, history=12, pool1_l0=2, pool1_l=1.2, l1=0.1)
    m = build_model(cfg, 3)
    rng = np.random.default_rng(0)
    for p in m.params.values():
        p += rng.normal(size=p.shape)
    raw = checkpoint.dumps(m, {"note": "x"})
    back = checkpoint.loads(raw)
    assert back.config == m.config
    assert checkpoint.dumps(back, {"note": "x"}) == raw
    assert checkpoint.read_meta(raw) == {"note": "x"}
    X = rng.normal(size=(3, 2, 12))
    assert back.predict(X).tobytes() == m.predict(X).tobytes()


def test_save_load_file(tmp_path):
    m = build_model(ModelConfig(D=1, history=5), 1)
    checkpoint.save(tmp_path / "c.bin", m)
    assert (tmp_path / "c.bin").read_bytes() == checkpoint.dumps(m)
    assert checkpoint.read_meta(checkpoint.dumps(m)) == {}
    assert checkpoint.load(tmp_path / "c.bin").params.keys() == m.params.keys()


def test_corrupt_input_rejected():
    raw = checkpoint.dumps(build_model(ModelConfig(D=1, history=5), 1))
    with pytest.raises(ValueError):
        checkpoint.loads(b"nope" + raw)
    with pytest.raises(ValueError):
        checkpoint.loads(raw + b"\0")
