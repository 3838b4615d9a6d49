import json
import struct

import numpy as np
import pytest

from dualnews.checkpoint import (
    MAGIC, Checkpoint, CheckpointError, from_bytes, import_weights, load_checkpoint, save_checkpoint, to_bytes,
)
from dualnews.training import OptimizerState
from tests.helpers import tiny_config, tiny_model


def make_ckpt(with_state=True):
    model = tiny_model(dtype=np.float32)
    state = OptimizerState.for_params(model.params) if with_state else None
    if state:
        state.step = 3
        state.m["head.b"][:] = [0.25, -0.5]
    return Checkpoint(model.params, model.config.to_dict(), {"learning_rate": 0.1}, state, {"note": "x"})


def test_round_trip_is_byte_identical(tmp_path):
    ckpt = make_ckpt()
    save_checkpoint(tmp_path / "a.mwpb", ckpt)
    loaded = load_checkpoint(tmp_path / "a.mwpb", dtype=np.float32)
    save_checkpoint(tmp_path / "b.mwpb", loaded)
    assert (tmp_path / "a.mwpb").read_bytes() == (tmp_path / "b.mwpb").read_bytes()
    assert loaded.optimizer.step == 3
    assert list(loaded.optimizer.m["head.b"]) == [0.25, -0.5]
    assert loaded.meta == {"note": "x"}
    for k, v in ckpt.params.items():
        assert np.array_equal(loaded.params[k], v)


def test_prefix_layout():
    data = to_bytes(make_ckpt(with_state=False))
    magic, version, hlen = struct.unpack_from("<4sIQ", data)
    assert magic == MAGIC and version == 1
    header = json.loads(data[16 : 16 + hlen])
    assert header["optimizer_step"] is None
    assert list(header) == sorted(header)


def _corrupt_header(data, fn):
    hlen = struct.unpack_from("<Q", data, 8)[0]
    header = json.loads(data[16 : 16 + hlen])
    fn(header)
    h = json.dumps(header, sort_keys=True).encode()
    return data[:8] + struct.pack("<Q", len(h)) + h + data[16 + hlen :]


def test_bad_magic():
    data = to_bytes(make_ckpt())
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"NOPE" + data[4:])


def test_bad_version():
    data = bytearray(to_bytes(make_ckpt()))
    data[4] = 9
    with pytest.raises(CheckpointError, match="version"):
        from_bytes(bytes(data))


def test_truncated_file():
    data = to_bytes(make_ckpt())
    with pytest.raises(CheckpointError):
        from_bytes(data[:10])
    with pytest.raises(CheckpointError, match="out of bounds"):
        from_bytes(data[:-4])


def test_out_of_bounds_offset():
    def bump(h):
        h["tensors"][0]["offset"] = 10**9
    with pytest.raises(CheckpointError, match="out of bounds"):
        from_bytes(_corrupt_header(to_bytes(make_ckpt()), bump))


def test_overlapping_tensors():
    def overlap(h):
        h["tensors"][1]["offset"] = h["tensors"][0]["offset"]
    with pytest.raises(CheckpointError, match="overlap"):
        from_bytes(_corrupt_header(to_bytes(make_ckpt()), overlap))


def test_size_mismatch():
    def shrink(h):
        h["tensors"][0]["nbytes"] -= 4
    with pytest.raises(CheckpointError):
        from_bytes(_corrupt_header(to_bytes(make_ckpt()), shrink))


def test_import_weights(tmp_path):
    src = tiny_model(seed=1)
    save_checkpoint(tmp_path / "w.mwpb", Checkpoint(src.params))
    dst = tiny_model(seed=2)
    assert import_weights(tmp_path / "w.mwpb", dst.params) == []
    np.testing.assert_allclose(dst.params["body.emb.word"], src.params["body.emb.word"], rtol=1e-6)


def test_import_weights_requires_every_parameter(tmp_path):
    partial = {k: v for k, v in tiny_model().params.items() if not k.startswith("head.")}
    save_checkpoint(tmp_path / "p.mwpb", Checkpoint(partial))
    target = tiny_model().params
    with pytest.raises(CheckpointError):
        import_weights(tmp_path / "p.mwpb", target)
    assert sorted(import_weights(tmp_path / "p.mwpb", target, strict=False)) == ["head.b", "head.w"]


def test_import_weights_rejects_shape_mismatch(tmp_path):
    params = dict(tiny_model().params)
    params["head.w"] = np.zeros((3, 2))
    save_checkpoint(tmp_path / "bad.mwpb", Checkpoint(params))
    with pytest.raises(CheckpointError, match="head.w"):
        import_weights(tmp_path / "bad.mwpb", tiny_model().params)
