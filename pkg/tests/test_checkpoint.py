import json

import numpy as np
import pytest
import torch

from textsr.checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from textsr.errors import CheckpointError
from textsr.text import TextEncoder, build_vocab


def _tensors():
    rng = np.random.default_rng(0)
    return {
        "a.weight": rng.normal(size=(3, 4)).astype(np.float32),
        "a.bias": rng.normal(size=(4,)).astype(np.float32),
        "scalar": np.float32(1.5),
        "deep.block.conv": rng.normal(size=(2, 3, 3, 3)).astype(np.float32),
    }


def test_round_trip_bitwise(tmp_path):
    tensors = _tensors()
    save_checkpoint(tensors, {"step": 7, "note": "x"}, tmp_path / "ckpt")
    loaded = load_checkpoint(tmp_path / "ckpt")
    assert isinstance(loaded, Checkpoint)
    assert loaded.step == 7
    assert loaded.meta["note"] == "x"
    assert set(loaded.tensors) == set(tensors)
    for name, array in tensors.items():
        got = loaded.tensors[name]
        assert got.dtype == np.float32
        assert got.shape == np.asarray(array).shape
        assert np.array_equal(got, np.asarray(array, dtype=np.float32))


def test_save_is_deterministic(tmp_path):
    tensors = _tensors()
    a = save_checkpoint(tensors, {"step": 1}, tmp_path / "a")
    b = save_checkpoint(tensors, {"step": 1}, tmp_path / "b")
    assert (a / "weights.bin").read_bytes() == (b / "weights.bin").read_bytes()
    assert (a / "meta.json").read_text() == (b / "meta.json").read_text()


def test_float64_inputs_stored_as_f4(tmp_path):
    arr = np.array([1.0, 2.0, 3.0], dtype=np.float64)
    save_checkpoint({"x": arr}, {}, tmp_path / "c")
    loaded = load_checkpoint(tmp_path / "c")
    assert loaded.tensors["x"].dtype == np.float32
    assert np.array_equal(loaded.tensors["x"], arr.astype(np.float32))


def test_integer_tensor_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint({"x": np.arange(3)}, {}, tmp_path / "c")


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")


def test_corrupt_weights_fails_checksum(tmp_path):
    path = save_checkpoint(_tensors(), {"step": 1}, tmp_path / "c")
    blob = bytearray((path / "weights.bin").read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    (path / "weights.bin").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "checksum" in str(err.value)


def test_truncated_weights_rejected(tmp_path):
    path = save_checkpoint(_tensors(), {"step": 1}, tmp_path / "c")
    blob = (path / "weights.bin").read_bytes()[:-5]
    (path / "weights.bin").write_bytes(blob)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_version_mismatch_names_both_versions(tmp_path):
    path = save_checkpoint(_tensors(), {"step": 1}, tmp_path / "c")
    meta = json.loads((path / "meta.json").read_text())
    meta["format_version"] = 99
    (path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    message = str(err.value)
    assert "99" in message
    assert str(FORMAT_VERSION) in message


def test_meta_records_roster_and_checksum(tmp_path):
    path = save_checkpoint(_tensors(), {"step": 2}, tmp_path / "c")
    meta = json.loads((path / "meta.json").read_text())
    assert meta["format_version"] == FORMAT_VERSION
    assert meta["tensors"] == sorted(_tensors())
    assert len(meta["weights_sha256"]) == 64


def test_torch_module_round_trip_bitwise_forward(tmp_path):
    vocab = build_vocab(["a red circle on a blue background"])
    torch.manual_seed(3)
    encoder = TextEncoder(len(vocab), 12)
    state = {f"text.{k}": v.detach().numpy() for k, v in encoder.state_dict().items()}
    save_checkpoint(state, {"step": 0}, tmp_path / "enc")

    loaded = load_checkpoint(tmp_path / "enc")
    torch.manual_seed(99)  # fresh, differently-initialized module
    restored = TextEncoder(len(vocab), 12)
    restored.load_state_dict(
        {k[len("text."):]: torch.as_tensor(v) for k, v in loaded.tensors.items()}
    )
    ids = torch.tensor([[2, 3, 4, 0, 0]])
    lengths = torch.tensor([3])
    with torch.no_grad():
        before = encoder(ids, lengths)
        after = restored(ids, lengths)
    assert torch.equal(before[0], after[0])
    assert torch.equal(before[1], after[1])
