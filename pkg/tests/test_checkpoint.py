"""Checkpoint format: bit-exact round-trips and corruption detection."""

import json
import struct

import numpy as np
import pytest

from fkmad.checkpoint import (MAGIC, CheckpointError, load_checkpoint,
                              save_checkpoint)
from fkmad.config import as_dict, default_config
from fkmad.model import init_model


def _small_cfg():
    cfg = default_config()
    cfg.model.d_in = 2
    cfg.model.d_inner = 4
    cfg.model.d_state = 4
    cfg.model.n_freqs = 2
    cfg.model.f_max = 2.0
    cfg.model.window = 16
    return cfg


@pytest.fixture()
def saved(tmp_path):
    cfg = _small_cfg()
    model = init_model(cfg.model, seed=3)
    model.norm_mean = np.array([0.5, -1.5])
    model.norm_std = np.array([2.0, 0.25])
    path = tmp_path / "checkpoint.bin"
    save_checkpoint(str(path), model, cfg, step=42)
    return path, model, cfg


def test_round_trip_is_bit_exact(saved):
    path, model, cfg = saved
    loaded = load_checkpoint(str(path))
    assert loaded.step == 42
    assert as_dict(loaded.config) == as_dict(cfg)
    want = model.named_params()
    got = loaded.model.named_params()
    assert sorted(got) == sorted(want)
    for name, param in got.items():
        assert np.array_equal(param.data, want[name].data), name
    assert np.array_equal(loaded.model.proj.freqs, model.proj.freqs)
    assert np.array_equal(loaded.model.norm_mean, model.norm_mean)
    assert np.array_equal(loaded.model.norm_std, model.norm_std)


def test_resave_is_byte_identical(saved, tmp_path):
    path, _, _ = saved
    loaded = load_checkpoint(str(path))
    again = tmp_path / "again.bin"
    save_checkpoint(str(again), loaded.model, loaded.config, loaded.step)
    assert again.read_bytes() == path.read_bytes()


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(str(tmp_path / "nope.bin"))


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTFKM" + bytes(64))
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(str(path))


def test_truncated_manifest(saved):
    path, _, _ = saved
    blob = path.read_bytes()
    path.write_bytes(blob[:len(MAGIC) + 4 + 10])
    with pytest.raises(CheckpointError, match="truncated manifest"):
        load_checkpoint(str(path))


def test_truncated_payload(saved):
    path, _, _ = saved
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError, match="truncated tensor"):
        load_checkpoint(str(path))


def _rewrite_manifest(path, mutate) -> None:
    blob = path.read_bytes()
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    manifest = json.loads(blob[start:start + hlen])
    mutate(manifest)
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path.write_bytes(MAGIC + struct.pack("<I", len(header)) + header
                     + blob[start + hlen:])


def test_unsupported_format_version(saved):
    path, _, _ = saved
    _rewrite_manifest(path, lambda m: m.update(format_version=99))
    with pytest.raises(CheckpointError, match="unsupported format version"):
        load_checkpoint(str(path))


def test_missing_tensor(saved):
    path, _, _ = saved
    _rewrite_manifest(path, lambda m: m["tensors"].pop(0))
    with pytest.raises(CheckpointError, match="missing tensor"):
        load_checkpoint(str(path))


def test_shape_mismatch(saved):
    path, _, _ = saved

    def widen(manifest):
        manifest["config"]["model"]["d_state"] = 8

    _rewrite_manifest(path, widen)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(str(path))


def test_unresolved_input_width(saved):
    path, _, _ = saved

    def clear_d_in(manifest):
        manifest["config"]["model"]["d_in"] = 0

    _rewrite_manifest(path, clear_d_in)
    with pytest.raises(CheckpointError, match="input width"):
        load_checkpoint(str(path))
