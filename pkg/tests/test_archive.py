import json
import os
import struct

import numpy as np
import pytest

from clstm_rom import archive, ode
from clstm_rom import twostage as ts
from clstm_rom.archive import ArchiveError


@pytest.fixture(scope="module")
def model():
    trajs = [ode.rk4_integrate(ode.SYSTEMS["duffing"], a, steps=300) for a in (1.0, 2.0, 3.0)]
    s = ts.StageConfig(hidden=5, channels=3, epochs=2, batch_size=16)
    cfg = ts.TwoStageConfig(k=2, w=12, m=2, sample_stride=5, first=s, second=s)
    return ts.train(trajs, cfg)[0]


def _same_model(a, b):
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.state_norm.lo, b.state_norm.lo)
    assert np.array_equal(a.state_norm.hi, b.state_norm.hi)
    for ea, eb in zip(a.first_stage + (a.second_stage,), b.first_stage + (b.second_stage,)):
        assert ea.config == eb.config
        for key in ea.params:
            assert np.array_equal(ea.params[key], eb.params[key])
    assert a.config == b.config


def test_roundtrip_is_byte_identical(model, tmp_path):
    raw = archive.dumps(model, {"note": "x"})
    back, echo = archive.loads(raw)
    _same_model(model, back)
    assert echo["experiment"] == {"note": "x"}
    assert archive.dumps(back, {"note": "x"}) == raw
    path = tmp_path / "m.romf"
    archive.save(path, back, {"note": "x"})
    assert path.read_bytes() == raw


def test_layout_header(model):
    raw = archive.dumps(model)
    assert raw[:4] == b"ROMF"
    version, mlen = struct.unpack_from("<II", raw, 4)
    assert version == archive.VERSION
    manifest = json.loads(raw[12:12 + mlen])
    assert manifest["kind"] == "two_stage"
    names = [e["name"] for e in manifest["sections"]]
    assert "centroids" in names and "second_stage.lstm.w" in names
    assert manifest == archive.read_manifest(raw)


def test_normalizer_comes_from_archive_not_recomputed(model):
    back, _ = archive.loads(archive.dumps(model))
    assert back.state_norm.lo.tobytes() == model.state_norm.lo.tobytes()
    assert back.theta_norm.hi.tobytes() == model.theta_norm.hi.tobytes()


def test_hash_mismatch_is_detected(model):
    raw = bytearray(archive.dumps(model))
    raw[-3] ^= 0x01
    with pytest.raises(ArchiveError, match="hash"):
        archive.loads(bytes(raw))


def test_missing_section_is_named(model):
    kind, sections, cfg = archive.unpack(archive.dumps(model))
    del sections["second_stage.head.b"]
    raw = archive.pack(kind, sections, cfg)
    with pytest.raises(ArchiveError, match="second_stage.head.b"):
        archive.loads(raw)


@pytest.mark.parametrize("mutate,message", [
    (lambda r: b"XXXX" + r[4:], "magic"),
    (lambda r: r[:4] + struct.pack("<I", 99) + r[8:], "version"),
    (lambda r: r[:-10], "truncated|corrupt"),
    (lambda r: r + b"\0", "trailing"),
])
def test_malformed_archives(model, mutate, message):
    with pytest.raises(ArchiveError, match=message):
        archive.loads(mutate(archive.dumps(model)))


def test_unreadable_path():
    with pytest.raises(ArchiveError, match="cannot read"):
        archive.load("/nonexistent/dir/model.romf")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = tmp_path / "out.bin"
    archive.write_atomic(path, b"one")
    archive.write_atomic(path, b"two")
    assert path.read_bytes() == b"two"
    assert os.listdir(tmp_path) == ["out.bin"]


def test_failed_atomic_write_keeps_old_file(tmp_path):
    path = tmp_path / "out.bin"
    archive.write_atomic(path, b"old")
    with pytest.raises(TypeError):
        archive.write_atomic(path, "not bytes")
    assert path.read_bytes() == b"old"
    assert os.listdir(tmp_path) == ["out.bin"]


def test_pack_roundtrip_dtypes():
    secs = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([3, -4], dtype=np.int64), "c": np.zeros((0, 2))}
    kind, back, cfg = archive.unpack(archive.pack("raw", secs, {"x": 1}))
    assert kind == "raw" and cfg == {"x": 1}
    for k in secs:
        assert back[k].dtype == secs[k].dtype and np.array_equal(back[k], secs[k])


def test_unknown_model_type():
    with pytest.raises(TypeError):
        archive.dumps(object())
