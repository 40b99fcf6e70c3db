"""Versioned binary model archive.

Layout (all integers little-endian)::

    b"ROMF"  u32 version  u32 manifest_len  manifest (UTF-8 JSON)
    then one record per section, in manifest order:
        u16 name_len  name  u8 dtype_code  u8 ndim  u64 dims[ndim]  u64 nbytes  data

The manifest echoes the configuration and lists every section with its
shape and SHA-256.  Serialization is canonical: loading an archive and
saving it again reproduces the same bytes.
"""

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, is_dataclass

import numpy as np

from . import __version__
from .clstm import CLstmConfig, CLstmModel
from .dataset import Normalizer
from .linalg import PodBasis
from .pod_pipeline import PipelineConfig, PipelineModel
from .twostage import StageConfig, TwoStageConfig, TwoStageModel

MAGIC = b"ROMF"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {v: k for k, v in _DTYPES.items()}
_PARAM_NAMES = ("conv.k", "conv.b", "lstm.w", "lstm.b", "head.w", "head.b")


class ArchiveError(IOError):
    pass


def _canon(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _sha(data):
    return hashlib.sha256(data).hexdigest()


def pack(kind, sections, config):
    """Serialize ``{name: array}`` sections with a manifest echoing ``config``."""
    entries, blobs = [], []
    for name, arr in sections.items():
        arr = np.asarray(arr)
        dt = np.dtype("<i8") if arr.dtype.kind in "iub" else np.dtype("<f8")
        data = np.ascontiguousarray(arr, dtype=dt).tobytes()
        entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "sha256": _sha(data)})
        blobs.append((name, dt, arr.shape, data))
    manifest = {
        "format": "ROMF", "version": VERSION, "kind": kind,
        "created_by": f"clstm_rom {__version__}",
        "config": config, "sections": entries,
    }
    mbytes = _canon(manifest).encode()
    out = [MAGIC, struct.pack("<II", VERSION, len(mbytes)), mbytes]
    for name, dt, shape, data in blobs:
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<BB", _CODES[dt], len(shape)))
        out.append(struct.pack(f"<{len(shape)}Q", *shape))
        out.append(struct.pack("<Q", len(data)) + data)
    return b"".join(out)


def unpack(raw):
    """Inverse of :func:`pack`: returns (kind, sections, config); verifies hashes."""
    if raw[:4] != MAGIC:
        raise ArchiveError("not a ROMF archive (bad magic)")
    try:
        version, mlen = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise ArchiveError(f"unsupported archive version {version}")
        manifest = json.loads(raw[12:12 + mlen].decode())
        pos = 12 + mlen
        sections = {}
        for entry in manifest["sections"]:
            (nlen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + nlen].decode()
            pos += nlen
            code, ndim = struct.unpack_from("<BB", raw, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
            pos += 8 * ndim
            (nbytes,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            data = raw[pos:pos + nbytes]
            pos += nbytes
            if name != entry["name"] or len(data) != nbytes:
                raise ArchiveError(f"section {entry['name']!r} is truncated or out of order")
            if _sha(data) != entry["sha256"]:
                raise ArchiveError(f"section {name!r} failed its hash check")
            sections[name] = np.frombuffer(data, dtype=_DTYPES[code]).reshape(shape).copy()
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"corrupt archive: {exc}") from exc
    if pos != len(raw):
        raise ArchiveError("trailing bytes after the last section")
    return manifest["kind"], sections, manifest["config"]


def read_manifest(raw):
    if raw[:4] != MAGIC:
        raise ArchiveError("not a ROMF archive (bad magic)")
    _, mlen = struct.unpack_from("<II", raw, 4)
    return json.loads(raw[12:12 + mlen].decode())


def write_atomic(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# model <-> sections


def _config_dict(cfg):
    return asdict(cfg) if is_dataclass(cfg) else cfg


def _need(sections, name):
    try:
        return sections[name]
    except KeyError:
        raise ArchiveError(f"archive is missing section {name!r}") from None


def _two_stage_sections(model, prefix=""):
    out = {
        prefix + "centroids": model.centroids,
        prefix + "state_norm.lo": model.state_norm.lo,
        prefix + "state_norm.hi": model.state_norm.hi,
        prefix + "theta_norm.lo": model.theta_norm.lo,
        prefix + "theta_norm.hi": model.theta_norm.hi,
    }
    for i, expert in enumerate(model.first_stage):
        for n in _PARAM_NAMES:
            out[f"{prefix}first_stage.{i}.{n}"] = expert.params[n]
    for n in _PARAM_NAMES:
        out[f"{prefix}second_stage.{n}"] = model.second_stage.params[n]
    return out


def _two_stage_config(model):
    return {
        "two_stage": _config_dict(model.config),
        "first_stage_nets": [e.config.to_dict() for e in model.first_stage],
        "second_stage_net": model.second_stage.config.to_dict(),
    }


def _stage_config(d):
    d = dict(d)
    d["first"] = StageConfig(**d["first"])
    d["second"] = StageConfig(**d["second"])
    return TwoStageConfig(**d)


def _two_stage_from(sections, cfg, prefix=""):
    experts = []
    for i, net in enumerate(cfg["first_stage_nets"]):
        params = {n: _need(sections, f"{prefix}first_stage.{i}.{n}") for n in _PARAM_NAMES}
        experts.append(CLstmModel(CLstmConfig(**net), params))
    g = CLstmModel(CLstmConfig(**cfg["second_stage_net"]),
                   {n: _need(sections, f"{prefix}second_stage.{n}") for n in _PARAM_NAMES})
    return TwoStageModel(
        _stage_config(cfg["two_stage"]),
        _need(sections, prefix + "centroids"),
        tuple(experts),
        g,
        Normalizer(_need(sections, prefix + "state_norm.lo"), _need(sections, prefix + "state_norm.hi")),
        Normalizer(_need(sections, prefix + "theta_norm.lo"), _need(sections, prefix + "theta_norm.hi")),
    )


def _basis_sections(basis, prefix):
    return {
        prefix + ".modes": basis.modes,
        prefix + ".singular_values": basis.singular_values,
        prefix + ".energy_ratio": np.array([basis.energy_ratio]),
        prefix + ".full_dim": np.array([basis.full_dim], dtype=np.int64),
    }


def _basis_from(sections, prefix):
    return PodBasis(
        _need(sections, prefix + ".modes"),
        _need(sections, prefix + ".singular_values"),
        float(_need(sections, prefix + ".energy_ratio")[0]),
        int(_need(sections, prefix + ".full_dim")[0]),
    )


def dumps(model, extra_config=None):
    """Archive bytes for a :class:`TwoStageModel` or :class:`PipelineModel`."""
    if isinstance(model, TwoStageModel):
        cfg = _two_stage_config(model)
        sections = _two_stage_sections(model)
        kind = "two_stage"
    elif isinstance(model, PipelineModel):
        pc = model.config
        cfg = {
            "pipeline": {
                "n_i": pc.n_i, "energy_target": pc.energy_target, "coeff_cap": pc.coeff_cap,
                "stride": pc.stride, "blocks": list(pc.blocks),
            },
            "model_1": _two_stage_config(model.model_1),
            "model_2": _two_stage_config(model.model_2),
        }
        sections = {}
        sections.update(_basis_sections(model.basis_1, "basis_1"))
        sections.update(_basis_sections(model.basis_2, "basis_2"))
        sections["M"] = model.M
        sections["n_i"] = np.array([model.n_i], dtype=np.int64)
        sections.update(_two_stage_sections(model.model_1, "model_1/"))
        sections.update(_two_stage_sections(model.model_2, "model_2/"))
        kind = "pipeline"
    else:
        raise TypeError(f"cannot archive {type(model).__name__}")
    if extra_config is not None:
        cfg["experiment"] = extra_config
    return pack(kind, sections, cfg)


def loads(raw):
    """Rebuild a model from archive bytes.  Returns (model, config echo)."""
    kind, sections, cfg = unpack(raw)
    if kind == "two_stage":
        return _two_stage_from(sections, cfg), cfg
    if kind == "pipeline":
        p = cfg["pipeline"]
        m1 = _two_stage_from(sections, cfg["model_1"], "model_1/")
        m2 = _two_stage_from(sections, cfg["model_2"], "model_2/")
        pc = PipelineConfig(n_i=p["n_i"], energy_target=p["energy_target"], coeff_cap=p["coeff_cap"],
                            stride=p["stride"], blocks=tuple(p["blocks"]),
                            model_1=m1.config, model_2=m2.config)
        model = PipelineModel(_basis_from(sections, "basis_1"), _basis_from(sections, "basis_2"),
                              m1, m2, _need(sections, "M"), int(_need(sections, "n_i")[0]), pc)
        return model, cfg
    raise ArchiveError(f"unknown archive kind {kind!r}")


def save(path, model, extra_config=None):
    data = dumps(model, extra_config)
    write_atomic(path, data)
    return _sha(data)


def load(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ArchiveError(f"cannot read archive {path}: {exc}") from exc
    return loads(raw)
