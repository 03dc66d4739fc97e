"""
ModelArchive: directory holding ``model.json`` plus one raw blob per tensor.

布局：
    <dir>/model.json          排序后的 JSON（无时间戳），含 arch、tensor 列表、quantizer 元数据与 digest
    <dir>/blobs/<name>.bin    little-endian float32，字节数 = 4 × 元素个数

load 依次检查：format_version → blob 长度 → digest，然后按 arch 重建 graph。
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from acq_core.fingerprints import hash_arrays
from acq_core.nn.graph import LayerGraph
from acq_core.nn.zoo import rebuild_target_net
from acq_core.utils.logger import debug
from acq_pipeline.errors import ArchiveDigestError, ArchiveTruncatedError, ArchiveVersionError
from acq_pipeline.processors.generator import rebuild_generator
from acq_pipeline.processors.quantizer.impl import QuantizerState, attach_quantizers, quantizer_states

FORMAT_VERSION = 1
MANIFEST_NAME = "model.json"
BLOB_DTYPE = np.dtype("<f4")


def _blob_name(name: str) -> str:
    return f"blobs/{name}.bin"


def _collect(graph: LayerGraph) -> Tuple[List[Tuple[str, np.ndarray]], List[Dict[str, Any]]]:
    """(name, array) for parameters, buffers and quantizer arrays, plus quantizer metadata."""
    named = sorted(graph.state_dict().items())
    quantizers = []
    for site, state in quantizer_states(graph).items():
        quantizers.append(state.to_dict())
        for key, value in sorted(state.arrays().items()):
            named.append((f"quant.{site}.{key}", value))
    return named, quantizers


def save_model(graph: LayerGraph, path: str | Path) -> Path:
    """Write ``graph`` (with quantizer states, if any) to an archive directory."""
    root = Path(path)
    (root / "blobs").mkdir(parents=True, exist_ok=True)
    named, quantizers = _collect(graph)
    tensors = []
    for name, value in named:
        arr = np.ascontiguousarray(value, dtype=BLOB_DTYPE)
        (root / _blob_name(name)).write_bytes(arr.tobytes())
        tensors.append({"name": name, "shape": list(arr.shape), "file": _blob_name(name)})
    manifest = {
        "format_version": FORMAT_VERSION,
        "arch": graph.arch,
        "mode": graph.mode,
        "tensors": tensors,
        "bn_layers": [bn.name for bn in graph.bn_layers()],
        "quantizers": quantizers,
        "digest": hash_arrays((n, np.asarray(v, dtype=BLOB_DTYPE)) for n, v in named),
    }
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    debug(f"save_model: {len(tensors)} tensors → {root}")
    return root


def read_manifest(path: str | Path) -> Dict[str, Any]:
    file = Path(path) / MANIFEST_NAME
    if not file.exists():
        raise FileNotFoundError(f"Model archive manifest not found: {file}")
    with open(file, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveVersionError(f"{file}: format_version {version!r}, this build reads {FORMAT_VERSION}")
    return manifest


def _read_blobs(root: Path, manifest: Dict[str, Any]) -> List[Tuple[str, np.ndarray]]:
    named = []
    for entry in manifest["tensors"]:
        blob = root / entry["file"]
        if not blob.exists():
            raise ArchiveTruncatedError(f"missing blob {entry['file']}")
        expected = 4 * int(np.prod(entry["shape"], dtype=np.int64))
        raw = blob.read_bytes()
        if len(raw) != expected:
            raise ArchiveTruncatedError(f"{entry['file']}: {len(raw)} bytes, expected {expected}")
        named.append((entry["name"], np.frombuffer(raw, dtype=BLOB_DTYPE).reshape(entry["shape"]).astype(np.float32)))
    return named


def rebuild_graph(arch: Dict[str, Any]) -> LayerGraph:
    kind = arch.get("kind")
    if kind == "target":
        return rebuild_target_net(arch)
    if kind == "generator":
        return rebuild_generator(arch)
    raise ValueError(f"unknown archive arch kind {kind!r}")


def load_model(path: str | Path) -> LayerGraph:
    """Rebuild the archived graph; parameters, stored stats and quantizers are bit-identical."""
    root = Path(path)
    manifest = read_manifest(root)
    named = _read_blobs(root, manifest)
    if hash_arrays(named) != manifest.get("digest"):
        raise ArchiveDigestError(f"{root}: blob contents do not match the manifest digest")

    graph = rebuild_graph(manifest["arch"])
    graph.arch = manifest["arch"]
    graph.mode = manifest.get("mode", graph.mode)
    values = dict(named)
    graph.load_state_dict({k: v for k, v in values.items() if not k.startswith("quant.")})

    if manifest["quantizers"]:
        states = {}
        for meta in manifest["quantizers"]:
            prefix = f"quant.{meta['site']}."
            arrays = {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}
            states[meta["site"]] = QuantizerState.from_parts(meta, arrays)
        attach_quantizers(graph, states)
    if manifest["arch"].get("kind") == "target" and "quantized" not in manifest["arch"] and graph.mode == "eval":
        graph.freeze()
    debug(f"load_model: {root} ({len(named)} tensors)")
    return graph


def archive_digest(path: str | Path) -> str:
    return read_manifest(path)["digest"]
