"""Portable binary weight container.

Layout, bit-exact::

    offset 0   magic           4 bytes  "S4DC" (0x53 0x34 0x44 0x43)
    offset 4   version         u32 little-endian (currently 1)
    offset 8   manifest length u64 little-endian
    offset 16  manifest        UTF-8 JSON
    ...        payload         contiguous tensor data

The manifest holds the model configuration and a tensor index: name, shape,
dtype, byte offset (relative to the payload start) and byte length. Real
tensors are 32-bit IEEE-754 little-endian; complex tensors are interleaved
real/imag 32-bit pairs ("c64").

Tensor name schema (N = ssm_order, c = channels, E = embedding dim)::

    expand.weight (c,1)            expand.bias (c,)
    blocks.{i}.mix.weight (c,c)    blocks.{i}.mix.bias (c,)
    blocks.{i}.prelu1.a (c,)       blocks.{i}.prelu2.a (c,)
    blocks.{i}.ssm.lambda (c,N) c64    blocks.{i}.ssm.b (c,N) c64
    blocks.{i}.ssm.c (c,N) c64    blocks.{i}.ssm.d (c,)    blocks.{i}.ssm.dt (c,)
    blocks.{i}.norm.scale (c,)     blocks.{i}.norm.shift (c,)     [folded form]
      -- or raw statistics, folded at load time:
    blocks.{i}.norm.mean (c,)      blocks.{i}.norm.var (c,)
    blocks.{i}.norm.weight (c,)    blocks.{i}.norm.bias (c,)
    blocks.{i}.film.weight (2c,E)  blocks.{i}.film.bias (2c,)
    control_mlp.{0,1,2}.weight     control_mlp.{0,1,2}.bias
    control_mlp.{0,1}.prelu (16,)
    contract.weight (1,c)          contract.bias (1,)

A container may carry either the folded normalization affine or the raw
BatchNorm statistics (mean, var, weight, bias, plus ``bn_eps`` in the
manifest). When both are present the loader folds the raw statistics and
requires agreement with the stored affine.
"""

import json
from typing import Dict, List, Tuple

import numpy as np

from . import ssm
from .errors import (
    BadMagicError,
    CorruptManifestError,
    MissingTensorError,
    ShapeMismatchError,
    UnsupportedVersionError,
)
from .model import CONTROL_HIDDEN, BlockWeights, ModelConfig, ModelWeights

MAGIC = b"S4DC"
VERSION = 1
DEFAULT_BN_EPS = 1e-5

_HEADER = 16  # magic + version + manifest length

_CONFIG_KEYS = ("num_blocks", "channels", "ssm_order", "control_dim",
                "control_embedding_dim", "sample_rate")

_DTYPES = {"f32": np.dtype("<f4"), "c64": np.dtype("<c8")}


def tensor_layout(config: ModelConfig, norm: str = "folded") -> List[Tuple[str, tuple, str]]:
    """Documented (name, shape, dtype) list in canonical container order."""
    c, n, e = config.channels, config.ssm_order, config.control_embedding_dim
    items = [("expand.weight", (c, 1), "f32"), ("expand.bias", (c,), "f32")]
    for i in range(config.num_blocks):
        p = f"blocks.{i}."
        items += [
            (p + "mix.weight", (c, c), "f32"),
            (p + "mix.bias", (c,), "f32"),
            (p + "prelu1.a", (c,), "f32"),
            (p + "ssm.lambda", (c, n), "c64"),
            (p + "ssm.b", (c, n), "c64"),
            (p + "ssm.c", (c, n), "c64"),
            (p + "ssm.d", (c,), "f32"),
            (p + "ssm.dt", (c,), "f32"),
        ]
        if norm == "folded":
            items += [(p + "norm.scale", (c,), "f32"),
                      (p + "norm.shift", (c,), "f32")]
        else:
            items += [(p + "norm.mean", (c,), "f32"),
                      (p + "norm.var", (c,), "f32"),
                      (p + "norm.weight", (c,), "f32"),
                      (p + "norm.bias", (c,), "f32")]
        items += [
            (p + "film.weight", (2 * c, e), "f32"),
            (p + "film.bias", (2 * c,), "f32"),
            (p + "prelu2.a", (c,), "f32"),
        ]
    dims = [(CONTROL_HIDDEN, config.control_dim),
            (CONTROL_HIDDEN, CONTROL_HIDDEN), (e, CONTROL_HIDDEN)]
    for i, (out_d, in_d) in enumerate(dims):
        items += [(f"control_mlp.{i}.weight", (out_d, in_d), "f32"),
                  (f"control_mlp.{i}.bias", (out_d,), "f32")]
        if i < 2:
            items.append((f"control_mlp.{i}.prelu", (CONTROL_HIDDEN,), "f32"))
    items += [("contract.weight", (1, c), "f32"), ("contract.bias", (1,), "f32")]
    return items


def write_container(config: ModelConfig, tensors: Dict[str, np.ndarray],
                    bn_eps: float = None) -> bytes:
    """Serialize a name->array dict in its iteration order. Low-level writer."""
    index = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype = "c64" if np.iscomplexobj(arr) else "f32"
        raw = arr.astype(_DTYPES[dtype]).tobytes(order="C")
        index.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                      "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"config": {k: getattr(config, k) for k in _CONFIG_KEYS},
                "tensors": index}
    if bn_eps is not None:
        manifest["bn_eps"] = bn_eps
    mbytes = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    header = MAGIC + VERSION.to_bytes(4, "little") + len(mbytes).to_bytes(8, "little")
    return b"".join([header, mbytes] + chunks)


def read_container(data: bytes):
    """Parse the binary format. Returns (config, tensors dict, bn_eps or None).

    Validates structure only; layout completeness is the loader's job.
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not a weight container (bad magic)")
    if len(data) < _HEADER:
        raise CorruptManifestError("truncated header")
    version = int.from_bytes(data[4:8], "little")
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version}, expected {VERSION}")
    mlen = int.from_bytes(data[8:16], "little")
    if _HEADER + mlen > len(data):
        raise CorruptManifestError("manifest extends past end of file")
    try:
        manifest = json.loads(data[_HEADER:_HEADER + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptManifestError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict) or "config" not in manifest or "tensors" not in manifest:
        raise CorruptManifestError("manifest missing 'config' or 'tensors'")
    try:
        config = ModelConfig(**{k: int(manifest["config"][k]) for k in _CONFIG_KEYS})
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifestError(f"bad config: {exc}") from None

    payload = data[_HEADER + mlen:]
    tensors = {}
    for entry in manifest["tensors"]:
        try:
            name, shape = entry["name"], tuple(int(s) for s in entry["shape"])
            dtype, offset, nbytes = entry["dtype"], int(entry["offset"]), int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptManifestError(f"bad tensor entry: {exc}") from None
        if name in tensors:
            raise CorruptManifestError(f"duplicate tensor {name!r}")
        if dtype not in _DTYPES:
            raise CorruptManifestError(f"{name}: unknown dtype {dtype!r}")
        if offset < 0 or nbytes < 0 or offset + nbytes > len(payload):
            raise CorruptManifestError(f"{name}: data outside payload")
        if nbytes != int(np.prod(shape)) * _DTYPES[dtype].itemsize:
            raise CorruptManifestError(f"{name}: byte length disagrees with shape")
        arr = np.frombuffer(payload, dtype=_DTYPES[dtype], count=int(np.prod(shape)),
                            offset=offset).reshape(shape)
        tensors[name] = arr
    bn_eps = manifest.get("bn_eps")
    return config, tensors, None if bn_eps is None else float(bn_eps)


def fold_norm_stats(mean, var, weight, bias, eps):
    """Collapse BatchNorm inference statistics to a per-channel affine."""
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    scale = weight / np.sqrt(var + eps)
    shift = bias - mean * scale
    return scale.astype(np.float32), shift.astype(np.float32)


def load(data: bytes) -> ModelWeights:
    """Parse, validate, fold normalization statistics, and build ModelWeights.

    Raises BadMagicError, UnsupportedVersionError, CorruptManifestError,
    MissingTensorError or ShapeMismatchError; never returns a partially
    initialized model.
    """
    config, tensors, bn_eps = read_container(data)
    eps = DEFAULT_BN_EPS if bn_eps is None else bn_eps

    expected = {name: (shape, dtype)
                for name, shape, dtype in tensor_layout(config, norm="folded")}
    raw_only = {name: (shape, dtype)
                for name, shape, dtype in tensor_layout(config, norm="raw")
                if name not in expected}
    for name, arr in tensors.items():
        spec = expected.get(name) or raw_only.get(name)
        if spec is None:
            raise CorruptManifestError(f"unexpected tensor {name!r}")
        if arr.shape != spec[0]:
            raise ShapeMismatchError(
                f"{name}: expected shape {spec[0]}, got {arr.shape}")

    resolved = dict(tensors)
    for i in range(config.num_blocks):
        p = f"blocks.{i}.norm."
        raw_names = [p + s for s in ("mean", "var", "weight", "bias")]
        has_raw = all(n in tensors for n in raw_names)
        has_folded = p + "scale" in tensors and p + "shift" in tensors
        if not has_raw and not has_folded:
            missing = p + "scale" if p + "shift" in tensors else p + "mean/.scale"
            raise MissingTensorError(f"block {i}: no normalization tensors ({missing})")
        if has_raw:
            scale, shift = fold_norm_stats(*(tensors[n] for n in raw_names), eps=eps)
            if has_folded and not (
                    np.allclose(scale, tensors[p + "scale"], rtol=1e-5, atol=1e-6)
                    and np.allclose(shift, tensors[p + "shift"], rtol=1e-5, atol=1e-6)):
                raise CorruptManifestError(
                    f"block {i}: raw norm statistics disagree with stored affine")
            resolved[p + "scale"] = scale
            resolved[p + "shift"] = shift
        for n in raw_names:
            resolved.pop(n, None)

    for name in expected:
        if name not in resolved:
            raise MissingTensorError(f"missing tensor {name!r}")
    return _weights_from_tensors(config, resolved)


def save(weights: ModelWeights) -> bytes:
    """Serialize ModelWeights (folded normalization form). load() inverts it."""
    return write_container(weights.config, tensors_from_weights(weights))


def tensors_from_weights(weights: ModelWeights) -> Dict[str, np.ndarray]:
    """Canonical name->array dict matching tensor_layout(config, "folded")."""
    out = {"expand.weight": weights.expand_w, "expand.bias": weights.expand_b}
    for i, bw in enumerate(weights.blocks):
        p = f"blocks.{i}."
        out[p + "mix.weight"] = bw.mix_w
        out[p + "mix.bias"] = bw.mix_b
        out[p + "prelu1.a"] = bw.prelu1_a
        out[p + "ssm.lambda"] = bw.ssm.lam
        out[p + "ssm.b"] = bw.ssm.b
        out[p + "ssm.c"] = bw.ssm.c
        out[p + "ssm.d"] = bw.ssm.d
        out[p + "ssm.dt"] = bw.ssm.dt
        out[p + "norm.scale"] = bw.norm_scale
        out[p + "norm.shift"] = bw.norm_shift
        out[p + "film.weight"] = bw.film_w
        out[p + "film.bias"] = bw.film_b
        out[p + "prelu2.a"] = bw.prelu2_a
    for i in range(3):
        out[f"control_mlp.{i}.weight"] = weights.control_w[i]
        out[f"control_mlp.{i}.bias"] = weights.control_b[i]
        if i < 2:
            out[f"control_mlp.{i}.prelu"] = weights.control_prelu[i]
    out["contract.weight"] = weights.contract_w
    out["contract.bias"] = weights.contract_b
    return out


def _weights_from_tensors(config: ModelConfig, t: Dict[str, np.ndarray]) -> ModelWeights:
    blocks = []
    for i in range(config.num_blocks):
        p = f"blocks.{i}."
        coeffs = ssm.SsmCoefficients(
            lam=t[p + "ssm.lambda"], b=t[p + "ssm.b"], c=t[p + "ssm.c"],
            d=t[p + "ssm.d"], dt=t[p + "ssm.dt"])
        blocks.append(BlockWeights(
            mix_w=t[p + "mix.weight"], mix_b=t[p + "mix.bias"],
            prelu1_a=t[p + "prelu1.a"], ssm=coeffs,
            norm_scale=t[p + "norm.scale"], norm_shift=t[p + "norm.shift"],
            film_w=t[p + "film.weight"], film_b=t[p + "film.bias"],
            prelu2_a=t[p + "prelu2.a"]))
    return ModelWeights(
        config=config,
        expand_w=t["expand.weight"], expand_b=t["expand.bias"],
        blocks=tuple(blocks),
        control_w=tuple(t[f"control_mlp.{i}.weight"] for i in range(3)),
        control_b=tuple(t[f"control_mlp.{i}.bias"] for i in range(3)),
        control_prelu=tuple(t[f"control_mlp.{i}.prelu"] for i in range(2)),
        contract_w=t["contract.weight"], contract_b=t["contract.bias"])


def count_params(weights: ModelWeights) -> int:
    """Scalar parameter count under the documented convention.

    Complex scalars count as 2; folded normalization contributes 2c per
    block; poles, input vectors and step sizes all count (the trainable set
    of a standard diagonal SSM layer).
    """
    total = 0
    for _, shape, dtype in tensor_layout(weights.config, norm="folded"):
        total += int(np.prod(shape)) * (2 if dtype == "c64" else 1)
    return total
