"""Named parameter storage and the HGRP checkpoint format.

A checkpoint is two files sharing a stem:

``<stem>.json``
    manifest: ``{"format": "HGRP", "version": 1, "dtype": ..., "rng_seed": ...,
    "tensors": [{"name", "shape", "offset"}, ...]}`` where ``offset`` is the
    byte offset of the tensor inside the blob.
``<stem>.bin``
    ``b"HGRP"``, one version byte, one item-size byte, then every tensor's
    values as little-endian reals, row-major, in manifest order.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .tensor import Tensor, default_dtype

MAGIC = b"HGRP"
VERSION = 1
HEADER_BYTES = 6


class CheckpointError(ValueError):
    pass


class ParameterStore:
    """Ordered map from a dotted path (``"text.event_attn.W_e"``) to a leaf tensor."""

    def __init__(self, rng_seed=0, dtype=None):
        self.rng_seed = int(rng_seed)
        self.dtype = np.dtype(dtype or default_dtype())
        self._rng = np.random.default_rng(self.rng_seed)
        self._params: dict[str, Tensor] = {}

    # -- construction -------------------------------------------------------
    def add(self, name, shape, init="uniform", fan_in=None):
        """Create a parameter.

        ``init`` is ``"uniform"`` (U[-1/sqrt(fan_in), 1/sqrt(fan_in)], fan_in
        defaulting to the last dimension), ``"zeros"``, ``"ones"``, or an array.
        """
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"{name}: dimensions must be positive, got {shape}")
        if isinstance(init, np.ndarray):
            data = np.ascontiguousarray(init, dtype=self.dtype).reshape(shape)
        elif init == "uniform":
            bound = 1.0 / math.sqrt(fan_in or shape[-1])
            data = self._rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        elif init == "zeros":
            data = np.zeros(shape, dtype=self.dtype)
        elif init == "ones":
            data = np.ones(shape, dtype=self.dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def numel(self, prefix=""):
        return sum(t.data.size for n, t in self._params.items() if n.startswith(prefix))

    # -- gradients ----------------------------------------------------------
    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self):
        """Gradient per parameter; parameters the loss never touched get zeros."""
        return {n: (t.grad if t.grad is not None else np.zeros_like(t.data)) for n, t in self._params.items()}

    # -- copies / precision ---------------------------------------------------
    def astype(self, dtype):
        out = ParameterStore(self.rng_seed, dtype=dtype)
        for n, t in self._params.items():
            out._params[n] = Tensor(np.ascontiguousarray(t.data, dtype=dtype), requires_grad=True)
        return out

    def copy(self):
        return self.astype(self.dtype)

    def state(self):
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state):
        for n, arr in state.items():
            if n not in self._params or self._params[n].shape != arr.shape:
                raise CheckpointError(f"parameter {n!r} missing or shape mismatch")
            self._params[n].data = np.ascontiguousarray(arr, dtype=self.dtype)

    # -- serialization ------------------------------------------------------
    def save(self, stem):
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        le = self.dtype.newbyteorder("<")
        entries, chunks, offset = [], [], HEADER_BYTES
        for n, t in self._params.items():
            raw = np.ascontiguousarray(t.data, dtype=le).tobytes()
            entries.append({"name": n, "shape": list(t.shape), "offset": offset})
            chunks.append(raw)
            offset += len(raw)
        header = MAGIC + bytes([VERSION, self.dtype.itemsize])
        stem.with_suffix(".bin").write_bytes(header + b"".join(chunks))
        manifest = {
            "format": "HGRP",
            "version": VERSION,
            "dtype": self.dtype.name,
            "rng_seed": self.rng_seed,
            "tensors": entries,
        }
        stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        try:
            manifest = json.loads(stem.with_suffix(".json").read_text())
            blob = stem.with_suffix(".bin").read_bytes()
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {stem}: {exc}") from exc
        if blob[:4] != MAGIC:
            raise CheckpointError(f"{stem}.bin: bad magic {blob[:4]!r}, expected {MAGIC!r}")
        if len(blob) < HEADER_BYTES or blob[4] != VERSION:
            raise CheckpointError(f"{stem}.bin: unsupported version {blob[4] if len(blob) > 4 else None}")
        dtype = np.dtype(manifest.get("dtype", "float32"))
        if blob[5] != dtype.itemsize:
            raise CheckpointError(f"{stem}.bin: item size {blob[5]} disagrees with manifest dtype {dtype}")
        store = cls(manifest.get("rng_seed", 0), dtype=dtype)
        le = dtype.newbyteorder("<")
        end = HEADER_BYTES
        for e in manifest["tensors"]:
            shape = tuple(e["shape"])
            n = int(np.prod(shape)) * dtype.itemsize
            start = e["offset"]
            if start + n > len(blob):
                raise CheckpointError(f"{stem}.bin: truncated at tensor {e['name']!r} "
                                      f"(needs bytes {start}..{start + n}, file has {len(blob)})")
            arr = np.frombuffer(blob, dtype=le, count=n // dtype.itemsize, offset=start)
            store._params[e["name"]] = Tensor(arr.astype(dtype).reshape(shape), requires_grad=True)
            end = max(end, start + n)
        if end != len(blob):
            raise CheckpointError(f"{stem}.bin: {len(blob) - end} trailing bytes")
        return store
