"""Input-addressed artifact store and checkpoint files.

Every artifact lives under a hash of the job description (kind + parameters
+ upstream addresses), so reruns with an unchanged configuration find their
results instead of recomputing them.  Writing different bytes to an existing
address aborts; writing identical bytes is an idempotent no-op.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import pickle
from pathlib import Path
from typing import Any, Callable

import numpy as np


class StoreError(RuntimeError):
    pass


class StoreCollisionError(StoreError):
    """Same address, different content; refuse to overwrite."""


def _canonical(obj: Any):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _canonical(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot canonicalize {type(obj).__name__} for addressing")


def canonical_json(obj: Any) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))


class ArtifactStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def address(self, kind: str, params: Any) -> str:
        text = canonical_json({"kind": kind, "params": params})
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def _dir(self, address: str) -> Path:
        return self.root / "objects" / address[:2] / address

    def has(self, address: str) -> bool:
        return (self._dir(address) / "payload.bin").exists()

    def put_bytes(self, address: str, data: bytes, manifest: Any = None) -> str:
        target = self._dir(address)
        payload = target / "payload.bin"
        if payload.exists():
            if payload.read_bytes() != data:
                raise StoreCollisionError(f"address {address} already holds different bytes")
            return address
        target.mkdir(parents=True, exist_ok=True)
        tmp = target / "payload.tmp"
        tmp.write_bytes(data)
        tmp.rename(payload)
        if manifest is not None:
            (target / "manifest.json").write_text(canonical_json(manifest))
        return address

    def get_bytes(self, address: str) -> bytes:
        payload = self._dir(address) / "payload.bin"
        if not payload.exists():
            raise StoreError(f"no artifact at address {address}")
        return payload.read_bytes()

    def memo(
        self, kind: str, params: Any, producer: Callable[[], Any]
    ) -> tuple[Any, bool]:
        """Fetch the artifact for (kind, params) or produce and store it.

        Returns ``(value, cache_hit)``.
        """
        address = self.address(kind, params)
        if self.has(address):
            return pickle.loads(self.get_bytes(address)), True
        value = producer()
        buf = io.BytesIO()
        pickle.dump(value, buf, protocol=4)
        self.put_bytes(address, buf.getvalue(), manifest={"kind": kind, "params": params})
        return value, False


# ---------------------------------------------------------------------------
# standalone checkpoint files (CLI artifacts)


def save_checkpoint(path, obj: Any, manifest: dict) -> None:
    """Opaque parameter blob plus a human-readable sidecar manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        pickle.dump({"object": obj, "manifest": manifest}, fh, protocol=4)
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[Any, dict]:
    with open(path, "rb") as fh:
        blob = pickle.load(fh)
    return blob["object"], blob["manifest"]
