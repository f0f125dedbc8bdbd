"""On-disk container for generated adversarial examples.

Little-endian layout: magic "TAKS", version u8 = 1, dtype u8 (0 = f32,
1 = u8), u32 count, u32 dim, u32 attack-name length + UTF-8 name, u32
config-JSON length + bytes, payload N x D, then N u32 labels. Labels
and provenance travel with the examples so an archive is evaluable on
its own.
"""

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, AttackOutcome, finalize_return
from .errors import FileFormatError
from .ops import ExampleBatch, LabelBatch

ARCHIVE_MAGIC = b"TAKS"
ARCHIVE_VERSION = 1
_DTYPE_F32 = 0
_DTYPE_U8 = 1


@dataclass(frozen=True)
class AdversarialArchive:
    """Decoded archive: payload (f32 in [0,1] or raw bytes), labels, provenance."""

    examples: np.ndarray
    labels: LabelBatch
    attack_name: str
    config: dict

    @property
    def n(self) -> int:
        return self.examples.shape[0]

    @property
    def d(self) -> int:
        return self.examples.shape[1]

    def as_float_batch(self) -> ExampleBatch:
        """Examples mapped back to [0, 1] floats (b / 255 for int archives)."""
        if self.examples.dtype == np.uint8:
            return ExampleBatch(self.examples.astype(np.float32) / np.float32(255.0))
        return ExampleBatch(self.examples)


def config_json(attack_name: str, cfg: AttackConfig) -> bytes:
    """Stable-key-order JSON echo of an attack invocation."""
    payload = {"attack": attack_name, **cfg.to_dict()}
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def save_archive(outcome: AttackOutcome, labels: LabelBatch, attack_name: str,
                 cfg: AttackConfig, path) -> None:
    """Write the outcome's adversarial batch per the config's return type.

    Int-typed archives store exactly the finalize_return bytes; no
    second conversion happens on load beyond b / 255.
    """
    payload = finalize_return(outcome.adversarial, cfg.return_type)
    if labels.n != payload.shape[0]:
        raise ValueError(f"got {labels.n} labels for {payload.shape[0]} examples")
    buf = io.BytesIO()
    buf.write(ARCHIVE_MAGIC)
    dtype_code = _DTYPE_U8 if payload.dtype == np.uint8 else _DTYPE_F32
    buf.write(struct.pack("<BB", ARCHIVE_VERSION, dtype_code))
    buf.write(struct.pack("<II", payload.shape[0], payload.shape[1]))
    name_bytes = attack_name.encode("utf-8")
    buf.write(struct.pack("<I", len(name_bytes)))
    buf.write(name_bytes)
    cfg_bytes = config_json(attack_name, cfg)
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    if dtype_code == _DTYPE_U8:
        buf.write(np.ascontiguousarray(payload, dtype=np.uint8).tobytes())
    else:
        buf.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(labels.labels, dtype="<u4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FileFormatError("unexpected end of file")
    return buf


def load_archive(path) -> AdversarialArchive:
    """Read an archive; round-trips save_archive bitwise."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != ARCHIVE_MAGIC:
            raise FileFormatError("not an adversarial archive (bad magic)")
        version, dtype_code = struct.unpack("<BB", _read_exact(f, 2))
        if version != ARCHIVE_VERSION:
            raise FileFormatError(f"unsupported archive version {version}")
        if dtype_code not in (_DTYPE_F32, _DTYPE_U8):
            raise FileFormatError(f"bad dtype code {dtype_code}")
        n, d = struct.unpack("<II", _read_exact(f, 8))
        (name_len,) = struct.unpack("<I", _read_exact(f, 4))
        attack_name = _read_exact(f, name_len).decode("utf-8")
        (cfg_len,) = struct.unpack("<I", _read_exact(f, 4))
        try:
            config = json.loads(_read_exact(f, cfg_len).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"bad config JSON: {exc}") from exc
        if dtype_code == _DTYPE_U8:
            examples = np.frombuffer(_read_exact(f, n * d), dtype=np.uint8)
        else:
            examples = np.frombuffer(_read_exact(f, 4 * n * d), dtype="<f4")
        examples = examples.reshape(n, d).copy()
        labels = np.frombuffer(_read_exact(f, 4 * n), dtype="<u4").astype(np.int64)
        trailing = f.read(1)
        if trailing:
            raise FileFormatError("trailing bytes after archive payload")
    return AdversarialArchive(examples, LabelBatch(labels), attack_name, config)
