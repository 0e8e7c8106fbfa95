"""File formats: KST1 binary arrays, key=value run configs, fixed-precision CSV.

KST1 layout (all integers little-endian):

    offset 0   4 bytes  magic b"KST1"
    offset 4   1 byte   dtype code (0 = float64, 1 = complex128 as re/im pairs)
    offset 5   1 byte   order (0 = row-major)
    offset 6   2 bytes  reserved, zero
    offset 8   u64      ndim (>= 1)
    offset 16  ndim*u64 dims
    then       payload, little-endian
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .errors import FormatError, InvalidInputError

MAGIC = b"KST1"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype("float64"): 0, np.dtype("complex128"): 1}


def write_array(path, arr) -> None:
    a = np.asarray(arr)
    if a.ndim == 0:
        raise InvalidInputError("0-d arrays are not supported (ndim >= 1)")
    if a.dtype.kind in "biu":
        a = a.astype(np.float64)
    code = _CODES.get(np.dtype(a.dtype).newbyteorder("="))
    if code is None:
        raise InvalidInputError(f"unsupported dtype {a.dtype}")
    data = np.ascontiguousarray(a, dtype=_DTYPES[code])
    header = MAGIC + struct.pack("<BBH", code, 0, 0) + struct.pack("<Q", a.ndim)
    header += struct.pack(f"<{a.ndim}Q", *a.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    code, order, _ = struct.unpack("<BBH", raw[4:8])
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if order != 0:
        raise FormatError(f"{path}: unsupported order {order}")
    (ndim,) = struct.unpack("<Q", raw[8:16])
    if ndim < 1:
        raise FormatError(f"{path}: ndim must be >= 1")
    end = 16 + 8 * ndim
    if len(raw) < end:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack(f"<{ndim}Q", raw[16:end])
    dt = _DTYPES[code]
    n_bytes = math.prod(dims) * dt.itemsize
    if len(raw) - end != n_bytes:
        raise FormatError(f"{path}: payload has {len(raw) - end} bytes, expected {n_bytes}")
    out = np.frombuffer(raw, dtype=dt, offset=end, count=math.prod(dims)).reshape(dims)
    return out.astype(dt.newbyteorder("="))


def write_sparse(prefix, M) -> None:
    """CSR matrix as three KST1 files: <prefix>.indptr/.indices/.data."""
    csr = M.csr if hasattr(M, "csr") else sps.csr_matrix(M)
    shape = np.array(csr.shape, dtype=float)
    write_array(f"{prefix}.shape.kst", shape)
    write_array(f"{prefix}.indptr.kst", csr.indptr.astype(float))
    write_array(f"{prefix}.indices.kst", csr.indices.astype(float))
    write_array(f"{prefix}.data.kst", csr.data.astype(complex))


def read_sparse(prefix) -> sps.csr_matrix:
    shape = tuple(int(v) for v in read_array(f"{prefix}.shape.kst"))
    indptr = read_array(f"{prefix}.indptr.kst").astype(np.int64)
    indices = read_array(f"{prefix}.indices.kst").astype(np.int64)
    data = read_array(f"{prefix}.data.kst")
    return sps.csr_matrix((data, indices, indptr), shape=shape)


# ---------------------------------------------------------------------------
# run configuration

_SCHEMA: dict[str, tuple[type, object]] = {
    "flow": (str, "moving"),
    "omega": (float, 1.0),
    "kappa": (float, 0.5),
    "C": (float, 1.0),
    "zeta_scale": (float, None),
    "ell_A": (int, 8),
    "ell_X1": (int, 8),
    "ell_X2": (int, 8),
    "ell_v": (int, None),
    "theta": (float, 1e-5),
    "n_eig": (int, 51),
    "target": (str, "sm"),
    "J": (int, 20),
    "F": (float, 4.0),
    "tau": (float, 0.01),
    "n_samples": (int, 16000),
    "spinup": (float, 5000.0),
    "n_basis": (int, 51),
    "dirichlet_option": (int, 3),
    "eps": (float, None),
    "k_nn_density": (int, 8),
    "k_nn_graph": (int, None),
    "tol": (float, 1e-7),
    "tilde_tau": (float, 0.01),
    "n_steps": (int, 100),
    "kappa_tilde": (float, 4.0),
    "xbar1": (float, math.pi),
    "xbar2": (float, math.pi / 4),
    "a_center": (float, 0.0),
    "observable": (str, "f2"),
    "n_grid": (int, 65),
    "n_bins": (int, 65),
    "M": (int, 50000),
    "seed": (int, 0),
    "snapshots": (str, None),
    "basis_dir": (str, None),
    "antisymmetrize": (bool, False),
}


def _parse_value(key, text):
    typ = _SCHEMA[key][0]
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    try:
        if typ is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError as exc:
        raise InvalidInputError(f"bad value for {key}: {text!r}") from exc


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({k: v for k, (_, v) in _SCHEMA.items()})

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "RunConfig":
        cfg = cls.defaults()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{source}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg.set(k, v)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(), source=str(path))

    def set(self, key: str, text: str) -> None:
        if key not in _SCHEMA:
            raise InvalidInputError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, text)

    def __getitem__(self, key):
        return self.values[key]

    def dumps(self) -> str:
        lines = []
        for k in _SCHEMA:
            v = self.values.get(k)
            lines.append(f"{k} = {'none' if v is None else format_value(v)}")
        return "\n".join(lines) + "\n"


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    """CSV with floats at 17 significant digits (round-trip exact)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
