"""Core raster and point-set types plus bit-exact file I/O.

Conventions used throughout the package:

* Grids are stored row-major with the last axis fastest.  2D dims are
  (height, width), 3D dims are (depth, height, width).
* Continuous point coordinates are (x, y) or (x, y, z) in pixel units,
  where x = column, y = row, z = slice, and the origin sits at the
  center of the first pixel.  The grid index (r, c) therefore maps to
  the point (x=c, y=r) and back.
* Covariance matrices are expressed on the point axes (x, y[, z]).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "DensityMap",
    "PointSet",
    "KernelSpec",
    "ManifestEntry",
    "DatasetManifest",
    "make_kernel",
    "points_to_indices",
    "indices_to_points",
    "read_density_map",
    "write_density_map",
    "read_points",
    "write_points",
    "read_manifest",
    "write_manifest",
]

DMAP_MAGIC = b"DMAP"
DMAP_VERSION = 1

# Near-singular covariances produce absurd peak densities; reject early.
MAX_KERNEL_CONDITION = 1e8


class FormatError(ValueError):
    """Raised when an on-disk artifact violates one of the file formats."""


@dataclass(frozen=True, eq=False)
class DensityMap:
    """Non-negative scalar raster over a 2D or 3D grid.

    ``values`` is a read-only float32 array of shape ``dims``.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim not in (2, 3):
            raise ValueError(f"density map must be 2D or 3D, got {arr.ndim}D")
        if any(n <= 0 for n in arr.shape):
            raise ValueError(f"density map dims must be positive, got {arr.shape}")
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ValueError(f"non-finite density value at flat index {idx}")
        neg = arr < 0
        if neg.any():
            idx = int(np.flatnonzero(neg)[0])
            raise ValueError(f"negative density value at flat index {idx}")
        arr = arr.copy() if not arr.flags.owndata or arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    def total(self) -> float:
        """Sum of all values in float64, fixed raster order."""
        return float(self.values.sum(dtype=np.float64))


@dataclass(frozen=True, eq=False)
class PointSet:
    """Continuous (x, y[, z]) coordinates in pixel units."""

    coords: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise ValueError(
                f"coords must have shape (n, 2) or (n, 3), got {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("point coordinates must be finite")
        arr = arr.copy() if not arr.flags.owndata or arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @classmethod
    def empty(cls, ndim: int) -> "PointSet":
        return cls(np.zeros((0, ndim), dtype=np.float64))

    @property
    def ndim(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Shared Gaussian covariance for every kernel in a density map.

    ``sigma`` is a d x d symmetric positive-definite matrix in pixel^2
    units on the point axes (x, y[, z]).
    """

    sigma: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.sigma, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] not in (2, 3):
            raise ValueError(f"sigma must be 2x2 or 3x3, got shape {arr.shape}")
        scale = float(np.abs(arr).max())
        if scale == 0 or not np.isfinite(arr).all():
            raise ValueError("sigma must be finite and nonzero")
        if np.abs(arr - arr.T).max() > 1e-9 * scale:
            raise ValueError("sigma must be symmetric")
        arr = (arr + arr.T) / 2.0
        eigvals = np.linalg.eigvalsh(arr)
        if eigvals.min() <= 0:
            raise ValueError("sigma must be positive definite")
        if eigvals.max() / eigvals.min() > MAX_KERNEL_CONDITION:
            raise ValueError(
                f"sigma condition number {eigvals.max() / eigvals.min():.3g} "
                f"exceeds {MAX_KERNEL_CONDITION:.0e}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "sigma", arr)

    @classmethod
    def isotropic(cls, sigma: float, ndim: int) -> "KernelSpec":
        return cls(np.eye(ndim) * float(sigma) ** 2)

    @classmethod
    def diagonal(cls, stds) -> "KernelSpec":
        stds = np.asarray(stds, dtype=np.float64)
        return cls(np.diag(stds**2))

    @property
    def ndim(self) -> int:
        return self.sigma.shape[0]

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.linalg.inv(self.sigma)
        inv.setflags(write=False)
        return inv

    @cached_property
    def det(self) -> float:
        return float(np.linalg.det(self.sigma))

    @cached_property
    def axis_stds(self) -> np.ndarray:
        """Per-axis standard deviations, sqrt of the diagonal (x, y[, z])."""
        out = np.sqrt(np.diag(self.sigma))
        out.setflags(write=False)
        return out

    @property
    def sigma_scale(self) -> float:
        """Largest principal standard deviation, used as the scene length unit."""
        return float(math.sqrt(np.linalg.eigvalsh(self.sigma).max()))

    def peak_density(self) -> float:
        d = self.ndim
        return (2 * math.pi) ** (-d / 2) / math.sqrt(self.det)


def make_kernel(ndim: int, sigma: float, sigma_z: float | None = None) -> KernelSpec:
    """Build an isotropic kernel, optionally with a distinct z std (3D)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if ndim == 2:
        return KernelSpec.isotropic(sigma, 2)
    if sigma_z is None:
        sigma_z = sigma
    if sigma_z <= 0:
        raise ValueError("sigma_z must be positive")
    return KernelSpec.diagonal([sigma, sigma, sigma_z])


def points_to_indices(coords: np.ndarray) -> np.ndarray:
    """(x, y[, z]) coordinates -> grid-axis coordinates ([z,] y, x) order."""
    return np.asarray(coords, dtype=np.float64)[:, ::-1]


def indices_to_points(indices: np.ndarray) -> np.ndarray:
    """Grid-axis coordinates ([z,] y, x) -> (x, y[, z]) coordinates."""
    return np.asarray(indices, dtype=np.float64)[:, ::-1]


# ---------------------------------------------------------------------------
# DMAP binary format
#
# bytes 0-3   magic "DMAP"
# byte  4     version (1)
# byte  5     ndim (2 or 3)
# bytes 6-7   reserved, written as zero
# then        ndim little-endian u32 dims (2D: h,w; 3D: d,h,w)
# then        prod(dims) little-endian float32 values, row-major
# ---------------------------------------------------------------------------


def write_density_map(dmap: DensityMap, path) -> None:
    path = Path(path)
    header = DMAP_MAGIC + bytes([DMAP_VERSION, dmap.ndim, 0, 0])
    dims = struct.pack(f"<{dmap.ndim}I", *dmap.dims)
    payload = np.ascontiguousarray(dmap.values, dtype="<f4").tobytes()
    path.write_bytes(header + dims + payload)


def read_density_map(path) -> DensityMap:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header, got {len(blob)} bytes")
    if blob[:4] != DMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r} at offset 0")
    version = blob[4]
    if version != DMAP_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    ndim = blob[5]
    if ndim not in (2, 3):
        raise FormatError(f"{path}: unsupported ndim {ndim} at offset 5")
    dims_end = 8 + 4 * ndim
    if len(blob) < dims_end:
        raise FormatError(f"{path}: truncated dims, got {len(blob)} bytes")
    dims = struct.unpack(f"<{ndim}I", blob[8:dims_end])
    if any(n == 0 for n in dims):
        raise FormatError(f"{path}: zero dimension in {dims} at offset 8")
    n_values = int(np.prod(dims, dtype=np.int64))
    expected = dims_end + 4 * n_values
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, "
            f"got {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=dims_end).reshape(dims)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise FormatError(f"{path}: non-finite value at index {idx}")
    neg = values < 0
    if neg.any():
        idx = int(np.flatnonzero(neg)[0])
        raise FormatError(f"{path}: negative value at index {idx}")
    return DensityMap(values)


# ---------------------------------------------------------------------------
# Points CSV: header "x,y" or "x,y,z", one point per line, decimal floats.
# Written with 9 significant digits.
# ---------------------------------------------------------------------------


def write_points(points: PointSet, path) -> None:
    path = Path(path)
    header = "x,y" if points.ndim == 2 else "x,y,z"
    lines = [header]
    for row in points.coords:
        lines.append(",".join(f"{v:.9g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_points(path) -> PointSet:
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, expected a header at line 1")
    header = lines[0].strip()
    if header == "x,y":
        ndim = 2
    elif header == "x,y,z":
        ndim = 3
    else:
        raise FormatError(f"{path}: bad header {header!r} at line 1")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != ndim:
            raise FormatError(
                f"{path}: expected {ndim} fields at line {lineno}, got {len(fields)}"
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise FormatError(f"{path}: non-numeric field at line {lineno}") from None
    if not rows:
        return PointSet.empty(ndim)
    return PointSet(np.array(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# Dataset manifest: tab-separated id, gt_points, gt_density, pred_density.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    gt_points_path: Path
    gt_density_path: Path
    pred_density_path: Path


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple = field(default_factory=tuple)

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValueError(f"duplicate manifest id {dup!r}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    lines = ["# id\tgt_points\tgt_density\tpred_density"]
    for e in manifest.entries:
        lines.append(
            f"{e.id}\t{e.gt_points_path}\t{e.gt_density_path}\t{e.pred_density_path}"
        )
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    """Parse a manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(
                f"{path}: expected 4 tab-separated fields at line {lineno}, "
                f"got {len(fields)}"
            )
        def resolve(p: str) -> Path:
            q = Path(p)
            return q if q.is_absolute() else base / q
        entries.append(
            ManifestEntry(fields[0], resolve(fields[1]), resolve(fields[2]),
                          resolve(fields[3]))
        )
    return DatasetManifest(tuple(entries))
