"""Volume file I/O: NIfTI-1 (.nii / .nii.gz) and a raw sidecar format.

The NIfTI codec is intentionally minimal: axis-aligned grids only. Files
whose sform/qform encode a rotation are rejected rather than silently
misread. Gzip members are written with mtime=0 so outputs are byte-stable
across runs.

Raw fallback: ``<name>.raw`` holds little-endian float32 voxels, x fastest
and z slowest (components innermost for vector fields), described by a JSON
sidecar ``<name>.raw.json`` with dims, spacing_mm, origin_mm, axis_order and
component count.
"""

from __future__ import annotations

import gzip
import json
import os
import struct
from pathlib import Path

import numpy as np

from vesselmark.errors import MissingFileError, VesselmarkError
from vesselmark.volume import ScalarVolume, VectorField, VolumeGeometry

_NIFTI_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_INTENT_VECTOR = 1007


class UnsupportedNiftiError(VesselmarkError):
    """NIfTI file uses features outside the supported axis-aligned subset."""


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_nifti(raw: bytes):
    if len(raw) < 348:
        raise UnsupportedNiftiError("file too short for a NIfTI-1 header")
    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr != 348:
        raise UnsupportedNiftiError(f"unexpected sizeof_hdr {sizeof_hdr}")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise UnsupportedNiftiError(f"bad magic {magic!r}")

    dim = struct.unpack_from("<8h", raw, 40)
    datatype = struct.unpack_from("<h", raw, 70)[0]
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    qform_code, sform_code = struct.unpack_from("<2h", raw, 252)
    quatern = struct.unpack_from("<3f", raw, 256)
    qoffset = struct.unpack_from("<3f", raw, 268)
    srow = np.array(struct.unpack_from("<12f", raw, 280)).reshape(3, 4)

    ndim = dim[0]
    if ndim < 3 or ndim > 5:
        raise UnsupportedNiftiError(f"unsupported dimensionality {ndim}")
    nx, ny, nz = (max(dim[i], 1) for i in (1, 2, 3))
    nt = max(dim[4], 1) if ndim >= 4 else 1
    nc = max(dim[5], 1) if ndim >= 5 else 1
    if nt != 1:
        raise UnsupportedNiftiError(f"time axis of length {nt} is unsupported")
    if nc not in (1, 3):
        raise UnsupportedNiftiError(f"{nc}-component volumes are unsupported")

    if datatype not in _NIFTI_DTYPES:
        raise UnsupportedNiftiError(f"datatype code {datatype} is unsupported")
    np_dtype = _NIFTI_DTYPES[datatype]

    if sform_code > 0:
        off_diag = srow[:, :3] - np.diag(np.diag(srow[:, :3]))
        if np.max(np.abs(off_diag)) > 1e-5 or np.any(np.diag(srow[:, :3]) <= 0):
            raise UnsupportedNiftiError(
                "sform is not axis-aligned with positive spacing"
            )
        spacing = tuple(float(s) for s in np.diag(srow[:, :3]))
        origin = tuple(float(o) for o in srow[:, 3])
    elif qform_code > 0:
        if np.max(np.abs(quatern)) > 1e-6:
            raise UnsupportedNiftiError("rotated qform is unsupported")
        spacing = tuple(float(abs(pixdim[i])) for i in (1, 2, 3))
        origin = tuple(float(o) for o in qoffset)
    else:
        spacing = tuple(float(abs(pixdim[i])) or 1.0 for i in (1, 2, 3))
        origin = (0.0, 0.0, 0.0)

    count = nx * ny * nz * nc
    data = np.frombuffer(raw, dtype=np.dtype(np_dtype).newbyteorder("<"),
                         count=count, offset=vox_offset)
    # payload is Fortran-ordered over (x, y, z[, c]): x fastest
    if nc == 1:
        arr = data.reshape((nx, ny, nz), order="F").astype(np.float64)
    else:
        arr = data.reshape((nx, ny, nz, nc), order="F").astype(np.float64)
    if scl_slope not in (0.0, 1.0) and np.isfinite(scl_slope):
        arr = arr * scl_slope + (scl_inter if np.isfinite(scl_inter) else 0.0)
    elif scl_inter not in (0.0,) and np.isfinite(scl_inter) and scl_slope == 1.0:
        arr = arr + scl_inter

    geom = VolumeGeometry((nx, ny, nz), spacing, origin)
    return geom, arr, nc


def _build_nifti(geometry: VolumeGeometry, payload: np.ndarray, n_components: int) -> bytes:
    nx, ny, nz = geometry.dims
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    if n_components == 1:
        struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    else:
        struct.pack_into("<8h", hdr, 40, 5, nx, ny, nz, 1, n_components, 1, 1)
        struct.pack_into("<h", hdr, 68, _INTENT_VECTOR)
    struct.pack_into("<h", hdr, 70, 16)  # float32
    struct.pack_into("<h", hdr, 72, 32)
    struct.pack_into("<8f", hdr, 76, 1.0, *geometry.spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    hdr[123] = 10  # mm and seconds
    struct.pack_into("<2h", hdr, 252, 0, 1)
    sx, sy, sz = geometry.spacing
    ox, oy, oz = geometry.origin
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, oz)
    hdr[344:348] = b"n+1\x00"

    data = np.asfortranarray(payload.astype(np.float32))
    return bytes(hdr) + b"\x00" * 4 + data.tobytes(order="F")


def _write_maybe_gz(path: Path, blob: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if path.name.endswith(".gz"):
        with open(tmp, "wb") as f:
            with gzip.GzipFile(filename="", mode="wb", fileobj=f, mtime=0) as gz:
                gz.write(blob)
    else:
        tmp.write_bytes(blob)
    os.replace(tmp, path)


def _raw_sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _save_raw(geometry: VolumeGeometry, payload: np.ndarray, n_components: int, path: Path):
    header = {
        "dims": list(geometry.dims),
        "spacing_mm": list(geometry.spacing),
        "origin_mm": list(geometry.origin),
        "axis_order": "x-fastest",
        "components": n_components,
        "dtype": "float32-le",
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(np.asfortranarray(payload.astype("<f4")).tobytes(order="F"))
    os.replace(tmp, path)
    side = _raw_sidecar(path)
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, side)


def _load_raw(path: Path):
    side = _raw_sidecar(path)
    if not side.exists():
        raise MissingFileError(f"raw sidecar header {side} not found")
    header = json.loads(side.read_text())
    if header.get("axis_order") != "x-fastest":
        raise VesselmarkError(f"unsupported axis order {header.get('axis_order')!r}")
    dims = tuple(int(d) for d in header["dims"])
    nc = int(header.get("components", 1))
    geom = VolumeGeometry(dims, header["spacing_mm"], header["origin_mm"])
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    shape = dims if nc == 1 else dims + (nc,)
    return geom, data.reshape(shape, order="F").astype(np.float64), nc


def save_volume(vol: ScalarVolume, path):
    """Write a scalar volume as .nii, .nii.gz or .raw (by extension)."""
    path = Path(path)
    if path.name.endswith(".raw"):
        _save_raw(vol.geometry, vol.values, 1, path)
    else:
        _write_maybe_gz(path, _build_nifti(vol.geometry, vol.values, 1))


def load_volume(path) -> ScalarVolume:
    """Read a scalar volume from .nii, .nii.gz or .raw."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"volume file {path} not found")
    if path.name.endswith(".raw"):
        geom, arr, nc = _load_raw(path)
    else:
        geom, arr, nc = _parse_nifti(_read_bytes(path))
    if nc != 1:
        raise VesselmarkError(f"{path} holds a {nc}-component field, not a scalar volume")
    return ScalarVolume(geom, arr)


def save_vector_field(field: VectorField, path):
    """Write a 3-component vector field as NIfTI (intent: vector) or raw."""
    path = Path(path)
    if path.name.endswith(".raw"):
        _save_raw(field.geometry, field.vectors, 3, path)
    else:
        _write_maybe_gz(path, _build_nifti(field.geometry, field.vectors, 3))


def load_vector_field(path) -> VectorField:
    """Read a 3-component vector field (mm displacements)."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"vector field file {path} not found")
    if path.name.endswith(".raw"):
        geom, arr, nc = _load_raw(path)
    else:
        geom, arr, nc = _parse_nifti(_read_bytes(path))
    if nc != 3:
        raise VesselmarkError(f"{path} holds {nc} component(s), expected 3")
    return VectorField(geom, arr)
