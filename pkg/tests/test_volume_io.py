import gzip

import numpy as np
import pytest

from vesselmark.errors import MissingFileError, VesselmarkError
from vesselmark.volume import ScalarVolume, VectorField, VolumeGeometry
from vesselmark.volume_io import (
    load_vector_field,
    load_volume,
    save_vector_field,
    save_volume,
)


@pytest.fixture
def scalar_vol():
    rng = np.random.default_rng(11)
    g = VolumeGeometry((7, 5, 9), (0.82, 0.82, 2.5), (-120.5, -88.0, 301.25))
    return ScalarVolume(g, rng.uniform(-1000, 1700, size=(7, 5, 9)))


@pytest.fixture
def vec_field():
    rng = np.random.default_rng(12)
    g = VolumeGeometry((4, 6, 5), (1.0, 1.5, 2.0), (3.0, -2.0, 0.0))
    return VectorField(g, rng.uniform(-20, 20, size=(4, 6, 5, 3)))


@pytest.mark.parametrize("suffix", [".nii", ".nii.gz", ".raw"])
def test_scalar_round_trip(tmp_path, scalar_vol, suffix):
    path = tmp_path / f"vol{suffix}"
    save_volume(scalar_vol, path)
    back = load_volume(path)
    assert back.geometry.dims == scalar_vol.geometry.dims
    assert np.allclose(back.geometry.spacing, scalar_vol.geometry.spacing, atol=1e-5)
    assert np.allclose(back.geometry.origin, scalar_vol.geometry.origin, atol=1e-4)
    # payload is float32 on disk
    assert np.allclose(back.values, scalar_vol.values, rtol=1e-6, atol=1e-2)


@pytest.mark.parametrize("suffix", [".nii.gz", ".raw"])
def test_vector_round_trip(tmp_path, vec_field, suffix):
    path = tmp_path / f"dvf{suffix}"
    save_vector_field(vec_field, path)
    back = load_vector_field(path)
    assert back.geometry.dims == vec_field.geometry.dims
    assert np.allclose(back.vectors, vec_field.vectors, rtol=1e-6, atol=1e-4)


def test_gzip_output_is_deterministic(tmp_path, scalar_vol):
    p1 = tmp_path / "a.nii.gz"
    p2 = tmp_path / "b.nii.gz"
    save_volume(scalar_vol, p1)
    save_volume(scalar_vol, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_scalar_vector_loaders_reject_wrong_kind(tmp_path, scalar_vol, vec_field):
    sp = tmp_path / "s.nii"
    vp = tmp_path / "v.nii"
    save_volume(scalar_vol, sp)
    save_vector_field(vec_field, vp)
    with pytest.raises(VesselmarkError):
        load_vector_field(sp)
    with pytest.raises(VesselmarkError):
        load_volume(vp)


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        load_volume(tmp_path / "absent.nii.gz")


def test_raw_sidecar_required(tmp_path, scalar_vol):
    path = tmp_path / "vol.raw"
    save_volume(scalar_vol, path)
    (tmp_path / "vol.raw.json").unlink()
    with pytest.raises(MissingFileError):
        load_volume(path)


def test_gzip_magic_detected(tmp_path, scalar_vol):
    # a .nii name with gzipped content still loads
    path = tmp_path / "vol.nii"
    save_volume(scalar_vol, path)
    gzipped = tmp_path / "weird.nii"
    gzipped.write_bytes(gzip.compress(path.read_bytes()))
    back = load_volume(gzipped)
    assert np.allclose(back.values, scalar_vol.values, rtol=1e-6, atol=1e-2)
