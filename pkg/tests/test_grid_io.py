import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmapkit.grid import (
    DatasetManifest,
    DensityMap,
    FormatError,
    KernelSpec,
    ManifestEntry,
    PointSet,
    indices_to_points,
    points_to_indices,
    read_density_map,
    read_manifest,
    read_points,
    write_density_map,
    write_manifest,
    write_points,
)


def test_smallest_map_layout(tmp_path):
    path = tmp_path / "m.dmap"
    write_density_map(DensityMap(np.array([[0.5]], dtype=np.float32)), path)
    blob = path.read_bytes()
    # 8 byte fixed header + 2 u32 dims + one float32 value
    assert len(blob) == 20
    assert blob[:4] == b"DMAP"
    assert blob[4] == 1
    assert blob[5] == 2
    assert blob[6:8] == b"\x00\x00"
    assert np.frombuffer(blob, dtype="<u4", offset=8, count=2).tolist() == [1, 1]
    assert np.frombuffer(blob, dtype="<f4", offset=16)[0] == np.float32(0.5)
    back = read_density_map(path)
    assert back.dims == (1, 1)
    assert back.values[0, 0] == np.float32(0.5)


def test_map_roundtrip_bytes_identical(tmp_path):
    rng = np.random.default_rng(0)
    dmap = DensityMap(rng.random((5, 7), dtype=np.float32))
    p1, p2 = tmp_path / "a.dmap", tmp_path / "b.dmap"
    write_density_map(dmap, p1)
    write_density_map(read_density_map(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


@settings(max_examples=25, deadline=None)
@given(
    st.integers(2, 3),
    st.integers(0, 2**32 - 1),
)
def test_map_roundtrip_random(tmp_path_factory, ndim, seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(1, 6, size=ndim))
    dmap = DensityMap(rng.random(dims, dtype=np.float32))
    path = tmp_path_factory.mktemp("rt") / "m.dmap"
    write_density_map(dmap, path)
    back = read_density_map(path)
    assert back.dims == dmap.dims
    assert np.array_equal(back.values, dmap.values)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.dmap"
    write_density_map(DensityMap(np.zeros((2, 2), dtype=np.float32)), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"DMAQ"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="bad magic"):
        read_density_map(path)


def test_bad_version_and_ndim(tmp_path):
    path = tmp_path / "m.dmap"
    write_density_map(DensityMap(np.zeros((2, 2), dtype=np.float32)), path)
    blob = bytearray(path.read_bytes())
    blob[4] = 9
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="version"):
        read_density_map(path)
    blob[4] = 1
    blob[5] = 5
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="ndim"):
        read_density_map(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "m.dmap"
    write_density_map(DensityMap(np.zeros((2, 2), dtype=np.float32)), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError, match="size mismatch"):
        read_density_map(path)


def test_negative_and_nan_values_rejected(tmp_path):
    path = tmp_path / "m.dmap"
    write_density_map(DensityMap(np.ones((2, 2), dtype=np.float32)), path)
    blob = bytearray(path.read_bytes())
    blob[16:20] = np.array([-1.0], dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="negative value at index 0"):
        read_density_map(path)
    blob[16:20] = np.array([np.nan], dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="non-finite value at index 0"):
        read_density_map(path)


def test_points_parse(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y\n3.5,7.25\n")
    pts = read_points(path)
    assert pts.ndim == 2
    assert np.array_equal(pts.coords, [[3.5, 7.25]])


def test_points_empty_body(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y\n")
    pts = read_points(path)
    assert pts.ndim == 2
    assert len(pts) == 0


def test_points_arity_error_reports_line(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y,z\n1.0,2.0,3.0\n4.0,5.0\n")
    with pytest.raises(FormatError, match="line 3"):
        read_points(path)


def test_points_header_and_numeric_errors(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("a,b\n")
    with pytest.raises(FormatError, match="line 1"):
        read_points(path)
    path.write_text("x,y\n1.0,spam\n")
    with pytest.raises(FormatError, match="line 2"):
        read_points(path)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(2, 3),
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=0, max_size=8),
    st.integers(0, 2**32 - 1),
)
def test_points_roundtrip_9_digits(tmp_path_factory, ndim, xs, seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-1e6, 1e6, size=(len(xs), ndim))
    if coords.size:
        coords[:, 0] = xs
    pts = PointSet(coords) if len(xs) else PointSet.empty(ndim)
    path = tmp_path_factory.mktemp("pts") / "p.csv"
    write_points(pts, path)
    back = read_points(path)
    assert back.ndim == ndim
    expected = np.array(
        [[float(f"{v:.9g}") for v in row] for row in pts.coords]
    ).reshape(pts.coords.shape)
    assert np.array_equal(back.coords, expected)


def test_coordinate_convention_roundtrip():
    idx = np.array([[3, 5], [0, 1]], dtype=np.float64)
    pts = indices_to_points(idx)
    # row 3, col 5 -> x=5, y=3
    assert pts[0].tolist() == [5.0, 3.0]
    assert np.array_equal(points_to_indices(pts), idx)
    idx3 = np.array([[2, 3, 4]], dtype=np.float64)
    assert indices_to_points(idx3)[0].tolist() == [4.0, 3.0, 2.0]
    assert np.array_equal(points_to_indices(indices_to_points(idx3)), idx3)


def test_density_map_validation():
    with pytest.raises(ValueError, match="2D or 3D"):
        DensityMap(np.zeros(4, dtype=np.float32))
    with pytest.raises(ValueError, match="negative"):
        DensityMap(np.array([[-1.0, 0.0]], dtype=np.float32))
    with pytest.raises(ValueError, match="non-finite"):
        DensityMap(np.array([[np.inf, 0.0]], dtype=np.float32))
    dmap = DensityMap(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        dmap.values[0, 0] = 1.0


def test_kernel_validation():
    k = KernelSpec.isotropic(2.0, 2)
    assert k.peak_density() == pytest.approx(1.0 / (8 * np.pi))
    with pytest.raises(ValueError, match="symmetric"):
        KernelSpec(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="positive definite"):
        KernelSpec(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValueError, match="condition"):
        KernelSpec(np.diag([1e9, 1.0]))


def test_manifest_roundtrip(tmp_path):
    entries = (
        ManifestEntry("a", tmp_path / "a.csv", tmp_path / "a.gt", tmp_path / "a.pred"),
        ManifestEntry("b", tmp_path / "b.csv", tmp_path / "b.gt", tmp_path / "b.pred"),
    )
    manifest = DatasetManifest(entries)
    path = tmp_path / "manifest.tsv"
    write_manifest(manifest, path)
    back = read_manifest(path)
    assert [e.id for e in back.entries] == ["a", "b"]
    assert back.entries[0].gt_points_path == tmp_path / "a.csv"


def test_manifest_relative_paths_and_comments(tmp_path):
    path = tmp_path / "manifest.tsv"
    path.write_text("# comment\nimg\tp.csv\tg.dmap\tq.dmap\n")
    back = read_manifest(path)
    assert back.entries[0].gt_points_path == tmp_path / "p.csv"


def test_manifest_duplicate_ids():
    entry = ManifestEntry("x", "a", "b", "c")
    with pytest.raises(ValueError, match="duplicate"):
        DatasetManifest((entry, entry))


def test_manifest_bad_arity(tmp_path):
    path = tmp_path / "manifest.tsv"
    path.write_text("img\tonly_two\n")
    with pytest.raises(FormatError, match="line 1"):
        read_manifest(path)
