"""File format tests: VOXG, PGM, rig files, loss CSV, manifests."""

import math
import struct

import numpy as np
import pytest

from voxsil.errors import DegeneratePoseError
from voxsil.geometry import Viewpoint, default_rig
from voxsil.io import (
    load_manifest,
    load_pgm,
    load_rig,
    load_voxg,
    save_loss_csv,
    save_manifest,
    save_pgm,
    save_rig,
    save_voxg,
    silhouette_name,
    silhouette_paths,
)
from voxsil.volume import VoxelGrid


class TestVoxg:
    def test_header_layout(self, tmp_path):
        path = tmp_path / "v.voxg"
        save_voxg(path, VoxelGrid(np.zeros((2, 3, 4))))
        raw = path.read_bytes()
        assert raw[:4] == b"VOXG"
        assert struct.unpack("<IIII", raw[4:20]) == (1, 2, 3, 4)
        assert len(raw) == 20 + 4 * 24

    def test_round_trip_exact_for_float32_values(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.random((4, 5, 6)).astype(np.float32).astype(np.float64)
        path = tmp_path / "v.voxg"
        save_voxg(path, VoxelGrid(data))
        assert (load_voxg(path).data == data).all()

    def test_boolean_volume_round_trip(self, tmp_path):
        occ = np.zeros((3, 3, 3), dtype=bool)
        occ[1, 2, 0] = True
        path = tmp_path / "b.voxg"
        save_voxg(path, occ)
        back = load_voxg(path)
        assert (back.data == occ.astype(np.float64)).all()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.voxg"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_voxg(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.voxg"
        path.write_bytes(b"VOXG" + struct.pack("<IIII", 9, 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(ValueError, match="version"):
            load_voxg(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "bad.voxg"
        path.write_bytes(b"VOXG" + struct.pack("<IIII", 1, 2, 2, 2) + b"\x00" * 7)
        with pytest.raises(ValueError, match="expected"):
            load_voxg(path)


class TestPgm:
    def test_exact_byte_layout(self, tmp_path):
        sil = np.array([[0.0, 1.0, 0.5], [0.25, 0.75, 1.0]])
        path = tmp_path / "s.pgm"
        save_pgm(path, sil)
        raw = path.read_bytes()
        # round(255 * s) with the 0.5-up rule: 0, 255, 128, 64, 191, 255
        assert raw == b"P5\n3 2\n255\n" + bytes([0, 255, 128, 64, 191, 255])

    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(1)
        sil = rng.random((8, 8))
        path = tmp_path / "s.pgm"
        save_pgm(path, sil)
        back = load_pgm(path)
        assert np.abs(back - sil).max() <= 0.5 / 255 + 1e-12

    def test_reader_handles_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5 # binary graymap\n# size follows\n2  1\n255\n\x00\xff")
        back = load_pgm(path)
        assert back.shape == (1, 2)
        assert back[0, 0] == 0.0 and back[0, 1] == 1.0

    def test_scales_by_maxval(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n1 1\n100\n" + bytes([50]))
        assert load_pgm(path)[0, 0] == pytest.approx(0.5)

    def test_rejects_wide_maxval(self, tmp_path):
        path = tmp_path / "w.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(ValueError, match="maxval"):
            load_pgm(path)

    def test_rejects_truncated_pixels(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00")
        with pytest.raises(ValueError, match="pixel bytes"):
            load_pgm(path)

    def test_rejects_ascii_pgm(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(ValueError, match="binary PGM"):
            load_pgm(path)

    def test_rejects_out_of_range_values(self, tmp_path):
        with pytest.raises(ValueError):
            save_pgm(tmp_path / "x.pgm", np.full((2, 2), 1.5))


class TestRig:
    def test_parse_with_comments(self, tmp_path):
        path = tmp_path / "rig.txt"
        path.write_text(
            "# test rig\n0 30 2.0\n90 30 2.0  # side view\n\n180 -10 2.5\n"
        )
        views = load_rig(path)
        assert len(views) == 3
        assert views[1].azimuth == pytest.approx(math.pi / 2)
        assert views[2].elevation == pytest.approx(math.radians(-10))
        assert views[2].distance == 2.5

    def test_bad_line_cites_line_number(self, tmp_path):
        path = tmp_path / "rig.txt"
        path.write_text("0 30 2.0\n15 30 2.0\ntext garbage here\n")
        with pytest.raises(ValueError, match="line 3"):
            load_rig(path)

    def test_wrong_field_count_cites_line(self, tmp_path):
        path = tmp_path / "rig.txt"
        path.write_text("0 30\n")
        with pytest.raises(ValueError, match="line 1"):
            load_rig(path)

    def test_empty_rig_rejected(self, tmp_path):
        path = tmp_path / "rig.txt"
        path.write_text("# nothing\n")
        with pytest.raises(ValueError, match="no views"):
            load_rig(path)

    def test_degenerate_elevation_rejected(self, tmp_path):
        path = tmp_path / "rig.txt"
        path.write_text("0 90 2.0\n")
        with pytest.raises(DegeneratePoseError):
            load_rig(path)

    def test_round_trip_default_rig(self, tmp_path):
        path = tmp_path / "rig.txt"
        save_rig(path, default_rig())
        views = load_rig(path)
        assert len(views) == 24
        for vp, original in zip(views, default_rig()):
            assert vp.azimuth == pytest.approx(original.azimuth, abs=1e-12)
            assert vp.elevation == pytest.approx(original.elevation)
            assert vp.distance == original.distance


class TestLossCsv:
    def test_exact_format(self, tmp_path):
        path = tmp_path / "loss.csv"
        save_loss_csv(path, [(1.5, 1.0, 0.5), (0.25, 0.25, 0.0)])
        assert path.read_text() == (
            "iter,loss_total,loss_proj,loss_vol\n"
            "0,1.5,1.0,0.5\n"
            "1,0.25,0.25,0.0\n"
        )


class TestManifest:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.json"
        manifest = {"command": "synth", "args": {"kind": "sphere"}, "outputs": []}
        save_manifest(path, manifest)
        assert load_manifest(path) == manifest

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        manifest = {"command": "x", "args": {"b": 1, "a": 2}}
        save_manifest(a, manifest)
        save_manifest(b, dict(reversed(manifest.items())))
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_non_manifest(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(ValueError, match="manifest"):
            load_manifest(path)


class TestSilhouetteNaming:
    def test_name_embeds_index_and_azimuth(self):
        assert silhouette_name(3, 45.0) == "view_03_45.pgm"
        assert silhouette_name(0, 7.5) == "view_00_7.5.pgm"

    def test_paths_require_exactly_one_match(self, tmp_path):
        (tmp_path / "view_00_0.pgm").write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(ValueError, match="view 1"):
            silhouette_paths(tmp_path, 2)
