"""Binary formats, sidecar text formats, and round-trip guarantees."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from geomatch import (
    CategorySpec,
    FeatureGrid,
    FormatError,
    LabelMask,
    MissingArtifactError,
    ProbabilityMap,
    TpsParams,
)
from geomatch.formats import (
    apply_label_remap,
    read_category_spec,
    read_confidence_map,
    read_feature_grid,
    read_keyvalues,
    read_label_mask,
    read_label_remap,
    read_probability_map,
    read_search_result,
    read_tps_params,
    write_category_spec,
    write_confidence_map,
    write_feature_grid,
    write_keyvalues,
    write_label_mask,
    write_probability_map,
    write_search_result,
    write_tps_params,
)
from geomatch.types import IGNORE


def random_grid(rng):
    h, w, d = rng.integers(2, 9), rng.integers(2, 9), rng.integers(1, 6)
    return FeatureGrid(rng.normal(size=(h, w, d)).astype(np.float32))


def random_mask(rng):
    h, w = rng.integers(1, 9), rng.integers(1, 9)
    c = int(rng.integers(1, 12))
    labels = rng.integers(0, c, (h, w)).astype(np.uint8)
    labels[rng.random((h, w)) < 0.2] = IGNORE
    return LabelMask(labels, c)


def random_pmap(rng):
    h, w, c = rng.integers(1, 7), rng.integers(1, 7), int(rng.integers(2, 6))
    raw = rng.random((h, w, c)).astype(np.float32) + 0.1
    vals = (raw / raw.sum(axis=2, keepdims=True)).astype(np.float32)
    return ProbabilityMap(vals.astype(np.float64))


def random_tps(rng):
    k = int(rng.integers(2, 7))
    disp = rng.uniform(-0.9, 0.9, (k * k, 2)).astype(np.float32)
    return TpsParams(k, disp.astype(np.float64), float(np.float32(rng.uniform(0, 0.5))))


class TestBinaryRoundTrips:
    def test_feature_grid(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(10):
            path = tmp_path / f"g{i}.fgrd"
            write_feature_grid(path, random_grid(rng))
            first = path.read_bytes()
            write_feature_grid(path, read_feature_grid(path))
            assert path.read_bytes() == first

    def test_label_mask(self, tmp_path):
        rng = np.random.default_rng(1)
        for i in range(10):
            path = tmp_path / f"m{i}.lmsk"
            write_label_mask(path, random_mask(rng))
            first = path.read_bytes()
            write_label_mask(path, read_label_mask(path))
            assert path.read_bytes() == first

    def test_probability_map(self, tmp_path):
        rng = np.random.default_rng(2)
        for i in range(10):
            path = tmp_path / f"p{i}.pmap"
            write_probability_map(path, random_pmap(rng))
            first = path.read_bytes()
            write_probability_map(path, read_probability_map(path))
            assert path.read_bytes() == first

    def test_tps_params(self, tmp_path):
        rng = np.random.default_rng(3)
        for i in range(10):
            path = tmp_path / f"t{i}.tpsp"
            write_tps_params(path, random_tps(rng))
            first = path.read_bytes()
            write_tps_params(path, read_tps_params(path))
            assert path.read_bytes() == first

    def test_values_survive(self, tmp_path):
        rng = np.random.default_rng(4)
        grid = random_grid(rng)
        write_feature_grid(tmp_path / "x.fgrd", grid)
        again = read_feature_grid(tmp_path / "x.fgrd")
        assert np.array_equal(grid.values.astype(np.float32), again.values.astype(np.float32))


class TestFormatValidation:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.fgrd"
        p.write_bytes(b"JUNK" + b"\x00" * 20)
        with pytest.raises(FormatError, match="magic"):
            read_feature_grid(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "bad.fgrd"
        p.write_bytes(b"FGRD" + struct.pack("<H", 9) + b"\x00" * 12)
        with pytest.raises(FormatError, match="version"):
            read_feature_grid(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.fgrd"
        p.write_bytes(b"FGRD" + struct.pack("<HIII", 1, 2, 2, 1) + b"\x00" * 8)
        with pytest.raises(FormatError, match="truncated"):
            read_feature_grid(p)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "long.fgrd"
        payload = struct.pack("<4f", 0, 0, 0, 0)
        p.write_bytes(b"FGRD" + struct.pack("<HIII", 1, 2, 2, 1) + payload + struct.pack("<4f", 1, 1, 1, 1) + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            read_feature_grid(p)

    def test_non_finite_feature_rejected(self, tmp_path):
        p = tmp_path / "nan.fgrd"
        payload = struct.pack("<8f", 0, 1, 2, 3, 4, 5, 6, float("nan"))
        p.write_bytes(b"FGRD" + struct.pack("<HIII", 1, 2, 2, 2) + payload)
        with pytest.raises(FormatError, match="finite"):
            read_feature_grid(p)

    def test_label_at_class_count_rejected(self, tmp_path):
        p = tmp_path / "bad.lmsk"
        p.write_bytes(b"LMSK" + struct.pack("<HIIH", 1, 1, 2, 3) + bytes([0, 3]))
        with pytest.raises(FormatError):
            read_label_mask(p)

    def test_simplex_violation_rejected(self, tmp_path):
        p = tmp_path / "bad.pmap"
        payload = struct.pack("<4f", 0.5, 0.6, 0.5, 0.5)
        p.write_bytes(b"PMAP" + struct.pack("<HIIH", 1, 1, 2, 2) + payload)
        with pytest.raises(FormatError):
            read_probability_map(p)

    def test_tps_k_below_two_rejected(self, tmp_path):
        p = tmp_path / "bad.tpsp"
        p.write_bytes(b"TPSP" + struct.pack("<HHf", 1, 1, 0.0) + struct.pack("<2f", 0, 0))
        with pytest.raises(FormatError, match="K=1"):
            read_tps_params(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            read_feature_grid(tmp_path / "absent.fgrd")


class TestSidecarFormats:
    def test_category_spec_round_trip(self, tmp_path):
        spec = CategorySpec("widget", ("background", "body", "cap", "wheel"))
        write_category_spec(tmp_path / "cat.txt", spec)
        again = read_category_spec(tmp_path / "cat.txt")
        assert again == spec

    def test_category_spec_needs_parts(self, tmp_path):
        (tmp_path / "cat.txt").write_text("widget\n")
        with pytest.raises(FormatError):
            read_category_spec(tmp_path / "cat.txt")

    def test_remap_parse_and_apply(self, tmp_path):
        (tmp_path / "remap.tsv").write_text("# collapse\n2\t1\n3\t1\n")
        mapping = read_label_remap(tmp_path / "remap.tsv")
        assert mapping == {2: 1, 3: 1}
        mask = LabelMask(np.array([[0, 2], [3, IGNORE]], dtype=np.uint8), 4)
        out = apply_label_remap(mask, mapping, 4)
        assert out.labels.tolist() == [[0, 1], [1, IGNORE]]

    def test_remap_rejects_ignore(self, tmp_path):
        (tmp_path / "remap.tsv").write_text("255\t0\n")
        with pytest.raises(FormatError):
            read_label_remap(tmp_path / "remap.tsv")

    def test_remap_rejects_duplicate_source(self, tmp_path):
        (tmp_path / "remap.tsv").write_text("1\t0\n1\t2\n")
        with pytest.raises(FormatError, match="duplicate"):
            read_label_remap(tmp_path / "remap.tsv")

    def test_keyvalues_round_trip(self, tmp_path):
        pairs = {"miou": 0.123456789012345, "images": 12, "category": "widget"}
        write_keyvalues(tmp_path / "sum.txt", pairs)
        got = read_keyvalues(tmp_path / "sum.txt")
        assert got["category"] == "widget"
        assert int(got["images"]) == 12
        assert float(got["miou"]) == pytest.approx(0.123456789012345, abs=1e-15)

    def test_search_result_round_trip(self, tmp_path):
        ranking = [("alpha", 35.5), ("beta", 12.25), ("gamma", -1.0)]
        write_search_result(tmp_path / "res.tsv", "alpha", 35.5, 17, True, ranking)
        winner, phi, iters, converged, rank2 = read_search_result(tmp_path / "res.tsv")
        assert winner == "alpha"
        assert phi == 35.5
        assert iters == 17
        assert converged is True
        assert rank2 == ranking

    def test_confidence_map_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        scores = rng.random((5, 4)).astype(np.float32).astype(np.float64)
        valid = rng.random((5, 4)) < 0.8
        scores[~valid] = 0.0
        write_confidence_map(tmp_path / "c.fgrd", scores, valid)
        s2, v2 = read_confidence_map(tmp_path / "c.fgrd")
        assert np.array_equal(scores, s2)
        assert np.array_equal(valid, v2)
