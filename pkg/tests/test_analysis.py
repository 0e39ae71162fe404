import csv
import json
import math
from collections import Counter

import numpy as np
import pytest

from g2l.analysis import (
    enumerate_policies,
    export_heatmap,
    label_count_table,
    policy_at,
    position_of,
    sweep,
)
from g2l.labeling import all_policies, parse_policy
from helpers import make_anchors, make_dataset
from oracles import brute_force_label


class TestEnumeration:
    def test_d1(self):
        assert enumerate_policies(1) == ["c", "f", "C", "F"]

    @pytest.mark.parametrize(
        "pos, expect",
        [((1, 1), "cccc"), ((1, 9), "fccc"), ((1, 16), "ffff"), ((16, 16), "FFFF"), ((16, 1), "CCCC"), ((2, 2), "cccF")],
    )
    def test_d4_positions(self, pos, expect):
        assert policy_at(*pos, 4) == expect
        assert position_of(expect) == pos

    @pytest.mark.parametrize("d", range(1, 6))
    def test_complete_and_round_trip(self, d):
        pols = enumerate_policies(d)
        assert len(pols) == 4**d
        assert sorted(pols) == sorted(all_policies(d))
        side = 2**d
        for k, p in enumerate(pols):
            assert position_of(p) == (k // side + 1, k % side + 1)

    def test_fractal_pattern(self):
        # every 2x2 block of the d-grid repeats [[c, f], [C, F]] in its last letter
        for r in range(1, 17, 2):
            for c in range(1, 17, 2):
                block = [policy_at(r + i, c + j, 4)[-1] for i in (0, 1) for j in (0, 1)]
                assert block == ["c", "f", "C", "F"]

    @pytest.mark.parametrize("d", [0, 9])
    def test_d_out_of_range(self, d):
        with pytest.raises(ValueError):
            enumerate_policies(d)

    def test_position_out_of_range(self):
        with pytest.raises(IndexError):
            policy_at(0, 1, 2)
        with pytest.raises(IndexError):
            policy_at(1, 5, 2)


def small_problem(seed=0, n_anchors=6, n_targets=40, dim=4):
    rng = np.random.default_rng(seed)
    anchors = make_anchors(rng.normal(size=(n_anchors, dim)))
    targets = make_dataset(rng.normal(size=(n_targets, dim)))
    return anchors, targets


def entropy_of(labels):
    counts = Counter(labels)
    n = len(labels)
    return -sum(c / n * math.log2(c / n) for c in counts.values())


class TestSweep:
    def test_single_target(self):
        anchors, targets = small_problem(n_targets=1)
        res = sweep(targets, anchors, 2)
        assert res.grid.shape == (4, 4)
        assert np.all(res.grid == 0.0)
        assert set(res.unique_counts.values()) == {1}

    def test_duplicated_anchors(self):
        a = np.random.default_rng(1).normal(size=(4, 3))
        anchors = make_anchors(a, ["w", "x", "y", "z"])
        reps = [0, 0, 0, 1, 1, 2, 3, 3]
        res = sweep(make_dataset(a[reps]), anchors, 1)
        # counts 3,2,1,2 out of 8
        expect = -sum(p * math.log2(p) for p in (3 / 8, 2 / 8, 1 / 8, 2 / 8))
        assert res.entropy("c") == pytest.approx(expect, abs=1e-12)
        assert res.grid[0, 0] == pytest.approx(expect, abs=1e-12)

    def test_entropies_match_oracle_labels(self):
        anchors, targets = small_problem(seed=3, n_targets=25)
        res = sweep(targets, anchors, 2)
        inputs = (list(anchors.matrix), anchors.names, anchors.keys)
        for pol in enumerate_policies(2):
            labels = [brute_force_label(t, *inputs, pol) for t in targets.matrix]
            assert res.entropy(pol) == pytest.approx(entropy_of(labels), abs=1e-12)
            assert res.unique_counts[pol] == len(set(labels))

    def test_invariants(self):
        anchors, targets = small_problem(seed=4, n_anchors=7, n_targets=30)
        res = sweep(targets, anchors, 3, threads=4)
        assert not res.missing and res.n_labeled == 30
        assert np.all(res.grid >= 0) and np.all(res.grid <= math.log2(30) + 1e-12)
        for pol, count in res.unique_counts.items():
            n = parse_policy(pol).label_length
            assert 1 <= count <= 30
            assert count <= math.perm(7, n)

    def test_threads_do_not_change_grid(self):
        anchors, targets = small_problem(seed=5)
        a = sweep(targets, anchors, 2, threads=1)
        b = sweep(targets, anchors, 2, threads=6)
        np.testing.assert_array_equal(a.grid, b.grid)
        assert a.unique_counts == b.unique_counts

    def test_missing_cells(self):
        anchors, targets = small_problem(n_anchors=3, n_targets=5)
        res = sweep(targets, anchors, 2)
        # CC, CF, FC, FF need four representatives
        assert set(res.missing) == {"CC", "CF", "FC", "FF"}
        assert "needs 4 representatives" in res.missing["CC"]
        assert np.isnan(res.grid).sum() == 4
        assert not np.isnan(res.entropy("Cc"))

    def test_item_errors(self):
        anchors = make_anchors([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.2, 0.2, 0.6]], metric="sqrt_js")
        targets = make_dataset([[1.0, 0.0, 0.0], [1.0, -1.0, 0.5]])
        res = sweep(targets, anchors, 1)
        assert list(res.item_errors) == ["t1"]
        assert res.n_labeled == 1 and np.all(res.grid == 0)

    def test_dimension_mismatch(self):
        anchors, _ = small_problem()
        with pytest.raises(ValueError, match="dimension"):
            sweep(make_dataset(np.zeros((2, 3))), anchors, 1)


class TestLabelCountTable:
    def test_identical_targets(self):
        anchors, _ = small_problem()
        targets = make_dataset(np.tile(np.arange(4.0), (10, 1)))
        table = label_count_table(targets, anchors, enumerate_policies(2))
        assert all(c == 1 for _, c in table.rows)
        assert len(table.rows) == 16

    def test_sorted_and_bounded(self, tmp_path):
        anchors, targets = small_problem(seed=6, n_anchors=8, n_targets=60)
        pols = enumerate_policies(2)
        table = label_count_table(targets, anchors, pols)
        keys = [(c, p) for p, c in table.rows]
        assert keys == sorted(keys)
        for p, c in table.rows:
            n = parse_policy(p).label_length
            assert c <= min(60, math.perm(8, n))
        table.write_csv(tmp_path / "t.csv")
        rows = list(csv.reader(open(tmp_path / "t.csv")))
        assert rows[0] == ["policy", "count"] and len(rows) == 17

    def test_agrees_with_sweep(self):
        anchors, targets = small_problem(seed=7)
        res = sweep(targets, anchors, 2)
        assert label_count_table(targets, anchors, enumerate_policies(2)).as_dict() == res.unique_counts


class TestExportHeatmap:
    def test_csv_d1(self, tmp_path):
        anchors, targets = small_problem()
        res = sweep(targets, anchors, 1)
        paths = export_heatmap(res, tmp_path / "h.csv", "csv")
        rows = list(csv.reader(open(tmp_path / "h.csv")))
        assert len(rows) == 2 and all(len(r) == 2 for r in rows)
        assert float(rows[0][1]) == res.entropy("f")
        index = list(csv.reader(open(tmp_path / "h.policies.csv")))
        assert index[0] == ["row", "col", "policy"]
        assert index[1:] == [["1", "1", "c"], ["1", "2", "f"], ["2", "1", "C"], ["2", "2", "F"]]
        assert len(paths) == 2

    def test_pgm(self, tmp_path):
        anchors, targets = small_problem(seed=2, n_targets=50)
        res = sweep(targets, anchors, 2)
        export_heatmap(res, tmp_path / "h.pgm", "pgm")
        raw = (tmp_path / "h.pgm").read_bytes()
        header = b"P5\n4 4\n255\n"
        assert raw.startswith(header)
        pix = np.frombuffer(raw[len(header):], dtype=np.uint8).reshape(4, 4)
        assert pix.min() == 0 and pix.max() == 255
        g = res.grid
        expect = np.round(255 * (g - g.min()) / (g.max() - g.min()))
        np.testing.assert_array_equal(pix, expect)

    def test_uniform_grid_is_black(self, tmp_path):
        anchors, targets = small_problem(n_targets=1)
        export_heatmap(sweep(targets, anchors, 2), tmp_path / "u.pgm", "pgm")
        raw = (tmp_path / "u.pgm").read_bytes()
        assert raw[len(b"P5\n4 4\n255\n"):] == bytes(16)

    def test_missing_cells_serialized(self, tmp_path):
        anchors, targets = small_problem(n_anchors=3, n_targets=5)
        res = sweep(targets, anchors, 2)
        paths = export_heatmap(res, tmp_path / "m.csv", "csv")
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        r, c = position_of("FF")
        assert rows[r - 1][c - 1] == ""
        side = json.loads((tmp_path / "m.errors.json").read_text())
        assert set(side["missing"]) == {"CC", "CF", "FC", "FF"}
        assert tmp_path / "m.errors.json" in paths

    def test_unwritable(self, tmp_path):
        anchors, targets = small_problem(n_targets=2)
        res = sweep(targets, anchors, 1)
        with pytest.raises(FileNotFoundError):
            export_heatmap(res, tmp_path / "nope" / "h.csv")
        with pytest.raises(ValueError):
            export_heatmap(res, tmp_path / "h.png", "png")
