"""Tests for data ingestion, scoring and total-score derivation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psychoforge.dataset import (
    EmptyDataError,
    InvalidDatasetError,
    LevelError,
    MissingKeyError,
    ParseError,
    ResponseDataset,
    binarize_factor,
    encode_categories,
    load_csv,
    score,
    total_scores,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def binary_csv(tmp_path):
    return write(
        tmp_path / "binary.csv",
        "i1,i2,i3\n1,0,1\n0,0,1\n1,1,1\n0,1,0\n",
    )


class TestLoadCsv:
    def test_binary_inference(self, binary_csv):
        ds = load_csv(binary_csv)
        assert ds.persons == 4
        assert ds.items == 3
        assert ds.item_types == ("binary", "binary", "binary")
        assert ds.max_score == (1, 1, 1)

    def test_nominal_with_metadata_key(self, tmp_path):
        data = write(tmp_path / "d.csv", "q1\nA\nB\nC\nD\nC\n")
        meta = write(tmp_path / "m.csv", "item,type,key,max_score\nq1,nominal,C,\n")
        ds = load_csv(data, metadata=meta)
        assert ds.item_types == ("nominal",)
        assert ds.key == ("C",)

    def test_ragged_rows_raise(self, tmp_path):
        bad = write(tmp_path / "bad.csv", "a,b\n1,0\n1\n")
        with pytest.raises(ParseError):
            load_csv(bad)

    def test_empty_table_raises(self, tmp_path):
        with pytest.raises(EmptyDataError):
            load_csv(write(tmp_path / "empty.csv", ""))
        with pytest.raises(EmptyDataError):
            load_csv(write(tmp_path / "header_only.csv", "a,b\n"))

    def test_ordinal_inference_complete_ladder(self, tmp_path):
        ds = load_csv(write(tmp_path / "o.csv", "q\n0\n1\n2\n3\n2\n"))
        assert ds.item_types == ("ordinal",)
        assert ds.max_score == (3,)

    def test_incomplete_ladder_is_nominal(self, tmp_path):
        # {0,2,3} is not a complete {0..K} set, so the column is nominal
        ds = load_csv(write(tmp_path / "g.csv", "q\n0\n2\n3\n"))
        assert ds.item_types == ("nominal",)

    def test_reserved_columns(self, tmp_path):
        ds = load_csv(
            write(
                tmp_path / "r.csv",
                "i1,__group,__criterion,__matching\n1,0,3.5,10\n0,1,2.0,12\n1,1,,11\n",
            )
        )
        assert ds.items == 1
        assert ds.group is not None and ds.group.tolist() == [0.0, 1.0, 1.0]
        assert np.isnan(ds.criterion[2])
        assert ds.matching.tolist() == [10.0, 12.0, 11.0]

    def test_missing_cells(self, tmp_path):
        ds = load_csv(write(tmp_path / "m.csv", "i1,i2\n1,NA\n,0\n1,1\n"))
        assert ds.responses[0, 1] is None
        assert ds.responses[1, 0] is None

    def test_metadata_type_override(self, tmp_path):
        data = write(tmp_path / "d.csv", "q\n0\n1\n1\n")
        meta = write(tmp_path / "m.csv", "item,type,key,max_score\nq,ordinal,,4\n")
        ds = load_csv(data, metadata=meta)
        assert ds.item_types == ("ordinal",)
        assert ds.max_score == (4,)

    def test_no_header(self, tmp_path):
        ds = load_csv(write(tmp_path / "nh.csv", "1,0\n0,1\n"), header=False)
        assert ds.item_names == ("item1", "item2")

    def test_key_must_be_observed_or_declared(self, tmp_path):
        data = write(tmp_path / "d.csv", "q\nA\nB\n")
        meta = write(tmp_path / "m.csv", "item,type,key,max_score\nq,nominal,Z,\n")
        with pytest.raises(InvalidDatasetError):
            load_csv(data, metadata=meta)


class TestScore:
    def test_nominal_key_match(self):
        ds = ResponseDataset(
            responses=np.array([["C"], ["A"], ["C"]], dtype=object),
            item_names=("q",),
            item_types=("nominal",),
            key=("C",),
            max_score=(1,),
        )
        sm = score(ds)
        assert sm.scores[:, 0].tolist() == [1.0, 0.0, 1.0]

    def test_ordinal_identity(self):
        ds = ResponseDataset(
            responses=np.array([[0], [3], [2]], dtype=object),
            item_names=("q",),
            item_types=("ordinal",),
            key=(None,),
            max_score=(3,),
        )
        assert score(ds).scores[:, 0].tolist() == [0.0, 3.0, 2.0]

    def test_only_key_scores_one_on_five_code_item(self):
        # Enumerate every declared code on a 5-code item: exactly the key
        # maps to 1, and an undeclared junk code maps to 0 with a warning.
        codes = ["A", "B", "C", "D", "E"]
        ds = ResponseDataset(
            responses=np.array([[c] for c in codes] + [["X"]], dtype=object),
            item_names=("q",),
            item_types=("nominal",),
            key=("C",),
            max_score=(1,),
            declared_codes=(frozenset(codes),),
        )
        sm = score(ds)
        expected = [1.0 if c == "C" else 0.0 for c in codes] + [0.0]
        assert sm.scores[:, 0].tolist() == expected
        assert sm.has_warnings
        assert sm.unknown_code_warnings == ((5, 0),)

    def test_missing_stays_missing(self):
        ds = ResponseDataset(
            responses=np.array([[1], [None]], dtype=object),
            item_names=("q",),
            item_types=("binary",),
            key=(None,),
            max_score=(1,),
        )
        sm = score(ds)
        assert sm.scores[0, 0] == 1.0
        assert np.isnan(sm.scores[1, 0])

    def test_nominal_without_key_raises(self):
        ds = ResponseDataset(
            responses=np.array([["A"], ["B"]], dtype=object),
            item_names=("q",),
            item_types=("nominal",),
            key=(None,),
            max_score=(1,),
        )
        with pytest.raises(MissingKeyError):
            score(ds)

    def test_out_of_range_ordinal_scores_zero_with_warning(self):
        ds = ResponseDataset(
            responses=np.array([[1], [7]], dtype=object),
            item_names=("q",),
            item_types=("ordinal",),
            key=(None,),
            max_score=(3,),
        )
        sm = score(ds)
        assert sm.scores[1, 0] == 0.0
        assert sm.has_warnings

    def test_score_load_deterministic(self, binary_csv):
        a = score(load_csv(binary_csv))
        b = score(load_csv(binary_csv))
        assert a.scores.tobytes() == b.scores.tobytes()


class TestEncodeCategories:
    def nominal(self, cells, key="C", declared=None):
        return ResponseDataset(
            responses=np.array([[c] for c in cells], dtype=object),
            item_names=("q",),
            item_types=("nominal",),
            key=(key,),
            max_score=(1,),
            declared_codes=(frozenset(declared),) if declared else None,
        )

    def test_key_is_baseline_then_sorted(self):
        coded, levels = encode_categories(self.nominal(["B", "C", "A", "D", "C"]))
        assert levels == (("C", "A", "B", "D"),)
        assert coded.scores[:, 0].tolist() == [2.0, 0.0, 1.0, 3.0, 0.0]
        assert coded.max_scores == (3,)

    def test_declared_codes_fix_the_category_space(self):
        # code D never observed but declared: it still gets a slot
        coded, levels = encode_categories(
            self.nominal(["A", "C", "B"], declared=["A", "B", "C", "D"])
        )
        assert levels == (("C", "A", "B", "D"),)
        assert coded.max_scores == (3,)

    def test_undeclared_code_stays_missing_with_warning(self):
        coded, _ = encode_categories(
            self.nominal(["A", "X", "C"], declared=["A", "B", "C"])
        )
        assert np.isnan(coded.scores[1, 0])
        assert coded.unknown_code_warnings == ((1, 0),)

    def test_keyless_nominal_sorts_all_codes(self):
        coded, levels = encode_categories(self.nominal(["B", "A", "C"], key=None))
        assert levels == (("A", "B", "C"),)
        assert coded.scores[:, 0].tolist() == [1.0, 0.0, 2.0]

    def test_numeric_codes_order_numerically(self):
        coded, levels = encode_categories(self.nominal(["10", "2", "1"], key=None))
        assert levels == (("1", "2", "10"),)

    def test_binary_and_ordinal_pass_through(self):
        ds = ResponseDataset(
            responses=np.array([[1, 2, "B"], [0, 0, "A"], [1, 3, None]], dtype=object),
            item_names=("b", "o", "n"),
            item_types=("binary", "ordinal", "nominal"),
            key=(None, None, "A"),
            max_score=(1, 3, 1),
        )
        coded, levels = encode_categories(ds)
        assert levels[0] is None and levels[1] is None
        assert levels[2] == ("A", "B")
        assert coded.scores[:, 0].tolist() == [1.0, 0.0, 1.0]
        assert coded.scores[:, 1].tolist() == [2.0, 0.0, 3.0]
        assert coded.scores[0, 2] == 1.0 and np.isnan(coded.scores[2, 2])
        assert coded.max_scores == (1, 3, 1)

    def test_missing_propagates(self):
        coded, _ = encode_categories(self.nominal(["A", None, "C"]))
        assert np.isnan(coded.scores[1, 0])

    def test_single_code_item_keeps_positive_max_score(self):
        coded, levels = encode_categories(self.nominal(["C", "C"], key="C"))
        assert levels == (("C",),)
        assert coded.max_scores == (1,)


class TestTotalScores:
    def test_row_sums(self, binary_csv):
        sm = score(load_csv(binary_csv))
        ts = total_scores(sm)
        assert ts.values.tolist() == [2.0, 1.0, 3.0, 1.0]

    def test_hand_standardization(self):
        # values [2,1,0]: mean 1, sd(ddof=1) = 1 -> z = [1, 0, -1]
        from psychoforge.dataset import ScoredMatrix

        sm = ScoredMatrix(
            scores=np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]),
            max_scores=(1, 1),
            item_names=("a", "b"),
        )
        ts = total_scores(sm)
        assert ts.standardized.tolist() == [1.0, 0.0, -1.0]
        assert abs(ts.standardized.mean()) < 1e-10
        assert abs(ts.standardized.std(ddof=1) - 1.0) < 1e-10

    def test_constant_totals_degenerate(self):
        from psychoforge.dataset import ScoredMatrix

        sm = ScoredMatrix(
            scores=np.array([[1.0], [1.0], [1.0]]),
            max_scores=(1,),
            item_names=("a",),
        )
        ts = total_scores(sm)
        assert ts.degenerate
        assert ts.standardized.tolist() == [0.0, 0.0, 0.0]

    def test_all_missing_row_excluded(self):
        from psychoforge.dataset import ScoredMatrix

        sm = ScoredMatrix(
            scores=np.array([[1.0, 0.0], [np.nan, np.nan], [0.0, 0.0]]),
            max_scores=(1, 1),
            item_names=("a", "b"),
        )
        ts = total_scores(sm)
        assert np.isnan(ts.values[1])
        assert np.isnan(ts.standardized[1])
        assert not np.isnan(ts.standardized[[0, 2]]).any()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_binary_totals_equal_correct_counts(self, seed):
        # Brute-force loop oracle on random 50x10 binary matrices.
        rng = np.random.default_rng(seed)
        mat = rng.integers(0, 2, size=(50, 10)).astype(float)
        from psychoforge.dataset import ScoredMatrix

        sm = ScoredMatrix(scores=mat, max_scores=(1,) * 10, item_names=tuple(f"i{j}" for j in range(10)))
        ts = total_scores(sm)
        for p in range(50):
            count = 0
            for j in range(10):
                if mat[p, j] == 1.0:
                    count += 1
            assert ts.values[p] == count

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_standardization_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        mat = rng.integers(0, 2, size=(20, 6)).astype(float)
        from psychoforge.dataset import ScoredMatrix

        sm = ScoredMatrix(scores=mat, max_scores=(1,) * 6, item_names=tuple(f"i{j}" for j in range(6)))
        ts = total_scores(sm)
        if not ts.degenerate:
            rebuilt = ts.standardized * ts.sd + ts.mean
            assert np.allclose(rebuilt, ts.values, atol=1e-9)


class TestBinarizeFactor:
    def test_track_example(self):
        levels = ["basic", "academic", "academic", "basic"]
        out = binarize_factor(levels, {"academic"})
        assert out.tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_all_levels_positive(self):
        out = binarize_factor(["a", "b", "a"], {"a", "b"})
        assert out.tolist() == [1.0, 1.0, 1.0]

    def test_empty_selection_rejected(self):
        with pytest.raises(LevelError):
            binarize_factor(["a", "b"], set())

    def test_unknown_level_rejected(self):
        with pytest.raises(LevelError):
            binarize_factor(["a", "b"], {"c"})

    def test_missing_passthrough(self):
        out = binarize_factor(["a", None, "b"], {"a"})
        assert out[0] == 1.0 and np.isnan(out[1]) and out[2] == 0.0
