import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from losgen.channel import MarkovSampler, TraceDataset, generate_dataset
from losgen.dataio import (
    DatasetFormatError,
    emit_report,
    format_table,
    read_curve,
    read_dataset,
    read_report,
    report_from_dict,
    report_to_dict,
    write_curve,
    write_dataset,
    write_rows_csv,
)
from losgen.metrics import MetricCurve, MetricReport, evaluate_repeated


def test_write_small_dataset_bytes(tmp_path):
    info = write_dataset(TraceDataset((70,), np.array([[1], [-1]])), tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_bytes() == b"angle_70\n1\n-1\n"
    assert info.header == ("angle_70",) and info.rows == 2


def test_header_only_file(tmp_path):
    write_dataset(TraceDataset((70, 60), np.empty((0, 2), dtype=np.int8)), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == b"angle_70,angle_60\n"
    back = read_dataset(tmp_path / "e.csv")
    assert back.angles == (70, 60) and back.rows == 0


def test_large_round_trip_and_rewrite_is_byte_identical(tmp_path):
    ds = generate_dataset([70, 60, 45], 100_000, 0)
    write_dataset(ds, tmp_path / "a.csv")
    back = read_dataset(tmp_path / "a.csv")
    assert back == ds
    write_dataset(back, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@settings(max_examples=30)
@given(st.lists(st.sampled_from([20, 30, 45, 60, 70]), unique=True, min_size=1, max_size=5), st.integers(0, 40), st.integers(0, 99))
def test_round_trip_property(tmp_path_factory, angles, n, seed):
    rng = np.random.default_rng(seed)
    ds = TraceDataset(tuple(angles), rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, len(angles))))
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    write_dataset(ds, path)
    assert read_dataset(path) == ds


@pytest.mark.parametrize(
    "body,match",
    [
        ("angle_70\n1\n0\n", "invalid state value at row 2, column 1"),
        ("angle_70,angle_60\n1,1\n1,2\n", "invalid state value at row 2, column 2"),
        ("angle_70,angle_60\n1,1\n1\n", "ragged row 2"),
        ("angle_70,angle_70\n1,1\n", "duplicate angle column"),
        ("elevation\n1\n", "angle_<deg>"),
        ("", "missing header"),
    ],
)
def test_read_rejects_malformed(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DatasetFormatError, match=match):
        read_dataset(p)


def test_rows_without_columns_are_rejected(tmp_path):
    with pytest.raises(ValueError, match="without columns"):
        write_dataset(TraceDataset((), np.empty((3, 0))), tmp_path / "x.csv")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_dataset(TraceDataset((70,), np.ones((1, 1))), tmp_path / "missing" / "x.csv")


# -- reports ----------------------------------------------------------------------


@pytest.fixture
def report():
    s = MarkovSampler((70, 60, 45))
    return evaluate_repeated(s, s, reps=3, n=500, seed=1, label="markov")


def test_report_json_round_trip(tmp_path, report):
    emit_report(report, "json", tmp_path / "r.json")
    back = read_report(tmp_path / "r.json")
    assert back.mean == report.mean and back.variance == report.variance
    assert back.values == report.values and back.angles == report.angles and back.label == "markov"
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["format"] == "losgen-metric-report" and d["version"] == 1
    assert set(d["metrics"]["45"]) == {"ks_complement", "wasserstein", "kl"}


def test_report_rejects_other_documents():
    with pytest.raises(ValueError):
        report_from_dict({"format": "something"})
    d = report_to_dict(MetricReport.from_values((70,), {(70, "kl"): [0.1]}))
    d["version"] = 99
    with pytest.raises(ValueError, match="newer"):
        report_from_dict(d)


def test_table_shape(tmp_path, report):
    emit_report(report, "table", tmp_path / "r.txt")
    lines = (tmp_path / "r.txt").read_text().splitlines()
    assert "70°" in lines[2] and lines[2].index("70°") < lines[2].index("60°") < lines[2].index("45°")
    assert lines[3].split() == ["mean", "variance"] * 3
    assert [ln[:22].strip() for ln in lines[4:]] == ["KS-test", "Wasserstein Distance", "KL-Divergence"]
    for ln in lines[4:]:
        assert len(ln[22:].split()) == 6


def test_single_repetition_table_has_zero_variances():
    s = MarkovSampler((70, 60, 45))
    text = format_table(evaluate_repeated(s, s, reps=1, n=200, seed=0))
    for ln in text.splitlines()[4:]:
        assert ln[22:].split()[1::2] == ["0", "0", "0"]


def test_unknown_report_format(tmp_path, report):
    with pytest.raises(ValueError):
        emit_report(report, "xml", tmp_path / "r.xml")


# -- curves -----------------------------------------------------------------------------


def test_curve_round_trip(tmp_path):
    c = MetricCurve()
    c.add(1, "kl", 0.1234567890123)
    c.add(1, "wasserstein", 1e-17)
    c.add(2, "kl", 0.0)
    write_curve(c, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "epoch,metric,value"
    assert read_curve(tmp_path / "c.csv").records == c.records
    (tmp_path / "x.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        read_curve(tmp_path / "x.csv")


def test_rows_csv(tmp_path):
    write_rows_csv([{"angle": 70, "real_los": 0.5}], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == "angle,real_los\n70,0.5\n"
