"""Tests for the TSV artifacts and the run store."""

import io

import numpy as np
import pytest

from netcourse.exceptions import ParseError, ValidationError
from netcourse.models import (
    CycleRecord,
    ExpressionData,
    MRFParams,
    RunManifest,
    StateMatrix,
)
from netcourse.storage import (
    RunStore,
    dump_expression,
    dump_key_values,
    dump_params,
    dump_states,
    dump_trace,
    file_digest,
    fmt,
    load_expression,
    load_states,
)


@pytest.fixture
def expression(rng) -> ExpressionData:
    values = rng.gamma(2.0, 1.5, size=(4, 3, 5))
    return ExpressionData(values=values, m=2, n=3, gene_labels=["TP53", "MYC", "EGFR", "KRAS"])


@pytest.mark.unit
class TestExpressionTable:
    """Long-format expression TSV."""

    def test_round_trip_is_exact(self, expression):
        again = load_expression(io.StringIO(dump_expression(expression)))
        assert again.gene_labels == expression.gene_labels
        assert (again.m, again.n) == (2, 3)
        assert np.array_equal(again.values, expression.values)

    def test_header_checked(self):
        with pytest.raises(ParseError):
            load_expression(io.StringIO("gene\ttime\tvalue\nA\t0\t1.0\n"))

    def test_missing_row_is_not_rectangular(self, expression):
        lines = dump_expression(expression).splitlines()
        with pytest.raises(ValidationError):
            load_expression(io.StringIO("\n".join(lines[:-1]) + "\n"))

    def test_nonpositive_value(self):
        text = "gene\ttime\tgroup\tsample\tvalue\nA\t0\t1\t1\t1.0\nA\t0\t2\t1\t0.0\n"
        with pytest.raises(ValidationError):
            load_expression(io.StringIO(text))

    def test_time_gap(self):
        text = (
            "gene\ttime\tgroup\tsample\tvalue\n"
            "A\t0\t1\t1\t1.0\nA\t0\t2\t1\t2.0\nA\t2\t1\t1\t1.0\nA\t2\t2\t1\t2.0\n"
        )
        with pytest.raises(ValidationError):
            load_expression(io.StringIO(text))

    def test_unknown_group(self):
        text = "gene\ttime\tgroup\tsample\tvalue\nA\t0\t1\t1\t1.0\nA\t0\t3\t1\t2.0\n"
        with pytest.raises(ValidationError):
            load_expression(io.StringIO(text))


@pytest.mark.unit
class TestStateAndParameterTables:
    def test_states_round_trip(self, rng):
        states = StateMatrix(states=rng.integers(0, 2, size=(5, 4)))
        labels = [f"gene{i}" for i in range(5)]
        text = dump_states(states, labels)
        assert text.splitlines()[0] == "gene\tt0\tt1\tt2\tt3"
        again, again_labels = load_states(io.StringIO(text))
        assert np.array_equal(again.states, states.states)
        assert again_labels == labels

    def test_states_must_be_binary(self):
        with pytest.raises(ValidationError):
            load_states(io.StringIO("gene\tt0\nA\t2\n"))

    def test_states_column_names(self):
        with pytest.raises(ParseError):
            load_states(io.StringIO("gene\tt1\nA\t1\n"))

    def test_params_layout(self, sim_theta):
        phi = MRFParams(gamma0=-1.5, beta0=0.25, saturated=True)
        rows = dict(line.split("\t") for line in dump_params(phi, sim_theta).splitlines()[1:])
        assert list(rows) == ["gamma0", "beta0", "gamma", "beta1", "beta2", "alpha", "alpha0", "nu", "saturated"]
        assert rows["gamma0"] == "-1.5"
        assert rows["alpha"] == "10"
        assert rows["saturated"] == "1"

    def test_params_per_time_rows(self, sim_theta):
        phi = MRFParams(gamma0=-1.0, beta0=0.5, per_time=((-1.0, 0.5), (-2.0, 0.25)))
        rows = dict(line.split("\t") for line in dump_params(phi, sim_theta).splitlines()[1:])
        assert list(rows)[-4:] == ["gamma0_t0", "beta0_t0", "gamma0_t1", "beta0_t1"]
        assert rows["gamma0_t1"] == "-2"
        assert rows["beta0_t1"] == "0.25"

    def test_trace_records_objective(self, sim_theta):
        record = CycleRecord(
            cycle=1, phi=MRFParams(), theta=sim_theta, pseudolikelihood=-10.0,
            theta_objective=-20.0, flips=3, objective=-25.5,
        )
        header, row = dump_trace([record]).splitlines()
        assert row.split("\t")[header.split("\t").index("objective")] == "-25.5"

    def test_trace_first_cycle_has_no_change(self, sim_theta):
        record = CycleRecord(
            cycle=1, phi=MRFParams(), theta=sim_theta, pseudolikelihood=-10.0,
            theta_objective=-20.0, flips=3,
        )
        header, row = dump_trace([record]).splitlines()
        assert header.split("\t")[0] == "cycle"
        assert row.split("\t")[header.split("\t").index("max_relative_change")] == "NA"

    def test_fmt(self):
        assert fmt(None) == "NA"
        assert fmt(True) == "1"
        assert fmt(np.int64(7)) == "7"
        assert fmt(1 / 3) == "0.333333"
        assert fmt(1 / 3, digits=3) == "0.333"

    def test_key_values(self):
        text = dump_key_values({"scenario": "temporal", "seed": 3, "rate": 0.5})
        assert text.splitlines() == ["key\tvalue", "scenario\ttemporal", "seed\t3", "rate\t0.5"]


@pytest.mark.unit
class TestRunStore:
    def test_atomic_write_leaves_no_temp_file(self, tmp_path):
        store = RunStore(tmp_path / "out")
        target = store.write_text("nested/table.tsv", "a\tb\n")
        assert target.read_text() == "a\tb\n"
        assert not list((tmp_path / "out").rglob("*.tmp"))

    def test_manifest_round_trip(self, tmp_path):
        source = tmp_path / "input.tsv"
        source.write_text("x\n")
        manifest = RunManifest(
            command="fit",
            config={"epsilon": 0.01},
            input_digests={"input.tsv": file_digest(source)},
            seed=4,
            version="0.1.0",
            parameters={"phi": {"gamma0": -1.0}},
        )
        store = RunStore(tmp_path)
        store.write_manifest(manifest)
        assert store.read_manifest() == manifest
        assert len(manifest.input_digests["input.tsv"]) == 64

    def test_subdir(self, tmp_path):
        sub = RunStore(tmp_path).subdir("rep_001")
        assert sub.root == tmp_path / "rep_001"
        assert sub.root.is_dir()
