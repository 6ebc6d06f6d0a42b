#!/usr/bin/env python3
"""
Run storage for netcourse.

Reads and writes the TSV artifacts (expression, states, parameters, trace,
metrics) and the JSON run manifest. Every write goes through a temp file
and an atomic rename so an interrupted run never leaves half a table behind.
"""

import hashlib
import io
import json
import os
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, TextIO

import numpy as np
import pandas as pd
from loguru import logger

from netcourse.config import settings
from netcourse.exceptions import ParseError, ValidationError
from netcourse.models import (
    CycleRecord,
    ExpressionData,
    FitResult,
    GGParams,
    MetricSummary,
    MRFParams,
    RunManifest,
    StateMatrix,
    TimepointMetrics,
)

EXPRESSION_COLUMNS = ["gene", "time", "group", "sample", "value"]
MANIFEST_NAME = "manifest.json"


def fmt(value: float | int | None, digits: int | None = None) -> str:
    """Render a number with the configured number of significant digits."""
    if value is None:
        return "NA"
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.{digits or settings.output_precision}g}"


def file_digest(path: str | Path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def _frame_to_tsv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, sep="\t", index=False, lineterminator="\n")
    return buffer.getvalue()


# ----------------------------------------------------------------------
# Expression data
# ----------------------------------------------------------------------


def load_expression(source: str | Path | TextIO) -> ExpressionData:
    """
    Parse the long-format expression TSV and check that every gene has every
    time point and every sample of both groups.
    """
    try:
        frame = pd.read_csv(
            source, sep="\t", dtype={"gene": str, "sample": str}, comment="#",
            float_precision="round_trip",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read expression table: {exc}") from exc
    if list(frame.columns) != EXPRESSION_COLUMNS:
        raise ParseError(f"expression header must be {EXPRESSION_COLUMNS}, got {list(frame.columns)}", 1)
    if frame.empty:
        raise ParseError("expression table has no rows")
    for column in ("time", "group", "value"):
        frame[column] = pd.to_numeric(frame[column], errors="coerce")
    if frame.isna().any().any():
        bad = int(frame.isna().any(axis=1).to_numpy().argmax())
        raise ParseError("missing field", bad + 2)
    if not set(frame["group"].unique()) <= {1, 2}:
        raise ValidationError("group must be 1 or 2")
    if (frame["value"] <= 0).any():
        bad = int((frame["value"] <= 0).to_numpy().argmax())
        raise ValidationError(f"nonpositive expression value at line {bad + 2}")

    genes = list(dict.fromkeys(frame["gene"]))
    times = sorted(frame["time"].unique())
    if times != list(range(len(times))):
        raise ValidationError(f"time points must be 0..T without gaps, got {times}")
    frame["time"] = frame["time"].astype(np.int64)
    frame["group"] = frame["group"].astype(np.int64)
    samples = {
        group: list(dict.fromkeys(frame.loc[frame["group"] == group, "sample"]))
        for group in (1, 2)
    }
    m, n = len(samples[1]), len(samples[2])
    if m == 0 or n == 0:
        raise ValidationError("both condition groups need at least one sample")

    expected = len(genes) * len(times) * (m + n)
    if len(frame) != expected or frame.duplicated(["gene", "time", "group", "sample"]).any():
        raise ValidationError(
            f"expression table is not rectangular: {len(frame)} rows for "
            f"{len(genes)} genes x {len(times)} times x {m + n} samples"
        )

    gene_pos = {g: i for i, g in enumerate(genes)}
    sample_pos = {(1, s): i for i, s in enumerate(samples[1])}
    sample_pos.update({(2, s): m + i for i, s in enumerate(samples[2])})
    values = np.zeros((len(genes), len(times), m + n))
    rows = frame["gene"].map(gene_pos).to_numpy()
    cols = np.array([sample_pos[(g, s)] for g, s in zip(frame["group"], frame["sample"], strict=True)])
    values[rows, frame["time"].to_numpy(), cols] = frame["value"].to_numpy(dtype=float)

    data = ExpressionData(values=values, m=m, n=n, gene_labels=genes)
    logger.info(f"[storage] Loaded expression for {len(genes)} genes, {len(times)} times, m={m}, n={n}")
    return data


def dump_expression(data: ExpressionData) -> str:
    p, n_times, width = data.values.shape
    gene_idx, time_idx, sample_idx = np.meshgrid(
        np.arange(p), np.arange(n_times), np.arange(width), indexing="ij"
    )
    sample_idx = sample_idx.ravel()
    group = np.where(sample_idx < data.m, 1, 2)
    frame = pd.DataFrame(
        {
            "gene": np.asarray(data.gene_labels, dtype=object)[gene_idx.ravel()],
            "time": time_idx.ravel(),
            "group": group,
            "sample": np.where(group == 1, sample_idx + 1, sample_idx - data.m + 1),
            # repr precision keeps the round trip exact
            "value": [repr(float(v)) for v in data.values.ravel()],
        }
    )
    return _frame_to_tsv(frame)


# ----------------------------------------------------------------------
# States, parameters, trace, metrics
# ----------------------------------------------------------------------


def dump_states(states: StateMatrix, labels: Sequence[str]) -> str:
    frame = pd.DataFrame(states.states, columns=[f"t{t}" for t in range(states.n_times)])
    frame.insert(0, "gene", list(labels))
    return _frame_to_tsv(frame)


def load_states(source: str | Path | TextIO) -> tuple[StateMatrix, list[str]]:
    try:
        frame = pd.read_csv(source, sep="\t", dtype={"gene": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read state table: {exc}") from exc
    if not len(frame.columns) or frame.columns[0] != "gene":
        raise ParseError("state table must start with a gene column", 1)
    expected = [f"t{t}" for t in range(len(frame.columns) - 1)]
    if list(frame.columns[1:]) != expected:
        raise ParseError(f"state columns must be {expected}", 1)
    try:
        states = StateMatrix(states=frame[expected].to_numpy())
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return states, frame["gene"].tolist()


def dump_params(phi: MRFParams, theta: GGParams) -> str:
    """name/value rows; per-time fields follow as gamma0_t<k>/beta0_t<k>."""
    lines = ["name\tvalue"]
    lines += [f"{name}\t{fmt(value)}" for name, value in zip(MRFParams.names(), phi.as_array(), strict=True)]
    lines += [f"{name}\t{fmt(value)}" for name, value in theta.model_dump().items()]
    lines.append(f"saturated\t{int(phi.saturated)}")
    for t, (intercept, coupling) in enumerate(phi.per_time or ()):
        lines += [f"gamma0_t{t}\t{fmt(intercept)}", f"beta0_t{t}\t{fmt(coupling)}"]
    return "\n".join(lines) + "\n"


def dump_trace(trace: Iterable[CycleRecord]) -> str:
    header = ["cycle", *MRFParams.names(), "alpha", "alpha0", "nu", "pseudolikelihood",
              "theta_objective", "flips", "max_relative_change", "min_score_gain", "objective"]
    lines = ["\t".join(header)]
    for record in trace:
        values = [record.cycle, *record.phi.as_array(), *record.theta.as_array(),
                  record.pseudolikelihood, record.theta_objective, record.flips,
                  record.max_relative_change, record.min_score_gain, record.objective]
        lines.append("\t".join(fmt(v) for v in values))
    return "\n".join(lines) + "\n"


def dump_metrics(rows: Iterable[tuple[int, TimepointMetrics]]) -> str:
    lines = ["replicate\tt\tsen\tspe\tfdr\ttp\tfp\ttn\tfn"]
    for replicate, m in rows:
        lines.append(
            "\t".join(fmt(v) for v in (replicate, m.t, m.sensitivity, m.specificity, m.fdr,
                                        m.tp, m.fp, m.tn, m.fn))
        )
    return "\n".join(lines) + "\n"


def dump_aggregate(rows: Iterable[tuple[str, str, MetricSummary]]) -> str:
    """One row per (method, scenario, time point)."""
    lines = ["method\tscenario\tt\treplicates\tsen\tsen_se\tspe\tspe_se\tfdr\tfdr_se"]
    for method, scenario, s in rows:
        lines.append(
            "\t".join([method, scenario] + [fmt(v) for v in (
                s.t, s.replicates, s.sensitivity, s.sensitivity_se, s.specificity,
                s.specificity_se, s.fdr, s.fdr_se)])
        )
    return "\n".join(lines) + "\n"


def dump_key_values(record: dict[str, Any]) -> str:
    lines = ["key\tvalue"]
    for key, value in record.items():
        lines.append(f"{key}\t{fmt(value) if isinstance(value, (int, float)) else value}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Output directory
# ----------------------------------------------------------------------


class RunStore:
    """
    Output directory of one command invocation.

    Files are written atomically and the manifest records every input digest
    and resolved knob so the directory can be regenerated bit for bit.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        logger.debug(f"[storage] Run store at {self.root}")

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, content: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        temp = target.with_suffix(target.suffix + ".tmp")
        with open(temp, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(content)
            handle.flush()
            os.fsync(handle.fileno())
        temp.replace(target)
        logger.debug(f"[storage] Wrote {target}")
        return target

    def write_manifest(self, manifest: RunManifest) -> Path:
        payload = json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True)
        return self.write_text(MANIFEST_NAME, payload + "\n")

    def read_manifest(self) -> RunManifest:
        with open(self.path(MANIFEST_NAME), encoding="utf-8") as handle:
            return RunManifest.model_validate(json.load(handle))

    def subdir(self, name: str) -> "RunStore":
        return RunStore(self.root / name)

    def write_fit(self, result: FitResult, labels: Sequence[str]) -> None:
        self.write_text("states.tsv", dump_states(result.states, labels))
        self.write_text("params.tsv", dump_params(result.phi, result.theta))
        self.write_text("trace.tsv", dump_trace(result.trace))


def fit_parameters(result: FitResult) -> dict[str, Any]:
    """Full-precision parameter block for the manifest."""
    return {
        "phi": result.phi.model_dump(),
        "theta": result.theta.model_dump(),
        "converged": result.converged,
        "cycles_used": result.cycles_used,
    }
