"""Deterministic serialization of equilibrium records.

CSV files carry full precision and re-parse into records equal to the
originals; the aligned table mirrors the conventional presentation: utility
profile, good-1 price per agent, then the bilateral flow vector of each good
in the order (upper-triangle pairs, then reversed directions). Every output
embeds the tool version and the scenario hash in comment lines.
"""

from __future__ import annotations

import csv
import io
from typing import Iterable, Optional

import numpy as np

from .enumeration import EquilibriumRecord

FLOW_NAMES_3 = ("x12", "x13", "x23", "x21", "x31", "x32")


def _flow_header(n, L):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    cols = []
    for k in range(L):
        for i, j in pairs + [(j, i) for i, j in pairs]:
            cols.append(f"q{i + 1}{j + 1}_{k + 1}")
    return cols


def write_records_csv(records, stream, version="", config_hash="") -> None:
    """Full-precision CSV of records, preceded by provenance comment lines."""
    records = list(records)
    stream.write(f"# tool_version={version}\n")
    stream.write(f"# config_sha256={config_hash}\n")
    if not records:
        stream.write("# empty\n")
        return
    n, _, L = records[0].flows.shape
    cols = (["record"]
            + [f"u{i + 1}" for i in range(n)]
            + [f"p{i + 1}_{k + 1}" for i in range(n) for k in range(L)]
            + ["polytope_dim", "pareto", "nash", "nash_pareto"]
            + _flow_header(n, L))
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(cols)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    order = pairs + [(j, i) for i, j in pairs]
    for idx, rec in enumerate(records):
        row = [idx]
        row += [repr(float(u)) for u in rec.utilities]
        row += [repr(float(v)) for v in rec.price_witness.ravel()]
        row += [rec.polytope_dim,
                _flag(rec.pareto), _flag(rec.nash), _flag(rec.nash_pareto)]
        for k in range(L):
            row += [int(rec.flows[i, j, k]) for i, j in order]
        writer.writerow(row)


def _flag(v):
    return "" if v is None else ("1" if v else "0")


def _parse_flag(s):
    return None if s == "" else s == "1"


def read_records_csv(stream, endowments=None):
    """Parse a records CSV back into EquilibriumRecord objects.

    Allocation and utility fields are reconstructed from the file; flows come
    back as integers. ``endowments`` (n, L) enables allocation recovery.
    """
    rows = [r for r in csv.reader(line for line in stream
                                  if not line.startswith("#"))]
    if not rows:
        return []
    header = rows[0]
    n = sum(1 for c in header if c.startswith("u"))
    L = sum(1 for c in header if c.startswith("p1_"))
    flow_cols = [c for c in header if c.startswith("q")]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    order = pairs + [(j, i) for i, j in pairs]
    out = []
    for row in rows[1:]:
        vals = dict(zip(header, row))
        utilities = np.array([float(vals[f"u{i + 1}"]) for i in range(n)])
        prices = np.array([[float(vals[f"p{i + 1}_{k + 1}"]) for k in range(L)]
                           for i in range(n)])
        flows = np.zeros((n, n, L), dtype=int)
        for k in range(L):
            for (i, j) in order:
                flows[i, j, k] = int(vals[f"q{i + 1}{j + 1}_{k + 1}"])
        alloc = np.zeros((n, L))
        if endowments is not None:
            w = np.asarray(endowments, dtype=float)
            alloc = w + flows.sum(axis=0) - flows.sum(axis=1)
        out.append(EquilibriumRecord(
            flows=flows, price_witness=prices,
            polytope_dim=int(vals["polytope_dim"]), allocation=alloc,
            utilities=utilities, pareto=_parse_flag(vals["pareto"]),
            nash=_parse_flag(vals["nash"]),
            nash_pareto=_parse_flag(vals["nash_pareto"])))
    return out


def format_table(records, version="", config_hash="") -> str:
    """Aligned text table: utilities, good-1 prices, per-good flow vectors.

    Nash--Pareto records are marked with an asterisk.
    """
    records = list(records)
    lines = [f"# tool_version={version}", f"# config_sha256={config_hash}"]
    if not records:
        lines.append("(no records)")
        return "\n".join(lines) + "\n"
    n, _, L = records[0].flows.shape
    header = ["*", "(" + ", ".join(f"u{i + 1}" for i in range(n)) + ")",
              "(" + ", ".join(f"p{i + 1}_1" for i in range(n)) + ")"]
    header += [f"good-{k + 1} flows" for k in range(L)]
    body = []
    for rec in records:
        star = "*" if rec.nash_pareto else " "
        utils = "(" + ", ".join(f"{u:.2f}" for u in rec.utilities) + ")"
        prices = "(" + ", ".join(f"{v:.2f}" for v in rec.price_witness[:, 0]) + ")"
        flows = ["(" + ", ".join(str(v) for v in rec.flow_vector(k)) + ")"
                 for k in range(L)]
        body.append([star, utils, prices] + flows)
    widths = [max(len(h), *(len(r[c]) for r in body))
              for c, h in enumerate(header)]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(trajectory, stream, version="", config_hash="") -> None:
    stream.write(f"# tool_version={version}\n")
    stream.write(f"# config_sha256={config_hash}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["step", "welfare", "step_norm"])
    for step, u, norm in trajectory:
        writer.writerow([step, repr(float(u)), repr(float(norm))])


def write_audit_csv(residuals, velocity, stream, version="", config_hash="") -> None:
    stream.write(f"# tool_version={version}\n")
    stream.write(f"# config_sha256={config_hash}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["agent", "net_residual"])
    for i, r in enumerate(residuals):
        writer.writerow([i + 1, repr(float(r))])
    writer.writerow(["velocity", repr(float(velocity))])
