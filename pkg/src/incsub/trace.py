"""Run traces and their CSV form.

One trace records per-iteration summaries of a single replication: the
iteration index, the updating agent (randomized order only), the objective
value, distance to the certified witness when one exists, the running
minimum of the objective over *all* iterations so far (tracked online, not
just at recorded rows), and the step-size that produced the iterate.

The CSV schema is fixed: header row, RFC-4180 quoting, '.' decimal
separator, floats at 17 significant digits so that values round-trip.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

COLUMNS = ("k", "agent", "f", "dist_to_witness", "running_inf_f", "alpha")


def fmt_float(x):
    """Round-trip-safe decimal rendering of a float."""
    return format(float(x), ".17g")


@dataclass
class RunTrace:
    """Thinned per-iteration record of one replication."""

    ks: np.ndarray
    f_vals: np.ndarray
    running_inf: np.ndarray
    alphas: np.ndarray            # NaN at k = 0 (no step produced x_0)
    agents: Optional[np.ndarray]  # None for the cyclic engine
    dists: Optional[np.ndarray]   # None when the problem has no witness
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = len(self.ks)
        for name in ("f_vals", "running_inf", "alphas"):
            if len(getattr(self, name)) != rows:
                raise ValueError(f"trace column {name} has wrong length")
        for name in ("agents", "dists"):
            col = getattr(self, name)
            if col is not None and len(col) != rows:
                raise ValueError(f"trace column {name} has wrong length")
        if np.any(np.diff(self.running_inf) > 0):
            raise ValueError("running inf must be non-increasing")

    @property
    def final_gap(self):
        f_star = self.meta.get("f_star")
        return None if f_star is None else float(self.f_vals[-1] - f_star)

    @property
    def inf_gap(self):
        f_star = self.meta.get("f_star")
        return None if f_star is None else float(self.running_inf[-1] - f_star)

    def to_csv(self):
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for i, k in enumerate(self.ks):
            agent = "" if self.agents is None else str(int(self.agents[i]))
            dist = "" if self.dists is None else fmt_float(self.dists[i])
            alpha = "" if np.isnan(self.alphas[i]) else fmt_float(self.alphas[i])
            writer.writerow([str(int(k)), agent, fmt_float(self.f_vals[i]),
                             dist, fmt_float(self.running_inf[i]), alpha])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text, meta=None):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected trace header {header!r}")
        ks, agents, fs, dists, infs, alphas = [], [], [], [], [], []
        for row in reader:
            ks.append(int(row[0]))
            agents.append(int(row[1]) if row[1] else -1)
            fs.append(float(row[2]))
            dists.append(float(row[3]) if row[3] else np.nan)
            infs.append(float(row[4]))
            alphas.append(float(row[5]) if row[5] else np.nan)
        has_agents = any(a >= 0 for a in agents)
        has_dists = any(not np.isnan(d) for d in dists)
        return cls(np.array(ks), np.array(fs), np.array(infs), np.array(alphas),
                   np.array(agents) if has_agents else None,
                   np.array(dists) if has_dists else None,
                   meta=dict(meta or {}))


def record_indices(horizon, stride):
    """Iteration indices recorded in a trace: 0, stride, ..., plus the end."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    ks = list(range(0, horizon + 1, stride))
    if ks[-1] != horizon:
        ks.append(horizon)
    return ks
