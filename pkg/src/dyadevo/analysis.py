"""Cooperation metrics over an archived population.

Archived genomes are re-simulated on one held-out trajectory (never used
in the training rotation); all losses, role series, and efforts reported
here come from that fresh trial. Three behavioral metrics summarize each
dyad: anti-synchrony (fraction of time the roles are complementary),
load-sharing (minimum ratio of the two RMS efforts), and policy symmetry
(shifted angular similarity between the agents' weight vectors).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import FEATURE_NAMES, Dyad
from .evolution import HallOfFame, HofEntry, stream, _TAG_ANALYSIS
from .objectives import ObjectiveVector, score
from .simulator import EggParams, InitSpec, simulate_trial
from .trajectory import ReferenceTrajectory

METRICS_CSV_HEADER = (
    "dyad_id",
    "tracking",
    "stabilization",
    "effort1",
    "effort2",
    "jerk",
    "anti_synchrony",
    "load_sharing",
    "sym_st",
    "sym_ts",
    "sym_cross",
)


class AnalysisError(ValueError):
    """Invalid metric inputs."""


def anti_synchrony(roles1, roles2) -> float:
    """Mean absolute role difference; 1 when the agents always complement."""
    r1 = np.asarray(roles1)
    r2 = np.asarray(roles2)
    if r1.shape != r2.shape:
        raise AnalysisError("role series must have equal length")
    if len(r1) == 0:
        raise AnalysisError("role series are empty")
    return float(np.mean(np.abs(r1 - r2)))


def load_sharing(effort1: float, effort2: float) -> float | None:
    """min(E1/E2, E2/E1); 0 if exactly one effort is zero, None if both are."""
    if effort1 < 0 or effort2 < 0:
        raise AnalysisError("efforts must be non-negative")
    if effort1 == 0.0 and effort2 == 0.0:
        return None
    if effort1 == 0.0 or effort2 == 0.0:
        return 0.0
    return min(effort1 / effort2, effort2 / effort1)


def symmetry(w1, w2) -> float:
    """Shifted angular similarity: 1 for parallel, 0 orthogonal, -1 opposite."""
    a = np.asarray(w1, dtype=float)
    b = np.asarray(w2, dtype=float)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise AnalysisError("symmetry undefined for zero vectors")
    cos = float(np.dot(a, b) / (na * nb))
    cos = max(-1.0, min(1.0, cos))
    return 1.0 - (2.0 / math.pi) * math.acos(cos)


def dyad_symmetries(dyad: Dyad) -> tuple[float, float, float]:
    """(sym_st, sym_ts, sym_cross): matched policies plus the mean of both
    cross pairings."""
    a1, a2 = dyad.agent1, dyad.agent2
    sym_st = symmetry(a1.w_st.weights, a2.w_st.weights)
    sym_ts = symmetry(a1.w_ts.weights, a2.w_ts.weights)
    sym_cross = 0.5 * (
        symmetry(a1.w_st.weights, a2.w_ts.weights)
        + symmetry(a1.w_ts.weights, a2.w_st.weights)
    )
    return sym_st, sym_ts, sym_cross


@dataclass(frozen=True)
class MetricRow:
    dyad_id: str
    objectives: ObjectiveVector
    anti_synchrony: float
    load_sharing: float | None
    sym_st: float
    sym_ts: float
    sym_cross: float

    @property
    def tracking(self) -> float:
        return self.objectives.tracking

    @property
    def stabilization(self) -> float:
        return self.objectives.stabilization


def compute_metrics(
    entries: list[HofEntry],
    heldout: ReferenceTrajectory,
    params: EggParams,
    dt: float,
    slope: float,
    threads: int = 1,
) -> list[MetricRow]:
    """Re-simulate every archived dyad on the held-out trajectory."""
    init = InitSpec.resting(params)

    def one(entry: HofEntry) -> MetricRow:
        rec = simulate_trial(entry.dyad, heldout, params, dt, init=init)
        obj = score(rec, params, slope)
        sym_st, sym_ts, sym_cross = dyad_symmetries(entry.dyad)
        return MetricRow(
            dyad_id=entry.dyad.lineage.uid,
            objectives=obj,
            anti_synchrony=anti_synchrony(rec.role1, rec.role2),
            load_sharing=load_sharing(obj.effort1, obj.effort2),
            sym_st=sym_st,
            sym_ts=sym_ts,
            sym_cross=sym_cross,
        )

    if threads <= 1:
        return [one(e) for e in entries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, entries))


def filter_pareto_population(rows: list[MetricRow]) -> list[MetricRow]:
    """Drop dyads no better than doing nothing (tracking >= 1) or that break
    the egg throughout (stabilization >= 1)."""
    return [r for r in rows if r.tracking < 1.0 and r.stabilization < 1.0]


def top_performer_set(rows: list[MetricRow]) -> list[MetricRow]:
    """Strict thresholds on both performance axes."""
    return [r for r in rows if r.tracking < 0.7 and r.stabilization < 0.3]


@dataclass(frozen=True)
class DecileGroups:
    metric: str
    top: list[MetricRow]
    bottom: list[MetricRow]
    random_sample: list[MetricRow]


def decile_groups(rows: list[MetricRow], metric: str, rng) -> DecileGroups:
    """Top/bottom 10% by the named metric plus an equally sized random
    baseline; ties broken by dyad id so the split is permutation-stable."""
    if len(rows) < 10:
        raise AnalysisError(f"need at least 10 rows for deciles, got {len(rows)}")
    def key(r: MetricRow):
        return (getattr(r, metric), r.dyad_id)

    ordered = sorted(rows, key=key)
    n = len(rows) // 10
    bottom = ordered[:n]
    top = ordered[-n:]
    by_id = sorted(rows, key=lambda r: r.dyad_id)
    pick = rng.choice(len(by_id), size=n, replace=False)
    random_sample = [by_id[int(i)] for i in sorted(pick)]
    return DecileGroups(metric=metric, top=top, bottom=bottom, random_sample=random_sample)


def histogram(values, bins: int, lo: float = -1.0, hi: float = 1.0):
    """Counts over [lo, hi]; every in-range value lands in exactly one bin."""
    if bins < 1:
        raise AnalysisError("bins must be >= 1")
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=(lo, hi))
    return edges, counts


def policy_weight_histograms(dyads: list[Dyad], bins: int = 40) -> dict:
    """Per-feature weight distributions; each dyad contributes two vectors
    to each of the two policy groups (one per agent)."""
    groups = {"st": [], "ts": []}
    for d in dyads:
        for agent in (d.agent1, d.agent2):
            groups["st"].append(agent.w_st.weights)
            groups["ts"].append(agent.w_ts.weights)
    out: dict = {}
    for name, vectors in groups.items():
        arr = np.asarray(vectors, dtype=float) if vectors else np.zeros((0, len(FEATURE_NAMES)))
        per_feature = {}
        for j, feat in enumerate(FEATURE_NAMES):
            edges, counts = histogram(arr[:, j], bins)
            per_feature[feat] = {
                "edges": [float(e) for e in edges],
                "counts": [int(c) for c in counts],
            }
        out[name] = per_feature
    return out


def _group_summary(rows: list[MetricRow]) -> dict:
    def mean(vals):
        return float(np.mean(vals)) if vals else None

    return {
        "size": len(rows),
        "ids": [r.dyad_id for r in rows],
        "sym_st_mean": mean([r.sym_st for r in rows]),
        "sym_ts_mean": mean([r.sym_ts for r in rows]),
        "sym_cross_mean": mean([r.sym_cross for r in rows]),
        "anti_synchrony_mean": mean([r.anti_synchrony for r in rows]),
        "load_sharing_mean": mean([r.load_sharing for r in rows if r.load_sharing is not None]),
    }


def write_metrics_csv(path, rows: list[MetricRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_CSV_HEADER)
        for r in rows:
            w.writerow(
                (
                    r.dyad_id,
                    *[repr(float(v)) for v in r.objectives],
                    repr(float(r.anti_synchrony)),
                    "" if r.load_sharing is None else repr(float(r.load_sharing)),
                    repr(float(r.sym_st)),
                    repr(float(r.sym_ts)),
                    repr(float(r.sym_cross)),
                )
            )


def read_metrics_csv(path) -> list[MetricRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                MetricRow(
                    dyad_id=rec["dyad_id"],
                    objectives=ObjectiveVector(
                        tracking=float(rec["tracking"]),
                        stabilization=float(rec["stabilization"]),
                        effort1=float(rec["effort1"]),
                        effort2=float(rec["effort2"]),
                        jerk=float(rec["jerk"]),
                    ),
                    anti_synchrony=float(rec["anti_synchrony"]),
                    load_sharing=float(rec["load_sharing"]) if rec["load_sharing"] else None,
                    sym_st=float(rec["sym_st"]),
                    sym_ts=float(rec["sym_ts"]),
                    sym_cross=float(rec["sym_cross"]),
                )
            )
    return rows


@dataclass
class AnalysisResult:
    rows: list[MetricRow]
    filtered: list[MetricRow]
    deciles: dict
    histograms: dict


def run_analysis(
    hof: HallOfFame,
    heldout: ReferenceTrajectory,
    params: EggParams,
    dt: float,
    slope: float,
    seed: int,
    out_dir=None,
    threads: int = 1,
    histogram_bins: int = 40,
) -> AnalysisResult:
    """Full metric pipeline: re-simulate, filter, deciles, histograms,
    and (optionally) write metrics.csv / deciles.json / histograms.json."""
    rows = compute_metrics(hof.entries, heldout, params, dt, slope, threads)
    filtered = filter_pareto_population(rows)
    filtered = sorted(filtered, key=lambda r: r.dyad_id)

    deciles: dict = {"decile_size": None, "metrics": {}}
    if len(filtered) >= 10:
        rng = stream(seed, _TAG_ANALYSIS)
        for metric in ("anti_synchrony", "load_sharing"):
            usable = [r for r in filtered if getattr(r, metric) is not None]
            if len(usable) < 10:
                continue
            groups = decile_groups(usable, metric, rng)
            deciles["metrics"][metric] = {
                "top": _group_summary(groups.top),
                "bottom": _group_summary(groups.bottom),
                "random": _group_summary(groups.random_sample),
            }
            deciles["decile_size"] = len(groups.top)

    by_id = {r.dyad_id: r for r in filtered}
    filtered_dyads = [e.dyad for e in hof.entries if e.dyad.lineage.uid in by_id]
    histograms = {
        "bins": histogram_bins,
        "range": [-1.0, 1.0],
        "policies": policy_weight_histograms(filtered_dyads, histogram_bins),
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", filtered)
        (out / "deciles.json").write_text(json.dumps(deciles, indent=2, sort_keys=True))
        (out / "histograms.json").write_text(json.dumps(histograms, indent=2, sort_keys=True))

    return AnalysisResult(rows=rows, filtered=filtered, deciles=deciles, histograms=histograms)
