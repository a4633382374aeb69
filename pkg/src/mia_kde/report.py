"""End-to-end risk assessment run and its report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import attacks as atk
from .distance import (
    DistanceTable,
    GowerContext,
    nearest_neighbor_distances,
    read_distances,
    split_distances,
)
from .kde import resolve_bandwidth
from .metrics import (
    DEFAULT_FPR_TARGETS,
    DEFAULT_RISK_MULTIPLIER,
    accuracy_f1,
    confusion,
    ks_two_sample,
    roc_curve,
    tp_fp_trajectory,
    tpr_at_fpr,
)
from .tabular import (
    CATEGORICAL,
    FeatureSpec,
    build_attack_dataset,
    load_schema,
    load_table,
    same_layout,
)

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
ATTACK_CHOICES = (atk.TRUE_DIST, atk.REALISTIC, atk.METHOD1, "all")
OUTCOME_COLUMNS = (
    "source_index",
    "distance",
    "posterior",
    "predicted",
    "truth",
    "attack",
    "threshold_percentile",
)


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"[{stage}] {exc}")


@dataclass
class RunConfig:
    seed: int
    out: str
    train: str | None = None
    unseen: str | None = None
    synthetic: str | None = None
    schema: str | None = None
    attack: str = "all"
    percentiles: tuple[float, ...] = atk.DEFAULT_PERCENTILES
    train_fraction: float = 0.7
    bandwidth: str | float = "scott"
    decision_threshold: float = 0.5
    prior_member: float = 0.5
    fpr_targets: tuple[float, ...] = DEFAULT_FPR_TARGETS
    risk_multiplier: float = DEFAULT_RISK_MULTIPLIER
    balance_attack: bool = True
    balanced_train: bool = True
    range_normalize: bool = True
    distances_in: str | None = None
    distances_out: str | None = None
    n_jobs: int | None = None
    density_grid: int = 201

    def validate(self) -> None:
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError("an explicit integer seed is required")
        if self.attack not in ATTACK_CHOICES:
            raise ValueError(f"attack must be one of {ATTACK_CHOICES}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 <= self.decision_threshold <= 1.0:
            raise ValueError("decision_threshold must lie in [0, 1]")
        if not 0.0 < self.prior_member < 1.0:
            raise ValueError("prior_member must lie in (0, 1)")
        if any(not 0.0 < p < 100.0 for p in self.percentiles):
            raise ValueError("percentiles must lie in (0, 100)")
        if any(not 0.0 < t < 1.0 for t in self.fpr_targets):
            raise ValueError("FPR targets must lie in (0, 1)")
        if not self.risk_multiplier > 0:
            raise ValueError("risk_multiplier must be positive")
        if self.density_grid < 2:
            raise ValueError("density_grid needs at least 2 points")
        resolve_bandwidth([0.0, 1.0], self.bandwidth)
        if self.distances_in is None:
            missing = [k for k in ("train", "unseen", "synthetic") if getattr(self, k) is None]
            if missing:
                raise ValueError(f"missing input paths: {', '.join(missing)}")

    def selected(self, name: str) -> bool:
        return self.attack in ("all", name)


@dataclass
class RunResult:
    report: dict
    files: dict[str, str] = field(default_factory=dict)

    @property
    def risk_detected(self) -> bool:
        return bool(self.report["risk_detected"])

    def report_json(self) -> str:
        return dumps_report(self.report)

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in self.files.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# stages


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except (ValueError, OSError, KeyError) as exc:
                raise PipelineError(name, exc) from exc

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


@_stage("tabular_core")
def _load_inputs(cfg: RunConfig):
    if cfg.schema is not None:
        schema = load_schema(cfg.schema)
        tables = [load_table(p, schema) for p in (cfg.train, cfg.unseen, cfg.synthetic)]
    else:
        tables = [load_table(p) for p in (cfg.train, cfg.unseen, cfg.synthetic)]
        if not all(same_layout(tables[0].schema, t.schema) for t in tables[1:]):
            names = [t.names for t in tables]
            if names[1:] != names[:-1]:
                raise ValueError("input files have different columns")
            # a column that is categorical in any file is categorical everywhere
            merged = [
                FeatureSpec(f.name, CATEGORICAL)
                if any(not t.schema[j].is_numeric for t in tables)
                else FeatureSpec(f.name, f.kind)
                for j, f in enumerate(tables[0].schema)
            ]
            tables = [load_table(p, merged) for p in (cfg.train, cfg.unseen, cfg.synthetic)]
    r, u, s = tables
    if len(s) == 0:
        raise ValueError("synthetic table is empty")
    attack = build_attack_dataset(r, u, cfg.balance_attack, cfg.seed)
    summary = {
        "n_train_records": len(r),
        "n_unseen_records": len(u),
        "n_synthetic_records": len(s),
        "n_attack_records": len(attack),
        "n_attack_members": attack.n_members,
        "n_attack_non_members": attack.n_non_members,
        "n_cross_duplicates": attack.n_duplicates,
        "features": [{"name": f.name, "kind": f.kind} for f in r.schema],
    }
    return attack, s, summary


@_stage("distance_engine")
def _distances(cfg: RunConfig, attack, synth):
    ctx = GowerContext.from_tables(attack.table, synth, range_normalize=cfg.range_normalize)
    return nearest_neighbor_distances(attack, synth, ctx, n_jobs=cfg.n_jobs)


@_stage("distance_engine")
def _read_distances(cfg: RunConfig) -> DistanceTable:
    return read_distances(cfg.distances_in, range_normalized=cfg.range_normalize)


@_stage("distance_engine")
def _split(cfg: RunConfig, dt: DistanceTable) -> DistanceTable:
    return split_distances(dt, cfg.train_fraction, cfg.balanced_train, cfg.seed)


# ---------------------------------------------------------------------------
# rendering helpers


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _pct_label(p: float) -> str:
    return f"{p:g}"


def outcomes_rows(outs: Sequence[atk.AttackOutcomes]):
    for o in outs:
        pct = "" if o.threshold_percentile is None else _num(o.threshold_percentile)
        for s, d, p, yp, yt in zip(
            o.source_index.tolist(),
            o.distance.tolist(),
            o.posterior.tolist(),
            o.predicted.tolist(),
            o.truth.tolist(),
        ):
            yield [s, _num(d), _num(p), yp, yt, o.attack, pct]


def _roc_csv(curve) -> str:
    return _csv(
        ["fpr", "tpr", "threshold"],
        ([_num(f), _num(t), _num(th)] for f, t, th in zip(curve.fpr, curve.tpr, curve.thresholds)),
    )


def evaluate_outcomes(outcomes: atk.AttackOutcomes, fpr_targets, risk_multiplier) -> tuple[dict, object]:
    """Metric block for one attack run; every number derives from ``outcomes``."""
    cm = confusion(outcomes)
    sc = accuracy_f1(cm)
    curve = roc_curve(outcomes.posterior, outcomes.truth)
    readouts = []
    flagged = False
    for r in tpr_at_fpr(curve, fpr_targets, risk_multiplier):
        if not r.sufficient:
            status = "insufficient sample"
        elif r.flagged:
            status = "flagged"
            flagged = True
        else:
            status = "ok"
        readouts.append(
            {"fpr": r.target, "tpr": r.tpr, "risk_ratio": r.risk_ratio, "status": status}
        )
    block = {
        "n_test": len(outcomes),
        "confusion": asdict(cm),
        "accuracy": sc.accuracy,
        "precision": sc.precision,
        "recall": sc.recall,
        "f1": sc.f1,
        "auc": curve.auc,
        "tpr_at_fpr": readouts,
        "risk_flag": flagged,
        "probabilistic": outcomes.probabilistic,
    }
    return block, curve


def _grid_upper(dt: DistanceTable) -> float:
    if dt.range_normalized:
        return 1.0
    top = float(dt.distances.max())
    return top * 1.05 if top > 0 else 1.0


def _density_rows(model: atk.PosteriorModel, grid: np.ndarray, prefix=()):
    fm, fn = model.densities(grid)
    for cls, dens in (("member", fm), ("non_member", fn)):
        for x, v in zip(grid.tolist(), dens.tolist()):
            yield [*prefix, cls, _num(x), _num(v)]


# ---------------------------------------------------------------------------
# pipeline


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Execute the full assessment in memory and return the report plus the
    contents of every output file. Nothing is written to disk here."""
    try:
        cfg.validate()
    except ValueError as exc:
        raise PipelineError("cli_report", exc) from exc

    files: dict[str, str] = {}
    if cfg.distances_in is not None:
        dt = _read_distances(cfg)
        summary = {
            "distance_source": "file",
            "n_attack_records": len(dt),
            "n_attack_members": int((dt.labels == 1).sum()),
            "n_attack_non_members": int((dt.labels == 0).sum()),
        }
    else:
        attack, synth, summary = _load_inputs(cfg)
        summary["distance_source"] = "computed"
        dt = _distances(cfg, attack, synth)
    dt = _split(cfg, dt)
    summary.update(
        {
            "n_train_split": int(len(dt.train_indices)),
            "n_test_split": int(len(dt.test_indices)),
            "n_train_split_members": int((dt.train_labels == 1).sum()),
            "n_test_split_members": int((dt.test_labels == 1).sum()),
            "n_excluded_by_balancing": int(len(dt) - len(dt.train_indices) - len(dt.test_indices)),
            "range_normalized": dt.range_normalized,
            "constant_features": list(dt.constant_features),
        }
    )
    files["distances.csv"] = _csv(
        ["source_index", "distance", "label"],
        (
            [s, _num(d), y]
            for s, d, y in zip(dt.source_index.tolist(), dt.distances.tolist(), dt.labels.tolist())
        ),
    )

    tr_d, tr_y = dt.train_distances, dt.train_labels
    ks = None
    if (tr_y == 1).sum() >= 2 and (tr_y == 0).sum() >= 2:
        ks = ks_two_sample(tr_d[tr_y == 1], tr_d[tr_y == 0])._asdict()

    upper = _grid_upper(dt)
    density_grid = np.linspace(0.0, upper, cfg.density_grid)
    fpr, tm = cfg.fpr_targets, cfg.risk_multiplier
    sections: dict[str, dict] = {}
    heatmap: list[dict] = []
    trajectory: dict[str, list] = {}
    flags = {"degenerate_bandwidth": [], "posterior_underflow_records": 0}

    try:
        if cfg.selected(atk.TRUE_DIST):
            model, out = atk.true_distribution_attack(
                dt, cfg.bandwidth, cfg.decision_threshold, cfg.prior_member
            )
            block, curve = evaluate_outcomes(out, fpr, tm)
            block["bandwidth"] = {
                "member": model.kde_member.bandwidth_,
                "non_member": model.kde_non_member.bandwidth_,
            }
            block["degenerate_bandwidth"] = model.degenerate
            block["posterior_underflow_records"] = out.n_underflow
            block["max_posterior_increase"] = atk.max_posterior_increase(model, upper)
            if model.degenerate:
                flags["degenerate_bandwidth"].append(atk.TRUE_DIST)
            flags["posterior_underflow_records"] += out.n_underflow
            sections[atk.TRUE_DIST] = block
            files["outcomes-true-dist.csv"] = _csv(OUTCOME_COLUMNS, outcomes_rows([out]))
            files["roc-true-dist.csv"] = _roc_csv(curve)
            files["density-true-dist.csv"] = _csv(
                ["class", "x", "density"], _density_rows(model, density_grid)
            )

        grid = None
        if cfg.selected(atk.REALISTIC) or cfg.selected(atk.METHOD1):
            grid = atk.resolve_thresholds(dt, cfg.percentiles)

        if cfg.selected(atk.REALISTIC):
            sweep = atk.realistic_attack(
                dt, grid, cfg.bandwidth, cfg.decision_threshold, cfg.prior_member
            )
            runs = []
            density_rows = []
            for run in sweep.runs:
                block, curve = evaluate_outcomes(run.outcomes, fpr, tm)
                block.update(
                    {
                        "percentile": run.percentile,
                        "threshold": run.threshold,
                        "n_supposed_members": run.n_supposed_members,
                        "n_supposed_non_members": run.n_supposed_non_members,
                        "bandwidth": {
                            "member": run.model.kde_member.bandwidth_,
                            "non_member": run.model.kde_non_member.bandwidth_,
                        },
                        "degenerate_bandwidth": run.model.degenerate,
                        "posterior_underflow_records": run.outcomes.n_underflow,
                        "max_posterior_increase": atk.max_posterior_increase(run.model, upper),
                    }
                )
                if run.model.degenerate:
                    flags["degenerate_bandwidth"].append(
                        f"{atk.REALISTIC}@p{_pct_label(run.percentile)}"
                    )
                flags["posterior_underflow_records"] += run.outcomes.n_underflow
                runs.append(block)
                heatmap.append(
                    {
                        "attack": atk.REALISTIC,
                        "percentile": run.percentile,
                        "accuracy": block["accuracy"],
                        "f1": block["f1"],
                    }
                )
                files[f"roc-realistic-p{_pct_label(run.percentile)}.csv"] = _roc_csv(curve)
                density_rows.extend(
                    _density_rows(run.model, density_grid, (_num(run.percentile),))
                )
            sections[atk.REALISTIC] = {"thresholds": runs, "skipped": sweep.skipped}
            files["outcomes-realistic.csv"] = _csv(
                OUTCOME_COLUMNS, outcomes_rows([r.outcomes for r in sweep.runs])
            )
            files["density-realistic.csv"] = _csv(
                ["threshold_percentile", "class", "x", "density"], density_rows
            )
            trajectory[atk.REALISTIC] = _trajectory(
                [r.percentile for r in sweep.runs], [r.outcomes for r in sweep.runs]
            )

        if cfg.selected(atk.METHOD1):
            outs = atk.method1_attack(dt, grid)
            runs = []
            for o in outs:
                block, _ = evaluate_outcomes(o, fpr, tm)
                block.update({"percentile": o.threshold_percentile, "threshold": o.distance_threshold})
                runs.append(block)
                heatmap.append(
                    {
                        "attack": atk.METHOD1,
                        "percentile": o.threshold_percentile,
                        "accuracy": block["accuracy"],
                        "f1": block["f1"],
                    }
                )
            sections[atk.METHOD1] = {"thresholds": runs}
            files["outcomes-method1.csv"] = _csv(OUTCOME_COLUMNS, outcomes_rows(outs))
            trajectory[atk.METHOD1] = _trajectory([o.threshold_percentile for o in outs], outs)
            files["trajectory.csv"] = _csv(
                ["percentile", "tp", "fp"],
                ([_num(p["percentile"]), p["tp"], p["fp"]] for p in trajectory[atk.METHOD1]),
            )
    except PipelineError:
        raise
    except ValueError as exc:
        raise PipelineError("attacks", exc) from exc

    risk = any(_section_flagged(s) for s in sections.values())
    report = {
        "report_version": REPORT_VERSION,
        "config": _config_echo(cfg),
        "dataset": summary,
        "flags": flags,
        "notes": {
            "kde_kernel": "gaussian",
            "kde_boundary_correction": "none",
            "realistic_fit_split": "train",
            "decision_rule": "member iff posterior >= decision_threshold",
            "supposed_member_rule": "d < threshold",
            "range_normalized": dt.range_normalized,
        },
        "ks_train_member_vs_non_member": ks,
        "attacks": sections,
        "heatmap": heatmap,
        "trajectory": trajectory,
        "risk_detected": risk,
    }
    if atk.REALISTIC in sections and atk.METHOD1 in sections:
        report["comparison"] = compare_attacks(report)
    files["report.json"] = dumps_report(report)
    return RunResult(report, files)


def _trajectory(percentiles, outcomes) -> list[dict]:
    points = tp_fp_trajectory([confusion(o) for o in outcomes])
    return [
        {"percentile": p, "tp": pt.tp, "fp": pt.fp, "tp_outpaces_fp": pt.tp_outpaces_fp}
        for p, pt in zip(percentiles, points)
    ]


def _section_flagged(section: dict) -> bool:
    if "thresholds" in section:
        return any(b["risk_flag"] for b in section["thresholds"])
    return bool(section["risk_flag"])


def _config_echo(cfg: RunConfig) -> dict:
    echo = asdict(cfg)
    # output locations and thread count do not affect any reported number
    for key in ("out", "distances_out", "n_jobs"):
        echo.pop(key)
    echo["percentiles"] = [float(p) for p in cfg.percentiles]
    echo["fpr_targets"] = [float(t) for t in cfg.fpr_targets]
    echo["seed"] = int(cfg.seed)
    return echo


def compare_attacks(report: dict) -> list[dict]:
    """Per-percentile F1 of the realistic attack against the hard-threshold
    baseline, and whether it beats the true-distribution F1."""
    sections = report.get("attacks", {})
    if atk.REALISTIC not in sections or atk.METHOD1 not in sections:
        raise ValueError("comparison needs both the realistic and method1 sections")
    real = {b["percentile"]: b for b in sections[atk.REALISTIC]["thresholds"]}
    true_f1 = sections.get(atk.TRUE_DIST, {}).get("f1")
    rows = []
    for b in sections[atk.METHOD1]["thresholds"]:
        pct = b["percentile"]
        r = real.get(pct)
        rows.append(
            {
                "percentile": pct,
                "method1_f1": b["f1"],
                "realistic_f1": None if r is None else r["f1"],
                "f1_delta": None if r is None else r["f1"] - b["f1"],
                "realistic_exceeds_true_dist": None
                if r is None or true_f1 is None
                else r["f1"] > true_f1,
            }
        )
    return rows
