"""Benchmark reports: aggregation, improvement rows, and stable CSV / JSON / markdown output."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from hybrid_manip.bench.metrics import (
    HIGHER_BETTER,
    LOWER_BETTER,
    EpisodeMetrics,
    accuracy,
    adaptability,
    censored_completion_time,
    improvement,
    mean_completion_time,
)
from hybrid_manip.bench.runner import BatteryConfig, Condition, ConditionSpec, run_battery
from hybrid_manip.errors import EmptySet, ZeroBaseline
from hybrid_manip.rl.train import LearningCurve

FORMATS = ("csv", "json", "markdown")
TABLE_HEADER = "| Metric | RL Only | LLM + RL | Improvement (%) |"

# Published comparison table: (metric, rl_only, llm_rl, printed improvement, direction).
PUBLISHED_ROWS = (
    ("Task Completion Time (s)", 18.5, 12.3, 33.5, LOWER_BETTER),
    ("Accuracy (%)", 78.4, 92.6, 18.1, HIGHER_BETTER),
    ("Adaptability (%)", 65.2, 88.9, 36.4, HIGHER_BETTER),
)
METRICS = (
    ("completion_time_s", "Task Completion Time (s)", LOWER_BETTER),
    ("accuracy", "Accuracy (%)", HIGHER_BETTER),
    ("adaptability", "Adaptability (%)", HIGHER_BETTER),
)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except EmptySet:
        return None


@dataclass
class Aggregate:
    scenario: str
    condition: str
    episodes: int
    accuracy: float | None
    adaptability: float | None
    completion_time_s: float | None
    censored_completion_time_s: float
    mean_replans: float
    errors: int

    @classmethod
    def of(cls, scenario: str, condition: str, rows: list[EpisodeMetrics], limit_s: float) -> "Aggregate":
        return cls(
            scenario=scenario,
            condition=condition,
            episodes=len(rows),
            accuracy=_maybe(accuracy, rows),
            adaptability=_maybe(adaptability, rows),
            completion_time_s=_maybe(mean_completion_time, rows),
            censored_completion_time_s=censored_completion_time(rows, limit_s),
            mean_replans=sum(r.replans for r in rows) / len(rows),
            errors=sum(1 for r in rows if r.error),
        )


@dataclass
class ImprovementRow:
    scenario: str
    baseline: str
    treatment: str
    metric: str
    baseline_value: float | None
    treatment_value: float | None
    improvement: float | None


@dataclass
class BenchReport:
    config: dict
    fingerprint: str
    aggregates: list[Aggregate]
    improvements: list[ImprovementRow]
    episodes: list[EpisodeMetrics]
    notes: list[str] = field(default_factory=list)

    def aggregate(self, scenario: str, condition: str) -> Aggregate:
        for a in self.aggregates:
            if a.scenario == scenario and a.condition == condition:
                return a
        raise KeyError((scenario, condition))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "fingerprint": self.fingerprint,
            "aggregates": [asdict(a) for a in self.aggregates],
            "improvements": [asdict(r) for r in self.improvements],
            "episodes": [e.to_dict() for e in self.episodes],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        return cls(
            config=data["config"],
            fingerprint=data["fingerprint"],
            aggregates=[Aggregate(**a) for a in data["aggregates"]],
            improvements=[ImprovementRow(**r) for r in data["improvements"]],
            episodes=[EpisodeMetrics(**e) for e in data["episodes"]],
            notes=list(data.get("notes", [])),
        )


def rounding_note() -> str:
    _, base, treat, printed, direction = PUBLISHED_ROWS[2]
    exact = improvement(base, treat, direction)
    return (
        f"Published adaptability improvement is printed as {printed:.1f}; "
        f"({treat} - {base}) / {base} = {exact:.4f}% rounds to {exact:.1f}. "
        "This report prints the formula result."
    )


def improvement_rows(scenario: str, aggregates: dict[str, Aggregate], baseline: str) -> list[ImprovementRow]:
    rows = []
    base = aggregates.get(baseline)
    if base is None:
        return rows
    for cond, agg in aggregates.items():
        if cond == baseline:
            continue
        for attr, _, direction in METRICS:
            b, t = getattr(base, attr), getattr(agg, attr)
            value = None
            if b is not None and t is not None:
                try:
                    value = improvement(b, t, direction)
                except ZeroBaseline:
                    value = None
            rows.append(ImprovementRow(scenario, baseline, cond, attr, b, t, value))
    return rows


def build_report(rows: list[EpisodeMetrics], config: dict, fingerprint: str, limits: dict[str, float]) -> BenchReport:
    scenarios = list(dict.fromkeys(r.scenario for r in rows))
    conditions = list(dict.fromkeys(r.condition for r in rows))
    aggregates, improvements = [], []
    for sc in scenarios:
        per = {}
        for cond in conditions:
            sel = [r for r in rows if r.scenario == sc and r.condition == cond]
            if sel:
                per[cond] = Aggregate.of(sc, cond, sel, limits[sc])
        aggregates.extend(per.values())
        improvements.extend(improvement_rows(sc, per, Condition.RL_ONLY.value))
    notes = [
        rounding_note(),
        "Completion time averages successful episodes only; censored_completion_time_s counts failures at the episode limit.",
    ]
    return BenchReport(config, fingerprint, aggregates, improvements, list(rows), notes)


def run_benchmark(suite, conditions: list[ConditionSpec], n_episodes: int, seed: int, **kwargs) -> BenchReport:
    """Run every (scenario, condition) battery and assemble the report. Deterministic given ``seed``."""
    config = BatteryConfig(n_episodes, seed, **kwargs)
    rows = run_battery(suite, conditions, config)
    cfg = {
        "n_episodes": n_episodes,
        "seed": seed,
        "init_noise": config.init_noise,
        "execution": dict(vars(config.execution)),
        "scenarios": [s.name for s in suite],
        "conditions": [c.describe() for c in conditions],
    }
    limits = {s.name: s.max_steps * s.sim_dt for s in suite}
    return build_report(rows, cfg, config.fingerprint(suite, conditions), limits)


# Emission ---------------------------------------------------------------------------------


def _cell(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.1f}"


def _table(rows) -> list[str]:
    lines = [TABLE_HEADER, "|---|---|---|---|"]
    for label, base, treat, imp in rows:
        lines.append(f"| {label} | {_cell(base)} | {_cell(treat)} | {_cell(imp)} |")
    return lines


def render_markdown(report: BenchReport) -> str:
    out = [f"# Benchmark report `{report.fingerprint}`", ""]
    out.append(
        f"seed {report.config['seed']}, {report.config['n_episodes']} episodes per condition "
        f"(odd episodes perturbed), init noise {report.config['init_noise']}"
    )
    out.append("")
    scenarios = list(dict.fromkeys(a.scenario for a in report.aggregates))
    for sc in scenarios:
        treatments = list(dict.fromkeys(r.treatment for r in report.improvements if r.scenario == sc))
        for cond in treatments:
            out.append(f"## {sc}: {Condition.RL_ONLY.value} vs {cond}")
            out.append("")
            rows = []
            for attr, label, _ in METRICS:
                r = next(x for x in report.improvements if x.scenario == sc and x.treatment == cond and x.metric == attr)
                rows.append((label, r.baseline_value, r.treatment_value, r.improvement))
            out.extend(_table(rows))
            out.append("")
        out.append(f"## {sc}: per-condition aggregates")
        out.append("")
        out.append("| Condition | Episodes | Accuracy (%) | Adaptability (%) | Time (s) | Censored time (s) | Mean replans | Errors |")
        out.append("|---|---|---|---|---|---|---|---|")
        for a in (x for x in report.aggregates if x.scenario == sc):
            out.append(
                f"| {a.condition} | {a.episodes} | {_cell(a.accuracy)} | {_cell(a.adaptability)} | "
                f"{_cell(a.completion_time_s)} | {a.censored_completion_time_s:.1f} | {a.mean_replans:.2f} | {a.errors} |"
            )
        out.append("")
    out.append("## Published table recomputed")
    out.append("")
    rows = [(label, b, t, improvement(b, t, d)) for label, b, t, _, d in PUBLISHED_ROWS]
    out.extend(_table(rows))
    out.append("")
    out.append("## Notes")
    out.append("")
    out.extend(f"- {n}" for n in report.notes)
    return "\n".join(out) + "\n"


CSV_FIELDS = (
    "scenario", "condition", "episode", "seed", "perturbed", "success", "steps",
    "completion_time_s", "replans", "cumulative_reward", "error",
)


def render_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for e in report.episodes:
        d = e.to_dict()
        w.writerow(["" if d[k] is None else (int(d[k]) if isinstance(d[k], bool) else d[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def render_json(report: BenchReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def emit_report(report: BenchReport, fmt: str) -> bytes:
    if fmt == "csv":
        return render_csv(report).encode()
    if fmt == "json":
        return render_json(report).encode()
    if fmt in ("markdown", "md", "markdown-table"):
        return render_markdown(report).encode()
    raise ValueError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def emit_learning_curve(curve: LearningCurve) -> bytes:
    return curve.to_csv().encode()


def write_report(report: BenchReport, directory: str | Path) -> list[Path]:
    """Write the full report plus one episode CSV per (condition, scenario)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    seed, fp = report.config["seed"], report.fingerprint
    paths = []
    for fmt, ext in (("json", "json"), ("markdown", "md"), ("csv", "csv")):
        path = directory / f"report_seed{seed}_{fp}.{ext}"
        path.write_bytes(emit_report(report, fmt))
        paths.append(path)
    for agg in report.aggregates:
        sub = BenchReport(
            report.config, fp, [agg], [],
            [e for e in report.episodes if e.scenario == agg.scenario and e.condition == agg.condition],
        )
        path = directory / f"{agg.condition}_{agg.scenario}_seed{seed}_{fp}.csv"
        path.write_bytes(emit_report(sub, "csv"))
        paths.append(path)
    return paths
