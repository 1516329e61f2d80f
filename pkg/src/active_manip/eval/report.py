"""Evaluation reports: per-condition success tallies and their files.

A report directory holds:

* ``summary.json``: protocol, seeds, config fingerprint and one entry per
  condition
* ``summary.md``: the same as Markdown tables
* ``results.csv``: long format, one row per condition
* ``verdicts.jsonl``: one line per episode or record, in evaluation order

Rates are always ``successes / episodes`` over the verdict log; rejected
episodes are listed in the log but count towards no condition.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import pandas as pd

from ..errors import DataError

logger = logging.getLogger(__name__)

SUMMARY_JSON = "summary.json"
SUMMARY_MD = "summary.md"
RESULTS_CSV = "results.csv"
VERDICTS_NAME = "verdicts.jsonl"
REJECTED = "rejected"


@dataclass
class ConditionResult:
    """Success count for one condition (a split, or task x visibility x camera)."""

    condition: dict[str, Any]
    successes: int
    episodes: int

    @property
    def rate(self) -> float:
        return self.successes / self.episodes

    def to_dict(self) -> dict[str, Any]:
        return {**self.condition, "successes": self.successes, "episodes": self.episodes, "rate": self.rate}


@dataclass
class EvalReport:
    """Aggregated result of one evaluation protocol.

    Attributes:
        protocol: ``perception``, ``manipulation``, ``sweep`` or ``ablation``.
        keys: Verdict fields that define a condition.
        results: One entry per condition, sorted by condition.
        seeds: Seeds the run used.
        fingerprint: Fingerprint of the resolved configuration.
        verdicts: The verdict log the results were tallied from.
        meta: Extra run facts (policy kind, tolerance, ...).
    """

    protocol: str
    keys: tuple[str, ...]
    results: list[ConditionResult] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    fingerprint: str = ""
    verdicts: list[dict[str, Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def rate(self, **condition: Any) -> float:
        """Rate of the single condition matching every given field."""
        matches = [r for r in self.results if all(r.condition.get(k) == v for k, v in condition.items())]
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} conditions match {condition}")
        return matches[0].rate

    def to_dict(self) -> dict[str, Any]:
        return {
            "protocol": self.protocol,
            "keys": list(self.keys),
            "seeds": list(self.seeds),
            "fingerprint": self.fingerprint,
            "meta": self.meta,
            "results": [r.to_dict() for r in self.results],
            "episodes": len(self.verdicts),
            "verdict_log": VERDICTS_NAME,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_frame(self) -> pd.DataFrame:
        """Long-format table, one row per condition."""
        columns = ["protocol", *self.keys, "successes", "episodes", "rate"]
        rows = [{"protocol": self.protocol, **r.to_dict()} for r in self.results]
        return pd.DataFrame(rows, columns=columns)

    def to_markdown(self) -> str:
        """Markdown summary; manipulation reports also get a task x camera grid."""
        lines: list[str] = [f"# {self.protocol.capitalize()} evaluation", ""]
        lines.append(f"- Config fingerprint: `{self.fingerprint}`")
        lines.append(f"- Seeds: {', '.join(str(s) for s in self.seeds) or 'none'}")
        for key in sorted(self.meta):
            lines.append(f"- {key}: {self.meta[key]}")
        lines.append("")
        lines.append(f"## Conditions ({len(self.results)})")
        lines.append("")
        if not self.results:
            lines.append("- No completed episodes")
        else:
            header = [*self.keys, "successes", "episodes", "rate"]
            lines.append("| " + " | ".join(header) + " |")
            lines.append("|" + "---|" * len(header))
            for r in self.results:
                cells = [str(r.condition[k]) for k in self.keys]
                cells += [str(r.successes), str(r.episodes), f"{r.rate:.3f}"]
                lines.append("| " + " | ".join(cells) + " |")
        grid = self.camera_grid()
        if grid is not None:
            lines += ["", "## Success rate by camera configuration", ""]
            lines += _frame_markdown(grid)
        rejected = sum(1 for v in self.verdicts if v.get("verdict") == REJECTED)
        if rejected:
            lines += ["", f"{rejected} episodes were rejected at task sampling and are not counted."]
        return "\n".join(lines) + "\n"

    def camera_grid(self) -> Optional[pd.DataFrame]:
        """Rates pivoted to rows (task, visibility) by camera configuration."""
        if not {"family", "visibility", "camera_config"} <= set(self.keys) or not self.results:
            return None
        frame = self.to_frame()
        rows = [k for k in self.keys if k != "camera_config"]
        return frame.pivot_table(index=rows, columns="camera_config", values="rate", aggfunc="first")

    def write(self, out_dir: str | Path) -> Path:
        """Write the four report files into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / SUMMARY_JSON).write_text(self.to_json() + "\n", encoding="utf-8")
        (out_dir / SUMMARY_MD).write_text(self.to_markdown(), encoding="utf-8")
        self.to_frame().to_csv(out_dir / RESULTS_CSV, index=False, lineterminator="\n")
        with open(out_dir / VERDICTS_NAME, "w", encoding="utf-8") as fh:
            for verdict in self.verdicts:
                fh.write(json.dumps(verdict, sort_keys=True) + "\n")
        logger.info(f"Wrote {self.protocol} report ({len(self.results)} conditions) to {out_dir}")
        return out_dir


def _frame_markdown(frame: pd.DataFrame) -> list[str]:
    index_names = [str(n) for n in frame.index.names]
    columns = [str(c) for c in frame.columns]
    lines = ["| " + " | ".join(index_names + columns) + " |", "|" + "---|" * (len(index_names) + len(columns))]
    for index, row in frame.iterrows():
        labels = list(index) if isinstance(index, tuple) else [index]
        values = ["-" if pd.isna(v) else f"{v:.3f}" for v in row.tolist()]
        lines.append("| " + " | ".join([str(x) for x in labels] + values) + " |")
    return lines


def tally(
    protocol: str,
    verdicts: Sequence[dict[str, Any]],
    keys: Sequence[str],
    seeds: Iterable[int] = (),
    fingerprint: str = "",
    meta: Optional[dict[str, Any]] = None,
) -> EvalReport:
    """Group verdicts by ``keys`` and count successes.

    Rejected verdicts are skipped; conditions left with no episodes are
    dropped with a warning.
    """
    counts: dict[tuple, list[int]] = {}
    seen: dict[tuple, int] = {}
    for verdict in verdicts:
        condition = tuple(verdict[k] for k in keys)
        seen[condition] = seen.get(condition, 0) + 1
        if verdict.get("verdict") == REJECTED:
            continue
        entry = counts.setdefault(condition, [0, 0])
        entry[0] += verdict.get("verdict") == "success"
        entry[1] += 1
    for condition in sorted(set(seen) - set(counts), key=_sort_key):
        logger.warning(f"Every episode of {dict(zip(keys, condition))} was rejected; condition dropped")
    results = [
        ConditionResult(dict(zip(keys, condition)), successes, episodes)
        for condition, (successes, episodes) in sorted(counts.items(), key=lambda item: _sort_key(item[0]))
    ]
    return EvalReport(
        protocol=protocol,
        keys=tuple(keys),
        results=results,
        seeds=sorted(set(int(s) for s in seeds)),
        fingerprint=fingerprint,
        verdicts=list(verdicts),
        meta=dict(meta or {}),
    )


def _sort_key(condition: tuple) -> tuple:
    return tuple(str(c) for c in condition)


def merge_reports(protocol: str, reports: dict[str, EvalReport], key: str, meta: Optional[dict[str, Any]] = None) -> EvalReport:
    """Stack reports under an extra condition field (e.g. ``perturbation``)."""
    if not reports:
        raise ValueError("No reports to merge")
    keys = next(iter(reports.values())).keys
    verdicts, seeds, fingerprints = [], set(), set()
    for name, report in reports.items():
        if report.keys != keys:
            raise ValueError(f"Report {name!r} has keys {report.keys}, expected {keys}")
        verdicts += [{key: name, **v} for v in report.verdicts]
        seeds.update(report.seeds)
        fingerprints.add(report.fingerprint)
    fingerprint = fingerprints.pop() if len(fingerprints) == 1 else ""
    merged_meta = dict(meta or {})
    if not fingerprint:
        merged_meta["fingerprints"] = {name: r.fingerprint for name, r in reports.items()}
    return tally(protocol, verdicts, (key, *keys), seeds, fingerprint, merged_meta)


def read_report(path: str | Path) -> EvalReport:
    """Reopen a report directory written by ``EvalReport.write``.

    Results are re-tallied from the verdict log, so a report with an edited
    summary but an intact log still renders correctly.

    Raises:
        DataError: when the summary or the verdict log is missing.
    """
    path = Path(path)
    summary_path, verdicts_path = path / SUMMARY_JSON, path / VERDICTS_NAME
    for required in (summary_path, verdicts_path):
        if not required.exists():
            raise DataError(f"{path} is not a finished evaluation directory: {required.name} is missing")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    with open(verdicts_path, encoding="utf-8") as fh:
        verdicts = [json.loads(line) for line in fh if line.strip()]
    report = tally(
        summary["protocol"],
        verdicts,
        summary["keys"],
        summary.get("seeds", ()),
        summary.get("fingerprint", ""),
        summary.get("meta"),
    )
    recorded = {json.dumps(r, sort_keys=True) for r in summary.get("results", [])}
    recomputed = {json.dumps(r.to_dict(), sort_keys=True) for r in report.results}
    if recorded != recomputed:
        logger.warning(f"{summary_path} disagrees with its verdict log; using the log")
    return report


def find_reports(root: str | Path) -> list[Path]:
    """Every report directory under ``root`` (itself included), sorted."""
    root = Path(root)
    return sorted(p.parent for p in root.rglob(SUMMARY_JSON))
