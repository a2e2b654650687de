"""Markdown and gnuplot summaries of completed run directories."""

from __future__ import annotations

import json
from pathlib import Path

from .io import MANIFEST, VERDICTS, RunManifest, read_csv, verify_artifacts, write_dat

REPORT_DIR = "report"
MAX_DAT_ROWS = 2000


class IncompleteRun(Exception):
    """A run directory lacks its manifest or a listed artifact."""


class TamperedRun(Exception):
    """An artifact no longer matches the hash recorded in its manifest."""


def campaign_dirs(run_dir: Path) -> list[Path]:
    if (run_dir / MANIFEST).is_file():
        return [run_dir]
    return sorted(p for p in run_dir.iterdir() if p.is_dir() and p.name != REPORT_DIR)


def _num(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def _fmt(x) -> str:
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def emit_report(run_dir: str | Path) -> Path:
    """Verify every campaign under ``run_dir`` and write report/report.md plus .dat files.

    Raises IncompleteRun or TamperedRun before writing anything.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise IncompleteRun(f"{run_dir} is not a directory")
    dirs = campaign_dirs(run_dir)
    manifests = {}
    for d in dirs:
        if not (d / MANIFEST).is_file():
            raise IncompleteRun(f"{d}: missing {MANIFEST}")
        man = RunManifest.load(d)
        missing, bad = verify_artifacts(d, man)
        if missing:
            raise IncompleteRun(f"{d}: missing artifacts {', '.join(missing)}")
        if bad:
            raise TamperedRun(f"{d}: hash mismatch for {', '.join(bad)}")
        if VERDICTS not in man.artifacts:
            raise IncompleteRun(f"{d}: missing artifacts {VERDICTS}")
        manifests[d] = man
    out = run_dir / REPORT_DIR
    out.mkdir(exist_ok=True)
    lines = ["# Campaign report", ""]
    if not dirs:
        lines.append("No campaigns found.")
    for d in dirs:
        man = manifests[d]
        verdicts = json.loads((d / VERDICTS).read_text())
        details = {}
        summary_path = d / "summary.json"
        if summary_path.is_file():
            details = json.loads(summary_path.read_text()).get("verdict_details", {})
        label = d.name if d != run_dir else man.job["command"]
        lines += [f"## {label} ({man.job['command']})", ""]
        if verdicts:
            lines += ["| criterion | estimate | band | 95% CI | pass |", "|---|---|---|---|---|"]
            for v in verdicts:
                ci = details.get(v["criterion"], {}).get("ci")
                ci_txt = f"[{_fmt(ci[0])}, {_fmt(ci[1])}]" if ci else ""
                band = f"[{_fmt(v['band'][0])}, {_fmt(v['band'][1])}]"
                lines.append(f"| {v['criterion']} | {_fmt(v['value'])} | {band} | {ci_txt} | "
                             f"{'pass' if v['pass'] else 'FAIL'} |")
        else:
            lines.append("No verdicts.")
        lines.append("")
        for rel in sorted(man.artifacts):
            if not rel.endswith(".csv") or "/" in rel:
                continue
            cols, rows = read_csv(d / rel)
            if len(rows) > MAX_DAT_ROWS:
                continue
            write_dat(out / f"{label}_{rel[:-4]}.dat", cols, [[_num(c) for c in r] for r in rows])
    path = out / "report.md"
    path.write_text("\n".join(lines) + "\n")
    return path
