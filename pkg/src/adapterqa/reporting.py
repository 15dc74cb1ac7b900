"""Aligned result tables: one "F1 / EM", one "Jaccard / WER".

Rows are setups, columns are languages (the seven reference languages in
fixed order first, then any others in first-seen order). Cells without a
run stay blank; rendering the same manifests twice yields identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

LANGUAGE_ORDER = ["hi", "de", "es", "ar", "zh", "vi", "en"]
SETUP_ORDER = ["A", "B", "C_lang", "C_stack", "D"]
SETUP_LABELS = {
    "A": "A: full fine-tune",
    "B": "B: task adapter",
    "C_lang": "C: language adapter",
    "C_stack": "C: language + task",
    "D": "D: transfer (MAD-X)",
}


def _collect(manifests: list[dict]):
    """Map (setup, language) -> report dict; later manifests win."""
    cells: dict[tuple[str, str], dict] = {}
    languages: list[str] = list(LANGUAGE_ORDER)
    for m in manifests:
        report = m["report"]
        lang = report["language"]
        if lang not in languages:
            languages.append(lang)
        cells[(m["setup"], lang)] = report
    used = [l for l in languages
            if any((s, l) in cells for s in SETUP_ORDER)]
    setups = [s for s in SETUP_ORDER if any(k[0] == s for k in cells)]
    return cells, setups, used


def _render_table(title: str, cells, setups, languages, keys) -> str:
    ka, kb = keys

    def cell(setup: str, lang: str) -> str:
        report = cells.get((setup, lang))
        if report is None:
            return ""
        return f"{report[ka]:.2f} / {report[kb]:.2f}"

    header = ["setup"] + languages
    rows = [[SETUP_LABELS[s]] + [cell(s, l) for l in languages] for s in setups]
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [title]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def render_tables(manifests: list[dict]) -> str:
    """Both tables from run manifests (dicts with setup + report)."""
    cells, setups, languages = _collect(manifests)
    if not setups:
        return "no runs to report\n"
    t1 = _render_table("F1 / EM", cells, setups, languages, ("f1", "em"))
    t2 = _render_table("Jaccard / WER", cells, setups, languages,
                       ("jaccard", "wer"))
    return t1 + "\n\n" + t2 + "\n"


def load_manifests(paths) -> list[dict]:
    manifests = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "manifest.json"
        manifests.append(json.loads(p.read_text()))
    return manifests
