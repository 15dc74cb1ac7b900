"""Result-table rendering: cell format, ordering, blanks, determinism."""

import json

from adapterqa.reporting import (
    LANGUAGE_ORDER,
    SETUP_LABELS,
    SETUP_ORDER,
    load_manifests,
    render_tables,
)


def manifest(setup, language, f1=50.0, em=25.0, jaccard=40.0, wer=60.0):
    return {"setup": setup,
            "report": {"language": language, "f1": f1, "em": em,
                       "jaccard": jaccard, "wer": wer}}


def test_cell_format_two_decimals_slash_separated():
    text = render_tables([manifest("A", "de", f1=66.6666, em=50.0)])
    assert "66.67 / 50.00" in text
    assert "40.00 / 60.00" in text


def test_both_tables_present():
    text = render_tables([manifest("B", "hi")])
    assert text.startswith("F1 / EM\n")
    assert "\n\nJaccard / WER\n" in text
    assert text.endswith("\n")


def test_no_runs_message():
    assert render_tables([]) == "no runs to report\n"


def test_row_order_follows_setup_order():
    text = render_tables([manifest("D", "de"), manifest("A", "de"),
                          manifest("C_stack", "de")])
    lines = render_tables([manifest("D", "de"), manifest("A", "de"),
                           manifest("C_stack", "de")]).splitlines()
    labels = [l.split("  ")[0].rstrip() for l in lines
              if l.startswith(tuple(SETUP_LABELS.values()))]
    assert labels == [SETUP_LABELS["A"], SETUP_LABELS["C_stack"],
                      SETUP_LABELS["D"]] * 2
    assert text == "\n".join(lines) + "\n"


def test_reference_languages_keep_fixed_order():
    runs = [manifest("A", "zh"), manifest("A", "hi"), manifest("A", "es")]
    header = render_tables(runs).splitlines()[1]
    assert header.split() == ["setup", "hi", "es", "zh"]
    assert LANGUAGE_ORDER.index("hi") < LANGUAGE_ORDER.index("zh")


def test_extra_language_appended_after_reference_set():
    runs = [manifest("A", "synthetic-b"), manifest("A", "de"),
            manifest("A", "synthetic-a")]
    header = render_tables(runs).splitlines()[1]
    assert header.split() == ["setup", "de", "synthetic-b", "synthetic-a"]


def test_missing_cells_stay_blank():
    runs = [manifest("A", "de"), manifest("D", "hi")]
    lines = render_tables(runs).splitlines()
    header = lines[1].split()
    assert header == ["setup", "hi", "de"]
    row_a = next(l for l in lines if l.startswith(SETUP_LABELS["A"]))
    row_d = next(l for l in lines if l.startswith(SETUP_LABELS["D"]))
    # A ran only on de: its hi column is spaces
    hi_col = lines[1].index("hi")
    assert row_a[hi_col:hi_col + 2] == "  "
    assert "50.00 / 25.00" in row_a
    assert "50.00 / 25.00" in row_d


def test_later_manifest_wins_duplicate_cell():
    runs = [manifest("A", "de", f1=10.0, em=10.0),
            manifest("A", "de", f1=90.0, em=80.0)]
    text = render_tables(runs)
    assert "90.00 / 80.00" in text
    assert "10.00 / 10.00" not in text


def test_rendering_is_deterministic():
    runs = [manifest(s, l) for s in SETUP_ORDER for l in ("hi", "de")]
    assert render_tables(runs) == render_tables([dict(r) for r in runs])


def test_separator_line_matches_column_widths():
    lines = render_tables([manifest("B", "de")]).splitlines()
    dashes = lines[2]
    assert set(dashes) <= {"-", " "}
    segments = [len(seg) for seg in dashes.split("  ")]
    # column widths come from the widest entry: the row label and the cell
    assert segments == [len(SETUP_LABELS["B"]), len("50.00 / 25.00")]


def test_load_manifests_accepts_files_and_run_dirs(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    (run_dir / "manifest.json").write_text(json.dumps(manifest("A", "de")))
    direct = tmp_path / "other.json"
    direct.write_text(json.dumps(manifest("B", "hi")))
    loaded = load_manifests([run_dir, direct])
    assert [m["setup"] for m in loaded] == ["A", "B"]
    text = render_tables(loaded)
    assert SETUP_LABELS["A"] in text and SETUP_LABELS["B"] in text
