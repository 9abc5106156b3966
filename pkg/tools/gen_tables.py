"""Regenerate the data tables shipped under src/corpuskit/data.

Needs the ``iso639-lang``, ``langcodes`` and ``fontTools`` packages at
generation time only; the runtime reads the TSV files.

    python tools/gen_tables.py
"""
import json
import os
import inspect
import re
from pathlib import Path

import iso639
import langcodes
from fontTools.unicodedata import Scripts

DATA = Path(__file__).resolve().parents[1] / "src" / "corpuskit" / "data"
ISO_DATA = Path(iso639.__file__).parent / "data"


def _load(name):
    with open(ISO_DATA / name, encoding="utf-8") as fh:
        return json.load(fh)


def write_code_table():
    table = _load("iso-639.json")
    deprecated = _load("iso-639_deprecated.json")["id"]
    other_names = _load("iso-639_other_names.json")

    pt3 = table["pt3"]
    rows = []
    for code in sorted(pt3):
        rows.append((code, code, "exact"))

    for part in ("pt1", "pt2b", "pt2t"):
        for code, entry in sorted(table[part].items()):
            target = entry.get("pt3")
            if target and code != target:
                rows.append((code, target, "mapped"))

    for code, entry in sorted(deprecated.items()):
        if code in pt3:
            continue
        target = entry.get("change_to", "")
        if target:
            rows.append((code, target, "merged_into"))
        elif entry.get("reason") == "S":
            rows.append((code, code, "retained_split"))

    for code, entry in sorted(table["pt5"].items()):
        if entry.get("pt3"):
            continue
        rows.append((code, code, "retained_group"))
        for alias in (entry.get("pt2b"), entry.get("pt2t")):
            if alias and alias != code:
                rows.append((alias, alias, "retained_group"))

    names = {}
    for code, entry in pt3.items():
        names.setdefault(entry["name"], set()).add(code)
    for ref, aliases in other_names.items():
        hits = table["name"].get(ref)
        if hits and hits.get("pt3"):
            for alias in aliases:
                names.setdefault(alias, set()).add(hits["pt3"])
    for name in sorted(names):
        codes = names[name]
        if len(codes) == 1:
            rows.append((name, next(iter(codes)), "name"))

    seen = set()
    out = DATA / "iso639_resolution.tsv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("# input\toutput\tkind\n")
        fh.write("# generated by tools/gen_tables.py from ISO 639 code tables\n")
        for row in rows:
            key = (row[0], row[2])
            if key in seen:
                continue
            seen.add(key)
            fh.write("\t".join(row) + "\n")
    print(out, len(seen))


def write_default_scripts():
    pt3 = _load("iso-639.json")["pt3"]
    out = DATA / "default_scripts.tsv"
    n = 0
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("# iso639_3\tiso15924 (CLDR likely subtags)\n")
        for code in sorted(pt3):
            lang = langcodes.Language.get(code)
            script = lang.maximize().script
            if script is None:
                continue
            fh.write(f"{code}\t{script}\n")
            n += 1
    print(out, n)


def _ucd_version():
    import fontTools.unicodedata.Scripts as mod

    match = re.search(r"Scripts-([0-9.]+)\.txt", inspect.getsource(mod))
    return f"Scripts-{match.group(1)}" if match else "Scripts.txt"


def write_script_ranges():
    out = DATA / "script_ranges.tsv"
    starts = list(Scripts.RANGES)
    ends = starts[1:] + [0x110000]
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# Unicode Script property ranges ({_ucd_version()}), start\tend_exclusive\tiso15924\n")
        for start, end, value in zip(starts, ends, Scripts.VALUES):
            fh.write(f"{start:06X}\t{end:06X}\t{value}\n")
    print(out, len(starts))


if __name__ == "__main__":
    os.makedirs(DATA, exist_ok=True)
    write_code_table()
    write_default_scripts()
    write_script_ranges()
