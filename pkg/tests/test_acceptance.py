"""Acceptance suite: each criterion runs its named experiments at default settings.

Run directly (``python tests/test_acceptance.py``) or through pytest; either way
one PASS/FAIL line per criterion is printed.
"""

import sys

import pytest

from symlab.experiments import run

# (criterion, experiments, runtime limit in seconds)
CRITERIA = [
    ("1 normalised trace", ["dixmier-normalised"], 1),
    ("2 kernel of sym", ["kernel-of-sym"], 60),
    ("3 generator symbols", ["generator-symbols", "generator-symbols-torus"], 300),
    ("4 commutator compactness", ["commutator-compactness"], 60),
    ("5 conjugation identities", ["conjugation-identities"], 120),
    ("6 equivariance", ["equivariance-circle", "equivariance-torus"], 600),
    ("7 theta composition", ["theta-composition"], 10),
    ("8 globalisation", ["globalise-pou"], 300),
    ("9 trace formula, circle", ["connes-circle"], 900),
    ("10 trace formula, torus", ["connes-torus"], 1800),
    ("11 atlas integrity", ["atlas-integrity"], 10),
]


def evaluate(experiments, limit):
    reports = [run(name)[0] for name in experiments]
    seconds = sum(r["timing"]["seconds"] for r in reports)
    failed = [f"{r['experiment']}:{c['name']}={c['measured']:.3g}" for r in reports for c in r["checks"] if not c["pass"]]
    return reports, seconds, failed


def summary(label, seconds, limit, failed):
    ok = not failed and seconds < limit
    extra = "" if not failed else "  failing: " + ", ".join(failed)
    return ok, f"{'PASS' if ok else 'FAIL'}  criterion {label}  ({seconds:.1f}s, limit {limit}s){extra}"


@pytest.mark.slow
@pytest.mark.parametrize("label,experiments,limit", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(label, experiments, limit, capsys):
    reports, seconds, failed = evaluate(experiments, limit)
    ok, line = summary(label, seconds, limit, failed)
    with capsys.disabled():
        print("\n" + line)
    for r in reports:
        for c in r["checks"]:
            assert c["pass"], f"{r['experiment']}: {c['name']} measured {c['measured']} vs {c['comparator']} {c['threshold']}"
    assert seconds < limit, f"runtime {seconds:.1f}s exceeds {limit}s"
    assert ok


if __name__ == "__main__":
    results = []
    for label, experiments, limit in CRITERIA:
        _, seconds, failed = evaluate(experiments, limit)
        ok, line = summary(label, seconds, limit, failed)
        print(line, flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
