#!/usr/bin/env python3
"""Generate the frozen CVSS v3.1 oracle table used by the acceptance suite.

This is a standalone transcription of the v3.1 reference calculator
(the JavaScript published with the scoring specification), deliberately
kept independent of the library implementation. Before writing the table
it validates itself against a set of vectors whose scores are published
in public vulnerability databases; any mismatch aborts the build.

Output: tests/data/cvss_oracle.json (200 seeded random vectors plus the
three anchor vectors the unit tests name explicitly).
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
OUT = REPO / "tests" / "data" / "cvss_oracle.json"

# Weights exactly as published in the v3.1 reference calculator.
WEIGHT = {
    "AV": {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2},
    "AC": {"H": 0.44, "L": 0.77},
    "PR": {
        "U": {"N": 0.85, "L": 0.62, "H": 0.27},
        "C": {"N": 0.85, "L": 0.68, "H": 0.5},
    },
    "UI": {"N": 0.85, "R": 0.62},
    "S": {"U": 6.42, "C": 7.52},
    "CIA": {"N": 0.0, "L": 0.22, "H": 0.56},
}

EXPLOITABILITY_COEFFICIENT = 8.22
SCOPE_COEFFICIENT = 1.08


def roundup(value: float) -> float:
    int_input = math.floor(value * 100000 + 0.5)  # Math.round for positive input
    if int_input % 10000 == 0:
        return int_input / 100000.0
    return (math.floor(int_input / 10000) + 1) / 10.0


def reference_score(metrics: dict[str, str]) -> float:
    iss = 1 - (
        (1 - WEIGHT["CIA"][metrics["C"]])
        * (1 - WEIGHT["CIA"][metrics["I"]])
        * (1 - WEIGHT["CIA"][metrics["A"]])
    )
    if metrics["S"] == "U":
        impact = WEIGHT["S"]["U"] * iss
    else:
        impact = WEIGHT["S"]["C"] * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    exploitability = (
        EXPLOITABILITY_COEFFICIENT
        * WEIGHT["AV"][metrics["AV"]]
        * WEIGHT["AC"][metrics["AC"]]
        * WEIGHT["PR"][metrics["S"]][metrics["PR"]]
        * WEIGHT["UI"][metrics["UI"]]
    )
    if impact <= 0:
        return 0.0
    if metrics["S"] == "U":
        return roundup(min(impact + exploitability, 10.0))
    return roundup(min(SCOPE_COEFFICIENT * (impact + exploitability), 10.0))


def vector_string(metrics: dict[str, str]) -> str:
    return (
        "CVSS:3.1/AV:{AV}/AC:{AC}/PR:{PR}/UI:{UI}/S:{S}/C:{C}/I:{I}/A:{A}".format(**metrics)
    )


def parse(vector: str) -> dict[str, str]:
    parts = vector.split("/")[1:]
    return {name: value for name, _, value in (p.partition(":") for p in parts)}


# Vectors with scores published by public vulnerability databases and the
# specification's own examples; the transcription must reproduce them all.
PUBLISHED_ANCHORS = {
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H": 9.8,
    "CVSS:3.1/AV:N/AC:L/PR:L/UI:N/S:C/C:H/I:H/A:H": 9.9,
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:C/C:H/I:H/A:H": 10.0,
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:N": 0.0,
    "CVSS:3.1/AV:L/AC:L/PR:L/UI:N/S:U/C:L/I:L/A:L": 5.3,
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H": 7.5,
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:R/S:C/C:L/I:L/A:N": 6.1,
    "CVSS:3.1/AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H": 7.8,
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:L/I:N/A:N": 5.3,
    "CVSS:3.1/AV:N/AC:H/PR:N/UI:N/S:U/C:H/I:H/A:H": 8.1,
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:R/S:U/C:H/I:H/A:H": 8.8,
}

# Anchors asserted by name in the unit tests.
NAMED_ANCHORS = [
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:N",
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
    "CVSS:3.1/AV:N/AC:L/PR:L/UI:N/S:C/C:H/I:H/A:H",
]


def main() -> None:
    for vector, published in PUBLISHED_ANCHORS.items():
        computed = reference_score(parse(vector))
        if abs(computed - published) > 1e-9:
            raise SystemExit(
                f"transcription disagrees with published score for {vector}: "
                f"{computed} != {published}"
            )
    print(f"validated against {len(PUBLISHED_ANCHORS)} published anchor scores")

    rng = random.Random(20240317)
    values = {
        "AV": "NALP",
        "AC": "LH",
        "PR": "NLH",
        "UI": "NR",
        "S": "UC",
        "C": "HLN",
        "I": "HLN",
        "A": "HLN",
    }
    seen: set[str] = set()
    entries = []
    for vector in NAMED_ANCHORS:
        seen.add(vector)
        entries.append({"vector": vector, "score": reference_score(parse(vector))})
    while len(entries) < 203:
        metrics = {name: rng.choice(options) for name, options in values.items()}
        vector = vector_string(metrics)
        if vector in seen:
            continue
        seen.add(vector)
        entries.append({"vector": vector, "score": reference_score(metrics)})

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"entries": entries}, indent=1), encoding="utf-8")
    print(f"wrote {len(entries)} oracle entries to {OUT}")


if __name__ == "__main__":
    main()
