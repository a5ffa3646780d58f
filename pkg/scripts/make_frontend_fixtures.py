#!/usr/bin/env python3
"""Regenerate the frontend's cross-implementation test fixtures.

Writes small HU slices, their 16-bit PNG encodings, the server-side
difference rendering, and a table of window/level mappings into
frontend/tests/fixtures/. The viewer's vitest suite asserts pixel-for-pixel
agreement against these files.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from kshift.data import export_slice_png
from kshift.metrics import difference_display, window_display

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(424242)
    a = rng.integers(-1000, 1600, size=(16, 16)).astype(np.int16)
    b = np.clip(
        a.astype(np.int32) + rng.integers(-300, 300, size=(16, 16)), -1024, 3071
    ).astype(np.int16)

    (FIXTURES / "slice_a.json").write_text(json.dumps(a.tolist()))
    (FIXTURES / "slice_b.json").write_text(json.dumps(b.tolist()))
    export_slice_png(a, FIXTURES / "slice_a.png")
    Image.fromarray(difference_display(a, b), mode="L").save(FIXTURES / "diff_server.png")
    diff = difference_display(a, b)
    (FIXTURES / "diff_server.json").write_text(json.dumps(diff.tolist()))

    cases = []
    for center, width in [(400, 1500), (50, 120), (0, 400), (-50, 77)]:
        values = rng.integers(-1024, 3071, size=64).tolist()
        values += [center, center - width // 2 - 500, center + width // 2 + 500]
        expected = window_display(np.array(values, dtype=np.float64), center, width)
        cases.append(
            {
                "center": center,
                "width": width,
                "values": values,
                "expected": expected.tolist(),
            }
        )
    (FIXTURES / "window_cases.json").write_text(json.dumps(cases, indent=1))
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
