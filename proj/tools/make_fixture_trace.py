#!/usr/bin/env python3
"""Writes the 30 s replay fixture: a 12 s gaze burst over a few dwell points,
then silence (the viewer walked away)."""
import json
import random
import sys

rng = random.Random(20240611)
points = [(0.30, 0.35), (0.70, 0.40), (0.50, 0.72), (0.25, 0.70)]
out = []
t = 0
while t < 12000:
    cx, cy = points[(t // 3000) % len(points)]
    blink = 5200 <= t < 5400
    out.append({"t": t,
                "x": round(cx + rng.gauss(0, 0.006), 5),
                "y": round(cy + rng.gauss(0, 0.006), 5),
                "valid": not blink})
    t += 16 + rng.randint(0, 1)
out.append({"t": 30000, "x": 0.0, "y": 0.0, "valid": False})
with open(sys.argv[1] if len(sys.argv) > 1 else "tests/data/fixture_trace.jsonl", "w") as f:
    for rec in out:
        f.write(json.dumps(rec, separators=(",", ":")) + "\n")
