"""Plain-text trajectory dump for offline comparison.

One record per physics tick, newline-delimited, space-separated columns:

    tick bx by bz bvx bvy bvz q0..q3(near) q0..q3(far) events

`events` is `-` or a comma-joined list of `kind@x:y:z` items for events
emitted at that tick. Floats are written with repr-roundtrip precision so
a dump fully determines the trajectory it records.
"""

from __future__ import annotations

from typing import Iterable, TextIO

import numpy as np

from .types import EventKind, SimEvent

HEADER = "# deskpong-trajectory v1"


def write_header(out: TextIO) -> None:
    out.write(HEADER + "\n")
    out.write(
        "# tick bx by bz bvx bvy bvz nq0 nq1 nq2 nq3 fq0 fq1 fq2 fq3 events\n"
    )


def write_record(
    out: TextIO,
    tick: int,
    ball_p: np.ndarray,
    ball_v: np.ndarray,
    q_near: np.ndarray,
    q_far: np.ndarray,
    events: Iterable[SimEvent] = (),
) -> None:
    cols = [str(tick)]
    cols += [repr(float(v)) for v in ball_p]
    cols += [repr(float(v)) for v in ball_v]
    cols += [repr(float(v)) for v in q_near]
    cols += [repr(float(v)) for v in q_far]
    evs = ",".join(
        f"{e.kind.name.lower()}@{e.position[0]:.6f}:{e.position[1]:.6f}:{e.position[2]:.6f}"
        for e in events
    )
    cols.append(evs if evs else "-")
    out.write(" ".join(cols) + "\n")


def read_records(lines: Iterable[str]) -> list[dict]:
    """Parse a dump back into dict records (used by the round-trip tests)."""
    records = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) != 16:
            raise ValueError(f"malformed trajectory record: {line!r}")
        events = []
        if parts[15] != "-":
            for item in parts[15].split(","):
                kind_name, pos = item.split("@")
                x, y, z = (float(v) for v in pos.split(":"))
                events.append(
                    SimEvent(EventKind[kind_name.upper()], int(parts[0]), (x, y, z))
                )
        records.append(
            {
                "tick": int(parts[0]),
                "ball_p": np.array([float(v) for v in parts[1:4]]),
                "ball_v": np.array([float(v) for v in parts[4:7]]),
                "q_near": np.array([float(v) for v in parts[7:11]]),
                "q_far": np.array([float(v) for v in parts[11:15]]),
                "events": events,
            }
        )
    return records
