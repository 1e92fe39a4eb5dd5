"""Line-delimited result records: one record per line, named decimal fields.

The same schema serves `track` output and the benchmark suites, so files are
diff-able in CI and trivially parsed by any consumer. Stage timings are only
written on request because they would break byte-for-byte reproducibility.
"""

from __future__ import annotations

from pathlib import Path

from .tracker import FrameResult

RECORDS_HEADER = "# weavetrack-records v1"

__all__ = ["RECORDS_HEADER", "format_result", "parse_records", "write_records"]


def format_result(res: FrameResult, timings: bool = False) -> str:
    parts = [
        f"frame={res.frame_index}",
        f"dx={res.transform.dx:.9f}",
        f"dy={res.transform.dy:.9f}",
        f"dtheta={res.transform.dtheta:.9f}",
        f"du={res.thread_delta.du:.9f}",
        f"dv={res.thread_delta.dv:.9f}",
        f"cum_u={res.cumulative_threads[0]:.9f}",
        f"cum_v={res.cumulative_threads[1]:.9f}",
        f"inliers={res.inlier_count}",
        f"matches={res.match_count}",
        f"status={res.status}",
        f"disc={1 if res.discontinuity else 0}",
    ]
    if res.failed_stage:
        parts.append(f"stage={res.failed_stage}")
    if timings and res.timings_ms:
        for key in sorted(res.timings_ms):
            parts.append(f"t_{key.removesuffix('_ms')}={res.timings_ms[key]:.3f}")
    return " ".join(parts)


def parse_records(path: str | Path) -> list[dict]:
    """Parse a record file back into one dict per line (strings preserved)."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != RECORDS_HEADER:
        raise ValueError(f"not a weavetrack records file: {path}")
    out = []
    for line in lines[1:]:
        rec = {}
        for tok in line.split():
            key, value = tok.split("=", 1)
            if key in ("frame", "inliers", "matches", "disc"):
                rec[key] = int(value)
            elif key in ("status", "stage"):
                rec[key] = value
            else:
                rec[key] = float(value)
        out.append(rec)
    return out


def write_records(results, path: str | Path, timings: bool = False) -> None:
    lines = [RECORDS_HEADER]
    lines.extend(format_result(r, timings) for r in results)
    Path(path).write_text("\n".join(lines) + "\n")
