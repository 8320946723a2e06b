"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def verdict(criterion, ok, detail, seconds=None):
    timing = f" ({seconds:.1f}s)" if seconds is not None else ""
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}{timing}"
    LINES.append(line)
    print(line)
    return ok
