"""Collects one verdict line per acceptance criterion for the end-of-run summary."""

RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    return ok


def lines():
    return [f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}" for n, (ok, detail) in sorted(RESULTS.items())]
