"""Collects one verdict line per acceptance criterion for the end-of-run summary."""

LINES = []


def verdict(number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f"  ({detail})" if detail else "")
    LINES.append(line)
    print(line, flush=True)
    return ok
