"""One PASS/FAIL line per acceptance criterion, echoed in the pytest summary."""

LINES = []


def record(number, title, ok, detail):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    LINES.append((number, line))
    return ok
