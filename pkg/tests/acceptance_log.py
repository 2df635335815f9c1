"""Shared store for acceptance results, printed at the end of the session."""

RESULTS: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> bool:
    RESULTS[number] = (ok, detail)
    print(line(number))
    return ok


def line(number: int) -> str:
    ok, detail = RESULTS[number]
    return f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
