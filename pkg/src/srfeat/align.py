"""Edit-distance alignment and the WER/MER/WIL/WIP metric bundle.

The same engine serves word transcripts, character sequences and binary
pause sequences; tokens only need to support ``==``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Literal, Sequence

HIT, SUB, DEL, INS = "hit", "sub", "del", "ins"


@dataclass(frozen=True)
class EditOp:
    kind: str
    ref_index: int | None
    hyp_index: int | None


@dataclass(frozen=True)
class Alignment:
    hits: int
    substitutions: int
    deletions: int
    insertions: int
    ops: tuple[EditOp, ...]

    @property
    def ref_length(self) -> int:
        return self.hits + self.substitutions + self.deletions

    @property
    def hyp_length(self) -> int:
        return self.hits + self.substitutions + self.insertions

    @property
    def cost(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def aligned_pairs(self) -> list[tuple[int, int]]:
        """(ref_index, hyp_index) for every hit and substitution."""
        return [(op.ref_index, op.hyp_index) for op in self.ops if op.kind in (HIT, SUB)]


@dataclass(frozen=True)
class ErrorMetrics:
    wer: float
    mer: float
    wil: float
    wip: float
    hits: int
    insertions: int
    deletions: int
    substitutions: int


def align_sequences(reference: Sequence[Hashable], hypothesis: Sequence[Hashable]) -> Alignment:
    """Minimum-cost alignment with unit S/D/I costs.

    On equal-cost backtrace choices the diagonal move (hit or substitution)
    wins, then deletion, then insertion.
    """
    m, n = len(reference), len(hypothesis)
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        dist[i][0] = i
    for j in range(1, n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        row, prev = dist[i], dist[i - 1]
        r = reference[i - 1]
        for j in range(1, n + 1):
            diag = prev[j - 1] + (0 if r == hypothesis[j - 1] else 1)
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    ops: list[EditOp] = []
    h = s = d = ins = 0
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = reference[i - 1] == hypothesis[j - 1]
            if dist[i][j] == dist[i - 1][j - 1] + (0 if same else 1):
                if same:
                    ops.append(EditOp(HIT, i - 1, j - 1))
                    h += 1
                else:
                    ops.append(EditOp(SUB, i - 1, j - 1))
                    s += 1
                i, j = i - 1, j - 1
                continue
        if i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(EditOp(DEL, i - 1, None))
            d += 1
            i -= 1
        else:
            ops.append(EditOp(INS, None, j - 1))
            ins += 1
            j -= 1
    ops.reverse()
    return Alignment(h, s, d, ins, tuple(ops))


def error_metrics(alignment: Alignment) -> ErrorMetrics:
    h = alignment.hits
    s = alignment.substitutions
    d = alignment.deletions
    i = alignment.insertions
    n_ref = h + s + d
    n_hyp = h + s + i
    errors = s + d + i

    if n_ref == 0:
        # empty reference: 0 if the hypothesis is empty as well, else 1
        wer = mer = 0.0 if n_hyp == 0 else 1.0
    else:
        wer = errors / n_ref
        mer = errors / (h + s + d + i)

    recall_part = h / n_ref if n_ref else 0.0
    precision_part = h / n_hyp if n_hyp else 0.0
    wip = recall_part * precision_part
    if n_ref == 0 and n_hyp == 0:
        wip = 1.0
    return ErrorMetrics(
        wer=wer,
        mer=mer,
        wil=1.0 - wip,
        wip=wip,
        hits=h,
        insertions=i,
        deletions=d,
        substitutions=s,
    )


def tokenize(text: str, granularity: Literal["word", "character"] = "word") -> list[str]:
    if granularity == "word":
        return text.split()
    if granularity == "character":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown granularity: {granularity!r}")
