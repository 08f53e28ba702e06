"""
Response Format - Answer-line grammars for policy outputs and their format score

DPA answers are one line of K comma-separated two-decimal numbers ("0.65,0.20,0.10,0.05").
OPA answers are one line of K comma-separated option letters ("B,C,A,D").
Parsing never raises on input text; every problem is reported as an issue tag.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..models.distribution import DistributionError, ProbDistribution, Ranking

logger = logging.getLogger(__name__)

# Allowed drift of the printed DPA values from 1.0
DPA_SUM_TOLERANCE = 0.02

# Default weight of the metric reward in the final reward
DEFAULT_OMEGA = 0.85

# Issue tags
WRONG_COUNT = "wrong-count"
OUT_OF_RANGE = "out-of-range"
BAD_SUM = "bad-sum"
DUPLICATE_LETTER = "duplicate-letter"
UNKNOWN_LETTER = "unknown-letter"
UNPARSEABLE = "unparseable"

_DECIMAL = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)$")

TextLike = Union[str, bytes]


@dataclass(frozen=True)
class FormatReport:
    """
    Result of checking a response against its grammar

    Attributes:
        score: Format score in [0, 1]
        parsed_value: Recovered output, when the response was usable
        issues: Violation tags; empty exactly when the score is 1
    """

    score: float
    parsed_value: Optional[Union[ProbDistribution, Ranking]] = None
    issues: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def unparseable(self) -> bool:
        """True when nothing at all was recovered from the response"""
        return UNPARSEABLE in self.issues


def _to_text(s: TextLike) -> str:
    if isinstance(s, bytes):
        return s.decode('utf-8', errors='replace')
    return str(s)


def serialize_dpa(d: ProbDistribution) -> str:
    """
    Print a distribution as comma-separated two-decimal values

    After rounding, the largest entry absorbs the rounding drift so the printed
    values always sum to exactly 1.00.

    Args:
        d: Distribution to print

    Returns:
        str: e.g. "0.34,0.33,0.33"
    """
    probs = d.as_array()
    cents = np.rint(probs * 100.0).astype(int)
    largest = int(np.argmax(probs))
    cents[largest] += 100 - int(cents.sum())
    return ",".join(f"{c // 100}.{c % 100:02d}" for c in cents.tolist())


def parse_dpa(s: TextLike, k: int) -> FormatReport:
    """
    Parse a DPA answer line and score its format

    The score is the mean of three checks: the count of comma-separated decimals is k,
    every value lies in [0, 1], and the values sum to 1 within 0.02. A renormalized
    distribution is returned when the count and range checks pass.

    Args:
        s: Response text
        k: Expected number of options

    Returns:
        FormatReport: Score, parsed distribution and issue tags
    """
    text = _to_text(s).strip()
    tokens = [token.strip() for token in text.split(',')] if text else []
    values = [float(token) for token in tokens if _DECIMAL.match(token)]

    if not values:
        return FormatReport(score=0.0, parsed_value=None, issues=(UNPARSEABLE,))

    count_ok = len(values) == len(tokens) == k
    range_ok = all(0.0 <= v <= 1.0 for v in values)
    sum_ok = abs(sum(values) - 1.0) <= DPA_SUM_TOLERANCE

    issues = []
    if not count_ok:
        issues.append(WRONG_COUNT)
    if not range_ok:
        issues.append(OUT_OF_RANGE)
    if not sum_ok:
        issues.append(BAD_SUM)

    parsed = None
    if count_ok and range_ok:
        try:
            parsed = ProbDistribution.renormalize(values)
        except DistributionError:
            logger.debug(f"DPA response has no mass to renormalize: {text!r}")

    score = (int(count_ok) + int(range_ok) + int(sum_ok)) / 3.0
    return FormatReport(score=score, parsed_value=parsed, issues=tuple(issues))


def serialize_opa(r: Ranking, labels: Sequence[str]) -> str:
    """
    Print a ranking as comma-separated option letters, best first

    Args:
        r: Ranking to print
        labels: Option labels indexed by option

    Returns:
        str: e.g. "B,C,A,D"
    """
    if len(labels) != r.k:
        raise ValueError(f"Ranking has {r.k} options but {len(labels)} labels were given")
    return ",".join(labels[i] for i in r.order)


def parse_opa(s: TextLike, labels: Sequence[str]) -> FormatReport:
    """
    Parse an OPA answer line and score its format

    The score is the number of valid, first-seen option letters divided by
    max(K, number of tokens), so extra or repeated letters cost credit. A ranking
    is returned only for a complete permutation.

    Args:
        s: Response text
        labels: Option labels of the question

    Returns:
        FormatReport: Score, parsed ranking and issue tags
    """
    k = len(labels)
    text = _to_text(s).strip()
    if not text or k == 0:
        return FormatReport(score=0.0, parsed_value=None, issues=(UNPARSEABLE,))

    index = {label: i for i, label in enumerate(labels)}
    tokens = [token.strip() for token in text.split(',')]
    recovered = []
    seen = set()
    issues = []
    for token in tokens:
        if token not in index:
            if UNKNOWN_LETTER not in issues:
                issues.append(UNKNOWN_LETTER)
        elif token in seen:
            if DUPLICATE_LETTER not in issues:
                issues.append(DUPLICATE_LETTER)
        else:
            seen.add(token)
            recovered.append(index[token])

    if not recovered:
        return FormatReport(score=0.0, parsed_value=None, issues=(UNPARSEABLE,))
    if len(recovered) < k or len(tokens) != k:
        issues.append(WRONG_COUNT)

    score = len(recovered) / max(k, len(tokens))
    parsed = Ranking(tuple(recovered)) if score == 1.0 else None
    return FormatReport(score=score, parsed_value=parsed, issues=tuple(issues))


def blend_final_reward(metric_reward: float, format_score: float, omega: float = DEFAULT_OMEGA) -> float:
    """
    Blend a metric reward with the format score

    Args:
        metric_reward: Group-level metric reward in [0, 1]
        format_score: Format score in [0, 1]
        omega: Weight of the metric reward, in [0, 1]

    Returns:
        float: omega * metric_reward + (1 - omega) * format_score

    Raises:
        ValueError: If any input lies outside [0, 1]
    """
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must be in [0, 1], got {omega}")
    if not 0.0 <= metric_reward <= 1.0:
        raise ValueError(f"Metric reward must be in [0, 1], got {metric_reward}")
    if not 0.0 <= format_score <= 1.0:
        raise ValueError(f"Format score must be in [0, 1], got {format_score}")
    blended = omega * metric_reward + (1.0 - omega) * format_score
    return min(1.0, max(0.0, blended))
