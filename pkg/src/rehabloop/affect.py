"""Facial-affect consumer: reduces 7-class emotion distributions to the four
core affect states and smooths them over a short window.

Grouping (valence/arousal neighborhoods): anger, disgust, fear, and sadness
collapse into negative; happiness maps to positive; surprise and neutral keep
their own class. Ties break toward negative so downstream adaptation errs on
the protective side.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import EmptyWindow, InvalidDistribution

EMOTION7_LABELS = ("anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral")
AFFECT4_LABELS = ("positive", "neutral", "surprise", "negative")

# argmax tie-break priority, highest first
_TIE_ORDER = ("negative", "neutral", "positive", "surprise")

SUM_TOLERANCE = 1e-6
DEFAULT_WINDOW_S = 5.0


def _check_distribution(probs, n: int) -> None:
    if len(probs) != n:
        raise InvalidDistribution(f"expected {n} components, got {len(probs)}")
    if any(p < -SUM_TOLERANCE or p > 1 + SUM_TOLERANCE for p in probs):
        raise InvalidDistribution("components must lie in [0, 1]")
    total = sum(probs)
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise InvalidDistribution(f"components sum to {total!r}")


def _dominant(probs: tuple[float, float, float, float]) -> str:
    best = max(probs)
    for label in _TIE_ORDER:
        if probs[AFFECT4_LABELS.index(label)] == best:
            return label
    return "negative"  # unreachable


@dataclass(frozen=True)
class Affect4:
    positive: float
    neutral: float
    surprise: float
    negative: float
    dominant: str
    confidence: float  # max probability

    @classmethod
    def from_probs(cls, probs) -> "Affect4":
        t = tuple(float(p) for p in probs)
        return cls(*t, dominant=_dominant(t), confidence=max(t))

    @property
    def probs(self) -> tuple[float, float, float, float]:
        return (self.positive, self.neutral, self.surprise, self.negative)

    def to_record(self) -> dict:
        return {
            "positive": self.positive,
            "neutral": self.neutral,
            "surprise": self.surprise,
            "negative": self.negative,
            "dominant": self.dominant,
            "confidence": self.confidence,
        }


def reduce(emotion7) -> Affect4:
    """Collapse a 7-class distribution (anger, disgust, fear, happiness,
    sadness, surprise, neutral) to the four core states."""
    _check_distribution(emotion7, 7)
    anger, disgust, fear, happiness, sadness, surprise, neutral = (
        float(p) for p in emotion7
    )
    return Affect4.from_probs(
        (happiness, neutral, surprise, anger + disgust + fear + sadness)
    )


class AffectWindow:
    """Ring of (hub_ts, Affect4) spanning at most the configured seconds."""

    def __init__(self, span_s: float = DEFAULT_WINDOW_S):
        self.span_ms = int(span_s * 1000)
        self._items: deque[tuple[int, Affect4]] = deque()

    def push(self, hub_ts: int, affect: Affect4) -> None:
        if self._items and hub_ts < self._items[-1][0]:
            hub_ts = self._items[-1][0]  # timestamps must stay non-decreasing
        self._items.append((hub_ts, affect))
        cutoff = hub_ts - self.span_ms
        while self._items and self._items[0][0] < cutoff:
            self._items.popleft()

    def __len__(self) -> int:
        return len(self._items)

    def values(self) -> list[Affect4]:
        return [a for _, a in self._items]


def smooth(window: AffectWindow) -> Affect4:
    """Element-wise mean over the window, renormalized; same tie-break."""
    values = window.values()
    if not values:
        raise EmptyWindow("affect window is empty")
    sums = [0.0, 0.0, 0.0, 0.0]
    for a in values:
        for i, p in enumerate(a.probs):
            sums[i] += p
    # mean then renormalize == divide component sums by their grand total
    total = sum(sums)
    if total <= 0:
        raise InvalidDistribution("window mass is zero")
    return Affect4.from_probs(tuple(s / total for s in sums))


def flatness(window: AffectWindow) -> float:
    """Mean neutral probability over the window: 1.0 = fully flat affect."""
    values = window.values()
    if not values:
        raise EmptyWindow("affect window is empty")
    return sum(a.neutral for a in values) / len(values)
