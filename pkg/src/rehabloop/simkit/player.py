"""Synthetic player: converts difficulty into stochastic performance.

Success follows a logistic curve in (difficulty - skill), shifted by
accumulated fatigue; attempts add fatigue proportional to difficulty and rest
recovers it. The model is the reference "patient" for closed-loop tests.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

FATIGUE_GAIN_PER_REP = 0.002  # per difficulty unit
RECOVERY_PER_REST_S = 0.005
FATIGUE_WEIGHT = 5.0  # difficulty-equivalent penalty of full fatigue


@dataclass
class PlayerModel:
    skill: float
    fatigue_acc: float = 0.0
    k: float = 1.0  # logistic slope


def success_probability(model: PlayerModel, difficulty: float) -> float:
    x = model.k * (difficulty - model.skill + FATIGUE_WEIGHT * model.fatigue_acc)
    return 1.0 / (1.0 + math.exp(x))


class SimPlayer:
    """Seeded stochastic wrapper around PlayerModel."""

    def __init__(self, skill: float, seed: int = 0, k: float = 1.0):
        self.model = PlayerModel(skill=skill, k=k)
        self.rng = random.Random(seed)

    @property
    def fatigue(self) -> float:
        return self.model.fatigue_acc

    def attempt(self, difficulty: int) -> bool:
        p = success_probability(self.model, difficulty)
        success = self.rng.random() < p
        self.model.fatigue_acc = min(
            1.0, self.model.fatigue_acc + FATIGUE_GAIN_PER_REP * difficulty
        )
        return success

    def rest(self, seconds: float) -> None:
        self.model.fatigue_acc = max(
            0.0, self.model.fatigue_acc - RECOVERY_PER_REST_S * seconds
        )
