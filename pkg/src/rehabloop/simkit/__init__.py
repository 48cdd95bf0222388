"""Deterministic simulators: scripted sensor streams, a synthetic player
model, a headless closed-loop harness, and session replay."""

from .player import PlayerModel, SimPlayer, success_probability
from .scenarios import SCENARIOS, Phase, ScenarioScript, generate_stream, stream_hash

__all__ = [
    "PlayerModel",
    "SimPlayer",
    "success_probability",
    "SCENARIOS",
    "Phase",
    "ScenarioScript",
    "generate_stream",
    "stream_hash",
]
