"""Runtime configuration: listener ports, paths, env overrides.

Precedence: built-in defaults < configuration file < environment variables.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

ENV_PREFIX = "BLEXER"

DEFAULT_PORTS = {
    "ecg": 9101,
    "ppg": 9102,
    "game": 9103,
    "affect": 9104,  # UDP
}
DEFAULT_HTTP_PORT = 8080


@dataclass
class HubConfig:
    host: str = "127.0.0.1"
    ports: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_PORTS))
    http_port: int = DEFAULT_HTTP_PORT
    sessions_root: Path = Path("sessions")
    catalog_path: Path | None = None
    rules_path: Path | None = None
    plan_path: Path | None = None

    @classmethod
    def load(cls, config_file: str | Path | None = None, env: dict | None = None) -> "HubConfig":
        env = os.environ if env is None else env
        cfg = cls()
        if config_file:
            data = json.loads(Path(config_file).read_text())
            cfg.host = data.get("host", cfg.host)
            for name, port in data.get("ports", {}).items():
                if name in cfg.ports:
                    cfg.ports[name] = int(port)
            cfg.http_port = int(data.get("http_port", cfg.http_port))
            if "sessions_root" in data:
                cfg.sessions_root = Path(data["sessions_root"])
            for key in ("catalog_path", "rules_path", "plan_path"):
                if data.get(key):
                    setattr(cfg, key, Path(data[key]))
        for name in cfg.ports:
            var = f"{ENV_PREFIX}_PORT_{name.upper()}"
            if var in env:
                cfg.ports[name] = int(env[var])
        if f"{ENV_PREFIX}_HTTP_PORT" in env:
            cfg.http_port = int(env[f"{ENV_PREFIX}_HTTP_PORT"])
        if f"{ENV_PREFIX}_SESSIONS_ROOT" in env:
            cfg.sessions_root = Path(env[f"{ENV_PREFIX}_SESSIONS_ROOT"])
        return cfg
