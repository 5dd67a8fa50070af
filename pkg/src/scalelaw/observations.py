"""Loss observations and their CSV / JSON-lines ingest."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidInput


@dataclass(frozen=True)
class Observation:
    """One loss measurement: model identity, size N, data seen D, loss.

    N is the non-embedding parameter count; D is training samples or tokens
    seen at measurement time (the fit records which). direction/domain tag
    the evaluation set for grouped fits.
    """

    model_name: str
    n: float
    d: float
    loss: float
    direction: str | None = None
    domain: str | None = None

    def __post_init__(self):
        if not self.model_name:
            raise InvalidInput("observation needs a model name")
        for field_name, value in (("N", self.n), ("D", self.d), ("loss", self.loss)):
            if not value > 0:
                raise InvalidInput(f"observation {self.model_name!r}: {field_name} must be > 0, got {value}")


def group_key(obs: Observation, key: str) -> str:
    """Group label for 'direction', 'domain', or 'both'."""
    if key == "direction":
        parts = [obs.direction]
    elif key == "domain":
        parts = [obs.domain]
    elif key == "both":
        parts = [obs.direction, obs.domain]
    else:
        raise InvalidInput(f"unknown group key {key!r} (expected direction, domain, or both)")
    if any(p is None for p in parts):
        raise InvalidInput(f"observation {obs.model_name!r} lacks a {key!r} tag")
    return "/".join(parts)  # type: ignore[arg-type]


def _from_record(raw: dict, where: str) -> Observation:
    try:
        return Observation(
            model_name=str(raw["model"]),
            n=float(raw["N"]),
            d=float(raw["D"]),
            loss=float(raw["loss"]),
            direction=str(raw["direction"]) if raw.get("direction") else None,
            domain=str(raw["domain"]) if raw.get("domain") else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"{where}: bad observation record {raw!r}: {exc}") from exc


def load_observations(path: str | Path) -> list[Observation]:
    """Read observations from CSV (model,N,D,loss[,direction,domain]) or JSONL."""
    path = Path(path)
    out = []
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    out.append(_from_record(json.loads(line), f"{path}:{lineno}"))
    else:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                out.append(_from_record(row, f"{path}:{lineno}"))
    if not out:
        raise InvalidInput(f"{path}: no observations found")
    return out


def select_final_checkpoints(observations: list[Observation]) -> list[Observation]:
    """Keep only the max-D observation per (model, direction, domain)."""
    best: dict[tuple, Observation] = {}
    order: list[tuple] = []
    for obs in observations:
        key = (obs.model_name, obs.direction, obs.domain)
        if key not in best:
            order.append(key)
            best[key] = obs
        elif obs.d > best[key].d:
            best[key] = obs
    return [best[k] for k in order]
