"""This module contains logging setup and the run configuration for storctl"""

import logging
import os
from datetime import date
from pathlib import Path
from typing import Any, Literal

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

load_dotenv()

BASE_DIR = Path(__file__).parent.parent
config_path = Path(__file__).parent / "config.yaml"

THREADS_ENV = "STORCTL_THREADS"

__all__ = ["set_logging", "RunConfig", "load_yaml", "worker_count", "config_path"]


def set_logging(level: int = logging.INFO):
    """Configure logging for the application"""
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(filename)s:%(lineno)d --- %(message)s",
    )


def load_yaml(path: Path | str) -> dict[str, Any]:
    with open(path, mode="r") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must be a flat key-value mapping")
    return data


def worker_count(default: int = 0) -> int:
    """Worker pool size from STORCTL_THREADS; <= 0 means one worker per job."""
    raw = os.getenv(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got '{raw}'")


class RunConfig(BaseModel):
    """Fully resolved parameters of one storctl invocation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    prices: Path | None = None
    price_unit: Literal["eur_per_mwh", "eur_per_kwh", "eur_per_100kwh"] = "eur_per_mwh"
    consumption_const: float | None = 200.0
    consumption_csv: Path | None = None
    date_from: date | None = None
    date_to: date | None = None

    cap_min: float = 0.0
    capacity: float = 1000.0
    buy_min: float = 0.0
    buy_max: float = 1000.0
    eta_in: float = 0.9
    eta_out: float = 0.95
    beta: float = 0.1
    y_max: float | None = None

    hx: float = 100.0
    hv: float = 1.0

    v_init: float = 100.0
    v_final: float = 100.0

    safe_capacity: bool = False
    dynamics: Literal["exact", "rounded"] = "exact"
    max_nodes: int = 1_000_000

    out: Path = Path("results")
    format: Literal["json", "csv"] = "json"

    @field_validator("hx", "hv")
    @classmethod
    def positive_step(cls, v):
        if v <= 0:
            raise ValueError("discretisation steps must be > 0")
        return v

    @field_validator("max_nodes")
    @classmethod
    def positive_budget(cls, v):
        if v <= 0:
            raise ValueError("max_nodes must be > 0")
        return v

    @model_validator(mode="after")
    def check_dates(self):
        if self.date_from and self.date_to and self.date_from > self.date_to:
            raise ValueError("date_from must not be after date_to")
        return self

    @property
    def resolved_y_max(self) -> float:
        return self.capacity / 2.0 if self.y_max is None else self.y_max

    @classmethod
    def load(cls, user_config: Path | str | None = None,
             overrides: dict[str, Any] | None = None,
             defaults_path: Path = config_path) -> "RunConfig":
        """Bundled defaults < user config file < flag overrides (None values ignored)."""
        values = load_yaml(defaults_path)
        if user_config is not None:
            user_values = load_yaml(user_config)
            unknown = sorted(set(user_values) - set(cls.model_fields))
            if unknown:
                raise ValueError(f"{user_config}: unknown config keys {', '.join(unknown)}")
            values.update(user_values)
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        return cls(**values)

    def echo(self) -> dict[str, Any]:
        """JSON-ready view embedded into every output artifact."""
        return self.model_dump(mode="json")


if __name__ == "__main__":
    print(RunConfig.load())
    print(RunConfig.load().resolved_y_max)
