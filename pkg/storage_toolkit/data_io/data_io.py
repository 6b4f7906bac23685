"""
Price and consumption ingestion

Price files: two columns `timestamp,price`, one row per hour, ISO-8601 naive local market time,
prices in the unit given by PriceUnit. Everything is normalised to €/kWh on read.
Consumption files: a single column `consumption_kwh`, one row per hour.
"""

import logging
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from ..model import Instance, StorageSpec
from ..utils.errors import DataFormatError, InvalidArgumentError

logger = logging.getLogger(__name__)

__all__ = [
    "PriceUnit",
    "PriceSeries",
    "Scenario",
    "parse_price_csv",
    "write_price_csv",
    "parse_consumption_csv",
    "make_instance",
    "hour_range",
]

HOUR = timedelta(hours=1)
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"


class PriceUnit(Enum):
    eur_per_mwh = "eur_per_mwh"
    eur_per_kwh = "eur_per_kwh"
    eur_per_100kwh = "eur_per_100kwh"

    @property
    def per_kwh_divisor(self) -> float:
        return {"eur_per_mwh": 1000.0, "eur_per_kwh": 1.0, "eur_per_100kwh": 100.0}[self.value]


class PriceSeries(BaseModel):
    """Hourly prices in €/kWh; `source_unit` records the unit of the file they came from."""

    model_config = ConfigDict(frozen=True)

    timestamps: tuple[datetime, ...]
    prices: tuple[float, ...]
    source_unit: PriceUnit = PriceUnit.eur_per_kwh

    @model_validator(mode="after")
    def check_hourly(self):
        if len(self.timestamps) != len(self.prices):
            raise ValueError("timestamps and prices differ in length")
        for prev, cur in zip(self.timestamps, self.timestamps[1:]):
            if cur - prev != HOUR:
                raise ValueError(f"timestamps must be hourly and strictly increasing: {prev} -> {cur}")
        return self

    def __len__(self) -> int:
        return len(self.prices)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"timestamp": list(self.timestamps), "price": list(self.prices)})

    def position(self, when: datetime) -> int:
        """Index of the hour `when`; InvalidArgumentError outside the series."""
        if not self.timestamps:
            raise InvalidArgumentError("price series is empty")
        offset = (when - self.timestamps[0]) / HOUR
        if offset != int(offset) or not 0 <= offset < len(self):
            raise InvalidArgumentError(
                f"{when} is outside the price data ({self.timestamps[0]} .. {self.timestamps[-1]})"
            )
        return int(offset)

    def between(self, start: date | datetime, end: date | datetime) -> "PriceSeries":
        """Inclusive slice; a plain date end covers that whole day."""
        first, last = hour_range(start, end)
        i, j = self.position(first), self.position(last)
        return PriceSeries(timestamps=self.timestamps[i:j + 1], prices=self.prices[i:j + 1],
                           source_unit=self.source_unit)


def hour_range(start: date | datetime, end: date | datetime) -> tuple[datetime, datetime]:
    """First and last hour of an inclusive range; dates span 00:00 to 23:00."""
    first = start if isinstance(start, datetime) else datetime(start.year, start.month, start.day)
    if isinstance(end, datetime):
        last = end
    else:
        last = datetime(end.year, end.month, end.day, 23)
    if last < first:
        raise InvalidArgumentError(f"empty range: {start} .. {end}")
    return first, last


def _read_frame(path: Path, columns: list[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataFormatError("file is empty", path)
    except pd.errors.ParserError as e:
        raise DataFormatError(f"malformed CSV ({e})", path)
    header = [c.strip() for c in frame.columns]
    if header != columns:
        raise DataFormatError(f"expected header '{','.join(columns)}', got '{','.join(header)}'", path, line=1)
    frame.columns = header
    if frame.empty:
        raise DataFormatError("no data rows", path)
    return frame


def parse_price_csv(path: Path | str, unit: PriceUnit | str = PriceUnit.eur_per_mwh) -> PriceSeries:
    unit = PriceUnit(unit)
    path = Path(path)
    frame = _read_frame(path, ["timestamp", "price"])

    stamps = pd.to_datetime(frame["timestamp"].str.strip(), format="ISO8601", errors="coerce")
    values = pd.to_numeric(frame["price"].str.strip(), errors="coerce")
    if isinstance(stamps.dtype, pd.DatetimeTZDtype):
        raise DataFormatError("timestamps must be naive local market time (no UTC offset)", path)

    # data rows start on line 2
    bad = stamps.isna() | values.isna() | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        i = int(bad.to_numpy().argmax())
        row = f"{frame['timestamp'].iloc[i]},{frame['price'].iloc[i]}"
        raise DataFormatError(f"malformed row '{row}'", path, line=i + 2)

    steps = stamps.diff().iloc[1:]
    for i, step in zip(range(1, len(stamps)), steps):
        if step == pd.Timedelta(0):
            raise DataFormatError(f"duplicated timestamp {stamps.iloc[i]}", path, line=i + 2)
        if step < pd.Timedelta(0):
            raise DataFormatError(f"timestamp {stamps.iloc[i]} goes back in time", path, line=i + 2)
        if step != pd.Timedelta(hours=1):
            raise DataFormatError(
                f"gap in hourly data: {stamps.iloc[i - 1]} is followed by {stamps.iloc[i]}", path, line=i + 2
            )

    prices = values / unit.per_kwh_divisor
    logger.info(f"Read {len(prices)} hourly prices from {path} ({stamps.iloc[0]} .. {stamps.iloc[-1]}, {unit.value})")
    return PriceSeries(
        timestamps=tuple(ts.to_pydatetime() for ts in stamps),
        prices=tuple(float(p) for p in prices),
        source_unit=unit,
    )


def write_price_csv(series: PriceSeries, path: Path | str) -> Path:
    """Normalised series as `timestamp,price` in €/kWh."""
    path = Path(path)
    frame = series.to_frame()
    frame["timestamp"] = frame["timestamp"].dt.strftime(TIMESTAMP_FORMAT)
    frame.to_csv(path, index=False)
    return path


def parse_consumption_csv(path: Path | str) -> tuple[float, ...]:
    path = Path(path)
    frame = _read_frame(path, ["consumption_kwh"])
    values = pd.to_numeric(frame["consumption_kwh"].str.strip(), errors="coerce")
    bad = values.isna() | (values < 0) | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        i = int(bad.to_numpy().argmax())
        raise DataFormatError(
            f"consumption must be a finite number >= 0, got '{frame['consumption_kwh'].iloc[i]}'", path, line=i + 2
        )
    logger.info(f"Read {len(values)} hourly consumption values from {path}")
    return tuple(float(v) for v in values)


def _resolve_consumption(consumption: float | Sequence[float] | Path | str, m: int) -> tuple[float, ...]:
    if isinstance(consumption, (str, Path)):
        consumption = parse_consumption_csv(consumption)
    if isinstance(consumption, (int, float)):
        return (float(consumption),) * m
    values = tuple(float(z) for z in consumption)
    if len(values) != m:
        raise InvalidArgumentError(f"consumption has {len(values)} hours, the range has {m}")
    return values


def make_instance(series: PriceSeries, start: date | datetime, end: date | datetime,
                  consumption: float | Sequence[float] | Path | str, spec: StorageSpec,
                  v_init: float, v_final: float, h_x: float, h_v: float,
                  name: str | None = None) -> Instance:
    """Instance over the inclusive range [start, end] of series."""
    part = series.between(start, end)
    first, last = part.timestamps[0], part.timestamps[-1]
    return Instance(
        prices=part.prices,
        consumption=_resolve_consumption(consumption, len(part)),
        v_init=v_init,
        v_final=v_final,
        h_x=h_x,
        h_v=h_v,
        spec=spec,
        name=name or f"{first:%Y%m%d}_{last:%Y%m%d}",
        start=first,
    )


class Scenario(BaseModel):
    """Everything an experiment varies around: prices, consumption, device and grids.

    `consumption` is a constant or one value per hour of `series`.
    """

    model_config = ConfigDict(frozen=True)

    series: PriceSeries
    consumption: float | tuple[float, ...] = 200.0
    spec: StorageSpec
    v_init: float = 100.0
    v_final: float = 100.0
    h_x: float = 100.0
    h_v: float = 1.0

    @model_validator(mode="after")
    def check_consumption(self):
        if isinstance(self.consumption, tuple) and len(self.consumption) != len(self.series):
            raise ValueError(
                f"consumption has {len(self.consumption)} hours, price series has {len(self.series)}"
            )
        return self

    def _consumption_slice(self, i: int, j: int) -> float | tuple[float, ...]:
        if isinstance(self.consumption, tuple):
            return self.consumption[i:j]
        return self.consumption

    def instance(self, start: date | datetime | None = None, end: date | datetime | None = None,
                 v_init: float | None = None, v_final: float | None = None, **spec_changes) -> Instance:
        """Instance over [start, end] (whole series by default) with some spec fields replaced."""
        start = start or self.series.timestamps[0]
        end = end or self.series.timestamps[-1]
        first, last = hour_range(start, end)
        i, j = self.series.position(first), self.series.position(last) + 1
        spec = StorageSpec(**{**self.spec.model_dump(), **spec_changes}) if spec_changes else self.spec
        return make_instance(
            self.series, first, last, self._consumption_slice(i, j), spec,
            self.v_init if v_init is None else v_init,
            self.v_final if v_final is None else v_final,
            self.h_x, self.h_v,
        )

    def window(self, m: int) -> Instance:
        """Instance over the first m hours of the series."""
        if not 1 <= m <= len(self.series):
            raise InvalidArgumentError(f"horizon {m} outside 1..{len(self.series)} hours of price data")
        ts = self.series.timestamps
        return self.instance(ts[0], ts[m - 1])


if __name__ == "__main__":
    import sys

    series = parse_price_csv(sys.argv[1])
    print(len(series), series.timestamps[0], series.timestamps[-1])

# Example:
# python -m storage_toolkit.data_io.data_io prices_2018.csv
