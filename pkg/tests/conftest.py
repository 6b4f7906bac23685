from datetime import datetime, timedelta

import numpy as np
import pandas as pd
import pytest

from storage_toolkit.data_io import PriceSeries, Scenario
from storage_toolkit.model import Instance, LossFunction, StorageSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20180615)


@pytest.fixture
def make_spec():
    """Lossless device, C=500, u=200, y_max=500 unless overridden."""

    def _make(**changes) -> StorageSpec:
        values = dict(
            cap_min=0.0,
            cap_max=500.0,
            buy_min=0.0,
            buy_max=200.0,
            eta_in=1.0,
            eta_out=1.0,
            loss=LossFunction(beta=0.0),
            y_max=500.0,
        )
        values.update(changes)
        return StorageSpec(**values)

    return _make


@pytest.fixture
def make_instance(make_spec):
    def _make(prices, consumption=100.0, v_init=0.0, v_final=0.0, h_x=100.0, h_v=1.0,
              name="test", **spec_changes) -> Instance:
        if isinstance(consumption, (int, float)):
            consumption = [float(consumption)] * len(prices)
        return Instance(
            prices=tuple(float(p) for p in prices),
            consumption=tuple(float(z) for z in consumption),
            v_init=v_init,
            v_final=v_final,
            h_x=h_x,
            h_v=h_v,
            spec=make_spec(**spec_changes),
            name=name,
        )

    return _make


@pytest.fixture
def three_step(make_instance):
    """Cheap, expensive, cheap: buy ahead in step 1, draw in step 2."""
    return make_instance([1.0, 10.0, 1.0])


@pytest.fixture
def lossy_spec(make_spec):
    return make_spec(cap_max=1000.0, buy_max=1000.0, eta_in=0.9, eta_out=0.95,
                     loss=LossFunction(beta=0.1), y_max=500.0)


@pytest.fixture
def lossy_instance(lossy_spec):
    return Instance(
        prices=(0.3, 0.1, 0.5, 0.2, 0.45, 0.05),
        consumption=(200.0,) * 6,
        v_init=100.0,
        v_final=100.0,
        h_x=100.0,
        h_v=1.0,
        spec=lossy_spec,
        name="lossy",
    )


def hourly(start: datetime, prices) -> PriceSeries:
    stamps = tuple(start + timedelta(hours=i) for i in range(len(prices)))
    return PriceSeries(timestamps=stamps, prices=tuple(float(p) for p in prices))


@pytest.fixture
def two_days():
    """Jan 8 at 1 €/kWh, Jan 9 at 10 €/kWh."""
    return hourly(datetime(2018, 1, 8), [1.0] * 24 + [10.0] * 24)


@pytest.fixture
def two_day_scenario(two_days, make_spec):
    spec = make_spec(cap_max=1000.0, buy_max=600.0, y_max=500.0)
    return Scenario(series=two_days, consumption=100.0, spec=spec, v_init=0.0, v_final=0.0,
                    h_x=100.0, h_v=100.0)


@pytest.fixture
def price_csv(tmp_path):
    """Writes `timestamp,price` files with hourly stamps."""

    def _write(prices, start="2018-01-08T00:00:00", name="prices.csv"):
        stamps = pd.date_range(start, periods=len(prices), freq="h")
        lines = ["timestamp,price"] + [f"{t:%Y-%m-%dT%H:%M:%S},{p}" for t, p in zip(stamps, prices)]
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n")
        return path

    return _write


@pytest.fixture
def daily_pattern_mwh():
    """Two days of €/MWh prices: cheap nights, expensive evenings."""
    day = [30.0] * 6 + [45.0] * 10 + [80.0] * 5 + [40.0] * 3
    return day + [p + 5.0 for p in day]
