"""Ingestion of station, trip, weather and holiday files into daily graphs.

File formats (UTF-8, header row required, ``.`` as decimal point):

``stations.csv``
    ``station_id,x,y,landuse_0..landuse_5,households_0..households_9``
``trips.csv``
    ``date,origin,destination,count`` with ISO-8601 dates; ``count`` may be 1
    per record or a pre-aggregated number of records.
``weather.csv``
    ``date,precip_mm,cloud_fraction,temp_mean,temp_max,temp_min``
``holidays.txt``
    one ISO-8601 date per line; blank lines and ``#`` comments are ignored.

Target classes are encoded as ``3 * weekend_or_holiday + weather`` with
weather ``rainy=0, sunny=1, cloudy=2``::

    0 rainy weekday    1 sunny weekday    2 cloudy weekday
    3 rainy weekend    4 sunny weekend    5 cloudy weekend
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .graph import N_HOUSEHOLD, N_LANDUSE, DailyGraph, StationSet

MIN_RECORDS = 5_000
MAX_RECORDS = 30_000
CLOUDY_THRESHOLD = 0.20
N_CLASSES = 6

RAINY, SUNNY, CLOUDY = "rainy", "sunny", "cloudy"
WEATHER_INDEX = {RAINY: 0, SUNNY: 1, CLOUDY: 2}
CLASS_NAMES = tuple(
    f"{w} {d}" for d in ("weekday", "weekend") for w in (RAINY, SUNNY, CLOUDY)
)

STATION_COLUMNS = (
    ["station_id", "x", "y"]
    + [f"landuse_{i}" for i in range(N_LANDUSE)]
    + [f"households_{i}" for i in range(N_HOUSEHOLD)]
)
TRIP_COLUMNS = ["date", "origin", "destination", "count"]
WEATHER_COLUMNS = ["date", "precip_mm", "cloud_fraction", "temp_mean", "temp_max", "temp_min"]

CACHE_FORMAT_VERSION = 1


class DataFormatError(ValueError):
    """A data file violates its schema."""


class ConstantColumnWarning(UserWarning):
    pass


class RawTrip(NamedTuple):
    date: dt.date
    origin: object
    destination: object
    count: int = 1


@dataclass(frozen=True)
class WeatherDay:
    date: dt.date
    precip_mm: float
    cloud_fraction: float
    temp_mean: float
    temp_max: float
    temp_min: float

    def __post_init__(self):
        if not self.precip_mm >= 0:
            raise ValueError(f"{self.date}: precipitation must be >= 0")
        if not 0 <= self.cloud_fraction <= 1:
            raise ValueError(f"{self.date}: cloud fraction must lie in [0, 1]")
        if not self.temp_min <= self.temp_mean <= self.temp_max:
            raise ValueError(f"{self.date}: need temp_min <= temp_mean <= temp_max")

    @property
    def temperatures(self):
        return (self.temp_mean, self.temp_max, self.temp_min)


@dataclass(frozen=True, eq=False)
class Dataset:
    stations: StationSet
    graphs: tuple

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)

    def __len__(self):
        return len(self.graphs)

    def fingerprint(self) -> str:
        """Content hash of stations and graphs."""
        h = hashlib.sha256()
        h.update(repr(self.stations.station_ids).encode())
        h.update(np.ascontiguousarray(self.stations.coords).tobytes())
        h.update(np.ascontiguousarray(self.stations.node_features).tobytes())
        for g in self.graphs:
            h.update(g.date.isoformat().encode())
            h.update(np.ascontiguousarray(g.edges).tobytes())
            h.update(np.ascontiguousarray(g.graph_features).tobytes())
            h.update(bytes([g.label]))
        return h.hexdigest()


# -- labels -----------------------------------------------------------------


def label_weather(precip_mm: float, cloud_fraction: float) -> str:
    if precip_mm > 0:
        return RAINY
    if cloud_fraction > CLOUDY_THRESHOLD:
        return CLOUDY
    return SUNNY


def label_target(weather: str, is_weekend_or_holiday: bool) -> int:
    return 3 * int(bool(is_weekend_or_holiday)) + WEATHER_INDEX[weather]


def is_weekend_or_holiday(date: dt.date, holidays=()) -> bool:
    return date.weekday() >= 5 or date in holidays


# -- aggregation and filtering ------------------------------------------------


def aggregate_daily(trips, index: dict | None = None) -> dict:
    """Fold trips into one undirected edge list per day.

    Returns ``{date: (m, 3) int array}`` of ``(i, j, n_ij)`` rows with
    ``i <= j``, sorted by date and then by ``(i, j)``. ``index`` maps station
    ids to node indices; without it ids must already be indices.
    """
    buckets = defaultdict(lambda: defaultdict(int))
    for t in trips:
        date, o, d, c = t
        if index is not None:
            try:
                o, d = index[o], index[d]
            except KeyError as exc:
                raise ValueError(f"unknown station id {exc.args[0]!r} on {date}") from None
        elif o < 0 or d < 0:
            raise ValueError(f"negative station index on {date}")
        if c < 1:
            raise ValueError(f"trip count must be >= 1 on {date}")
        key = (o, d) if o <= d else (d, o)
        buckets[date][key] += int(c)
    out = {}
    for date in sorted(buckets):
        pairs = sorted(buckets[date].items())
        out[date] = np.array([(i, j, n) for (i, j), n in pairs], dtype=np.int64).reshape(-1, 3)
    return out


def day_total(edges) -> int:
    return int(np.asarray(edges).reshape(-1, 3)[:, 2].sum())


def filter_outliers(days: dict, low: int = MIN_RECORDS, high: int = MAX_RECORDS) -> dict:
    """Keep days whose total record count lies in ``[low, high]``."""
    return {d: e for d, e in days.items() if low <= day_total(e) <= high}


# -- normalization ------------------------------------------------------------


def normalize_temperatures(temps) -> np.ndarray:
    """Z-score each temperature channel (population std) across days."""
    T = np.asarray(temps, dtype=float)
    if T.ndim != 2 or T.shape[0] < 2:
        raise ValueError("need at least two days of temperatures")
    sd = T.std(axis=0)
    if np.any(sd == 0):
        raise ValueError("a temperature channel has zero variance")
    return (T - T.mean(axis=0)) / sd


def normalize_node_features(stations: StationSet) -> StationSet:
    """Z-score the household columns; land-use one-hots are left alone.

    Columns with zero variance stay untouched and raise a
    :class:`ConstantColumnWarning`.
    """
    F = stations.node_features.copy()
    hh = F[:, N_LANDUSE:]
    sd = hh.std(axis=0)
    const = np.flatnonzero(sd == 0)
    if const.size:
        warnings.warn(
            f"household columns {const.tolist()} are constant; left unnormalized",
            ConstantColumnWarning,
            stacklevel=2,
        )
    ok = sd > 0
    hh[:, ok] = (hh[:, ok] - hh[:, ok].mean(axis=0)) / sd[ok]
    F[:, N_LANDUSE:] = hh
    return StationSet(stations.station_ids, stations.coords, F)


# -- file parsing -------------------------------------------------------------


def _rows(path, columns):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != columns:
            raise DataFormatError(f"{path.name}: header must be {','.join(columns)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(columns):
                raise DataFormatError(
                    f"{path.name} line {reader.line_num}: expected {len(columns)} fields, got {len(row)}"
                )
            yield reader.line_num, row


def _parse(path, line, fn, value):
    try:
        return fn(value)
    except ValueError:
        raise DataFormatError(f"{Path(path).name} line {line}: bad value {value!r}") from None


def read_stations(path) -> StationSet:
    ids, coords, feats = [], [], []
    for line, row in _rows(path, STATION_COLUMNS):
        ids.append(row[0].strip())
        vals = [_parse(path, line, float, v) for v in row[1:]]
        if any(v < 0 for v in vals[2 + N_LANDUSE :]):
            raise DataFormatError(f"{Path(path).name} line {line}: household counts must be >= 0")
        coords.append(vals[:2])
        feats.append(vals[2:])
    try:
        return StationSet(tuple(ids), np.array(coords).reshape(-1, 2), np.array(feats).reshape(len(ids), -1))
    except ValueError as exc:
        raise DataFormatError(f"{Path(path).name}: {exc}") from None


def _date(s):
    return dt.date.fromisoformat(s.strip())


def read_trips(path) -> list:
    trips = []
    for line, row in _rows(path, TRIP_COLUMNS):
        date = _parse(path, line, _date, row[0])
        count = _parse(path, line, int, row[3])
        if count < 1:
            raise DataFormatError(f"{Path(path).name} line {line}: count must be >= 1")
        trips.append(RawTrip(date, row[1].strip(), row[2].strip(), count))
    return trips


def read_weather(path) -> dict:
    out = {}
    for line, row in _rows(path, WEATHER_COLUMNS):
        date = _parse(path, line, _date, row[0])
        vals = [_parse(path, line, float, v) for v in row[1:]]
        try:
            out[date] = WeatherDay(date, *vals)
        except ValueError as exc:
            raise DataFormatError(f"{Path(path).name} line {line}: {exc}") from None
    return out


def read_holidays(path) -> set:
    out = set()
    with Path(path).open(encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            s = raw.split("#", 1)[0].strip()
            if s:
                out.add(_parse(path, n, _date, s))
    return out


def build_dataset(stations: StationSet, trips, weather: dict, holidays=()) -> Dataset:
    """Aggregate, filter, label and normalize already-parsed inputs."""
    days = filter_outliers(aggregate_daily(trips, stations.index()))
    missing = [d for d in days if d not in weather]
    if missing:
        raise ValueError(f"no weather record for {missing[0]} (and {len(missing) - 1} more)")
    holidays = set(holidays)
    dates = list(days)
    temps = normalize_temperatures([weather[d].temperatures for d in dates])
    graphs = []
    for date, z in zip(dates, temps):
        w = weather[date]
        label = label_target(
            label_weather(w.precip_mm, w.cloud_fraction), is_weekend_or_holiday(date, holidays)
        )
        graphs.append(DailyGraph(date, days[date], z, label))
    return Dataset(normalize_node_features(stations), tuple(graphs))


def load_dataset(stations_path, trips_path, weather_path, holidays_path=None) -> Dataset:
    stations = read_stations(stations_path)
    holidays = read_holidays(holidays_path) if holidays_path is not None else set()
    return build_dataset(stations, read_trips(trips_path), read_weather(weather_path), holidays)


def load_dir(directory) -> Dataset:
    """Load ``stations.csv``, ``trips.csv``, ``weather.csv`` and ``holidays.txt``."""
    d = Path(directory)
    holidays = d / "holidays.txt"
    return load_dataset(
        d / "stations.csv", d / "trips.csv", d / "weather.csv", holidays if holidays.exists() else None
    )


# -- cache --------------------------------------------------------------------


def save_cache(dataset: Dataset, path) -> None:
    """Write a self-describing ``.npz`` snapshot of a processed dataset."""
    g = dataset.graphs
    counts = np.array([len(x.edges) for x in g], dtype=np.int64)
    np.savez_compressed(
        path,
        format_version=np.array(CACHE_FORMAT_VERSION),
        station_ids=np.array(dataset.stations.station_ids, dtype=str),
        coords=dataset.stations.coords,
        node_features=dataset.stations.node_features,
        dates=np.array([x.date.isoformat() for x in g], dtype=str),
        edge_counts=counts,
        edges=np.concatenate([x.edges for x in g]) if g else np.zeros((0, 3), np.int64),
        graph_features=np.array([x.graph_features for x in g]).reshape(-1, 3),
        labels=np.array([x.label for x in g], dtype=np.int64),
        n_records=np.array([x.n_records for x in g], dtype=np.int64),
    )


def load_cache(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CACHE_FORMAT_VERSION:
            raise DataFormatError(f"cache format {version} unsupported (expected {CACHE_FORMAT_VERSION})")
        stations = StationSet(tuple(z["station_ids"].tolist()), z["coords"], z["node_features"])
        offsets = np.concatenate([[0], np.cumsum(z["edge_counts"])])
        edges = z["edges"]
        graphs = tuple(
            DailyGraph(
                dt.date.fromisoformat(str(date)),
                edges[offsets[i] : offsets[i + 1]],
                z["graph_features"][i],
                int(z["labels"][i]),
                int(z["n_records"][i]),
            )
            for i, date in enumerate(z["dates"])
        )
    return Dataset(stations, graphs)
