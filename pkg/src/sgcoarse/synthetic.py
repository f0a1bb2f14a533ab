"""Seeded synthetic stand-in for the station/trip/weather/holiday sources.

Stations sit in Gaussian blobs on the unit square; every blob has one
land-use type. Each day draws a latent class uniformly from the six
(weather x weekend) combinations, and ``signal_strength`` scales how much
that class shapes the day:

* weather shifts the temperatures (rainy cold, sunny warm) and rain cuts
  the total trip volume;
* weekdays boost commuting pairs (residential <-> office), weekends and
  sunny days boost pairs touching parks and leisure areas.

Trip counts per station pair are a multinomial draw from a distance-decayed
gravity model, so the daily total always stays inside the outlier bounds.
At ``signal_strength=0`` the class has no effect on any observable.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

from .data import (
    MAX_RECORDS,
    MIN_RECORDS,
    STATION_COLUMNS,
    TRIP_COLUMNS,
    WEATHER_COLUMNS,
    Dataset,
    RawTrip,
    WeatherDay,
    build_dataset,
)
from .graph import N_HOUSEHOLD, N_LANDUSE, StationSet

RESIDENTIAL, OFFICE, PARK, RETAIL, INDUSTRIAL, LEISURE = range(N_LANDUSE)
START_DATE = dt.date(2021, 1, 1)

BASE_VOLUME = 14_000
DECAY_LENGTH = 0.07
BLOB_SPREAD = 0.035
# per-weather temperature offsets in units of signal strength (rainy, sunny, cloudy)
TEMP_OFFSET = (-5.0, 5.0, 0.0)
TEMP_NOISE = 1.5


def _stations(n_stations, rng):
    n_blobs = max(N_LANDUSE, n_stations // 8)
    centers = rng.uniform(0.1, 0.9, size=(n_blobs, 2))
    blob_type = rng.permutation(np.arange(n_blobs) % N_LANDUSE)
    blob = np.sort(rng.permutation(np.arange(n_stations) % n_blobs))
    coords = np.clip(centers[blob] + rng.normal(0, BLOB_SPREAD, (n_stations, 2)), 0, 1)
    landuse = np.eye(N_LANDUSE)[blob_type[blob]]
    scale = np.where(blob_type[blob] == RESIDENTIAL, 400.0, 60.0)
    households = rng.gamma(2.0, 1.0, (n_stations, N_HOUSEHOLD)) * scale[:, None]
    households = np.round(households)
    ids = tuple(f"S{i:04d}" for i in range(n_stations))
    return StationSet(ids, coords, np.hstack([landuse, households])), blob, blob_type


def _pair_affinity(types, weekend, sunny, s):
    """Class-dependent multiplier on the gravity weight of every pair."""
    ti, tj = types[:, None], types[None, :]
    commute = ((ti == RESIDENTIAL) & (tj == OFFICE)) | ((ti == OFFICE) & (tj == RESIDENTIAL))
    leisure = np.isin(ti, (PARK, LEISURE)) | np.isin(tj, (PARK, LEISURE))
    f = np.ones(ti.shape[:1] + tj.shape[1:])
    f = f * np.where(commute, 1.0 + 4.0 * s * (1 - weekend), 1.0)
    f = f * np.where(leisure, 1.0 + 4.0 * s * weekend + 2.0 * s * sunny, 1.0)
    return f


def _dates(weekend_flags, rng):
    """Assign calendar dates consistent with each day's weekend flag.

    Weekend-class days mostly take the next Saturday/Sunday; about one in
    ten instead takes a weekday that is then declared a holiday.
    """
    weekday_q = (START_DATE + dt.timedelta(i) for i in range(10**6) if (START_DATE + dt.timedelta(i)).weekday() < 5)
    weekend_q = (START_DATE + dt.timedelta(i) for i in range(10**6) if (START_DATE + dt.timedelta(i)).weekday() >= 5)
    dates, holidays = [], []
    for w in weekend_flags:
        if not w:
            dates.append(next(weekday_q))
        elif rng.random() < 0.1:
            d = next(weekday_q)
            dates.append(d)
            holidays.append(d)
        else:
            dates.append(next(weekend_q))
    return dates, holidays


def generate_raw(n_stations=64, n_days=400, seed=7, signal_strength=1.0):
    """Raw inputs ``(stations, trips, weather, holidays, truth)``."""
    if n_stations < 8 or n_days < 20:
        raise ValueError("need n_stations >= 8 and n_days >= 20")
    if not 0 <= signal_strength:
        raise ValueError("signal_strength must be non-negative")
    s = float(signal_strength)
    rng = np.random.default_rng(seed)
    stations, blob, blob_type = _stations(n_stations, rng)
    types = blob_type[blob]
    n = n_stations

    d = np.sqrt(((stations.coords[:, None] - stations.coords[None]) ** 2).sum(-1))
    gravity = np.exp(-d / DECAY_LENGTH)
    np.fill_diagonal(gravity, 0.05)
    iu, ju = np.triu_indices(n)

    classes = rng.integers(0, 6, size=n_days)
    weather_idx, weekend = classes % 3, classes // 3
    dates, holidays = _dates(weekend, rng)

    trips, weather = [], {}
    for date, w, we in zip(dates, weather_idx, weekend):
        sunny = float(w == 1)
        rainy = float(w == 0)
        aff = _pair_affinity(types, we, sunny, s)
        p = (gravity * aff)[iu, ju]
        volume = BASE_VOLUME * (1 - 0.4 * s * rainy) * np.exp(rng.normal(0, 0.15))
        volume = int(np.clip(volume, MIN_RECORDS, MAX_RECORDS))
        counts = rng.multinomial(volume, p / p.sum())
        for k in np.flatnonzero(counts):
            trips.append(RawTrip(date, stations.station_ids[iu[k]], stations.station_ids[ju[k]], int(counts[k])))

        # precipitation and cloud only decide the label, so they always follow the class
        t_mean = 12.0 + s * TEMP_OFFSET[w] + rng.normal(0, TEMP_NOISE)
        spread = rng.uniform(2.0, 5.0)
        precip = rng.uniform(0.2, 8.0) if w == 0 else 0.0
        cloud = rng.uniform(0.3, 1.0) if w == 2 else rng.uniform(0.0, 0.2)
        weather[date] = WeatherDay(date, round(precip, 1), round(cloud, 3), round(t_mean, 2),
                                   round(t_mean + spread, 2), round(t_mean - spread, 2))

    truth = {
        "seed": seed,
        "signal_strength": s,
        "n_stations": n_stations,
        "n_days": n_days,
        "station_blob": blob.tolist(),
        "blob_landuse": blob_type.tolist(),
        "latent_class": {d.isoformat(): int(c) for d, c in zip(dates, classes)},
    }
    return stations, trips, weather, holidays, truth


def generate_synthetic(n_stations=64, n_days=400, seed=7, signal_strength=1.0):
    """Processed :class:`Dataset` plus the planted ground truth."""
    stations, trips, weather, holidays, truth = generate_raw(n_stations, n_days, seed, signal_strength)
    return build_dataset(stations, trips, weather, holidays), truth


def write_synthetic(out_dir, n_stations=64, n_days=400, seed=7, signal_strength=1.0) -> dict:
    """Write the four input files and ``ground_truth.json`` into ``out_dir``."""
    stations, trips, weather, holidays, truth = generate_raw(n_stations, n_days, seed, signal_strength)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "stations.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_COLUMNS)
        for sid, xy, f in zip(stations.station_ids, stations.coords, stations.node_features):
            w.writerow([sid, repr(float(xy[0])), repr(float(xy[1]))]
                       + [int(v) for v in f[:N_LANDUSE]] + [int(v) for v in f[N_LANDUSE:]])
    with (out / "trips.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_COLUMNS)
        for t in trips:
            w.writerow([t.date.isoformat(), t.origin, t.destination, t.count])
    with (out / "weather.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_COLUMNS)
        for date in sorted(weather):
            x = weather[date]
            w.writerow([date.isoformat(), x.precip_mm, x.cloud_fraction, x.temp_mean, x.temp_max, x.temp_min])
    (out / "holidays.txt").write_text("".join(f"{d.isoformat()}\n" for d in sorted(holidays)), encoding="utf-8")
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return truth

