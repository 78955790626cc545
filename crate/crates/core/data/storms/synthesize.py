"""Writes the synthetic station records used by the storm scenarios.

Deterministic: rerunning reproduces the CSV files byte for byte.
Columns: time_s, lon_deg, lat_deg, dbx_nt (north), dby_nt (east), dbz_nt.
"""
import math
import random
from pathlib import Path

STATIONS = [(lon, lat) for lat in (20.0, 27.0, 34.0, 41.0) for lon in (140.0, 150.0, 160.0, 170.0)]
HEADER = "time_s,lon_deg,lat_deg,dbx_nt,dby_nt,dbz_nt"


def long_storm(t_s):
    # main phase deepening to about -320 nT at 2.5 h, then slow recovery
    h = t_s / 3600.0
    depth = -320.0 * math.exp(-((h - 2.5) / 1.8) ** 2) - 90.0
    swing = 40.0 * math.sin(2.0 * math.pi * h / 3.0)
    return depth, swing


def short_storm(t_s):
    # sharp onset, peak near 30 min, decay by the end of the 93 min window
    m = t_s / 60.0
    pulse = -260.0 * (m / 30.0) * math.exp(1.0 - m / 30.0)
    swing = 70.0 * math.sin(2.0 * math.pi * m / 40.0)
    return pulse, swing


def write(path, profile, t_end_s, step_s, seed):
    rng = random.Random(seed)
    lines = [HEADER]
    t = 0
    while t <= t_end_s:
        base_x, base_y = profile(t)
        for lon, lat in STATIONS:
            lat_gain = 1.0 + 0.012 * (lat - 30.0)
            local_time = math.cos(math.radians((lon - 155.0) * 3.0))
            dbx = base_x * lat_gain * (0.85 + 0.15 * local_time) + rng.gauss(0.0, 3.0)
            dby = base_y * (0.8 + 0.2 * local_time) + rng.gauss(0.0, 3.0)
            lines.append(f"{t},{lon:.1f},{lat:.1f},{dbx:.2f},{dby:.2f},")
        t += step_s
    Path(path).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    here = Path(__file__).parent
    write(here / "long_storm.csv", long_storm, 21000, 600, 11)
    write(here / "short_storm.csv", short_storm, 5580, 60, 13)
