"""Build data/tokyo.csv: days with more than 1 mm of rain in Tokyo, 1951-1989.

Source: NOAA GHCN-Daily, station JA000047662 (Tokyo). PRCP is reported in
tenths of a millimetre, so "more than 1 mm" is PRCP > 10.

Days are indexed on a 366-day calendar with 29 February as day 60, so every
year contributes to the same index for the same calendar date. The output
has columns day,y,m where m is the number of years with a valid record for
that date (39 for complete data, 10 for 29 February) and y is how many of
those years had rain.

Usage: python3 data/fetch_tokyo.py [output.csv]
"""

import csv
import datetime as dt
import io
import sys

import requests

URL = "https://www.ncei.noaa.gov/data/global-historical-climatology-network-daily/access/JA000047662.csv"
FIRST, LAST = 1951, 1989


def day_index(date: dt.date) -> int:
    """1-based index on a 366-day calendar with 29 February as day 60."""
    ordinal = date.timetuple().tm_yday
    leap = date.year % 4 == 0 and (date.year % 100 != 0 or date.year % 400 == 0)
    if not leap and ordinal >= 60:
        ordinal += 1
    return ordinal


def main() -> None:
    out = sys.argv[1] if len(sys.argv) > 1 else "data/tokyo.csv"
    resp = requests.get(URL, timeout=120)
    resp.raise_for_status()
    rain = [0] * 367
    seen = [0] * 367
    for row in csv.DictReader(io.StringIO(resp.text)):
        date = dt.date.fromisoformat(row["DATE"])
        if not FIRST <= date.year <= LAST or not row.get("PRCP", "").strip():
            continue
        i = day_index(date)
        seen[i] += 1
        rain[i] += int(float(row["PRCP"]) > 10)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "y", "m"])
        for i in range(1, 367):
            if seen[i]:
                w.writerow([i, rain[i], seen[i]])
    print(f"wrote {out}: {sum(seen)} station-days, m(29 Feb) = {seen[60]}")


if __name__ == "__main__":
    main()
