"""Fetch public tabular benchmark datasets as headered CSVs.

Only the census-income table is downloaded automatically (it is small and
has a stable home).  The other benchmark tables live behind portals or
larger archives; their homes are listed so you can place a headered CSV
next to the downloaded one and point the CLI at it.

Run:  python3 scripts/fetch_datasets.py [--out data/]
"""

import argparse
import csv
import os
import urllib.request

ADULT_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data"
ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]

OTHER_DATASETS = {
    "helena / jannis": "https://automl.chalearn.org/data",
    "higgs-small": "https://archive.ics.uci.edu/dataset/280/higgs",
    "aloi": "https://aloi.science.uva.nl/",
    "covertype": "https://archive.ics.uci.edu/dataset/31/covertype",
    "california-housing": "https://www.dcc.fc.up.pt/~ltorgo/Regression/cal_housing.html",
    "year": "https://archive.ics.uci.edu/dataset/203/yearpredictionmsd",
    "yahoo-ltrc": "https://webscope.sandbox.yahoo.com/",
    "microsoft-mslr": "https://www.microsoft.com/en-us/research/project/mslr/",
}


def fetch_adult(out_dir: str) -> str:
    """Download the census-income table and add the canonical header."""
    path = os.path.join(out_dir, "adult.csv")
    print(f"fetching {ADULT_URL}")
    with urllib.request.urlopen(ADULT_URL, timeout=60) as response:
        text = response.read().decode("utf-8")
    rows = [
        [cell.strip() for cell in line.split(",")]
        for line in text.splitlines()
        if line.strip()
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ADULT_COLUMNS)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows -> {path}")
    print("ingest with:  tabcl ingest adult.csv --target income --out adult_ds")
    return path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    fetch_adult(args.out)
    print("\nother benchmark tables (manual download):")
    for name, url in OTHER_DATASETS.items():
        print(f"  {name:20s} {url}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
