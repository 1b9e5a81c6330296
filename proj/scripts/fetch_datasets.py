#!/usr/bin/env python3
"""Fetch the three benchmark datasets into data/.

Best effort: files that already exist are left alone, sources that need
credentials (Kaggle) fall back to printed instructions. Exits non-zero if any
dataset is still missing at the end.

  data/concrete.csv    UCI Concrete Compressive Strength (1030 rows)
  data/california.csv  California Housing, StatLib via scikit-learn (20640 rows)
  data/ames.csv        Ames Housing, Kaggle competition train split (1460 rows)
"""

import io
import shutil
import subprocess
import sys
import urllib.request
import zipfile
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"

CONCRETE_ZIP = "https://archive.ics.uci.edu/static/public/165/concrete+compressive+strength.zip"
CONCRETE_COLUMNS = [
    "cement",
    "blast_furnace_slag",
    "fly_ash",
    "water",
    "superplasticizer",
    "coarse_aggregate",
    "fine_aggregate",
    "age",
    "strength",
]

CALIFORNIA_COLUMNS = [
    "MedInc",
    "HouseAge",
    "AveRooms",
    "AveBedrms",
    "Population",
    "AveOccup",
    "Latitude",
    "Longitude",
    "median_house_value",
]

KAGGLE_COMPETITION = "house-prices-advanced-regression-techniques"


def fetch_concrete(dest: Path) -> bool:
    try:
        import pandas as pd  # needs xlrd for the .xls inside the UCI zip
    except ImportError:
        print("concrete: pandas not installed; install pandas+xlrd or convert manually:")
        print(f"  1. download {CONCRETE_ZIP}")
        print(f"  2. export Concrete_Data.xls as CSV with header {','.join(CONCRETE_COLUMNS)}")
        return False
    print(f"concrete: downloading {CONCRETE_ZIP}")
    with urllib.request.urlopen(CONCRETE_ZIP, timeout=60) as resp:
        payload = resp.read()
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        xls_name = next(n for n in zf.namelist() if n.lower().endswith(".xls"))
        frame = pd.read_excel(io.BytesIO(zf.read(xls_name)))
    if frame.shape[1] != len(CONCRETE_COLUMNS):
        raise RuntimeError(f"unexpected column count {frame.shape[1]} in {xls_name}")
    frame.columns = CONCRETE_COLUMNS
    frame.to_csv(dest, index=False)
    return True


def fetch_california(dest: Path) -> bool:
    try:
        from sklearn.datasets import fetch_california_housing
    except ImportError:
        print("california: scikit-learn not installed; install it or fetch StatLib's")
        print("  cal_housing archive (https://lib.stat.cmu.edu/datasets/) and convert to")
        print(f"  CSV with header {','.join(CALIFORNIA_COLUMNS)} (target in dollars).")
        return False
    print("california: fetching via scikit-learn (StatLib mirror)")
    bunch = fetch_california_housing()
    with dest.open("w") as out:
        out.write(",".join(CALIFORNIA_COLUMNS) + "\n")
        for row, target in zip(bunch.data, bunch.target):
            cells = [repr(v) for v in row]
            cells.append(repr(target * 100_000.0))  # sklearn reports $100k units
            out.write(",".join(cells) + "\n")
    return True


def fetch_ames(dest: Path) -> bool:
    kaggle = shutil.which("kaggle")
    if kaggle:
        print(f"ames: downloading via kaggle cli ({KAGGLE_COMPETITION})")
        tmp = dest.parent / "_ames_tmp"
        tmp.mkdir(exist_ok=True)
        try:
            subprocess.run(
                [kaggle, "competitions", "download", "-c", KAGGLE_COMPETITION, "-f", "train.csv", "-p", str(tmp)],
                check=True,
            )
            archives = list(tmp.glob("train.csv*"))
            if archives and archives[0].suffix == ".zip":
                with zipfile.ZipFile(archives[0]) as zf:
                    zf.extract("train.csv", tmp)
            shutil.move(str(tmp / "train.csv"), dest)
            return True
        except (subprocess.CalledProcessError, FileNotFoundError) as exc:
            print(f"ames: kaggle cli failed ({exc})")
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
    print("ames: needs a (free) Kaggle account; the competition data is not mirrored.")
    print(f"  1. https://www.kaggle.com/competitions/{KAGGLE_COMPETITION}/data")
    print("  2. download train.csv (1460 rows, 81 columns incl. SalePrice)")
    print(f"  3. save it as {dest}")
    return False


def main() -> int:
    DATA.mkdir(exist_ok=True)
    jobs = [
        ("concrete.csv", fetch_concrete),
        ("california.csv", fetch_california),
        ("ames.csv", fetch_ames),
    ]
    missing = []
    for name, fetch in jobs:
        dest = DATA / name
        if dest.exists():
            print(f"{name}: already present, skipping")
            continue
        try:
            ok = fetch(dest)
        except Exception as exc:  # network/parse failures: report and keep going
            print(f"{name}: failed ({exc})")
            ok = False
        if not ok:
            missing.append(name)
    if missing:
        print(f"\nstill missing: {', '.join(missing)} (see instructions above)")
        return 1
    print("\nall datasets present under data/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
