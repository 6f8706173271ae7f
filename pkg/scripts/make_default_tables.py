"""Regenerate the default demographic CSVs shipped under incarsim/data.

Mortality follows a Heligman-Pollard curve (infant decline, young-adult
accident hump, Gompertz-logistic senescence) with the senescence level
calibrated so life expectancy at birth matches 2009-style period values
(80.9 years for women, 76.0 for men). Fertility and friend-count
distributions start from rounded base shapes and are exponentially tilted
so their means hit the configured targets exactly.

The fertility shape is bimodal (childless mass plus a long large-family
tail, as in early-20th-century completed-fertility tables). The tail is
load-bearing: large same-sex sibling groups form the locally dense network
pockets that let a short-sentence epidemic persist near its threshold.
The friend-count mean is the calibrated global-connectivity dial; see the
README for how these defaults were chosen and how to replace them.

Run from the repository root:

    python scripts/make_default_tables.py
"""

from pathlib import Path

import numpy as np
from scipy.optimize import brentq

import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from incarsim.tables import MAX_AGE, tilt_to_mean  # noqa: E402

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "incarsim" / "data"

E0_TARGETS = {"female": 80.9, "male": 76.0}

# Heligman-Pollard parameters apart from the calibrated senescence level G.
HP_PARAMS = {
    "female": dict(q0=0.00574, A=0.00035, B=0.015, C=0.11, D=0.00030, E=9.0, F=21.0, H=1.098),
    "male": dict(q0=0.00695, A=0.00045, B=0.015, C=0.11, D=0.00120, E=9.0, F=21.0, H=1.092),
}

FERTILITY_BASE = [0.28, 0.20, 0.21, 0.09, 0.04, 0.03, 0.03, 0.05, 0.04, 0.01]
FERTILITY_TARGET = 2.07

FRIEND_TARGET = 0.42


def hazard_curve(params, senescence_level):
    ages = np.arange(1, MAX_AGE, dtype=float)
    child = params["A"] ** ((ages + params["B"]) ** params["C"])
    hump = params["D"] * np.exp(-params["E"] * (np.log(ages) - np.log(params["F"])) ** 2)
    gomp = senescence_level * params["H"] ** ages
    q = child + hump + gomp / (1.0 + gomp)
    q = np.concatenate([[params["q0"]], q])
    return np.clip(q, 0.0, 1.0)


def life_expectancy(hazard):
    survival = np.concatenate([[1.0], np.cumprod(1.0 - hazard)])
    pmf = np.empty(MAX_AGE + 1)
    pmf[:MAX_AGE] = survival[:MAX_AGE] * hazard
    pmf[MAX_AGE] = survival[MAX_AGE]
    return float(np.arange(pmf.size) @ pmf)


def calibrate_life_table(sex):
    params = HP_PARAMS[sex]
    target = E0_TARGETS[sex]
    g = brentq(
        lambda level: life_expectancy(hazard_curve(params, level)) - target,
        1e-7,
        1e-2,
        xtol=1e-16,
    )
    hazard = hazard_curve(params, g)
    return hazard, g


def poisson_pmf(lam, k_max):
    ks = np.arange(k_max + 1)
    log_pmf = -lam + ks * np.log(lam) - [float(np.sum(np.log(np.arange(1, k + 1)))) for k in ks]
    return np.exp(log_pmf)


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)

    female, g_f = calibrate_life_table("female")
    male, g_m = calibrate_life_table("male")
    with open(DATA_DIR / "life_table.csv", "w") as handle:
        handle.write("age,female,male\n")
        for age in range(MAX_AGE):
            handle.write(f"{age},{female[age]:.17g},{male[age]:.17g}\n")
    print(f"life_table.csv: e0 female {life_expectancy(female):.3f} (G={g_f:.4g}), "
          f"male {life_expectancy(male):.3f} (G={g_m:.4g})")

    fertility = tilt_to_mean(np.array(FERTILITY_BASE), FERTILITY_TARGET)
    with open(DATA_DIR / "fertility.csv", "w") as handle:
        handle.write("children,probability\n")
        for k, p in enumerate(fertility):
            handle.write(f"{k},{p:.17g}\n")
    print(f"fertility.csv: mean {np.arange(fertility.size) @ fertility:.9f}")

    friends = tilt_to_mean(poisson_pmf(FRIEND_TARGET, 5), FRIEND_TARGET)
    with open(DATA_DIR / "friend_counts.csv", "w") as handle:
        handle.write("friends,probability\n")
        for k, p in enumerate(friends):
            handle.write(f"{k},{p:.17g}\n")
    print(f"friend_counts.csv: mean {np.arange(friends.size) @ friends:.9f}")


if __name__ == "__main__":
    main()
