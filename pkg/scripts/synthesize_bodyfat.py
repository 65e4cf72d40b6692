"""Regenerate the bundled body-fat example table.

The original college-women body fat study data (Slack 1997, re-analyzed by
Johnson 2021) is not redistributable here, so the bundled file is a
synthetic stand-in built to match the published summary statistics: 183
rows, body fat fraction spanning exactly [0.0747, 0.3849], and the eight
circumference/size covariates with their published (min, mean, max).
Deterministic; run from the repository root:

    python scripts/synthesize_bodyfat.py
"""

from pathlib import Path

import numpy as np
from scipy.special import expit, ndtr

OUT = Path(__file__).resolve().parents[1] / "src" / "unitcp" / "data" / "bodyfat.csv"

N = 183
Y_MIN, Y_MAX = 0.0747, 0.3849

# name: (min, mean, max, common-factor loading)
COVARIATES = {
    "BMI": (15.80, 21.60, 31.14, 0.80),
    "Neck": (26.00, 31.48, 36.00, 0.65),
    "Chest": (43.00, 85.02, 100.00, 0.75),
    "Hips": (82.50, 96.93, 115.00, 0.80),
    "Waist": (58.00, 69.46, 96.00, 0.85),
    "Forearm": (20.00, 23.49, 29.00, 0.55),
    "PThigh": (45.00, 57.38, 69.50, 0.75),
    "Wrist": (13.50, 15.65, 19.00, 0.50),
}

# weights on the standardized covariates in the body fat linear predictor
WEIGHTS = {
    "BMI": 0.16,
    "Neck": 0.02,
    "Chest": 0.04,
    "Hips": 0.08,
    "Waist": 0.22,
    "Forearm": -0.04,
    "PThigh": 0.06,
    "Wrist": -0.08,
}

NOISE_SD = 0.31  # logit-scale residual sd; tuned for realistic interval widths


def pin_range(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return lo + (v - v.min()) * (hi - lo) / (v.max() - v.min())


def main() -> None:
    rng = np.random.default_rng(20250809)
    size_factor = rng.standard_normal(N)

    cols = {}
    for name, (lo, mean, hi, loading) in COVARIATES.items():
        z = loading * size_factor + np.sqrt(1.0 - loading**2) * rng.standard_normal(N)
        # monotone power map of the normal scores sets the mean fraction
        # between min and max, keeping the published skew
        frac = (mean - lo) / (hi - lo)
        shape = frac / (1.0 - frac)
        u = ndtr(z) ** (1.0 / shape)
        cols[name] = np.round(pin_range(u, lo, hi), 2)

    lp = -1.35
    for name, w in WEIGHTS.items():
        col = cols[name]
        lp = lp + w * (col - col.mean()) / col.std()
    y = expit(lp + NOISE_SD * rng.standard_normal(N))
    y = np.round(pin_range(y, Y_MIN, Y_MAX), 4)

    header = ["y", *COVARIATES]
    lines = [",".join(header)]
    for i in range(N):
        row = [f"{y[i]:.4f}"] + [f"{cols[name][i]:.2f}" for name in COVARIATES]
        lines.append(",".join(row))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({N} rows, y in [{y.min()}, {y.max()}])")


if __name__ == "__main__":
    main()
