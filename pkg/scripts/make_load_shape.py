"""Regenerate the bundled synthetic duck-curve load shapes.

Gross load follows a two-hump residential/commercial pattern with an evening
peak; net load subtracts a behind-the-meter solar bell.  Gross is normalized
to a daily mean of exactly 1.

    python3 scripts/make_load_shape.py > src/mfg_grid/data/load_shape.csv
"""
import numpy as np

GROSS = [0.86, 0.82, 0.80, 0.79, 0.80, 0.84, 0.90, 0.95, 0.97, 0.97, 0.97, 0.97,
         0.97, 0.98, 1.00, 1.04, 1.11, 1.20, 1.27, 1.27, 1.22, 1.13, 1.03, 0.93]
SOLAR_PEAK = 0.72  # share of mean gross load at solar noon


def main():
    gross = np.array(GROSS) / np.mean(GROSS)
    gross = np.round(gross, 6)
    gross[-1] = round(24.0 - gross[:-1].sum(), 6)
    clock = np.arange(24) + 0.5
    solar = np.clip(np.cos((clock - 12.5) / 6.5 * np.pi / 2), 0.0, None) ** 1.5
    net = np.round(gross - SOLAR_PEAK * solar, 6)
    print("hour,gross_load_fraction,net_load_fraction")
    for h in range(24):
        print(f"{h + 1},{gross[h]:.6f},{net[h]:.6f}")


if __name__ == "__main__":
    main()
