"""Regenerate the bundled IEEE 14-bus network file.

Generator cost coefficients are drawn once from a fixed seed; the output is
checked into ``src/mfg_grid/data`` and never regenerated at runtime.

    python3 scripts/make_ieee14.py > src/mfg_grid/data/ieee14.net
"""
import numpy as np

SEED = 14_2022

# standard IEEE 14-bus branch reactances (p.u.), from -> to
BRANCHES = [
    (1, 2, 0.05917), (1, 5, 0.22304), (2, 3, 0.19797), (2, 4, 0.17632),
    (2, 5, 0.17388), (3, 4, 0.17103), (4, 5, 0.04211), (4, 7, 0.20912),
    (4, 9, 0.55618), (5, 6, 0.25202), (6, 11, 0.19890), (6, 12, 0.25581),
    (6, 13, 0.13027), (7, 8, 0.17615), (7, 9, 0.11001), (9, 10, 0.08450),
    (9, 14, 0.27038), (10, 11, 0.19207), (12, 13, 0.19988), (13, 14, 0.34802),
]


def main():
    rng = np.random.default_rng(SEED)
    alpha = rng.uniform(0.0118, 0.0684, 14)
    beta = rng.uniform(150.0, 233.0, 14)
    out = [
        "# IEEE 14-bus test system, one quadratic-cost generator per bus.",
        f"# alpha ~ U[0.0118, 0.0684], beta ~ U[150, 233], seed {SEED}",
        "# capacities 600 MW, line limits 1000 MW, standard branch reactances",
        "[buses]",
    ]
    out += [f"{i}" + (" slack" if i == 1 else "") for i in range(1, 15)]
    out += ["", "[generators]", "# bus alpha beta gamma capacity"]
    out += [f"{i + 1} {float(alpha[i])!r} {float(beta[i])!r} 0.0 600.0" for i in range(14)]
    out += ["", "[lines]", "# from to reactance capacity"]
    out += [f"{f} {t} {x!r} 1000.0" for f, t, x in BRANCHES]
    print("\n".join(out))


if __name__ == "__main__":
    main()
