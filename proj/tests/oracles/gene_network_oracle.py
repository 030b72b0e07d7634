"""Independent reference values for the gene network tests.

Run: python3 tests/oracles/gene_network_oracle.py
"""
import math

STD = dict(Q=0.85, m=2.6, alpha=216.0, beta_a=0.85, beta_b=0.1, beta_c=0.1,
           eta=2.0, kappa=25.0, ks0=1.0, ks1=0.01)
X0 = [4.5, 6.0, 3.0, 4.2, 19.0, 4.3, 0.1, 7.3, 1.5, 3.4, 7.0, 6.5, 3.6, 0.08]


def drift(x, p):
    se = p["Q"] * (x[6] + x[13]) / 2.0
    out = []
    for i in range(2):
        a, b, c, A, B, C, S = x[7 * i:7 * i + 7]
        out += [
            -(a - p["alpha"] / (1.0 + C ** p["m"])),
            -(b - p["alpha"] / (1.0 + A ** p["m"])),
            -(c - p["alpha"] / (1.0 + B ** p["m"]) - p["kappa"] * S / (1.0 + S)),
            p["beta_a"] * (a - A),
            p["beta_b"] * (b - B),
            p["beta_c"] * (c - C),
            -(p["ks0"] * S - p["ks1"] * B + p["eta"] * (S - se)),
        ]
    return out


def long_run(h=1e-3, t_end=1000.0):
    x = list(X0)
    n = int(round(t_end / h))
    lo, hi = list(x), list(x)
    a1 = []
    for k in range(n):
        d = drift(x, STD)
        x = [max(0.0, xi + h * di) for xi, di in zip(x, d)]
        lo = [min(u, v) for u, v in zip(lo, x)]
        hi = [max(u, v) for u, v in zip(hi, x)]
        if (k + 1) % 10 == 0:
            a1.append(x[0])
    return lo, hi, a1


def cycles(series, low, high):
    """Counts excursions that rise above `high` after dipping below `low`."""
    count, armed = 0, False
    for v in series:
        if v < low:
            armed = True
        elif v > high and armed:
            count += 1
            armed = False
    return count


if __name__ == "__main__":
    print("drift at initial mean:")
    print([repr(v) for v in drift(X0, STD)])
    alt = dict(STD, Q=0.3, m=1.7, alpha=120.0, beta_a=0.4)
    y = [0.7, 12.0, 1e-3, 55.0, 2.5, 0.0, 3.0, 1.1, 0.2, 80.0, 9.0, 1e4, 0.5, 0.25]
    print("drift at alternate point:")
    print([repr(v) for v in drift(y, alt)])
    lo, hi, a1 = long_run()
    print("min", [repr(v) for v in lo])
    print("max", [repr(v) for v in hi])
    print("a1 cycles (below 4 then above 8):", cycles(a1, 4.0, 8.0))
