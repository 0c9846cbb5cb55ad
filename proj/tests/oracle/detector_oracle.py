#!/usr/bin/env python3
"""Scalar reference for the CUSUM and Poisson-LLR recurrences.

Written from the recurrence definitions alone, without looking at the C++
sources, and run once to freeze tests/data/detector_oracle.json:

    S_n = max(0, S_{n-1} + (x_n - mu0) / sigma0 - k)      alarm iff S_n > h, then S_n := 0
    l_n = n * ln(rho) - (rho - 1) * lambda0
    L_n = max(0, L_{n-1} + l_n)                           alarm iff L_n > h_llr, then L_n := 0

Usage: detector_oracle.py [out.json]
"""
import json
import math
import random
import sys

SEQUENCES = 1000
SEED = 20260101


def poisson(rng, lam):
    # Knuth for small rates, normal approximation (rounded, clipped) above.
    if lam < 30:
        limit, k, p = math.exp(-lam), 0, 1.0
        while True:
            p *= rng.random()
            if p <= limit:
                return k
            k += 1
    return max(0, int(round(rng.gauss(lam, math.sqrt(lam)))))


def cusum(xs, mu0, sigma0, k, h):
    s, out = 0.0, []
    for x in xs:
        s = s + (x - mu0) / sigma0 - k
        if s < 0.0:
            s = 0.0
        alarm = s > h
        out.append({"score": s, "alarm": alarm})
        if alarm:
            s = 0.0
    return out


def bayes(ns, lambda0, rho, h_llr):
    big_l, out = 0.0, []
    log_rho = math.log(rho)
    for n in ns:
        big_l = big_l + (float(n) * log_rho - (rho - 1.0) * lambda0)
        if big_l < 0.0:
            big_l = 0.0
        alarm = big_l > h_llr
        out.append({"score": big_l, "alarm": alarm})
        if alarm:
            big_l = 0.0
    return out


def main():
    rng = random.Random(SEED)
    cases = []
    for i in range(SEQUENCES):
        length = rng.randint(5, 40)
        mu0 = rng.uniform(0.0, 5000.0)
        sigma0 = rng.uniform(0.5, 200.0)
        k = rng.uniform(0.0, 1.5)
        h = rng.uniform(1.0, 12.0)
        lambda0 = rng.uniform(0.2, 500.0)
        rho = rng.uniform(1.01, 3.0)
        h_llr = rng.uniform(1.0, 20.0)
        # Half the sequences shift upward part-way through.
        onset = rng.randint(0, length) if i % 2 else length
        shift = rng.uniform(0.0, 4.0)
        xs, ns = [], []
        for t in range(length):
            d = shift if t >= onset else 0.0
            xs.append(float(max(0, round(rng.gauss(mu0 + d * sigma0, sigma0)))))
            ns.append(poisson(rng, lambda0 * (1.0 + 0.5 * d)))
        cases.append({
            "cusum": {"mu0": mu0, "sigma0": sigma0, "k": k, "h": h, "x": xs, "expected": cusum(xs, mu0, sigma0, k, h)},
            "bayes": {"lambda0": lambda0, "rho": rho, "h_llr": h_llr, "n": ns,
                      "expected": bayes(ns, lambda0, rho, h_llr)},
        })
    doc = {"generator": "detector_oracle.py", "seed": SEED, "cases": cases}
    out = sys.argv[1] if len(sys.argv) > 1 else "detector_oracle.json"
    with open(out, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


if __name__ == "__main__":
    main()
