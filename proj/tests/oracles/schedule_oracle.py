"""Independent oracle for the linear schedule, timestep subsets and the
inversion contraction factor of the standard-normal analytic model.

Everything is evaluated in 60-digit mpmath (rationals where exact) and
written as a C++ header of frozen constants:

    python3 tests/oracles/schedule_oracle.py > tests/oracle_values.hpp
"""

from fractions import Fraction
import math

import mpmath as mp

mp.mp.dps = 60

T = 1000
BETA1 = mp.mpf("1e-4")
BETAT = mp.mpf("0.02")
POLICIES = ["uniform", "quad", "cube", "exp"]
SIZES = [3, 10, 1000]


def alpha_bars():
    out = []
    acc = mp.mpf(1)
    for t in range(1, T + 1):
        beta = BETA1 + (BETAT - BETA1) * (t - 1) / (T - 1)
        acc *= 1 - beta
        out.append(acc)
    return out  # out[k] is alpha_bar at 0-indexed step k


def ceil_exact(policy, i, s):
    u = Fraction(i, s)
    if policy == "uniform":
        v = u * T
    elif policy == "quad":
        v = u * u * T
    elif policy == "cube":
        v = u * u * u * T
    else:
        x = (mp.exp(5 * mp.mpf(i) / s) - 1) / (mp.exp(5) - 1) * T
        n = mp.nint(x)
        return int(n) if abs(x - n) < mp.mpf("1e-30") else int(mp.ceil(x))
    return math.ceil(v)


def subset(policy, s):
    steps = []
    for i in range(1, s + 1):
        c = T if i == s else ceil_exact(policy, i, s)
        step = max(c, 1) - 1
        if not steps or step > steps[-1]:
            steps.append(step)
    return steps


def contraction(ab, steps):
    # first transfer leaves the clean endpoint, eps queried at step 0
    a0 = ab[0]
    a = ab[steps[0]]
    lam = mp.sqrt(a) + mp.sqrt(1 - a) * mp.sqrt(1 - a0)
    for prev, nxt in zip(steps, steps[1:]):
        ai, an = ab[prev], ab[nxt]
        lam *= mp.sqrt(ai * an) + mp.sqrt((1 - ai) * (1 - an))
    return lam


def fmt(x):
    return mp.nstr(x, 20, strip_zeros=False)


def main():
    ab = alpha_bars()
    print("#pragma once")
    print("")
    print("// Generated by tests/oracles/schedule_oracle.py; do not edit by hand.")
    print("")
    print("#include <vector>")
    print("")
    print("namespace oracle {")
    print("")
    print(f"inline constexpr double kAlphaBarFirst = {fmt(ab[0])};")
    print(f"inline constexpr double kAlphaBarLast = {fmt(ab[-1])};")
    print("")
    print("struct SubsetCase {")
    print("    int size;")
    print("    const char* policy;")
    print("    int count;        // entries after deduplication")
    print("    long long sum;    // sum of the entries")
    print("    std::vector<int> head;  // first entries (all of them when count <= 10)")
    print("    double lambda;")
    print("};")
    print("")
    print("inline const std::vector<SubsetCase> kSubsetCases = {")
    for s in SIZES:
        for policy in POLICIES:
            steps = subset(policy, s)
            head = ", ".join(str(v) for v in steps[:10])
            lam = contraction(ab, steps)
            print(f'    {{{s}, "{policy}", {len(steps)}, {sum(steps)}, {{{head}}}, {fmt(lam)}}},')
    print("};")
    print("")
    print("}  // namespace oracle")


if __name__ == "__main__":
    main()
