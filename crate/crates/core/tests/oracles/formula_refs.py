"""Extended-precision reference values for the closed-form formulas.

Run with `python3 formula_refs.py`; the printed tables are frozen into
tests/formulas.rs. Uses mpmath at 50 significant digits.
"""
from mpmath import mp, mpf, sqrt, log, pi, acos, atan, binomial

mp.dps = 50


def psi(t):
    # The exact binary64 value: near t = -1 the decimal rounding alone moves psi by ~1e-10 relative.
    t = mpf(float(t))
    return (sqrt(1 - t * t) + (pi - acos(t)) * t) / pi


def a_n(n):
    n = mpf(n)
    return mpf(3) / 4 * sqrt(log(4 * n)) + log(n) / 2 * sqrt(log(2 * n))


def r_ball(norm2, delta, m, n):
    n = mpf(n)
    den = m * (12 * sqrt(log(4 * n)) + 8 * log(n) * sqrt(log(2 * n)) + 2 * sqrt(pi))
    return mpf(norm2) * mpf(delta) * sqrt(pi) / den


def r_segment(norm2, delta, m):
    return pi * mpf(norm2) * mpf(delta) / (2 * mpf(m) + pi)


def fail_ball(r, norm2, m, n):
    q = mpf(norm2) / (mpf(m) * mpf(r))
    if q <= 1:
        return mpf(1)
    return min(mpf(1), (16 / sqrt(pi) * a_n(n) + 1) / (q - 1))


def fail_segment(r, norm2, m):
    r, norm2, m = mpf(r), mpf(norm2), mpf(m)
    if r >= norm2:
        return mpf(1)
    return min(mpf(1), 2 * m * r / (pi * (norm2 - r)))


def covering(n, eps):
    n, eps = mpf(n), mpf(eps)
    if eps >= 1:
        return mpf(1)
    if eps > 1 / sqrt(n):
        return (2 * n) ** (1 / eps ** 2)
    return (1 + 2 / eps) ** n


def lattice_count(n, m):
    return sum(2 ** k * binomial(n, k) * binomial(m - 1, k) for k in range(m))


print("PSI")
for t in ["-0.999999", "-0.99", "-0.9", "-0.5", "-0.1", "0", "0.3", "0.7", "0.99", "1"]:
    print(f"    ({t}, {mp.nstr(psi(t), 20)}),")
print("A_N")
for n in [2, 3, 10, 64, 784, 1024, 4096, 100000]:
    print(f"    ({n}, {mp.nstr(a_n(n), 20)}),")
print("R_BALL (norm2, delta, M, n)")
for args in [(10, 0.5, 1, 784), (3.5, 0.1, 2, 64), (36.9, 0.3, 1.5, 4096), (1, 0.9, 1, 2)]:
    print(f"    {args} -> {mp.nstr(r_ball(*args), 20)}")
print("R_SEGMENT (norm2, delta, M)")
for args in [(10, 0.5, 1), (3.5, 0.1, 2), (36.9, 0.3, 1.5), (1, 0.9, 4)]:
    print(f"    {args} -> {mp.nstr(r_segment(*args), 20)}")
print("FAIL_BALL (r, norm2, M, n)")
for args in [(0.01, 10, 1, 784), (0.001, 3.5, 2, 64), (0.05, 36.9, 1.5, 4096), (0.2, 10, 1, 2)]:
    print(f"    {args} -> {mp.nstr(fail_ball(*args), 20)}")
print("FAIL_SEGMENT (r, norm2, M)")
for args in [(1, 10, 1), (0.3, 3.5, 2), (2, 36.9, 1.5), (0.05, 1, 4)]:
    print(f"    {args} -> {mp.nstr(fail_segment(*args), 20)}")
print("COVERING (n, eps)")
for args in [(4, 0.75), (2, 0.5), (2, 0.8), (16, 0.3), (16, 0.2), (100, 0.5), (100, 0.05), (7, 1.0)]:
    print(f"    {args} -> {mp.nstr(covering(*args), 20)}")
print("LATTICE")
for n in range(2, 13):
    print(n, [int(lattice_count(n, m)) for m in range(2, n + 1)])
print("ATAN", mp.nstr(atan(mpf("0.1")) / pi, 20))


def entropy_integral(n):
    s = 1 / sqrt(mpf(n))
    small = mp.quad(lambda e: sqrt(n * log(1 + 2 / e)), [0, s])
    return small + sqrt(log(2 * mpf(n))) * log(1 / s)


print("ENTROPY_INTEGRAL")
for n in [2, 16, 256, 4096]:
    print(f"    ({n}, {mp.nstr(entropy_integral(n), 20)}),")
