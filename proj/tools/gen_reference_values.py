#!/usr/bin/env python3
"""High-precision reference values for the C++ test suite.

Computes, at 50 significant digits with mpmath:
  * the Morse-Ingard mode wavenumbers k_t, k_p and decoupling data (Q, t+, t-)
    from the gas parameters (gamma, M, Lambda),
  * the similarity check  B E^-1 C B^-1 = -diag(k_t^2, k_p^2),
  * the transmission boundary matrix A = E B^-1 diag(k_t,k_p) B,
  * Hankel/Bessel spot values used by the special-function tests.

Run it and paste the printed literals into the tests when they change.
"""

import mpmath as mp

mp.mp.dps = 50

GAMMA = mp.mpf("1.4")
M = mp.mpf("3.664152973215096e-5")
LAM = mp.mpf("5.370572762330994e-5")


def decouple(gamma, m, lam):
    i = mp.mpc(0, 1)
    q2 = 4 * (i * m + gamma * m * lam) + (1 - i * gamma * m - i * lam) ** 2
    q = mp.sqrt(q2)
    # mode wavenumbers; +q branch is the thermal (large) one for the gases
    # of interest, but callers should order by magnitude
    kt2 = (i / (2 * m)) * (1 - i * gamma * m - i * lam + q) / (1 - i * gamma * lam)
    kp2 = (i / (2 * m)) * (1 - i * gamma * m - i * lam - q) / (1 - i * gamma * lam)
    den = 2 * gamma * (lam - m) * (i * lam * gamma - 1)
    tp = ((2 * lam * gamma - lam - m * gamma + i) * m - i * m * q) / den
    tm = ((2 * lam * gamma - lam - m * gamma + i) * m + i * m * q) / den
    kt = mp.sqrt(kt2)
    kp = mp.sqrt(kp2)
    if abs(kt) < abs(kp):
        kt, kp, tp, tm = kp, kt, tm, tp
    for k in (kt, kp):
        assert k.real > 0 and k.imag > 0, k
    return q, tp, tm, kt, kp


def matrices(gamma, m, lam):
    i = mp.mpc(0, 1)
    L = 1 - i * gamma * lam
    E = mp.matrix([[m, 0], [0, L]])
    C = mp.matrix(
        [
            [-i, i * (gamma - 1) / gamma],
            [gamma * (1 - lam / m), -(gamma * (1 - lam / m) + lam / m)],
        ]
    )
    return E, C, L


def check_similarity(gamma, m, lam):
    q, tp, tm, kt, kp = decouple(gamma, m, lam)
    E, C, L = matrices(gamma, m, lam)
    B = mp.matrix([[m, tp * L], [m, tm * L]])
    S = B * (E**-1) * C * (B**-1)
    target = mp.matrix([[-kt * kt, 0], [0, -kp * kp]])
    err = max(abs(S[r, c] - target[r, c]) for r in range(2) for c in range(2))
    scale = max(abs(kt * kt), abs(kp * kp))
    return err / scale


def fmt(z, digits=17):
    return mp.nstr(z.real, digits, strip_zeros=False), mp.nstr(z.imag, digits, strip_zeros=False)


def main():
    q, tp, tm, kt, kp = decouple(GAMMA, M, LAM)
    print("== paper-parameter decoupling ==")
    for name, z in [("Q", q), ("t+", tp), ("t-", tm), ("kt", kt), ("kp", kp)]:
        re, im = fmt(z)
        print(f"{name:3s} = {re} + {im} i")
    print("similarity residual:", mp.nstr(check_similarity(GAMMA, M, LAM), 3))

    # reference values quoted to double precision elsewhere
    kt_ref = mp.mpc("116.81449127197266", "116.81529235839844")
    kp_ref = mp.mpc("1.0", "3.418116830289364e-5")
    print("rel dev from quoted kt:", mp.nstr(abs(kt - kt_ref) / abs(kt_ref), 3))
    print("rel dev from quoted kp:", mp.nstr(abs(kp - kp_ref) / abs(kp_ref), 3))

    print("\n== random-parameter similarity sweep ==")
    import random

    rng = random.Random(20240817)
    worst = mp.mpf(0)
    for _ in range(100):
        g = mp.mpf(1) + mp.mpf(rng.uniform(0.05, 1.0))
        mm = mp.mpf(rng.uniform(1e-6, 1e-3))
        ll = mp.mpf(rng.uniform(1e-6, 1e-3))
        if abs(mm - ll) < mp.mpf("1e-9"):
            continue
        worst = max(worst, check_similarity(g, mm, ll))
    print("worst similarity residual over sweep:", mp.nstr(worst, 3))

    print("\n== transmission boundary matrix ==")
    i = mp.mpc(0, 1)
    E, C, L = matrices(GAMMA, M, LAM)
    B = mp.matrix([[M, tp * L], [M, tm * L]])
    A = E * (B**-1) * mp.matrix([[kt, 0], [0, kp]]) * B
    for r in range(2):
        for c in range(2):
            re, im = fmt(A[r, c])
            print(f"A[{r}][{c}] = {re} + {im} i")
    # closed form of the same matrix, for cross-checking
    dt = tm - tp
    A2 = mp.matrix(
        [
            [M * (tm * kt - tp * kp) / dt, tp * tm * (kt - kp) * L / dt],
            [M * (kp - kt) / dt, (tm * kp - tp * kt) * L / dt],
        ]
    )
    err = max(abs(A[r, c] - A2[r, c]) for r in range(2) for c in range(2))
    print("closed-form deviation:", mp.nstr(err, 3))
    # verify E dU/dn = i A U for mode fields satisfying dV/dn = i k V
    vt, vp = mp.mpc(0.3, -0.7), mp.mpc(-1.1, 0.4)
    V = mp.matrix([vt, vp])
    dV = mp.matrix([i * kt * vt, i * kp * vp])
    U = (B**-1) * V
    dU = (B**-1) * dV
    res = E * dU - i * A * U
    print("mode-field BC residual:", mp.nstr(max(abs(res[0]), abs(res[1])), 3))
    ad22 = mp.sqrt(GAMMA) * L
    re, im = fmt(ad22)
    print(f"adhoc A[1][1] = {re} + {im} i")

    print("\n== special function spot values ==")
    for name, z in [
        ("H0(1)", mp.hankel1(0, 1)),
        ("H1(1)", mp.hankel1(1, 1)),
        ("H0(0.5+2i)", mp.hankel1(0, mp.mpc(0.5, 2))),
        ("H1(0.5+2i)", mp.hankel1(1, mp.mpc(0.5, 2))),
        ("H0(12.5+0.3i)", mp.hankel1(0, mp.mpc(12.5, 0.3))),
        ("H1(12.5+0.3i)", mp.hankel1(1, mp.mpc(12.5, 0.3))),
        ("H0(800+5i)", mp.hankel1(0, mp.mpc(800, 5))),
        ("H0(100i)", mp.hankel1(0, mp.mpc(0, 100))),
        ("exp(i)/(4 pi)", mp.exp(mp.mpc(0, 1)) / (4 * mp.pi)),
        ("(i/4)H0(1)", mp.mpc(0, 0.25) * mp.hankel1(0, 1)),
        ("(i/4)H1(1)", mp.mpc(0, 0.25) * mp.hankel1(1, 1)),
    ]:
        re, im = fmt(z)
        print(f"{name:15s} = {re} + {im} i")
    x = mp.mpf("0.7")
    w = mp.besselj(0, x) * mp.bessely(1, x) - mp.besselj(1, x) * mp.bessely(0, x)
    print("wronskian J0 Y1 - J1 Y0 at 0.7 vs -2/(pi x):", mp.nstr(w + 2 / (mp.pi * x), 3))


if __name__ == "__main__":
    main()
