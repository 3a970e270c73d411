"""Independent high-precision reference values for the frozen unit tests.

Run: python3 tests/oracle/oracle.py
Every number printed here is pasted into tests/*.cpp. The computations use
mpmath at 50 digits and share no code with the C++ library.
"""
from mpmath import mp, mpf, exp, log, sqrt, quad, diff, floor, inf

mp.dps = 50

TIERS = {
    "conservative": dict(p_r=mpf("0.01"), p_b=mpf("1e-3"), gamma_p=mpf("0.5"), zeta=mpf("0.02"), p_dep=mpf("0.005"), delta_cal=mpf("0.005")),
    "target": dict(p_r=mpf("0.004"), p_b=mpf("5e-4"), gamma_p=mpf("0.05"), zeta=mpf("0.01"), p_dep=mpf("0.002"), delta_cal=mpf("0.002")),
    "optimistic": dict(p_r=mpf("0.001"), p_b=mpf("1e-4"), gamma_p=mpf("0.005"), zeta=mpf("0.005"), p_dep=mpf("0.001"), delta_cal=mpf("0.001")),
}
EPS = mpf("2e-11")


def flip(g, t):
    return (1 - exp(-g * t)) / 2


def mean_flip(g, pdf, tmax, breaks=()):
    pts = [mpf(0)] + [mpf(b) for b in breaks if 0 < b < tmax] + [mpf(tmax)]
    mass = quad(pdf, pts)
    return quad(lambda t: flip(g, t) * pdf(t), pts) / mass


def h(q):
    q = mpf(q)
    if q in (0, 1):
        return mpf(0)
    return -q * log(q, 2) - (1 - q) * log(1 - q, 2)


def rate(s):
    s = mpf(s)
    if s <= 2:
        return mpf(0)
    return 1 - h((1 + sqrt((s / 2) ** 2 - 1)) / 2)


def mu(m, eps=EPS):
    return 8 * sqrt(log(1 / eps) / (2 * mpf(m)))


def c_eat(eps=EPS):
    return log(1 / eps, 2) + 2 * log(5, 2)


def key_len(n, s, q, f_ec, v, c, tangent=None):
    n = mpf(n)
    tangent = s if tangent is None else mpf(tangent)
    slope = diff(rate, tangent)
    line = rate(tangent) + slope * (mpf(s) - tangent)
    delta = sqrt(n) * v * sqrt(2 * log(1 / EPS)) + c
    return floor(n * rate(s) - delta - n * h(q) * f_ec - log(1 / (EPS * EPS), 2)), line


def herald(L, alpha=mpf("0.2"), eta=mpf("0.9"), bsm=mpf("0.5")):
    return bsm * eta ** 2 * mpf(10) ** (-alpha * mpf(L) / 10)


def analytic_chain(tier, L_km, N, gamma=mpf("0.25"), m_xy=(0, 2, 2, 2), m_key=0, f_ec=mpf("1.16")):
    """Expected counts through the per-setting correlation model."""
    b = TIERS[tier]
    tau = mpf(L_km) * 1000 / mpf("2e8") + mpf("1e-5")
    pbar = flip(b["gamma_p"], tau)
    damp = (1 - b["zeta"]) * (1 - 2 * pbar) * (1 - 2 * b["p_r"]) ** 2 * (1 - b["p_dep"])
    # ideal correlators +,+,+,- 1/sqrt2 with the CHSH signs give |E| each
    s_exp = sum(damp * (1 - b["p_b"]) ** m / sqrt(2) for m in m_xy)
    q = (1 - damp * (1 - b["p_b"]) ** m_key) / 2
    p_wd = 1 - exp(-b["gamma_p"] * mpf("1e-6"))
    kept = mpf(N) * herald(L_km) * (1 - p_wd)
    n = floor(kept * (1 - gamma))
    m = floor(kept * gamma)
    m_u = mu(m)
    s_fin = s_exp - m_u - 4 * b["delta_cal"]
    tangent = min(max(s_exp - m_u, 2 + mpf("1e-6")), 2 * sqrt(2) - mpf("1e-6"))
    v = 2 * (1 + abs(diff(rate, tangent)))
    ell, _ = key_len(n, s_fin, q, f_ec, v, c_eat(), tangent)
    return dict(tau=tau, pbar=pbar, s_exp=s_exp, q=q, n=n, m=m, mu=m_u, s_final=s_fin, v=v,
                ell=max(0, min(n, ell)) if s_fin > 2 else 0)


def show(name, value):
    print(f"{name} = {mp.nstr(value, 17)}")


if __name__ == "__main__":
    show("poisoning_flip_prob(0.5, 0.2)", flip(mpf("0.5"), mpf("0.2")))
    show("degenerate tau=0.01 gamma=5", flip(5, mpf("0.01")))
    lam = 1 / mpf("0.3")
    show("exponential mean=0.3 gamma=2 T=1 (quad)", mean_flip(2, lambda t: lam * exp(-lam * t), 1))
    closed = ((1 - exp(-lam)) - lam / (lam + 2) * (1 - exp(-(lam + 2)))) / (2 * (1 - exp(-lam)))
    show("exponential mean=0.3 gamma=2 T=1 (closed)", closed)
    show("exponential discard mean=0.3 T=1", exp(-lam))
    show("exponential truncated mean mean=0.3 T=1",
         quad(lambda t: t * lam * exp(-lam * t), [0, 1]) / (1 - exp(-lam)))
    edges, weights = [0, mpf("0.5"), 1, 2], [1, 3, 1]
    def hist(t):
        for i in range(3):
            if edges[i] <= t < edges[i + 1]:
                return weights[i] / (edges[i + 1] - edges[i])
        return mpf(0)
    show("histogram gamma=0.8 T=1.5", mean_flip(mpf("0.8"), hist, mpf("1.5"), breaks=[mpf("0.5"), 1]))
    total = sum(weights)
    show("histogram discard T=1.5", (mpf(1) * mpf("0.5") / 1) / total)
    t = TIERS["target"]
    show("visibility_product target n=2 pbar=0.01",
         (1 - 2 * t["p_r"]) ** 2 * (1 - t["p_b"]) ** 2 * (1 - 2 * mpf("0.01")))
    show("visibility_isotropic target kbar=1.5 pbar=1e-3",
         1 - (2 * t["p_r"] + mpf("1.5") * t["p_b"] + 2 * mpf("1e-3") + t["p_dep"] + t["zeta"]))
    for name, b in TIERS.items():
        s = (1 - 2 * b["p_r"]) ** 2 * (1 + 3 * (1 - b["p_b"]) ** 2) / sqrt(2) - 4 * b["delta_cal"]
        show(f"anisotropic bound {name}", s)
    show("binary_entropy(0.02)", h(mpf("0.02")))
    show("binary_entropy(0.11)", h(mpf("0.11")))
    show("asymptotic_rate(2.5)", rate(2.5))
    show("asymptotic_rate(2.7)", rate(mpf("2.7")))
    show("asymptotic_rate_slope(2.5)", diff(rate, mpf("2.5")))
    show("asymptotic_rate_slope(2.8)", diff(rate, mpf("2.8")))
    show("hoeffding_mu(1e6, 2e-11)", mu(10 ** 6))
    show("c_eat(2e-11)", c_eat())
    ell, _ = key_len(10 ** 6, mpf("2.5"), mpf("0.02"), mpf("1.16"), mpf(4), c_eat())
    show("key_length(1e6, 2.5, 0.02, f=1.16, v=4)", ell)
    show("eat_min_entropy(1e6, 2.5, v=4)",
         10 ** 6 * rate(2.5) - 1000 * 4 * sqrt(2 * log(1 / EPS)) - c_eat())
    show("herald_probability(50 km)", herald(50))
    show("herald_probability(10 km)", herald(10))
    for tier in TIERS:
        r = analytic_chain(tier, 10, 10 ** 8)
        for key in ("s_exp", "q", "n", "m", "s_final", "ell"):
            show(f"analytic {tier} L=10 N=1e8 {key}", r[key])
    for N in (10 ** 5, 10 ** 6):
        show(f"analytic target L=10 N={N} ell", analytic_chain("target", 10, N)["ell"])
