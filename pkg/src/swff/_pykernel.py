"""Pure-Python twin of the compiled integration kernel.

Same algorithm, same arithmetic order and the same return layout as
``swff._kernel.run``; used when the extension is not built.
"""
import math

import numpy as np

N = 6
EV_SLEEP, EV_WAKE, EV_MIN, EV_SIGMA_UP, EV_SIGMA_DOWN = range(5)

A21 = 1.0 / 5
A31, A32 = 3.0 / 40, 9.0 / 40
A41, A42, A43 = 44.0 / 45, -56.0 / 15, 32.0 / 9
A51, A52, A53, A54 = 19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729
A61, A62, A63, A64, A65 = 9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656
B1, B3, B4, B5, B6 = 35.0 / 384, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84
E1, E3, E4, E5, E6, E7 = (-71.0 / 57600, 71.0 / 16695, -71.0 / 1920, 17253.0 / 339200,
                          -22.0 / 525, 1.0 / 40)

P = (
    (1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0),
    (0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0),
    (0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0),
    (0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0),
    (0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0),
)


class _Par:
    __slots__ = ("Wmax", "Smax", "SCNmax", "tauW", "tauS", "tauSCN", "aW", "aS", "aSCN", "bW",
                 "bSCN", "gsw", "gscnw", "gws", "gscns", "hmax", "hmin", "tauhw", "tauhs", "k1",
                 "k2", "thW", "k", "phi", "omega", "gain", "scn_hi", "scn_lo", "chs")

    def __init__(self, v, chs):
        (self.Wmax, self.Smax, self.SCNmax, self.tauW, self.tauS, self.tauSCN, self.aW, self.aS,
         self.aSCN, self.bW, self.bSCN, self.gsw, self.gscnw, self.gws, self.gscns, self.hmax,
         self.hmin, self.tauhw, self.tauhs, self.k1, self.k2, self.thW, self.k,
         self.phi) = (float(x) for x in v[:24])
        self.omega = 2.0 * math.pi / 24.0
        self.gain = math.tanh(1.0 / 0.7) / math.tanh(1.0 / self.aSCN)
        self.scn_hi = self.SCNmax * 0.5 * (1.0 + math.tanh(1.0 / 0.7))
        self.scn_lo = self.SCNmax * 0.5 * (1.0 - math.tanh(1.0 / 0.7))
        self.chs = chs


def _rhs(y, wake, scn_high, p):
    tanh = math.tanh
    d0 = (p.Wmax * 0.5 * (1.0 + tanh((p.gscnw * y[2] - p.gsw * y[1] - p.bW) / p.aW)) - y[0]) / p.tauW
    d1 = (p.Smax * 0.5 * (1.0 + tanh((-p.gws * y[0] - p.gscns * y[2] - (p.k2 * y[3] + p.k1)) / p.aS))
          - y[1]) / p.tauS
    if p.chs:
        target = p.scn_hi if scn_high else p.scn_lo
    else:
        target = p.SCNmax * 0.5 * (1.0 + p.gain * tanh((y[4] - p.bSCN) / p.aSCN))
    d2 = (target - y[2]) / p.tauSCN
    if wake:
        d3 = (p.hmax - y[3]) / (p.k * p.tauhw)
    else:
        d3 = (p.hmin - y[3]) / (p.k * p.tauhs)
    return [d0, d1, d2, d3, -p.omega * math.sin(y[5]), p.omega]


def _dense1(y, K, h, x, i):
    x2 = x * x
    s = 0.0
    for j in range(7):
        Pj = P[j]
        s += K[j][i] * (Pj[0] * x + Pj[1] * x2 + Pj[2] * x2 * x + Pj[3] * x2 * x2)
    return y[i] + h * s


def _dense(y, K, h, x):
    return [_dense1(y, K, h, x, i) for i in range(N)]


def _event_value(y, K, h, x, which, p):
    if which == 0:
        return _dense1(y, K, h, x, 0) - p.thW
    return _dense1(y, K, h, x, 4) - p.bSCN


def _first_crossing(y, K, h, which, direction, p, tol_x):
    xs = (0.0, 0.25, 0.5, 0.75, 1.0)
    gs = [_event_value(y, K, h, x, which, p) * direction for x in xs]
    if gs[0] > 0.0:
        return 1, 0.0
    for i in range(1, 5):
        if gs[i] > 0.0:
            xa, ga, xb, gb = xs[i - 1], gs[i - 1], xs[i], gs[i]
            side = 0
            for it in range(200):
                if xb - xa <= tol_x:
                    return 1, xb
                xm = xa - ga * (xb - xa) / (gb - ga)
                if not (xa < xm < xb) or it % 4 == 3:
                    xm = 0.5 * (xa + xb)
                gm = _event_value(y, K, h, xm, which, p) * direction
                if gm > 0.0:
                    xb, gb = xm, gm
                    if side == 1:
                        ga *= 0.5
                    side = 1
                else:
                    xa, ga = xm, gm
                    if side == -1:
                        gb *= 0.5
                    side = -1
            return -1, 0.0
    return 0, 0.0


def run(y0, wake, scn_high, t0, t_end, par, chs, rtol, atol, event_tol, first_step, max_step,
        max_sleep_onsets, gamma_enabled, record):
    p = _Par(par, chs)
    y = [float(v) for v in y0]
    t = float(t0)
    events = []
    nsteps = 0
    n_onsets = 0
    status = 0
    s_t, s_y, s_r = [], [], []
    if record:
        s_t.append(t)
        s_y.append(list(y))
        s_r.append((wake, scn_high))
    h = min(first_step, max_step)
    K = [None] * 7
    K[0] = _rhs(y, wake, scn_high, p)
    two_pi = 2.0 * math.pi
    while t < t_end:
        if h > t_end - t:
            h = t_end - t
        if h < 1e-13 * max(1.0, abs(t)):
            status = -1
            break
        k0 = K[0]
        K[1] = _rhs([y[i] + h * A21 * k0[i] for i in range(N)], wake, scn_high, p)
        k1 = K[1]
        K[2] = _rhs([y[i] + h * (A31 * k0[i] + A32 * k1[i]) for i in range(N)], wake, scn_high, p)
        k2 = K[2]
        K[3] = _rhs([y[i] + h * (A41 * k0[i] + A42 * k1[i] + A43 * k2[i]) for i in range(N)],
                    wake, scn_high, p)
        k3 = K[3]
        K[4] = _rhs([y[i] + h * (A51 * k0[i] + A52 * k1[i] + A53 * k2[i] + A54 * k3[i])
                     for i in range(N)], wake, scn_high, p)
        k4 = K[4]
        K[5] = _rhs([y[i] + h * (A61 * k0[i] + A62 * k1[i] + A63 * k2[i] + A64 * k3[i] + A65 * k4[i])
                     for i in range(N)], wake, scn_high, p)
        k5 = K[5]
        ynew = [y[i] + h * (B1 * k0[i] + B3 * k2[i] + B4 * k3[i] + B5 * k4[i] + B6 * k5[i])
                for i in range(N)]
        K[6] = _rhs(ynew, wake, scn_high, p)
        k6 = K[6]
        errnorm = 0.0
        for i in range(N):
            err = h * (E1 * k0[i] + E3 * k2[i] + E4 * k3[i] + E5 * k4[i] + E6 * k5[i] + E7 * k6[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            errnorm += (err / sc) * (err / sc)
        errnorm = math.sqrt(errnorm / N)
        if errnorm > 1.0:
            h *= max(0.2, 0.9 * errnorm ** -0.2)
            continue
        nsteps += 1

        x_ev = 2.0
        ev_which = -1
        if gamma_enabled:
            rg, x_g = _first_crossing(y, K, h, 0, -1 if wake else 1, p, event_tol / h)
            if rg < 0:
                status = -2
                break
            if rg == 1:
                x_ev, ev_which = x_g, 0
        if chs:
            rs, x_s = _first_crossing(y, K, h, 1, -1 if scn_high else 1, p, event_tol / h)
            if rs < 0:
                status = -2
                break
            if rs == 1 and x_s * h <= x_ev * h + event_tol:
                x_ev, ev_which = x_s, 1

        yev = _dense(y, K, h, x_ev) if ev_which >= 0 else None
        th0 = y[5]
        th1 = yev[5] if ev_which >= 0 else ynew[5]
        n_lo = math.floor((th0 - math.pi) / two_pi) + 1
        n_hi = math.floor((th1 - math.pi) / two_pi)
        for n_m in range(n_lo, n_hi + 1):
            theta_min = math.pi + two_pi * n_m
            if theta_min <= th0:
                continue
            x_m = min((theta_min - th0) / (p.omega * h), 1.0)
            events.append((t + x_m * h, EV_MIN, tuple(_dense(y, K, h, x_m))))

        if ev_which >= 0:
            t = t + x_ev * h
            y = yev
            if ev_which == 0:
                if wake:
                    events.append((t, EV_SLEEP, tuple(y)))
                    n_onsets += 1
                else:
                    events.append((t, EV_WAKE, tuple(y)))
                wake = 1 - wake
            else:
                events.append((t, EV_SIGMA_DOWN if scn_high else EV_SIGMA_UP, tuple(y)))
                scn_high = 1 - scn_high
            K[0] = _rhs(y, wake, scn_high, p)
        else:
            t = t + h
            y = ynew
            K[0] = k6
            fac = 10.0 if errnorm == 0.0 else min(10.0, 0.9 * errnorm ** -0.2)
            h = min(h * fac, max_step)

        if record:
            s_t.append(t)
            s_y.append(list(y))
            s_r.append((wake, scn_high))

        if max_sleep_onsets > 0 and n_onsets >= max_sleep_onsets:
            status = 1
            break

    samples = None
    if record:
        samples = (np.array(s_t), np.array(s_y, dtype=float).reshape(-1, N),
                   np.array(s_r, dtype=np.int8).reshape(-1, 2))
    return status, t, np.array(y), wake, scn_high, events, samples, nsteps
