# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Event-driven Dormand-Prince 5(4) integration of the SWFF regions.

Mirrors ``swff._pykernel`` operation for operation; both return the same
tuple layout (see ``swff.kernel``).
"""
from libc.math cimport tanh, sin, fabs, sqrt, floor, fmax, fmin, pow, M_PI
import numpy as np

DEF N = 6

# event kind codes
DEF EV_SLEEP = 0
DEF EV_WAKE = 1
DEF EV_MIN = 2
DEF EV_SIGMA_UP = 3
DEF EV_SIGMA_DOWN = 4

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = -71.0 / 57600, E3 = 71.0 / 16695, E4 = -71.0 / 1920, E5 = 17253.0 / 339200, E6 = -22.0 / 525, E7 = 1.0 / 40

cdef double[7][4] P = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
]

cdef struct Par:
    double Wmax, Smax, SCNmax, tauW, tauS, tauSCN, aW, aS, aSCN, bW, bSCN
    double gsw, gscnw, gws, gscns, hmax, hmin, tauhw, tauhs, k1, k2, thW, k, phi
    double omega, gain, scn_hi, scn_lo
    int chs


cdef void load_par(Par* p, const double[::1] v, int chs):
    p.Wmax = v[0]; p.Smax = v[1]; p.SCNmax = v[2]
    p.tauW = v[3]; p.tauS = v[4]; p.tauSCN = v[5]
    p.aW = v[6]; p.aS = v[7]; p.aSCN = v[8]; p.bW = v[9]; p.bSCN = v[10]
    p.gsw = v[11]; p.gscnw = v[12]; p.gws = v[13]; p.gscns = v[14]
    p.hmax = v[15]; p.hmin = v[16]; p.tauhw = v[17]; p.tauhs = v[18]
    p.k1 = v[19]; p.k2 = v[20]; p.thW = v[21]; p.k = v[22]; p.phi = v[23]
    p.omega = 2.0 * M_PI / 24.0
    p.gain = tanh(1.0 / 0.7) / tanh(1.0 / p.aSCN)
    p.scn_hi = p.SCNmax * 0.5 * (1.0 + tanh(1.0 / 0.7))
    p.scn_lo = p.SCNmax * 0.5 * (1.0 - tanh(1.0 / 0.7))
    p.chs = chs


cdef inline void rhs(const double* y, int wake, int scn_high, const Par* p, double* out) noexcept nogil:
    cdef double target
    out[0] = (p.Wmax * 0.5 * (1.0 + tanh((p.gscnw * y[2] - p.gsw * y[1] - p.bW) / p.aW)) - y[0]) / p.tauW
    out[1] = (p.Smax * 0.5 * (1.0 + tanh((-p.gws * y[0] - p.gscns * y[2] - (p.k2 * y[3] + p.k1)) / p.aS)) - y[1]) / p.tauS
    if p.chs:
        target = p.scn_hi if scn_high else p.scn_lo
    else:
        target = p.SCNmax * 0.5 * (1.0 + p.gain * tanh((y[4] - p.bSCN) / p.aSCN))
    out[2] = (target - y[2]) / p.tauSCN
    if wake:
        out[3] = (p.hmax - y[3]) / (p.k * p.tauhw)
    else:
        out[3] = (p.hmin - y[3]) / (p.k * p.tauhs)
    out[4] = -p.omega * sin(y[5])
    out[5] = p.omega


cdef inline double dense1(const double* y, double[7][N] K, double h, double x, int i) noexcept nogil:
    cdef double x2 = x * x
    cdef double s = 0.0
    cdef int j
    for j in range(7):
        s += K[j][i] * (P[j][0] * x + P[j][1] * x2 + P[j][2] * x2 * x + P[j][3] * x2 * x2)
    return y[i] + h * s


cdef inline void dense(const double* y, double[7][N] K, double h, double x, double* out) noexcept nogil:
    cdef int i
    for i in range(N):
        out[i] = dense1(y, K, h, x, i)


cdef inline double event_value(const double* y, double[7][N] K, double h, double x, int which, const Par* p) noexcept nogil:
    if which == 0:
        return dense1(y, K, h, x, 0) - p.thW
    return dense1(y, K, h, x, 4) - p.bSCN


cdef int first_crossing(const double* y, double[7][N] K, double h, int which, int direction,
                        const Par* p, double tol_x, double* x_out) noexcept nogil:
    """Locate the first crossing in ``direction`` (+1 up, -1 down) inside the step.

    Returns 1 and the step fraction on the post-crossing side, 0 if none,
    -1 if refinement failed to converge.
    """
    cdef double xs[5]
    cdef double gs[5]
    cdef int i, it, side
    cdef double xa, xb, ga, gb, xm, gm
    xs[0] = 0.0; xs[1] = 0.25; xs[2] = 0.5; xs[3] = 0.75; xs[4] = 1.0
    for i in range(5):
        gs[i] = event_value(y, K, h, xs[i], which, p) * direction
    # crossing means the directed value becomes strictly positive
    if gs[0] > 0.0:
        # start already past the boundary: inconsistent regime at entry
        x_out[0] = 0.0
        return 1
    for i in range(1, 5):
        if gs[i] > 0.0:
            xa = xs[i - 1]; ga = gs[i - 1]
            xb = xs[i]; gb = gs[i]
            side = 0
            for it in range(200):
                if xb - xa <= tol_x:
                    x_out[0] = xb
                    return 1
                # Illinois false position, bisection safeguard
                xm = xa - ga * (xb - xa) / (gb - ga)
                if not (xm > xa and xm < xb) or (it % 4 == 3):
                    xm = 0.5 * (xa + xb)
                gm = event_value(y, K, h, xm, which, p) * direction
                if gm > 0.0:
                    xb = xm; gb = gm
                    if side == 1:
                        ga *= 0.5
                    side = 1
                else:
                    xa = xm; ga = gm
                    if side == -1:
                        gb *= 0.5
                    side = -1
            return -1
    return 0


def run(double[::1] y0, int wake, int scn_high, double t0, double t_end, const double[::1] par,
        int chs, double rtol, double atol, double event_tol, double first_step, double max_step,
        int max_sleep_onsets, int gamma_enabled, int record):
    """Integrate from ``t0`` to ``t_end`` or until ``max_sleep_onsets`` sleep onsets.

    Returns ``(status, t, y, wake, scn_high, events, samples, nsteps)`` where
    ``events`` is a list of ``(t, kind, state_tuple)`` and ``samples`` is
    ``(t_array, y_array, regime_array)`` or ``None``. Status: 0 horizon
    reached, 1 onset budget reached, -1 step-size underflow, -2 event
    refinement failure.
    """
    cdef Par p
    load_par(&p, par, chs)
    cdef double y[N]
    cdef double ynew[N]
    cdef double ytmp[N]
    cdef double yev[N]
    cdef double K[7][N]
    cdef double t = t0, h, hmin_abs, err, sc, errnorm, fac, x_g, x_s, x_ev, t_ev, th_target, th0, th1
    cdef int i, j, rg, rs, ev_which, n_onsets = 0, nsteps = 0, status = 0
    cdef int g_dir, s_dir
    cdef double theta_min
    cdef long n_lo, n_hi, n_m
    for i in range(N):
        y[i] = y0[i]

    events = []
    cdef Py_ssize_t cap = 0, ns = 0
    cdef double[::1] s_t
    cdef double[:, ::1] s_y
    cdef signed char[:, ::1] s_r
    if record:
        cap = 4096
        s_t = np.empty(cap)
        s_y = np.empty((cap, N))
        s_r = np.empty((cap, 2), dtype=np.int8)
        s_t[0] = t
        for i in range(N):
            s_y[0, i] = y[i]
        s_r[0, 0] = wake; s_r[0, 1] = scn_high
        ns = 1

    h = fmin(first_step, max_step)
    rhs(y, wake, scn_high, &p, K[0])

    while t < t_end:
        if h > t_end - t:
            h = t_end - t
        hmin_abs = 1e-13 * fmax(1.0, fabs(t))
        if h < hmin_abs:
            status = -1
            break
        # stages
        for i in range(N):
            ytmp[i] = y[i] + h * A21 * K[0][i]
        rhs(ytmp, wake, scn_high, &p, K[1])
        for i in range(N):
            ytmp[i] = y[i] + h * (A31 * K[0][i] + A32 * K[1][i])
        rhs(ytmp, wake, scn_high, &p, K[2])
        for i in range(N):
            ytmp[i] = y[i] + h * (A41 * K[0][i] + A42 * K[1][i] + A43 * K[2][i])
        rhs(ytmp, wake, scn_high, &p, K[3])
        for i in range(N):
            ytmp[i] = y[i] + h * (A51 * K[0][i] + A52 * K[1][i] + A53 * K[2][i] + A54 * K[3][i])
        rhs(ytmp, wake, scn_high, &p, K[4])
        for i in range(N):
            ytmp[i] = y[i] + h * (A61 * K[0][i] + A62 * K[1][i] + A63 * K[2][i] + A64 * K[3][i] + A65 * K[4][i])
        rhs(ytmp, wake, scn_high, &p, K[5])
        for i in range(N):
            ynew[i] = y[i] + h * (B1 * K[0][i] + B3 * K[2][i] + B4 * K[3][i] + B5 * K[4][i] + B6 * K[5][i])
        rhs(ynew, wake, scn_high, &p, K[6])
        errnorm = 0.0
        for i in range(N):
            err = h * (E1 * K[0][i] + E3 * K[2][i] + E4 * K[3][i] + E5 * K[4][i] + E6 * K[5][i] + E7 * K[6][i])
            sc = atol + rtol * fmax(fabs(y[i]), fabs(ynew[i]))
            errnorm += (err / sc) * (err / sc)
        errnorm = sqrt(errnorm / N)
        if errnorm > 1.0:
            fac = fmax(0.2, 0.9 * pow(errnorm, -0.2))
            h *= fac
            continue
        nsteps += 1

        # events inside the accepted step
        x_ev = 2.0
        ev_which = -1
        if gamma_enabled:
            g_dir = -1 if wake else 1
            rg = first_crossing(y, K, h, 0, g_dir, &p, event_tol / h, &x_g)
            if rg < 0:
                status = -2
                break
            if rg == 1:
                x_ev = x_g
                ev_which = 0
        if chs:
            s_dir = -1 if scn_high else 1
            rs = first_crossing(y, K, h, 1, s_dir, &p, event_tol / h, &x_s)
            if rs < 0:
                status = -2
                break
            # Sigma wins exact ties and anything within event_tol of Gamma
            if rs == 1 and (x_s * h <= x_ev * h + event_tol):
                x_ev = x_s
                ev_which = 1

        if ev_which >= 0:
            t_ev = t + x_ev * h
            dense(y, K, h, x_ev, yev)
        else:
            t_ev = t + h

        # circadian minima in (theta_start, theta_end]
        th0 = y[5]
        th1 = yev[5] if ev_which >= 0 else ynew[5]
        n_lo = <long>floor((th0 - M_PI) / (2.0 * M_PI)) + 1
        n_hi = <long>floor((th1 - M_PI) / (2.0 * M_PI))
        for n_m in range(n_lo, n_hi + 1):
            theta_min = M_PI + 2.0 * M_PI * n_m
            if theta_min <= th0:
                continue
            x_g = (theta_min - th0) / (p.omega * h)
            if x_g > 1.0:
                x_g = 1.0
            dense(y, K, h, x_g, ytmp)
            events.append((t + x_g * h, EV_MIN, tuple([ytmp[i] for i in range(N)])))

        if ev_which >= 0:
            t = t_ev
            for i in range(N):
                y[i] = yev[i]
            if ev_which == 0:
                if wake:
                    events.append((t, EV_SLEEP, tuple([y[i] for i in range(N)])))
                    n_onsets += 1
                else:
                    events.append((t, EV_WAKE, tuple([y[i] for i in range(N)])))
                wake = 1 - wake
            else:
                if scn_high:
                    events.append((t, EV_SIGMA_DOWN, tuple([y[i] for i in range(N)])))
                else:
                    events.append((t, EV_SIGMA_UP, tuple([y[i] for i in range(N)])))
                scn_high = 1 - scn_high
            # restart: no step straddles a region change
            rhs(y, wake, scn_high, &p, K[0])
        else:
            t = t + h
            for i in range(N):
                y[i] = ynew[i]
                K[0][i] = K[6][i]
            if errnorm == 0.0:
                fac = 10.0
            else:
                fac = fmin(10.0, 0.9 * pow(errnorm, -0.2))
            h = fmin(h * fac, max_step)

        if record:
            if ns == cap:
                cap *= 2
                s_t = np.resize(np.asarray(s_t), cap)
                s_y = np.resize(np.asarray(s_y), (cap, N))
                s_r = np.resize(np.asarray(s_r), (cap, 2))
            s_t[ns] = t
            for i in range(N):
                s_y[ns, i] = y[i]
            s_r[ns, 0] = wake; s_r[ns, 1] = scn_high
            ns += 1

        if max_sleep_onsets > 0 and n_onsets >= max_sleep_onsets:
            status = 1
            break

    samples = None
    if record:
        samples = (np.asarray(s_t)[:ns].copy(), np.asarray(s_y)[:ns].copy(), np.asarray(s_r)[:ns].copy())
    yout = np.empty(N)
    for i in range(N):
        yout[i] = y[i]
    return status, t, yout, wake, scn_high, events, samples, nsteps
