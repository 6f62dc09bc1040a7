# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled allocation kernel.

Mirrors the reference rules in ``randomkit.general`` / ``randomkit.two_arm``
operation-for-operation: every double-precision expression below is written
in the same order as its Python counterpart so that recorded probability rows
are bit-identical between the two engines (the build disables FP contraction
for the same reason).  The engine's exactness tests enforce this.
"""

from libc.math cimport pow, sqrt

from .core import KIND_CODES

# Arm-count ceiling for the fixed-size scratch arrays below.
# randomkit.engine validates K <= 32 before dispatching here.
cdef enum:
    MAXK = 32

# Kind codes follow the declaration order of randomkit.core.Kind
# (asserted against KIND_CODES at module import, see bottom of file):
cdef enum:
    K_CRD = 0
    K_RAND = 1
    K_TMD = 2
    K_PBD = 3
    K_BUD = 4
    K_MWUD = 5
    K_DLUD = 6
    K_DBCD = 7
    K_MAXENT = 8
    K_BSD = 9
    K_BCDWIT = 10
    K_EUD = 11
    K_EBCD = 12
    K_ABCD = 13
    K_GBCD = 14
    K_BBCD = 15


cdef struct Spec:
    int kind
    int K
    long long b          # PBD/BSD/BCDWIT/EUD block factor or tolerance
    long long lam        # BUD
    long long a_imm      # DLUD immigration factor
    long long n_planned  # RAND/TMD
    double p             # EBCD/BCDWIT
    double a_exp         # ABCD
    double gamma         # DBCD/GBCD/BBCD
    double alpha         # MWUD
    double eta           # MAXENT
    double rho[MAXK]
    long long w[MAXK]
    long long caps[MAXK]
    long long bw[MAXK]   # PBD per-arm block slots b * w_k
    long long wsum       # sum of integer weights
    long long block      # PBD block size b * wsum


cdef inline int _pick(double* phi, int K, double u) noexcept nogil:
    cdef double acc = 0.0
    cdef int k, last = -1
    for k in range(K):
        if phi[k] > 0.0:
            last = k
            acc += phi[k]
            if u < acc:
                return k
    return last


cdef inline void _maxent_tilt(Spec* s, double* B, double bmin, double mu,
                              double* terms, double* den, double* num) noexcept nogil:
    cdef int k
    cdef double t
    den[0] = 0.0
    num[0] = 0.0
    for k in range(s.K):
        t = s.rho[k] * pow(mu, B[k] - bmin)
        terms[k] = t
        den[0] += t
        num[0] += t * B[k]


cdef void _probs(Spec* s, long long j, long long* N, long long* U, double* phi) noexcept nogil:
    cdef int k, i, kind = s.kind, K = s.K
    cdef long long d, rem, m, used, kj, total, cnt
    cdef double acc, reach, td, jd, jp1, t, ssum, pe, pc, xe, xc, invg
    cdef double B[MAXK]
    cdef double T[MAXK]
    cdef double bmin, dot, rhs, den, num, lo, hi, mid, mu
    cdef long long balls[MAXK]
    cdef int it

    if kind == K_CRD:
        for k in range(K):
            phi[k] = s.rho[k]
    elif kind == K_RAND:
        rem = s.n_planned - j
        for k in range(K):
            phi[k] = <double>(s.caps[k] - N[k]) / <double>rem
    elif kind == K_TMD:
        ssum = 0.0
        cnt = 0
        for k in range(K):
            if N[k] < s.caps[k]:
                ssum += s.rho[k]
            else:
                cnt = 1
        if cnt == 0:
            for k in range(K):
                phi[k] = s.rho[k]
        else:
            for k in range(K):
                if N[k] < s.caps[k]:
                    phi[k] = s.rho[k] / ssum
                else:
                    phi[k] = 0.0
    elif kind == K_PBD:
        m = j / s.block
        used = j - m * s.block
        rem = s.block - used
        for k in range(K):
            phi[k] = <double>(s.bw[k] - (N[k] - m * s.bw[k])) / <double>rem
    elif kind == K_BUD:
        kj = N[0] / s.w[0]
        for k in range(1, K):
            cnt = N[k] / s.w[k]
            if cnt < kj:
                kj = cnt
        rem = s.wsum * (s.lam + kj) - j
        for k in range(K):
            phi[k] = <double>(s.w[k] * (s.lam + kj) - N[k]) / <double>rem
    elif kind == K_MWUD:
        if j == 0:
            for k in range(K):
                phi[k] = s.rho[k]
        else:
            jd = <double>j
            ssum = 0.0
            for k in range(K):
                t = s.alpha * s.rho[k] - <double>N[k] + jd * s.rho[k]
                if t < 0.0:
                    t = 0.0
                T[k] = t
                ssum += t
            for k in range(K):
                phi[k] = T[k] / ssum
    elif kind == K_DLUD:
        if j == 0:
            for k in range(K):
                phi[k] = s.rho[k]
        else:
            for k in range(K):
                balls[k] = U[k]
                T[k] = 0.0
            reach = 1.0
            while reach >= 1e-12:
                total = 1
                for k in range(K):
                    total += balls[k]
                td = <double>total
                for k in range(K):
                    T[k] += reach * (<double>balls[k] / td)
                reach = reach / td
                for k in range(K):
                    balls[k] += s.a_imm * s.w[k]
            ssum = 0.0
            for k in range(K):
                ssum += T[k]
            for k in range(K):
                phi[k] = T[k] / ssum
    elif kind == K_DBCD:
        cnt = 1
        for k in range(K):
            if N[k] == 0:
                cnt = 0
        if j == 0 or cnt == 0:
            for k in range(K):
                phi[k] = s.rho[k]
        else:
            jd = <double>j
            ssum = 0.0
            for k in range(K):
                t = s.rho[k] * pow(s.rho[k] / (<double>N[k] / jd), s.gamma)
                T[k] = t
                ssum += t
            for k in range(K):
                phi[k] = T[k] / ssum
    elif kind == K_MAXENT:
        if j == 0:
            for k in range(K):
                phi[k] = s.rho[k]
        else:
            jp1 = <double>(j + 1)
            for k in range(K):
                ssum = 0.0
                for i in range(K):
                    t = (<double>N[i] + (1.0 if i == k else 0.0)) - jp1 * s.rho[i]
                    ssum += t * t
                B[k] = sqrt(ssum)
            bmin = B[0]
            for k in range(1, K):
                if B[k] < bmin:
                    bmin = B[k]
            dot = 0.0
            for k in range(K):
                dot += s.rho[k] * B[k]
            rhs = s.eta * bmin + (1.0 - s.eta) * dot
            _maxent_tilt(s, B, bmin, 1.0, T, &den, &num)
            if num / den - rhs <= 0.0:
                mu = 1.0
            else:
                lo = 0.0
                hi = 1.0
                it = 0
                while hi - lo > 1e-12 and it < 200:
                    mid = 0.5 * (lo + hi)
                    _maxent_tilt(s, B, bmin, mid, T, &den, &num)
                    if num / den - rhs > 0.0:
                        hi = mid
                    else:
                        lo = mid
                    it += 1
                mu = 0.5 * (lo + hi)
            _maxent_tilt(s, B, bmin, mu, T, &den, &num)
            for k in range(K):
                phi[k] = T[k] / den
    elif kind == K_BSD:
        d = N[0] - N[1]
        if d == s.b:
            phi[0] = 0.0
        elif d == -s.b:
            phi[0] = 1.0
        else:
            phi[0] = 0.5
        phi[1] = 1.0 - phi[0]
    elif kind == K_BCDWIT:
        d = N[0] - N[1]
        if d == 0:
            phi[0] = 0.5
        elif d == s.b:
            phi[0] = 0.0
        elif d == -s.b:
            phi[0] = 1.0
        elif d < 0:
            phi[0] = s.p
        else:
            phi[0] = 1.0 - s.p
        phi[1] = 1.0 - phi[0]
    elif kind == K_EUD:
        d = N[0] - N[1]
        phi[0] = <double>(s.b - d) / <double>(2 * s.b)
        phi[1] = 1.0 - phi[0]
    elif kind == K_EBCD:
        d = N[0] - N[1]
        if d == 0:
            phi[0] = 0.5
        elif d < 0:
            phi[0] = s.p
        else:
            phi[0] = 1.0 - s.p
        phi[1] = 1.0 - phi[0]
    elif kind == K_ABCD:
        d = N[0] - N[1]
        if d == 0:
            phi[0] = 0.5
        elif d > 0:
            phi[0] = 1.0 / (1.0 + pow(<double>d, s.a_exp))
        else:
            t = pow(<double>(-d), s.a_exp)
            phi[0] = t / (1.0 + t)
        phi[1] = 1.0 - phi[0]
    elif kind == K_GBCD:
        if j == 0:
            phi[0] = 0.5
        else:
            pe = pow(<double>N[0], s.gamma)
            pc = pow(<double>N[1], s.gamma)
            phi[0] = pc / (pe + pc)
        phi[1] = 1.0 - phi[0]
    else:  # K_BBCD
        if j == 0:
            phi[0] = 0.5
        elif j == 1:
            phi[0] = 0.0 if N[0] == 1 else 1.0
        else:
            invg = 1.0 / s.gamma
            jd = <double>j
            xe = 1.0 + <double>N[1] / (jd * <double>N[0])
            xc = 1.0 + <double>N[0] / (jd * <double>N[1])
            pe = pow(xe, invg)
            pc = pow(xc, invg)
            phi[0] = pe / (pe + pc)
        phi[1] = 1.0 - phi[0]


cdef inline void _advance(Spec* s, long long* N, long long* U, int arm) noexcept nogil:
    cdef int k
    N[arm] += 1
    if s.kind == K_DLUD:
        while U[arm] == 0:
            for k in range(s.K):
                U[k] += s.a_imm * s.w[k]
        U[arm] -= 1


def run_paths(cfg, double[:, ::1] uniforms, unsigned char[:, ::1] out_assign,
              double[:, :, ::1] out_probs, Py_ssize_t r0, Py_ssize_t r1):
    """Fill rows [r0, r1) of the assignment/probability tensors; one uniform
    variate is consumed per subject.  Releases the GIL for the whole sweep."""
    cdef Spec s
    cdef Py_ssize_t n = uniforms.shape[1]
    cdef Py_ssize_t r, j
    cdef int k, arm
    cdef long long N[MAXK]
    cdef long long U[MAXK]
    cdef double phi[MAXK]

    kind_obj = cfg.kind
    s.kind = KIND_CODES[kind_obj]
    s.K = cfg.k
    if s.K > MAXK:
        raise ValueError(f"compiled kernel supports at most {MAXK} arms")
    rho = cfg.target.rho
    for k in range(s.K):
        s.rho[k] = rho[k]

    s.b = 0
    s.lam = 0
    s.a_imm = 0
    s.n_planned = 0
    s.p = 0.0
    s.a_exp = 0.0
    s.gamma = 0.0
    s.alpha = 0.0
    s.eta = 0.0
    s.wsum = 0
    s.block = 0
    for k in range(s.K):
        s.w[k] = 0
        s.caps[k] = 0
        s.bw[k] = 0

    params = cfg.params
    if s.kind in (K_PBD, K_BUD, K_DLUD):
        wint = cfg.target.integer_w()
        for k in range(s.K):
            s.w[k] = wint[k]
            s.wsum += s.w[k]
    if s.kind in (K_RAND, K_TMD):
        caps = cfg.caps()
        for k in range(s.K):
            s.caps[k] = caps[k]
        s.n_planned = cfg.n
    if s.kind == K_PBD:
        s.b = int(params["b"])
        for k in range(s.K):
            s.bw[k] = s.b * s.w[k]
        s.block = s.b * s.wsum
    elif s.kind == K_BUD:
        s.lam = int(params["lambda"])
    elif s.kind == K_MWUD:
        s.alpha = float(params["alpha"])
    elif s.kind == K_DLUD:
        s.a_imm = int(params["a"])
    elif s.kind == K_DBCD:
        s.gamma = float(params["gamma"])
    elif s.kind == K_MAXENT:
        s.eta = float(params["eta"])
    elif s.kind in (K_BSD, K_EUD):
        s.b = int(params["b"])
    elif s.kind == K_BCDWIT:
        s.p = float(params["p"])
        s.b = int(params["b"])
    elif s.kind == K_EBCD:
        s.p = float(params["p"])
    elif s.kind == K_ABCD:
        s.a_exp = float(params["a"])
    elif s.kind in (K_GBCD, K_BBCD):
        s.gamma = float(params["gamma"])

    with nogil:
        for r in range(r0, r1):
            for k in range(s.K):
                N[k] = 0
                U[k] = s.w[k]
            for j in range(n):
                _probs(&s, j, N, U, phi)
                for k in range(s.K):
                    out_probs[r, j, k] = phi[k]
                arm = _pick(phi, s.K, uniforms[r, j])
                out_assign[r, j] = <unsigned char>arm
                _advance(&s, N, U, arm)


def _kind_code_table():
    """Expose the C-side code assumptions for the import-time check below."""
    return {
        "CRD": K_CRD, "RAND": K_RAND, "TMD": K_TMD, "PBD": K_PBD,
        "BUD": K_BUD, "MWUD": K_MWUD, "DLUD": K_DLUD, "DBCD": K_DBCD,
        "MAXENT": K_MAXENT, "BSD": K_BSD, "BCDWIT": K_BCDWIT, "EUD": K_EUD,
        "EBCD": K_EBCD, "ABCD": K_ABCD, "GBCD": K_GBCD, "BBCD": K_BBCD,
    }


def _check_codes():
    table = _kind_code_table()
    for kind, code in KIND_CODES.items():
        if table[kind.value] != code:
            raise ImportError(
                f"kind code mismatch for {kind.value}: kernel={table[kind.value]} core={code}"
            )


_check_codes()
