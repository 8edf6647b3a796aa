"""Independent reference computations used to freeze expected values.

Nothing here imports the package's algorithms; each oracle takes the slow,
obvious route so that agreement with the implementation means something.
"""
import itertools
import math

import numpy as np


def choi_by_loops(kraus, dim_in, dim_out):
    """J[(i,k),(j,l)] = <k| Φ(|i><j|) |l>, applying Φ to each matrix unit."""
    j = np.zeros((dim_in * dim_out, dim_in * dim_out), dtype=complex)
    for i in range(dim_in):
        for jj in range(dim_in):
            e = np.zeros((dim_in, dim_in), dtype=complex)
            e[i, jj] = 1
            img = sum(k @ e @ k.conj().T for k in kraus)
            for k in range(dim_out):
                for l in range(dim_out):
                    j[i * dim_out + k, jj * dim_out + l] = img[k, l]
    return j


def apply_by_loops(kraus, x):
    return sum(k @ x @ k.conj().T for k in kraus)


def partial_trace_second(x, d1, d2):
    """tr_2 of an operator on C^d1 ⊗ C^d2, by explicit sums."""
    out = np.zeros((d1, d1), dtype=complex)
    for a in range(d1):
        for b in range(d1):
            out[a, b] = sum(x[a * d2 + c, b * d2 + c] for c in range(d2))
    return out


def fixed_point_dim(kraus, n):
    """dim of {x : Φ*(x) = x} from the null space of the dense Heisenberg matrix."""
    cols = []
    for idx in range(n * n):
        e = np.zeros(n * n, dtype=complex)
        e[idx] = 1
        x = e.reshape(n, n)
        cols.append((sum(k.conj().T @ x @ k for k in kraus) - x).ravel())
    m = np.array(cols).T
    sv = np.linalg.svd(m, compute_uv=False)
    return int((sv < 1e-9 * max(1.0, sv[0])).sum())


def feasible_exhaustive(source_dims, target_dims):
    """Whether some non-negative integer N (targets x sources) has Σ_i N_ji d_i ≤ D_j
    for every j and every column nonzero. Enumerates rows independently."""
    src, tgt = list(source_dims), list(target_dims)
    rows = []
    for cap in tgt:
        opts = []
        ranges = [range(cap // d + 1) for d in src]
        for row in itertools.product(*ranges):
            if sum(n * d for n, d in zip(row, src)) <= cap:
                opts.append(row)
        rows.append(opts)
    for combo in itertools.product(*rows):
        if all(any(r[i] > 0 for r in combo) for i in range(len(src))):
            return True
    return not src


def lp(v, p):
    v = np.asarray(v, dtype=float)
    return float(v.max()) if p == math.inf else float((v ** p).sum() ** (1 / p))


def capacity_brute(lam_f, lam_g, p_max=200.0, points=40000):
    """Dense grid over p in [1, p_max] (plain power sums) plus p = ∞."""
    top = max(max(lam_f), max(lam_g), 2)
    p_max = min(p_max, 690 / math.log(top) / 1.5)
    ps = np.concatenate([np.linspace(1, 3, points // 2), np.geomspace(3, p_max, points // 2)])
    best, best_p = math.inf, None
    for p in list(ps) + [math.inf]:
        num, den = math.log(lp(lam_g, p)), math.log(lp(lam_f, p))
        if den == 0:
            continue
        r = num / den
        if r < best:
            best, best_p = r, p
    return best, best_p


def tensor_shape(a, b):
    return sorted((x * y for x in a for y in b), reverse=True)


def random_unital_heisenberg(dim, n_ops, rng):
    """Operators A_i with Σ A_i* A_i = 1, from an isometry C^dim → C^(n_ops·dim)."""
    g = rng.standard_normal((n_ops * dim, dim)) + 1j * rng.standard_normal((n_ops * dim, dim))
    q, _ = np.linalg.qr(g)
    return q.reshape(n_ops, dim, dim)


def heisenberg_apply(ops, x):
    return sum(a.conj().T @ x @ a for a in ops)
