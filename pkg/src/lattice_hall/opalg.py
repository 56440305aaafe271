"""Finite-dimensional operator backend.

LocalOperator is a dense matrix on a sorted support; tensor factors follow the
support order with the first site most significant. Window operators are
BlockOp instances: dense blocks between charge sectors of a WindowAlgebra, so
charge-conserving operators never allocate the full d^n x d^n matrix.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import linf_dist


class SupportError(ValueError):
    pass


def _canon(support):
    return tuple(sorted(tuple(int(c) for c in s) for s in support))


class LocalOperator:
    """Matrix on d^|support| dimensions. matrix None is the exact zero operator."""

    __slots__ = ("support", "matrix", "d")

    def __init__(self, support, matrix, d=2):
        support = [tuple(int(c) for c in s) for s in support]
        self.d = d
        if len(set(support)) != len(support):
            raise SupportError("repeated site in support")
        n = len(support)
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=complex)
            if matrix.shape != (d**n, d**n):
                raise ValueError(f"matrix shape {matrix.shape} does not match d^{n}")
            order = sorted(range(n), key=lambda i: support[i])
            if order != list(range(n)):
                t = matrix.reshape((d,) * (2 * n))
                t = t.transpose(order + [n + i for i in order])
                matrix = t.reshape(d**n, d**n)
        self.support = tuple(sorted(support))
        self.matrix = matrix

    @classmethod
    def zero(cls, support=(), d=2):
        return cls(support, None, d)

    @classmethod
    def identity(cls, support=(), d=2):
        return cls(support, np.eye(d ** len(support)), d)

    @property
    def is_zero(self):
        return self.matrix is None

    def dense(self):
        if self.matrix is None:
            return np.zeros((self.d ** len(self.support),) * 2, dtype=complex)
        return self.matrix

    def norm(self):
        if self.matrix is None:
            return 0.0
        return float(np.linalg.norm(self.matrix, 2))

    def adjoint(self):
        return LocalOperator(self.support, None if self.matrix is None else self.matrix.conj().T, self.d)

    def scaled(self, c):
        return LocalOperator(self.support, None if self.matrix is None else c * self.matrix, self.d)

    def __add__(self, other):
        sup = _canon(set(self.support) | set(other.support))
        if self.is_zero and other.is_zero:
            return LocalOperator.zero(sup, self.d)
        return LocalOperator(sup, embed(self, sup).dense() + embed(other, sup).dense(), self.d)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def __matmul__(self, other):
        sup = _canon(set(self.support) | set(other.support))
        if self.is_zero or other.is_zero:
            return LocalOperator.zero(sup, self.d)
        return LocalOperator(sup, embed(self, sup).matrix @ embed(other, sup).matrix, self.d)

    def __repr__(self):
        return f"LocalOperator(support={self.support}, zero={self.is_zero})"


def embed(A: LocalOperator, target_support):
    target = _canon(target_support)
    if not set(A.support) <= set(target):
        raise SupportError(f"support {A.support} not contained in {target}")
    if A.is_zero:
        return LocalOperator.zero(target, A.d)
    if target == A.support:
        return A
    d = A.d
    extra = [s for s in target if s not in A.support]
    full = np.kron(A.matrix, np.eye(d ** len(extra)))
    cur = list(A.support) + extra
    n = len(cur)
    order = [cur.index(s) for s in target]
    t = full.reshape((d,) * (2 * n)).transpose(order + [n + i for i in order])
    return LocalOperator(target, t.reshape(d**n, d**n), d)


def op_commutator(A: LocalOperator, B: LocalOperator):
    sup = _canon(set(A.support) | set(B.support))
    if A.is_zero or B.is_zero or not (set(A.support) & set(B.support)):
        return LocalOperator.zero(sup, A.d)
    a = embed(A, sup).matrix
    b = embed(B, sup).matrix
    return LocalOperator(sup, a @ b - b @ a, A.d)


def conditional_expectation(A: LocalOperator, region):
    """Normalized partial trace over support(A) minus region."""
    region = set(tuple(s) for s in region)
    keep = [s for s in A.support if s in region]
    if A.is_zero:
        return LocalOperator.zero(keep, A.d)
    if len(keep) == len(A.support):
        return A
    d, n = A.d, len(A.support)
    kpos = [i for i, s in enumerate(A.support) if s in region]
    tpos = [i for i, s in enumerate(A.support) if s not in region]
    t = A.matrix.reshape((d,) * (2 * n))
    t = t.transpose(kpos + tpos + [n + i for i in kpos] + [n + i for i in tpos])
    dk, dt = d ** len(kpos), d ** len(tpos)
    t = t.reshape(dk, dt, dk, dt)
    out = np.einsum("ajbj->ab", t) / dt
    return LocalOperator(keep, out, d)


def ball(x, n, sites=None):
    if n < 0:
        return frozenset()
    if sites is None:
        return frozenset((x[0] + i, x[1] + j) for i in range(-n, n + 1) for j in range(-n, n + 1))
    return frozenset(s for s in sites if linf_dist(s, x) <= n)


def local_decompose(A: LocalOperator, x, n_max):
    """(A_{x,0}, ..., A_{x,n_max}) with A_{x,n} = E_{B_n(x)} A - E_{B_{n-1}(x)} A."""
    x = tuple(x)
    far = max((linf_dist(s, x) for s in A.support), default=0)
    if n_max < far:
        raise ValueError(f"n_max={n_max} does not reach support radius {far}")
    out = []
    prev = None
    for n in range(n_max + 1):
        cur = conditional_expectation(A, ball(x, n, A.support))
        term = cur if prev is None else cur - prev
        if not term.is_zero and not np.any(term.matrix):
            term = LocalOperator.zero(term.support, A.d)
        out.append(term)
        prev = cur
    return out


# ---------------------------------------------------------------- window algebra


class WindowAlgebra:
    """Basis of the window Hilbert space sorted by total charge.

    charges[k] is the charge of on-site basis state k (q diagonal with integer
    entries). With conserving=False all states form one block.
    """

    def __init__(self, sites, d=2, charges=None, conserving=True):
        self.sites = _canon(sites)
        self.index = {s: i for i, s in enumerate(self.sites)}
        self.d = d
        self.charges = np.asarray(charges if charges is not None else np.arange(d), dtype=int)
        self.conserving = conserving
        n = len(self.sites)
        self.n = n
        self.dim = d**n
        idx = np.arange(self.dim)
        digits = np.empty((self.dim, n), dtype=np.int64)
        for pos in range(n):
            digits[:, pos] = (idx // d ** (n - 1 - pos)) % d
        self.digits = digits
        self.total_charge = self.charges[digits].sum(axis=1)
        if conserving:
            self.perm = np.argsort(self.total_charge, kind="stable")
            labels = self.total_charge[self.perm]
            self.sector_labels = tuple(int(c) for c in np.unique(labels))
            bounds = np.searchsorted(labels, self.sector_labels + (labels.max() + 1,))
        else:
            self.perm = idx
            self.sector_labels = (0,)
            bounds = np.array([0, self.dim])
        self.slices = {lab: slice(int(bounds[i]), int(bounds[i + 1])) for i, lab in enumerate(self.sector_labels)}
        self.inv_perm = np.empty_like(self.perm)
        self.inv_perm[self.perm] = idx

    @property
    def sizes(self):
        return {a: s.stop - s.start for a, s in self.slices.items()}

    def sector_of(self, k):
        """Sector label of natural-basis index k."""
        return int(self.total_charge[k]) if self.conserving else 0

    def local_sparse(self, A: LocalOperator):
        """Full window matrix of A (natural basis) as CSR."""
        if A.is_zero:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        pos = [self.index[s] for s in A.support]
        d, m = self.d, len(pos)
        place = np.array([d ** (self.n - 1 - p) for p in pos], dtype=np.int64)
        loc_digits = self.digits[:, pos]
        col_loc = (loc_digits * (d ** np.arange(m - 1, -1, -1))).sum(axis=1)
        base = np.arange(self.dim) - loc_digits @ place
        rows, cols, vals = [], [], []
        for r in range(d**m):
            rd = np.array([(r // d ** (m - 1 - i)) % d for i in range(m)], dtype=np.int64)
            v = A.matrix[r, col_loc]
            nz = v != 0
            rows.append((base + rd @ place)[nz])
            cols.append(np.nonzero(nz)[0])
            vals.append(v[nz])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.dim, self.dim)
        )

    def to_block(self, M):
        """BlockOp from a natural-basis matrix (dense or sparse)."""
        Mp = M[self.perm][:, self.perm]
        sparse = sp.issparse(Mp)
        if sparse:
            Mp = Mp.tocsr()
        blocks = {}
        for a, sa in self.slices.items():
            rows = Mp[sa]
            for b, sb in self.slices.items():
                blk = rows[:, sb]
                if sparse:
                    if blk.nnz == 0:
                        continue
                    blk = blk.toarray()
                elif not np.any(blk):
                    continue
                blocks[(a, b)] = np.array(blk, dtype=complex)
        return BlockOp(self, blocks)

    def local(self, A: LocalOperator):
        return self.to_block(self.local_sparse(A))

    def identity(self):
        return BlockOp(self, {(a, a): np.eye(n, dtype=complex) for a, n in self.sizes.items()})

    def zero(self):
        return BlockOp(self, {})

    def charge(self, region=None):
        """Q_region = sum of on-site charges, diagonal."""
        if region is None:
            pos = list(range(self.n))
        else:
            region = set(tuple(s) for s in region)
            pos = [i for i, s in enumerate(self.sites) if s in region]
        diag = self.charges[self.digits[:, pos]].sum(axis=1).astype(float)
        dp = diag[self.perm]
        return BlockOp(self, {(a, a): np.diag(dp[s]).astype(complex) for a, s in self.slices.items()})

    def natural(self, psi):
        """State vector reordered from the sector basis to the natural tensor basis."""
        out = np.empty_like(psi)
        out[self.perm] = psi
        return out

    def reduced_density(self, psi, support):
        """Reduced density matrix of a sector-basis state on a sorted support."""
        support = _canon(support)
        pos = [self.index[s] for s in support]
        rest = [i for i in range(self.n) if i not in pos]
        t = self.natural(psi).reshape((self.d,) * self.n).transpose(pos + rest)
        m = t.reshape(self.d ** len(pos), -1)
        return m @ m.conj().T

    def expect_local(self, psi, A: LocalOperator):
        """<psi|A|psi> for a LocalOperator, without forming the window matrix."""
        if A.is_zero:
            return 0.0j
        return complex(np.trace(self.reduced_density(psi, A.support) @ A.matrix))

    def basis_vector(self, k):
        v = np.zeros(self.dim, dtype=complex)
        v[self.inv_perm[k]] = 1.0
        return v


class BlockOp:
    """Window operator stored as dense blocks between charge sectors."""

    __slots__ = ("alg", "blocks", "_eig")

    def __init__(self, alg: WindowAlgebra, blocks):
        self.alg = alg
        self.blocks = blocks
        self._eig = None

    def _new(self, blocks):
        return BlockOp(self.alg, blocks)

    def __add__(self, other):
        out = {k: v.copy() for k, v in self.blocks.items()}
        for k, v in other.blocks.items():
            out[k] = out[k] + v if k in out else v.copy()
        return self._new(out)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, c):
        return self._new({k: c * v for k, v in self.blocks.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __matmul__(self, other):
        out = {}
        for (a, b), x in self.blocks.items():
            for (b2, c), y in other.blocks.items():
                if b2 != b:
                    continue
                z = x @ y
                out[(a, c)] = out[(a, c)] + z if (a, c) in out else z
        return self._new(out)

    def adjoint(self):
        return self._new({(b, a): v.conj().T for (a, b), v in self.blocks.items()})

    @property
    def H(self):
        return self.adjoint()

    def commutator(self, other):
        return self @ other - other @ self

    @property
    def is_block_diagonal(self):
        return all(a == b for a, b in self.blocks)

    def trace(self):
        return complex(sum(np.trace(v) for (a, b), v in self.blocks.items() if a == b))

    def to_dense(self, natural=False):
        M = np.zeros((self.alg.dim, self.alg.dim), dtype=complex)
        for (a, b), v in self.blocks.items():
            M[self.alg.slices[a], self.alg.slices[b]] = v
        if natural:
            M = M[self.alg.inv_perm][:, self.alg.inv_perm]
        return M

    def apply(self, v):
        out = np.zeros_like(v, dtype=complex)
        for (a, b), m in self.blocks.items():
            out[self.alg.slices[a]] += m @ v[self.alg.slices[b]]
        return out

    def expect(self, v):
        return complex(np.vdot(v, self.apply(v)))

    def fro(self):
        return float(np.sqrt(sum(np.sum(np.abs(v) ** 2) for v in self.blocks.values())))

    def norm(self):
        """Operator norm."""
        if not self.blocks:
            return 0.0
        if self.is_block_diagonal:
            return float(max(np.linalg.norm(v, 2) for v in self.blocks.values()))
        if self.alg.dim <= 1024:
            return float(np.linalg.norm(self.to_dense(), 2))
        op = spla.LinearOperator(
            (self.alg.dim, self.alg.dim), matvec=self.apply, rmatvec=self.adjoint().apply, dtype=complex
        )
        return float(spla.svds(op, k=1, return_singular_vectors=False, tol=1e-10)[0])

    def max_abs(self):
        return float(max((np.max(np.abs(v)) for v in self.blocks.values()), default=0.0))

    def prune(self, tol=0.0):
        return self._new({k: v for k, v in self.blocks.items() if np.max(np.abs(v)) > tol})

    def conjugate_by(self, U):
        """U^* self U."""
        return U.adjoint() @ self @ U

    def hermitian_function(self, fn):
        """fn applied to a Hermitian block-diagonal operator."""
        if not self.is_block_diagonal:
            raise ValueError("hermitian_function needs a block-diagonal operator")
        # the eigendecomposition is kept, so repeated functions of one operator
        # (e.g. exp(i phi Qbar) over many phi) diagonalize once
        if self._eig is None:
            eig = {}
            for (a, _), v in self.blocks.items():
                d = np.diag(v)
                if np.count_nonzero(v) == np.count_nonzero(d):
                    eig[a] = (d.real.copy(), None)
                else:
                    eig[a] = np.linalg.eigh(0.5 * (v + v.conj().T))
            self._eig = eig
        out = {}
        for a, (e, U) in self._eig.items():
            out[(a, a)] = np.diag(fn(e)).astype(complex) if U is None else (U * fn(e)) @ U.conj().T
        # sectors without a stored block are the zero matrix
        for a, n in self.alg.sizes.items():
            if (a, a) not in out:
                out[(a, a)] = np.eye(n, dtype=complex) * fn(np.zeros(1))[0]
        return self._new(out)

    def expi(self, phi):
        """exp(i phi self) for Hermitian block-diagonal self."""
        return self.hermitian_function(lambda e: np.exp(1j * phi * e))

    def phase_twist(self, Q, phi):
        """e^{i phi Q} self e^{-i phi Q} for diagonal Q (a BlockOp)."""
        ph = {a: np.exp(1j * phi * np.diag(m).real) for (a, _), m in Q.blocks.items()}
        out = {}
        for (a, b), m in self.blocks.items():
            pa = ph.get(a, np.ones(m.shape[0]))
            pb = ph.get(b, np.ones(m.shape[1]))
            out[(a, b)] = (pa[:, None] * m) * pb.conj()[None, :]
        return self._new(out)

    def restrict_to(self, support):
        """Normalized partial trace onto support, returned as a LocalOperator."""
        alg = self.alg
        support = _canon(support)
        pos = [alg.index[s] for s in support]
        rest = [i for i in range(alg.n) if i not in pos]
        d = alg.d
        dk = d ** len(pos)
        kd = alg.digits[:, pos] @ (d ** np.arange(len(pos) - 1, -1, -1)) if pos else np.zeros(alg.dim, dtype=np.int64)
        rd = (
            alg.digits[:, rest] @ (d ** np.arange(len(rest) - 1, -1, -1)).astype(np.int64)
            if rest
            else np.zeros(alg.dim, dtype=np.int64)
        )
        kp, rp = kd[alg.perm], rd[alg.perm]
        out = np.zeros((dk, dk), dtype=complex)
        for (a, b), m in self.blocks.items():
            ra, rb = rp[alg.slices[a]], rp[alg.slices[b]]
            ka, kb = kp[alg.slices[a]], kp[alg.slices[b]]
            order_b = np.argsort(rb, kind="stable")
            rb_sorted = rb[order_b]
            lo = np.searchsorted(rb_sorted, ra, "left")
            hi = np.searchsorted(rb_sorted, ra, "right")
            cnt = hi - lo
            if not cnt.any():
                continue
            i_idx = np.repeat(np.arange(ra.size), cnt)
            starts = np.repeat(lo, cnt)
            offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            j_idx = order_b[starts + offs]
            np.add.at(out, (ka[i_idx], kb[j_idx]), m[i_idx, j_idx])
        out /= d ** len(rest)
        return LocalOperator(support, out, d)


def random_local(support, rng, d=2, hermitian=False):
    n = d ** len(support)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if hermitian:
        m = 0.5 * (m + m.conj().T)
    m /= np.linalg.norm(m, 2)
    return LocalOperator(support, m, d)
