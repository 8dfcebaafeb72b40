# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: fused MLP forward/loss/backward, Adam, sum-tree.

Signatures and semantics mirror ``fsq._kernels_py``. Matrix products go
straight to BLAS through scipy's Cython bindings; all arrays are row-major
float64.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void gemm_rm(char ta, char tb, int M, int N, int K, double alpha,
                         const double* A, int lda, const double* B, int ldb,
                         double beta, double* C, int ldc) noexcept nogil:
    # row-major C(M,N) = alpha * op(A) @ op(B) + beta * C, via column-major C^T = op(B)^T op(A)^T
    dgemm(&tb, &ta, &N, &M, &K, &alpha, <double*>B, &ldb, <double*>A, &lda, &beta, C, &ldc)


cdef void _forward(const double[:, ::1] x, const double[:, ::1] W1, const double[::1] b1,
                   const double[:, ::1] W2, const double[::1] b2,
                   double[:, ::1] hidden, double[:, ::1] out) noexcept nogil:
    cdef int B = x.shape[0], I = x.shape[1], H = W1.shape[1], O = W2.shape[1]
    cdef Py_ssize_t b, j, k
    for b in range(B):
        for j in range(H):
            hidden[b, j] = b1[j]
        for k in range(O):
            out[b, k] = b2[k]
    gemm_rm(b'N', b'N', B, H, I, 1.0, &x[0, 0], I, &W1[0, 0], H, 1.0, &hidden[0, 0], H)
    for b in range(B):
        for j in range(H):
            if hidden[b, j] < 0.0:
                hidden[b, j] = 0.0
    gemm_rm(b'N', b'N', B, O, H, 1.0, &hidden[0, 0], H, &W2[0, 0], O, 1.0, &out[0, 0], O)


def forward(const double[:, ::1] x, const double[:, ::1] W1, const double[::1] b1,
            const double[:, ::1] W2, const double[::1] b2):
    hidden = np.empty((x.shape[0], W1.shape[1]), dtype=np.float64)
    out = np.empty((x.shape[0], W2.shape[1]), dtype=np.float64)
    _forward(x, W1, b1, W2, b2, hidden, out)
    return hidden, out


cdef void _backward(const double[:, ::1] x, const double[:, ::1] hidden, const double[:, ::1] W2,
                    const double[:, ::1] dout, double[:, ::1] dh,
                    double[:, ::1] gW1, double[::1] gb1, double[:, ::1] gW2, double[::1] gb2) noexcept nogil:
    cdef int B = x.shape[0], I = x.shape[1], H = W2.shape[0], O = W2.shape[1]
    cdef Py_ssize_t b, j, k
    for k in range(O):
        gb2[k] = 0.0
    for j in range(H):
        gb1[j] = 0.0
    for b in range(B):
        for k in range(O):
            gb2[k] += dout[b, k]
    # gW2 = hidden^T @ dout ; dh = dout @ W2^T
    gemm_rm(b'T', b'N', H, O, B, 1.0, &hidden[0, 0], H, &dout[0, 0], O, 0.0, &gW2[0, 0], O)
    gemm_rm(b'N', b'T', B, H, O, 1.0, &dout[0, 0], O, &W2[0, 0], O, 0.0, &dh[0, 0], H)
    for b in range(B):
        for j in range(H):
            if hidden[b, j] <= 0.0:
                dh[b, j] = 0.0
            gb1[j] += dh[b, j]
    gemm_rm(b'T', b'N', I, H, B, 1.0, &x[0, 0], I, &dh[0, 0], H, 0.0, &gW1[0, 0], H)


def backward(const double[:, ::1] x, const double[:, ::1] hidden,
             const double[:, ::1] W2, const double[:, ::1] dout):
    cdef int B = x.shape[0], I = x.shape[1], H = W2.shape[0], O = W2.shape[1]
    gW1 = np.empty((I, H)); gb1 = np.empty(H); gW2 = np.empty((H, O)); gb2 = np.empty(O)
    dh = np.empty((B, H))
    _backward(x, hidden, W2, dout, dh, gW1, gb1, gW2, gb2)
    return gW1, gb1, gW2, gb2


def loss_grad(const double[:, ::1] x, const double[:, ::1] W1, const double[::1] b1,
              const double[:, ::1] W2, const double[::1] b2,
              const double[:, ::1] target, const cnp.npy_bool[:, ::1] mask, const double[::1] weights,
              double[:, ::1] gW1, double[::1] gb1, double[:, ::1] gW2, double[::1] gb2):
    """Masked squared loss averaged over the batch; gradients written in place.

    Returns ``(loss, pred)``.
    """
    cdef int B = x.shape[0], H = W1.shape[1], O = W2.shape[1]
    cdef Py_ssize_t b, k
    cdef double loss = 0.0, r, w, sample
    hidden_arr = np.empty((B, H)); pred_arr = np.empty((B, O))
    dout_arr = np.empty((B, O)); dh_arr = np.empty((B, H))
    cdef double[:, ::1] hidden = hidden_arr
    cdef double[:, ::1] pred = pred_arr
    cdef double[:, ::1] dout = dout_arr
    cdef double[:, ::1] dh = dh_arr
    with nogil:
        _forward(x, W1, b1, W2, b2, hidden, pred)
        for b in range(B):
            w = weights[b]
            sample = 0.0
            for k in range(O):
                if mask[b, k]:
                    r = pred[b, k] - target[b, k]
                    sample = sample + r * r
                    dout[b, k] = 2.0 * w * r / B
                else:
                    dout[b, k] = 0.0
            loss += w * sample
        _backward(x, hidden, W2, dout, dh, gW1, gb1, gW2, gb2)
    return loss / B, pred_arr


def adam_update(double[::1] param, const double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long step):
    cdef Py_ssize_t n = param.shape[0], i
    cdef double bc1 = 1.0 - beta1 ** step
    cdef double bc2 = 1.0 - beta2 ** step
    cdef double g, mhat, vhat
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            mhat = m[i] / bc1
            vhat = v[i] / bc2
            param[i] -= lr * mhat / (sqrt(vhat) + eps)


def sumtree_update(double[::1] tree, Py_ssize_t leaf, double value):
    cdef Py_ssize_t cap = tree.shape[0] // 2
    cdef Py_ssize_t node = cap + leaf
    tree[node] = value
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


def sumtree_find(const double[::1] tree, const double[::1] u, Py_ssize_t size):
    cdef Py_ssize_t cap = tree.shape[0] // 2
    cdef Py_ssize_t n = u.shape[0], s, node, leaf
    cdef double mass
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    with nogil:
        for s in range(n):
            mass = u[s]
            node = 1
            while node < cap:
                if mass < tree[2 * node] or tree[2 * node + 1] <= 0.0:
                    node = 2 * node
                else:
                    mass -= tree[2 * node]
                    node = 2 * node + 1
            leaf = node - cap
            # float round-off can land on an empty slot past the filled prefix
            while leaf > 0 and (leaf >= size or tree[cap + leaf] <= 0.0):
                leaf -= 1
            out[s] = leaf
    return out_arr
