"""Quaternion algebra on numpy arrays.

A quaternion h0 + h1*i + h2*j + h3*k is stored as an array of shape
(..., 4) in the basis (1, i, j, k).  All operations broadcast, so a
lattice field of quaternions is just an array with trailing axis 4.
"""

import numpy as np

ONE = np.array([1.0, 0.0, 0.0, 0.0])
QI = np.array([0.0, 1.0, 0.0, 0.0])
QJ = np.array([0.0, 0.0, 1.0, 0.0])
QK = np.array([0.0, 0.0, 0.0, 1.0])

#: basis (1, i, j, k) used by the Clifford/Dirac contractions
BASIS = np.eye(4)
#: imaginary basis (i, j, k) of sp(1)
IM_BASIS = BASIS[1:]


def quat(h0=0.0, h1=0.0, h2=0.0, h3=0.0):
    return np.array([h0, h1, h2, h3], dtype=float)


def from_imag(v3):
    """Embed an imaginary 3-vector (i, j, k components) as a quaternion."""
    v3 = np.asarray(v3, dtype=float)
    out = np.zeros(v3.shape[:-1] + (4,))
    out[..., 1:] = v3
    return out


def mul(p, q):
    """Quaternion product p*q, broadcasting over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p0, p1, p2, p3 = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    q0, q1, q2, q3 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            p0 * q0 - p1 * q1 - p2 * q2 - p3 * q3,
            p0 * q1 + p1 * q0 + p2 * q3 - p3 * q2,
            p0 * q2 - p1 * q3 + p2 * q0 + p3 * q1,
            p0 * q3 + p1 * q2 - p2 * q1 + p3 * q0,
        ],
        axis=-1,
    )


def conj(q):
    out = np.array(q, dtype=float, copy=True)
    out[..., 1:] *= -1.0
    return out


def norm2(q):
    q = np.asarray(q, dtype=float)
    return np.sum(q * q, axis=-1)


def norm(q):
    return np.sqrt(norm2(q))


def inv(q):
    n2 = norm2(q)
    return conj(q) / n2[..., None]


def inner(p, q):
    """Euclidean inner product on H = R^4 (the flat hyperKaehler metric)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.sum(p * q, axis=-1)


def exp_i(theta):
    """Unit complex number e^{i theta} inside H, broadcast over theta."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (4,))
    out[..., 0] = np.cos(theta)
    out[..., 1] = np.sin(theta)
    return out


def right_mul_i(q, scale=1.0):
    """q * (scale * i), the infinitesimal right U(1) rotation of q."""
    return mul(q, np.asarray(scale)[..., None] * QI)


def left_matrix(p):
    """4x4 matrix of v -> p * v, broadcast to shape (..., 4, 4)."""
    p = np.asarray(p, dtype=float)
    cols = [mul(p, BASIS[a]) for a in range(4)]
    return np.stack(cols, axis=-1)


def right_matrix(q):
    """4x4 matrix of v -> v * q, broadcast to shape (..., 4, 4)."""
    q = np.asarray(q, dtype=float)
    cols = [mul(BASIS[a], q) for a in range(4)]
    return np.stack(cols, axis=-1)
