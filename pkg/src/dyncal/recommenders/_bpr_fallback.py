"""Pure NumPy BPR SGD epoch, used when the compiled kernel is unavailable."""
import math

import numpy as np


def sgd_epoch(U, V, b, users, pos, neg, lr, reg):
    """One pass of pairwise SGD over ``(user, pos, neg)`` triples, in place.

    Returns the summed ``-log sigmoid(x_ui - x_uj)`` measured before each update.
    """
    loss = 0.0
    # overflow is reported by the caller's finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        for u, i, j in zip(users.tolist(), pos.tolist(), neg.tolist()):
            uu = U[u].copy()
            vi = V[i].copy()
            vj = V[j].copy()
            x = float(np.dot(uu, vi - vj)) + (b[i] - b[j])
            if x >= 0:
                e = math.exp(-x)
                loss += math.log1p(e)
                g = e / (1.0 + e)
            else:
                e = math.exp(x)
                loss += math.log1p(e) - x
                g = 1.0 / (1.0 + e)
            U[u] = uu + lr * (g * (vi - vj) - reg * uu)
            V[i] = vi + lr * (g * uu - reg * vi)
            V[j] = vj + lr * (-g * uu - reg * vj)
            b[i] = b[i] + lr * (g - reg * b[i])
            b[j] = b[j] + lr * (-g - reg * b[j])
    return float(loss)
