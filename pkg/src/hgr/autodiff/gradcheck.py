"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import backward, no_grad, precision


class GradCheckError(ArithmeticError):
    pass


def _scalar(loss, where):
    v = np.asarray(loss.data).reshape(-1)[0]
    if not np.isfinite(v):
        raise GradCheckError(f"non-finite loss {float(v)} {where}")
    return v


def grad_check_details(function, params, step=1e-5, max_entries=None, seed=0):
    """Per-parameter worst relative error between backprop and central differences.

    Backprop runs in float64 on a copy of ``params``. The finite differences
    are evaluated at the same point in long double, which keeps their
    roundoff well under the 1e-8 floor of the relative error
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)``.
    ``max_entries`` limits how many entries of each parameter are probed (a
    seeded sample); ``None`` probes all of them.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    rng = np.random.default_rng(seed)
    with precision("extended"):
        p = params.astype(np.float64)
        loss = function(p)
        _scalar(loss, "at the unperturbed point")
        backward(loss)
        analytic = p.grads()
    worst = {}
    with precision("oracle"), no_grad():
        q = p.astype(np.longdouble)
        h = np.longdouble(step)
        for name, t in q.items():
            t.data = np.ascontiguousarray(t.data)
            flat = t.data.reshape(-1)  # a view, so writes reach the parameter
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            a_flat = analytic[name].reshape(-1)
            err = 0.0
            for k in idx:
                orig = flat[k]
                flat[k] = orig + h
                fp = _scalar(function(q), f"after perturbing {name}[{k}] by +{step}")
                flat[k] = orig - h
                fm = _scalar(function(q), f"after perturbing {name}[{k}] by -{step}")
                flat[k] = orig
                fd = float((fp - fm) / (2 * h))
                a = float(a_flat[k])
                if not np.isfinite(a):
                    raise GradCheckError(f"non-finite analytic gradient at {name}[{k}]")
                err = max(err, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
            worst[name] = err
    return worst


def grad_check(function, params, step=1e-5, max_entries=None, seed=0):
    """Max relative error over all probed parameter entries (see grad_check_details)."""
    worst = grad_check_details(function, params, step, max_entries, seed)
    return max(worst.values()) if worst else 0.0
