"""Shared test utilities: central finite-difference gradient checking."""

import numpy as np

from htgnn import tensor as tt


def numeric_grad(scalar_fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``scalar_fn()`` w.r.t. array ``x``,
    perturbing ``x`` in place element by element."""
    grad = np.zeros_like(x)
    flat, gflat = x.ravel(), grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = scalar_fn()
        flat[i] = orig - eps
        lo = scalar_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def check_gradients(build_loss, tensors, eps: float = 1e-5,
                    rtol: float = 1e-4) -> float:
    """Assert analytic gradients match finite differences.

    ``build_loss`` recomputes the scalar loss from the current tensor data;
    ``tensors`` are the leaves to check.  Returns the worst relative error.
    Relative error uses max(|analytic|, |numeric|, 1e-4) as denominator so
    near-zero gradients are compared absolutely at 1e-8.
    """
    loss = build_loss()
    for t in tensors:
        t.grad = None
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]

    def value():
        with tt.no_grad():
            return build_loss().data.item()

    worst = 0.0
    for t, g in zip(tensors, analytic):
        fd = numeric_grad(value, t.data, eps)
        denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-4)
        rel = np.abs(g - fd) / denom
        worst = max(worst, float(rel.max()))
        assert rel.max() < rtol, (
            f"gradient mismatch: worst relative error {rel.max():.3e} "
            f"(analytic {g.ravel()[rel.argmax()]!r}, "
            f"numeric {fd.ravel()[rel.argmax()]!r})"
        )
    return worst
