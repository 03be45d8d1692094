"""Argument checks shared by the estimators and the command line."""

from __future__ import annotations

import math

import numpy as np

from .models import ConfigError


def check_alpha(alpha, field="alpha"):
    try:
        a = float(alpha)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a real number, got {alpha!r}") from None
    if not math.isfinite(a) or a <= 1.0:
        raise ConfigError(field, f"must be a finite real > 1, got {alpha!r}")
    return a


def check_positive(value, field, integer=False, minimum=None):
    try:
        x = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a {'integer' if integer else 'number'}, got {value!r}") from None
    if integer and float(value) != x:
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if not math.isfinite(x) or x <= 0:
        raise ConfigError(field, f"must be positive, got {value!r}")
    if minimum is not None and x < minimum:
        raise ConfigError(field, f"must be at least {minimum}, got {value!r}")
    return x


def check_frames(X, tol=1e-10):
    """Validate orthonormal frames.

    Accepts a single frame ``(2, 4)`` or a batch ``(n, 2, 4)`` / ``(n, 8)``;
    a batch comes back as ``(n, 2, 4)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 8:
        X = X.reshape(-1, 2, 4)
    if X.shape[-2:] != (2, 4) or X.ndim not in (2, 3):
        raise ValueError(f"frames must have shape (2, 4), (n, 2, 4) or (n, 8); got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("frames contain non-finite entries")
    gram = np.einsum("...ai,...bi->...ab", X, X)
    err = np.max(np.abs(gram - np.eye(2))) if X.size else 0.0
    if err > tol:
        raise ValueError(f"frame is not orthonormal (Gram error {err:.3e})")
    return X
