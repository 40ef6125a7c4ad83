"""Analytic test functions and vector fields on the unit square, addressable by name.

Module-level functions so they pickle into worker processes.
"""
from __future__ import annotations

import numpy as np

PI = np.pi


def sinsin(x):
    return np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])


def grad_sinsin(x):
    sx, sy = np.sin(PI * x[:, 0]), np.sin(PI * x[:, 1])
    cx, cy = np.cos(PI * x[:, 0]), np.cos(PI * x[:, 1])
    return np.column_stack([PI * cx * sy, PI * sx * cy])


def bubble(x):
    return x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])


def grad_bubble(x):
    X, Y = x[:, 0], x[:, 1]
    return np.column_stack([(1 - 2 * X) * Y * (1 - Y), X * (1 - X) * (1 - 2 * Y)])


def curl_sinsin(x):
    """(d_y psi, -d_x psi) for psi = sin(pi x) sin(pi y): divergence free."""
    g = grad_sinsin(x)
    return np.column_stack([g[:, 1], -g[:, 0]])


def constant_field(x):
    return np.column_stack([np.full(len(x), 0.7), np.full(len(x), -0.3)])


def zero_field(x):
    return np.zeros((len(x), 2))


class TrigField:
    """q = sum_{j,k <= order} a_jk (cos(j pi x) sin(k pi y), sin(j pi x) cos(k pi y)) + shift, seeded."""

    def __init__(self, seed: int, order: int = 3):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.a = rng.normal(size=(order, order))
        self.b = rng.normal(size=(order, order))
        self.c = rng.normal(size=2) * 0.5

    def __call__(self, x):
        out = np.tile(self.c, (len(x), 1))
        for j in range(self.a.shape[0]):
            for k in range(self.a.shape[1]):
                cxj, sxj = np.cos((j + 1) * PI * x[:, 0]), np.sin((j + 1) * PI * x[:, 0])
                cyk, syk = np.cos((k + 1) * PI * x[:, 1]), np.sin((k + 1) * PI * x[:, 1])
                out[:, 0] += self.a[j, k] * cxj * syk + self.b[j, k] * sxj * cyk
                out[:, 1] += self.b[j, k] * sxj * cyk * 0.5 - self.a[j, k] * cxj * cyk
        return out

    def __repr__(self):
        return f"TrigField(seed={self.seed})"


class GaussianBubbles:
    """Zero-boundary function: x(1-x)y(1-y) times a seeded sum of Gaussian bumps."""

    def __init__(self, seed: int, count: int = 4):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.centers = rng.uniform(0.15, 0.85, size=(count, 2))
        self.widths = rng.uniform(0.08, 0.25, size=count)
        self.amps = rng.normal(size=count)

    def __call__(self, x):
        out = np.zeros(len(x))
        for c, s, a in zip(self.centers, self.widths, self.amps):
            out += a * np.exp(-((x - c) ** 2).sum(axis=1) / (2 * s * s))
        return out * bubble(x) * 16

    def __repr__(self):
        return f"GaussianBubbles(seed={self.seed})"


def sin_mode(j: int, k: int):
    def f(x):
        return np.sin(j * PI * x[:, 0]) * np.sin(k * PI * x[:, 1])

    f.__name__ = f"sin_mode_{j}_{k}"
    return f


FUNCTIONS = {"sinsin": (sinsin, grad_sinsin), "bubble": (bubble, grad_bubble)}
FIELDS = {"grad_sinsin": grad_sinsin, "grad_bubble": grad_bubble, "curl_sinsin": curl_sinsin,
          "constant": constant_field, "zero": zero_field}
