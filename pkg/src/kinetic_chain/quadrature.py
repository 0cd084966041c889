"""Composite Gauss-Legendre rules on the unit torus [-1/2, 1/2)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["TorusGrid", "torus_grid", "graded_grid", "interval_rule"]


@dataclass(frozen=True)
class TorusGrid:
    """Quadrature nodes and weights covering the torus once.

    The nodes are sorted and the rule is symmetric under k -> -k, so odd
    integrands integrate to zero up to rounding.
    """

    nodes: np.ndarray
    weights: np.ndarray
    description: str

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return values @ self.weights if values.ndim > 1 else np.dot(self.weights, values)

    def spec(self) -> dict:
        return {"size": int(self.size), "description": self.description}


@lru_cache(maxsize=32)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def interval_rule(a: float, b: float, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on a single interval [a, b]."""
    x, w = _legendre(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return (a + half * (x + 1.0)).ravel(), (half * w).ravel()


def torus_grid(n_panels: int = 2048, order: int = 4) -> TorusGrid:
    """Uniform composite rule with ``n_panels`` panels of ``order`` nodes."""
    if n_panels < 2 or n_panels % 2:
        raise ValueError("n_panels must be an even integer >= 2")
    edges = np.linspace(-0.5, 0.5, n_panels + 1)
    nodes, weights = _panels(edges, order)
    return TorusGrid(nodes, weights, f"uniform:{n_panels}x{order}")


def graded_grid(n_panels: int = 512, order: int = 8, smallest: float = 1e-7) -> TorusGrid:
    """Composite rule with panels graded geometrically toward k = 0.

    Half of the panels on each side of the origin are geometric on
    [smallest, 1/8], the rest uniform on [1/8, 1/2]; a single panel covers
    [0, smallest].  Used where integrands carry |k|^(-2a) weights or where
    the dynamics dwell near k = 0 for long times.
    """
    if n_panels < 8 or n_panels % 2:
        raise ValueError("n_panels must be an even integer >= 8")
    side = n_panels // 2
    n_geo = side // 2
    n_uni = side - n_geo - 1
    geo = np.geomspace(smallest, 0.125, n_geo + 1)
    uni = np.linspace(0.125, 0.5, n_uni + 1)[1:]
    half = np.concatenate(([0.0], geo, uni))
    edges = np.concatenate((-half[::-1], half[1:]))
    nodes, weights = _panels(edges, order)
    return TorusGrid(nodes, weights, f"graded:{n_panels}x{order}:min={smallest:g}")
