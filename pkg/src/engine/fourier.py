"""Fourier basis functions of one angle, named ``sin<k>`` / ``cos<k>``."""

import re
from functools import lru_cache

import numpy as np

TERM_PATTERN = re.compile(r"^(sin|cos)([1-9][0-9]*)$")


@lru_cache(maxsize=32)
def parse_basis(basis: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Split term names into (is_sine mask, harmonic numbers)."""
    kinds, harmonics = [], []
    for term in basis:
        match = TERM_PATTERN.match(term)
        if match is None:
            raise ValueError(f"unknown basis term '{term}', expected e.g. 'sin1' or 'cos2'")
        kinds.append(match.group(1) == "sin")
        harmonics.append(int(match.group(2)))
    return np.array(kinds), np.array(harmonics, dtype=float)


def evaluate(theta, basis: tuple[str, ...]) -> np.ndarray:
    """Basis values, shape (M, *theta.shape)."""
    is_sine, harmonics = parse_basis(tuple(basis))
    angles = np.multiply.outer(harmonics, np.asarray(theta, dtype=float))
    mask = is_sine.reshape((-1,) + (1,) * (angles.ndim - 1))
    return np.where(mask, np.sin(angles), np.cos(angles))


def derivative(theta, basis: tuple[str, ...]) -> np.ndarray:
    """Derivatives of the basis functions with respect to the angle."""
    is_sine, harmonics = parse_basis(tuple(basis))
    angles = np.multiply.outer(harmonics, np.asarray(theta, dtype=float))
    shape = (-1,) + (1,) * (angles.ndim - 1)
    mask = is_sine.reshape(shape)
    k = harmonics.reshape(shape)
    return np.where(mask, k * np.cos(angles), -k * np.sin(angles))
