"""Coalition games and Shapley-value computation.

Players are identified by integers 1..n.  Coalitions are sets of player ids,
permutations are tuples containing each id exactly once.  Per-player value
arrays are position-indexed: entry ``i - 1`` belongs to player ``i``.

Utility oracles are cached by coalition bitmask (bit ``i - 1`` set iff player
``i`` is in the coalition); cache hits do not count as evaluations, so
``eval_count`` measures exactly the evaluation cost that sampling schemes and
truncation are meant to reduce.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

EXACT_PLAYER_LIMIT = 20
FACTORIAL_PLAYER_LIMIT = 8


class CapacityError(ValueError):
    """Raised when a computation would exceed its enumeration guard."""


def mask_of(coalition: Iterable[int]) -> int:
    """Bitmask for a coalition of 1-based player ids."""
    mask = 0
    for pid in coalition:
        mask |= 1 << (pid - 1)
    return mask


def players_of(mask: int) -> tuple[int, ...]:
    """1-based player ids present in ``mask``, ascending."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


class CoalitionGame:
    """A cooperative game: player count plus a cached utility oracle.

    Parameters
    ----------
    n : int
        Number of players, ids 1..n.
    utility : callable
        Maps a tuple of ascending player ids (possibly empty) to a float.
        Must be deterministic; values are cached by coalition bitmask.
    """

    def __init__(self, n: int, utility: Callable[[tuple[int, ...]], float]):
        if n < 1:
            raise ValueError(f"need at least one player, got n={n}")
        self.n = n
        self._utility = utility
        self._cache: dict[int, float] = {}
        self._eval_count = 0

    @property
    def eval_count(self) -> int:
        """Number of oracle invocations so far (cache hits excluded)."""
        return self._eval_count

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def value_mask(self, mask: int) -> float:
        if not 0 <= mask <= self.full_mask:
            raise ValueError(f"mask {mask:#x} out of range for n={self.n}")
        hit = self._cache.get(mask)
        if hit is not None:
            return hit
        val = float(self._utility(players_of(mask)))
        self._eval_count += 1
        self._cache[mask] = val
        return val

    def value(self, coalition: Iterable[int]) -> float:
        return self.value_mask(mask_of(coalition))

    @classmethod
    def from_table(cls, n: int, table: dict[frozenset[int] | tuple[int, ...], float],
                   default_empty: float = 0.0) -> "CoalitionGame":
        """Game backed by an explicit coalition -> value table.

        Missing empty coalition defaults to ``default_empty`` (the usual
        V(∅) = 0 convention).
        """
        by_mask = {mask_of(k): float(v) for k, v in table.items()}
        by_mask.setdefault(0, float(default_empty))

        def lookup(ids: tuple[int, ...]) -> float:
            try:
                return by_mask[mask_of(ids)]
            except KeyError:
                raise KeyError(f"no utility recorded for coalition {ids}") from None

        return cls(n, lookup)


@dataclass
class ContributionVector:
    """Per-player contribution estimates.

    ``values[i - 1]`` is the share of player ``i``.  ``sample_count`` is the
    number of permutations averaged (0 for exact computations), ``converged``
    is None for exact results and a flag for iterative ones.
    """

    values: np.ndarray
    round: int | None = None
    sample_count: int = 0
    converged: bool | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("contribution values must be one-dimensional")

    def __len__(self) -> int:
        return self.values.shape[0]

    def total(self) -> float:
        return float(math.fsum(self.values.tolist()))


def permutation_marginals(game: CoalitionGame, order: Sequence[int]) -> np.ndarray:
    """Marginal contribution of each player along one join order.

    Returns a position-indexed array: entry ``pid - 1`` holds
    V(predecessors ∪ {pid}) − V(predecessors) for ``pid = order[j]``.
    """
    if sorted(order) != list(range(1, game.n + 1)):
        raise ValueError(f"not a permutation of 1..{game.n}: {order!r}")
    marginals = np.zeros(game.n, dtype=np.float64)
    mask = 0
    prev = game.value_mask(0)
    for pid in order:
        mask |= 1 << (pid - 1)
        cur = game.value_mask(mask)
        marginals[pid - 1] = cur - prev
        prev = cur
    return marginals


def exact_shapley(game: CoalitionGame) -> ContributionVector:
    """Exact Shapley values by subset enumeration.

    For each player the weighted marginals are summed with ``math.fsum``,
    so players that are interchangeable in the utility receive bit-identical
    shares regardless of enumeration order, and a player whose marginals are
    all exactly zero receives exactly 0.0.
    """
    n = game.n
    if n > EXACT_PLAYER_LIMIT:
        raise CapacityError(
            f"subset enumeration needs 2^{n} utility values; limit is n <= {EXACT_PLAYER_LIMIT}")
    full = game.full_mask
    values = [game.value_mask(mask) for mask in range(full + 1)]
    # 1 / C(n-1, s) for s = |S| of the coalition being joined
    inv_choose = [1.0 / math.comb(n - 1, s) for s in range(n)]
    shares = np.zeros(n, dtype=np.float64)
    for pid in range(1, n + 1):
        bit = 1 << (pid - 1)
        terms = [
            (values[mask | bit] - values[mask]) * inv_choose[mask.bit_count()]
            for mask in range(full + 1)
            if not mask & bit
        ]
        shares[pid - 1] = math.fsum(terms) / n
    return ContributionVector(values=shares)


def exact_shapley_by_permutations(game: CoalitionGame) -> ContributionVector:
    """Exact Shapley values as the plain average over all n! join orders.

    Independent of :func:`exact_shapley` (different enumeration), so the two
    serve as cross-checking oracles.  Guarded at n <= 8.
    """
    n = game.n
    if n > FACTORIAL_PLAYER_LIMIT:
        raise CapacityError(
            f"{n}! permutations is past the enumeration guard n <= {FACTORIAL_PLAYER_LIMIT}")
    per_player: list[list[float]] = [[] for _ in range(n)]
    for order in itertools.permutations(range(1, n + 1)):
        marginals = permutation_marginals(game, order)
        for pid in range(1, n + 1):
            per_player[pid - 1].append(marginals[pid - 1])
    count = math.factorial(n)
    shares = np.array([math.fsum(terms) / count for terms in per_player])
    return ContributionVector(values=shares)


# --- convergence bookkeeping -------------------------------------------------

RELATIVE_CHANGE_FLOOR = 1e-12


def convergence_criterion(current: np.ndarray, history: Sequence[np.ndarray],
                          floor: float = RELATIVE_CHANGE_FLOOR) -> float:
    """Mean relative change of ``current`` against each history vector.

    (1 / (n * len(history))) * sum over history and players of
    |current_i - past_i| / max(|current_i|, floor).  The floor keeps
    near-zero shares from dividing by zero and from converging for free.
    """
    cur = np.asarray(current, dtype=np.float64)
    denom = np.maximum(np.abs(cur), floor)
    total = 0.0
    for past in history:
        total += float(np.sum(np.abs(cur - np.asarray(past)) / denom))
    return total / (cur.shape[0] * len(history))


@dataclass
class ConvergenceWindow:
    """Ring buffer of recent estimates plus the stopping rule parameters.

    Convergence requires ``lookback`` prior estimates, so it can never be
    declared before iteration ``lookback + 1``; ``min_samples`` can push
    that later but not earlier.
    """

    lookback: int = 10
    threshold: float = 0.05
    min_samples: int = 11
    _history: deque = field(default_factory=deque, repr=False)

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.lookback < 1:
            raise ValueError("lookback must be at least 1")
        self._history = deque(self._history, maxlen=self.lookback)

    @property
    def history(self) -> tuple[np.ndarray, ...]:
        return tuple(self._history)

    def push(self, estimate: np.ndarray) -> None:
        self._history.append(np.array(estimate, dtype=np.float64, copy=True))

    def clear(self) -> None:
        self._history.clear()

    def spawn(self) -> "ConvergenceWindow":
        """Fresh empty window with the same parameters."""
        return ConvergenceWindow(lookback=self.lookback, threshold=self.threshold,
                                 min_samples=self.min_samples)


def check_convergence(window: ConvergenceWindow, current: np.ndarray) -> bool:
    """True iff the window is full and the mean relative change is below threshold."""
    if len(window.history) < window.lookback:
        return False
    return convergence_criterion(current, window.history) < window.threshold


# --- permutation samplers ----------------------------------------------------


class UniformPermutationSampler:
    """Seeded i.i.d. uniform permutations of 1..n."""

    def __init__(self, n: int, seed: int):
        self.n = n
        self._rng = np.random.default_rng(seed)

    def __call__(self, k: int) -> tuple[int, ...]:
        return tuple(int(p) + 1 for p in self._rng.permutation(self.n))


class CyclingPermutationSampler:
    """All n! permutations in lexicographic order, repeating.

    Feeding every permutation exactly once makes Monte-Carlo averaging exact,
    which is how truncation-free estimator paths are checked against the
    subset-enumeration computation.
    """

    def __init__(self, n: int):
        if n > FACTORIAL_PLAYER_LIMIT:
            raise CapacityError(
                f"cannot enumerate {n}! permutations; limit is n <= {FACTORIAL_PLAYER_LIMIT}")
        self.n = n
        self.period = math.factorial(n)
        self._orders = list(itertools.permutations(range(1, n + 1)))

    def __call__(self, k: int) -> tuple[int, ...]:
        # k is the 1-based iteration index
        return self._orders[(k - 1) % self.period]


def mc_shapley(game: CoalitionGame,
               sampler: Callable[[int], Sequence[int]],
               window: ConvergenceWindow | None = None,
               max_iters: int = 500) -> ContributionVector:
    """Monte-Carlo Shapley estimate over sampled join orders.

    Running mean over permutation marginals:
    phi <- ((k-1)/k) * phi + (1/k) * marginals.  Stops once the window's
    relative-change criterion triggers (never before ``min_samples``
    iterations) or at ``max_iters``; non-convergence is reported through
    the returned vector's ``converged`` flag, never as an error.
    """
    if window is None:
        window = ConvergenceWindow()
    if max_iters < window.min_samples:
        raise ValueError(
            f"max_iters={max_iters} is below min_samples={window.min_samples}")
    phi = np.zeros(game.n, dtype=np.float64)
    converged = False
    k = 0
    while k < max_iters:
        k += 1
        marginals = permutation_marginals(game, sampler(k))
        phi = ((k - 1.0) / k) * phi + marginals / k
        if k >= window.min_samples and check_convergence(window, phi):
            converged = True
            break
        window.push(phi)
    return ContributionVector(values=phi, sample_count=k, converged=converged)


def all_masks(n: int) -> Iterator[int]:
    """All 2^n coalition bitmasks, ascending."""
    return iter(range(1 << n))
